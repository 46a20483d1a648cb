//! Two-objective (area, delay) vectors and scalarization weights.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An (area, delay) pair. Used for costs, rewards and Q-value vectors alike.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Objectives {
    pub area: f64,
    pub delay: f64,
}

/// A cost in scaled units.
pub type CostPoint = Objectives;

/// Per-step decrease in scaled cost.
pub type Reward = Objectives;

impl Objectives {
    pub const ZERO: Objectives = Objectives { area: 0.0, delay: 0.0 };

    pub const fn new(area: f64, delay: f64) -> Self {
        Objectives { area, delay }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.area, self.delay]
    }

    pub fn is_finite(self) -> bool {
        self.area.is_finite() && self.delay.is_finite()
    }

    /// Weakly better in both, strictly better in one (smaller is better).
    pub fn dominates(self, other: Objectives) -> bool {
        self.area <= other.area
            && self.delay <= other.delay
            && (self.area < other.area || self.delay < other.delay)
    }

    pub fn weakly_dominates(self, other: Objectives) -> bool {
        self.area <= other.area && self.delay <= other.delay
    }
}

impl Add for Objectives {
    type Output = Objectives;
    fn add(self, o: Objectives) -> Objectives {
        Objectives::new(self.area + o.area, self.delay + o.delay)
    }
}

impl Sub for Objectives {
    type Output = Objectives;
    fn sub(self, o: Objectives) -> Objectives {
        Objectives::new(self.area - o.area, self.delay - o.delay)
    }
}

impl Mul<f64> for Objectives {
    type Output = Objectives;
    fn mul(self, k: f64) -> Objectives {
        Objectives::new(self.area * k, self.delay * k)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scalarization weight ({0}, {1}): components must be finite, nonnegative and not both zero")]
pub struct WeightError(pub f64, pub f64);

/// Convex combination coefficients over (area, delay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeight", into = "RawWeight")]
pub struct ScalarWeight {
    w_area: f64,
    w_delay: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeight {
    w_area: f64,
    w_delay: f64,
}

impl TryFrom<RawWeight> for ScalarWeight {
    type Error = WeightError;
    fn try_from(raw: RawWeight) -> Result<Self, WeightError> {
        ScalarWeight::new(raw.w_area, raw.w_delay)
    }
}

impl From<ScalarWeight> for RawWeight {
    fn from(w: ScalarWeight) -> RawWeight {
        RawWeight { w_area: w.w_area, w_delay: w.w_delay }
    }
}

impl ScalarWeight {
    /// Normalizes any nonnegative pair so the components sum to one.
    pub fn new(w_area: f64, w_delay: f64) -> Result<Self, WeightError> {
        let ok = w_area.is_finite() && w_delay.is_finite() && w_area >= 0.0 && w_delay >= 0.0;
        let sum = w_area + w_delay;
        if !ok || sum <= 0.0 {
            return Err(WeightError(w_area, w_delay));
        }
        Ok(ScalarWeight { w_area: w_area / sum, w_delay: w_delay / sum })
    }

    pub fn area(self) -> f64 {
        self.w_area
    }

    pub fn delay(self) -> f64 {
        self.w_delay
    }

    pub fn scalarize(self, o: Objectives) -> f64 {
        self.w_area * o.area + self.w_delay * o.delay
    }
}

impl Default for ScalarWeight {
    fn default() -> Self {
        ScalarWeight { w_area: 0.5, w_delay: 0.5 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_normalize() {
        let w = ScalarWeight::new(3.0, 1.0).unwrap();
        assert_eq!(w.area(), 0.75);
        assert_eq!(w.delay(), 0.25);
        assert!(ScalarWeight::new(0.0, 0.0).is_err());
        assert!(ScalarWeight::new(-1.0, 2.0).is_err());
        assert!(ScalarWeight::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn weight_serde_revalidates() {
        let w: ScalarWeight = serde_json::from_str(r#"{"w_area":1,"w_delay":3}"#).unwrap();
        assert_eq!(w.area(), 0.25);
        assert!(serde_json::from_str::<ScalarWeight>(r#"{"w_area":-1,"w_delay":3}"#).is_err());
    }

    #[test]
    fn dominance() {
        let a = Objectives::new(1.0, 1.0);
        assert!(a.dominates(Objectives::new(2.0, 2.0)));
        assert!(a.dominates(Objectives::new(1.0, 2.0)));
        assert!(!a.dominates(a));
        assert!(a.weakly_dominates(a));
        assert!(!Objectives::new(1.0, 3.0).dominates(Objectives::new(3.0, 1.0)));
    }
}
