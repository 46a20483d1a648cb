//! Design records, non-dominated fronts and front comparison.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Units;
use crate::graph::{GraphDoc, GraphKey, PrefixGraph};
use crate::objectives::{Objectives, ScalarWeight};

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("fronts have different units ({0} vs {1})")]
    UnitMismatch(String, String),
    #[error("front mixes records with different units")]
    MixedUnits,
    #[error("record {id}: {reason}")]
    BadRecord { id: String, reason: String },
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which optimizer produced a design.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Source {
    Dqn,
    Sa,
    Exhaustive,
    Regular(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Dqn => f.write_str("dqn"),
            Source::Sa => f.write_str("sa"),
            Source::Exhaustive => f.write_str("exhaustive"),
            Source::Regular(name) => write!(f, "regular:{name}"),
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Source {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "dqn" => Ok(Source::Dqn),
            "sa" => Ok(Source::Sa),
            "exhaustive" => Ok(Source::Exhaustive),
            _ => match s.strip_prefix("regular:") {
                Some(name) if !name.is_empty() => Ok(Source::Regular(name.to_string())),
                _ => Err(format!("unknown design source `{s}`")),
            },
        }
    }
}

/// One design with its cost points in scaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub id: GraphKey,
    pub graph: GraphDoc,
    pub source: Source,
    pub w: Option<ScalarWeight>,
    pub units: Units,
    pub points: Vec<Objectives>,
}

impl DesignRecord {
    pub fn new(
        g: &PrefixGraph,
        source: Source,
        w: Option<ScalarWeight>,
        units: Units,
        points: Vec<Objectives>,
    ) -> Self {
        DesignRecord { id: g.canonical_key(), graph: g.to_doc(), source, w, units, points }
    }

    /// Re-parses the stored graph and checks it against the id.
    pub fn design(&self) -> Result<PrefixGraph, ParetoError> {
        let bad = |reason: String| ParetoError::BadRecord { id: self.id.0.clone(), reason };
        let g = PrefixGraph::from_doc(&self.graph).map_err(|e| bad(e.to_string()))?;
        if g.canonical_key() != self.id {
            return Err(bad("id does not match the graph".into()));
        }
        Ok(g)
    }
}

/// A front point; equal points from different designs share one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub area: f64,
    pub delay: f64,
    pub ids: Vec<GraphKey>,
}

impl FrontPoint {
    pub fn objectives(&self) -> Objectives {
        Objectives::new(self.area, self.delay)
    }
}

/// Non-dominated points sorted by delay ascending (area strictly descending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    /// `None` for an empty front.
    pub units: Option<Units>,
    pub points: Vec<FrontPoint>,
}

impl ParetoFront {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn contains(&self, p: Objectives) -> bool {
        self.points.iter().any(|q| q.area == p.area && q.delay == p.delay)
    }

    /// Smallest area reachable at `delay`, interpolating linearly between
    /// adjacent front points. `None` below the fastest point.
    pub fn area_at(&self, delay: f64) -> Option<f64> {
        let first = self.points.first()?;
        if delay < first.delay {
            return None;
        }
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if delay <= b.delay {
                let t = (delay - a.delay) / (b.delay - a.delay);
                return Some(a.area + t * (b.area - a.area));
            }
        }
        self.points.last().map(|p| p.area)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay,area,ids\n");
        for p in &self.points {
            let ids: Vec<&str> = p.ids.iter().map(|k| k.0.as_str()).collect();
            out.push_str(&format!("{},{},{}\n", p.delay, p.area, ids.join(";")));
        }
        out
    }
}

/// Exact non-dominated subset of `(point, id)` pairs.
pub fn front_of_points<I>(units: Option<Units>, points: I) -> ParetoFront
where
    I: IntoIterator<Item = (Objectives, GraphKey)>,
{
    let mut all: Vec<(Objectives, GraphKey)> = points.into_iter().collect();
    all.sort_by(|(p, a), (q, b)| {
        p.delay.total_cmp(&q.delay).then(p.area.total_cmp(&q.area)).then_with(|| a.cmp(b))
    });
    let mut out: Vec<FrontPoint> = Vec::new();
    let mut ids: BTreeSet<GraphKey> = BTreeSet::new();
    let mut best_area = f64::INFINITY;
    let mut i = 0;
    while i < all.len() {
        let p = all[i].0;
        let mut j = i;
        ids.clear();
        while j < all.len() && all[j].0 == p {
            ids.insert(all[j].1.clone());
            j += 1;
        }
        if p.area < best_area {
            best_area = p.area;
            out.push(FrontPoint { area: p.area, delay: p.delay, ids: ids.iter().cloned().collect() });
        }
        i = j;
    }
    ParetoFront { units: if out.is_empty() { None } else { units }, points: out }
}

/// Front over every cost point of every record.
pub fn front(records: &[DesignRecord]) -> Result<ParetoFront, ParetoError> {
    let units = records.first().map(|r| r.units.clone());
    if records.iter().any(|r| Some(&r.units) != units.as_ref()) {
        return Err(ParetoError::MixedUnits);
    }
    Ok(front_of_points(units, records.iter().flat_map(|r| r.points.iter().map(|p| (*p, r.id.clone())))))
}

/// Merges fronts with equal units into one front.
pub fn merge(fronts: &[&ParetoFront]) -> Result<ParetoFront, ParetoError> {
    let mut units: Option<Units> = None;
    for f in fronts.iter().filter(|f| !f.is_empty()) {
        match (&units, &f.units) {
            (Some(u), Some(v)) if u != v => return Err(ParetoError::MixedUnits),
            (None, v) => units = v.clone(),
            _ => {}
        }
    }
    Ok(front_of_points(
        units,
        fronts.iter().flat_map(|f| f.points.iter().flat_map(|p| p.ids.iter().map(|id| (p.objectives(), id.clone())))),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Each front weakly dominates every point of the other.
    Equivalent,
    ADominates,
    BDominates,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCheck {
    pub area: f64,
    pub delay: f64,
    /// Some point of A is no worse in both objectives.
    pub weakly_dominated_by_a: bool,
    /// Some point of A is no worse in both and better in one.
    pub strictly_dominated_by_a: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub verdict: Verdict,
    /// One entry per point of B.
    pub b_points: Vec<PointCheck>,
    /// Points of A strictly dominated by some point of B.
    pub a_points_strictly_dominated: usize,
    /// Points of B strictly dominated by some point of A.
    pub b_points_strictly_dominated: usize,
    /// Largest `(area_B - area_A) / area_B` in percent over B's points,
    /// with A's area taken at B's delay.
    pub max_area_gap_percent: Option<f64>,
}

fn check_units(a: &ParetoFront, b: &ParetoFront) -> Result<(), ParetoError> {
    match (&a.units, &b.units) {
        (Some(u), Some(v)) if u != v => Err(ParetoError::UnitMismatch(format!("{u:?}"), format!("{v:?}"))),
        _ => Ok(()),
    }
}

pub fn compare(a: &ParetoFront, b: &ParetoFront) -> Result<Comparison, ParetoError> {
    check_units(a, b)?;
    let covers = |f: &ParetoFront, p: Objectives| f.points.iter().any(|q| q.objectives().weakly_dominates(p));
    let beats = |f: &ParetoFront, p: Objectives| f.points.iter().any(|q| q.objectives().dominates(p));
    let b_points: Vec<PointCheck> = b
        .points
        .iter()
        .map(|p| PointCheck {
            area: p.area,
            delay: p.delay,
            weakly_dominated_by_a: covers(a, p.objectives()),
            strictly_dominated_by_a: beats(a, p.objectives()),
        })
        .collect();
    let a_covers_b = b_points.iter().all(|c| c.weakly_dominated_by_a);
    let b_covers_a = a.points.iter().all(|p| covers(b, p.objectives()));
    let verdict = match (a_covers_b, b_covers_a) {
        (true, true) => Verdict::Equivalent,
        (true, false) => Verdict::ADominates,
        (false, true) => Verdict::BDominates,
        (false, false) => Verdict::Mixed,
    };
    let max_area_gap_percent = b
        .points
        .iter()
        .filter_map(|p| a.area_at(p.delay).map(|area| 100.0 * (p.area - area) / p.area))
        .reduce(f64::max);
    Ok(Comparison {
        verdict,
        a_points_strictly_dominated: a.points.iter().filter(|p| beats(b, p.objectives())).count(),
        b_points_strictly_dominated: b_points.iter().filter(|c| c.strictly_dominated_by_a).count(),
        b_points,
        max_area_gap_percent,
    })
}

/// Writes `records/<id>-<source>.json`, `front.json` and `front.csv`.
pub fn write_archive(dir: &Path, records: &[DesignRecord], front: &ParetoFront) -> Result<(), ParetoError> {
    let rec_dir = dir.join("records");
    std::fs::create_dir_all(&rec_dir)?;
    for r in records {
        let name = format!("{}-{}.json", r.id, r.source.to_string().replace(':', "-"));
        std::fs::write(rec_dir.join(name), serde_json::to_string_pretty(r).expect("records serialize"))?;
    }
    std::fs::write(dir.join("front.json"), serde_json::to_string_pretty(front).expect("fronts serialize"))?;
    std::fs::write(dir.join("front.csv"), front.to_csv())?;
    Ok(())
}

/// Reads and validates every record of an archive, in file-name order.
pub fn read_records(dir: &Path) -> Result<Vec<DesignRecord>, ParetoError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir.join("records"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            let r: DesignRecord = serde_json::from_str(&text)
                .map_err(|e| ParetoError::BadRecord { id: p.display().to_string(), reason: e.to_string() })?;
            r.design()?;
            Ok(r)
        })
        .collect()
}
