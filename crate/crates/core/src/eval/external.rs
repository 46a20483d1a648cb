//! Subprocess evaluator protocol.
//!
//! The configured command is run as
//! `<command...> --netlist <path> --targets <t1,t2,...>` and must print one
//! line `<target> <achieved_area> <achieved_delay>` per target, exiting 0.
//! Any missing target, parse failure, nonzero exit or timeout fails the
//! whole design; partial curves are never built.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::graph::{GraphKey, PrefixGraph};
use crate::netlist;

use super::{BatchResult, CostCurve, CurveCache, CurveSample, EvalConfig, EvalError, EvalStats, Evaluator, Scaling, Units};

pub struct ExternalEvaluator {
    cfg: EvalConfig,
    cache: CurveCache,
    scratch: tempfile::TempDir,
    requests: AtomicUsize,
    hits: AtomicUsize,
    invocations: AtomicUsize,
}

impl ExternalEvaluator {
    pub fn new(cfg: EvalConfig) -> Result<Self, EvalError> {
        cfg.validate()?;
        let cache = match &cfg.cache_path {
            Some(p) => CurveCache::open(p)?,
            None => CurveCache::in_memory(),
        };
        Ok(ExternalEvaluator {
            cfg,
            cache,
            scratch: tempfile::Builder::new().prefix("prefixopt-eval").tempdir()?,
            requests: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
            invocations: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &CurveCache {
        &self.cache
    }

    /// Runs the evaluator once for `g`, bypassing the cache.
    pub fn invoke(&self, g: &PrefixGraph) -> Result<CostCurve, EvalError> {
        let seq = self.invocations.fetch_add(1, Ordering::SeqCst);
        let path = self.scratch.path().join(format!("{}-{seq}.v", g.canonical_key()));
        std::fs::write(&path, netlist::emit(g).to_verilog())?;
        let result = self.run(&path);
        let _ = std::fs::remove_file(&path);
        let stdout = result?;
        CostCurve::new(parse_response(&self.cfg.delay_targets, &stdout)?)
    }

    fn run(&self, netlist: &Path) -> Result<String, EvalError> {
        let targets: Vec<String> = self.cfg.delay_targets.iter().map(|t| t.to_string()).collect();
        let program = &self.cfg.command[0];
        let mut child = Command::new(program)
            .args(&self.cfg.command[1..])
            .arg("--netlist")
            .arg(netlist)
            .arg("--targets")
            .arg(targets.join(","))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EvalError::Spawn { command: self.cfg.command.join(" "), reason: e.to_string() })?;

        let mut out_pipe = child.stdout.take().expect("piped stdout");
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = out_pipe.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = err_pipe.read_to_string(&mut s);
            s
        });

        let deadline = Instant::now() + Duration::from_secs_f64(self.cfg.timeout_secs);
        let mut nap = Duration::from_millis(1);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(nap);
            nap = (nap * 2).min(Duration::from_millis(50));
        };
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        match status {
            None => Err(EvalError::Timeout { secs: self.cfg.timeout_secs, output: stdout }),
            Some(s) if !s.success() => Err(EvalError::NonZeroExit { status: s.code(), stdout, stderr }),
            Some(_) => Ok(stdout),
        }
    }

    fn lookup(&self, key: &GraphKey) -> Option<CostCurve> {
        self.cache.get(key, &self.cfg.delay_targets)
    }

    fn store(&self, key: &GraphKey, curve: &CostCurve) -> Result<(), EvalError> {
        self.cache.insert(key, &self.cfg.delay_targets, curve)
    }
}

/// Parses evaluator stdout into one sample per requested target.
pub fn parse_response(targets: &[f64], stdout: &str) -> Result<Vec<CurveSample>, EvalError> {
    let malformed = |reason: String| EvalError::Malformed { reason, output: stdout.to_string() };
    let mut got: Vec<CurveSample> = Vec::new();
    for (i, line) in stdout.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed(format!("line {} has {} fields, expected 3", i + 1, fields.len())));
        }
        let mut v = [0.0; 3];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| malformed(format!("line {}: `{field}` is not a number", i + 1)))?;
            if !slot.is_finite() {
                return Err(malformed(format!("line {}: non-finite value", i + 1)));
            }
        }
        if v[1] <= 0.0 || v[2] <= 0.0 {
            return Err(malformed(format!("line {}: area and delay must be positive", i + 1)));
        }
        got.push(CurveSample { target: v[0], area: v[1], delay: v[2] });
    }
    targets
        .iter()
        .map(|&t| {
            got.iter()
                .find(|s| (s.target - t).abs() <= 1e-9 * t.abs().max(1.0))
                .map(|s| CurveSample { target: t, ..*s })
                .ok_or(EvalError::MissingTarget { target: t, output: stdout.to_string() })
        })
        .collect()
}

impl Evaluator for ExternalEvaluator {
    fn curve(&self, g: &PrefixGraph) -> Result<CostCurve, EvalError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let key = g.canonical_key();
        if let Some(c) = self.lookup(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(c);
        }
        let curve = self.invoke(g)?;
        self.store(&key, &curve)?;
        Ok(curve)
    }

    fn scaling(&self) -> Scaling {
        self.cfg.scaling()
    }

    fn units(&self) -> Units {
        self.cfg.units()
    }

    /// Dedups by key, answers hits from the cache and runs the misses on up
    /// to `worker_count` concurrent evaluator processes.
    fn evaluate_batch(&self, graphs: &[PrefixGraph]) -> BatchResult {
        let mut out = BatchResult { requested: graphs.len(), ..Default::default() };
        self.requests.fetch_add(graphs.len(), Ordering::SeqCst);

        let mut misses: Vec<(GraphKey, &PrefixGraph)> = Vec::new();
        let mut seen: HashMap<GraphKey, ()> = HashMap::new();
        for g in graphs {
            let key = g.canonical_key();
            if seen.insert(key.clone(), ()).is_some() {
                continue;
            }
            out.unique += 1;
            match self.lookup(&key) {
                Some(c) => {
                    out.curves.insert(key, c);
                }
                None => misses.push((key, g)),
            }
        }
        out.invocations = misses.len();
        self.hits.fetch_add(graphs.len() - misses.len(), Ordering::SeqCst);

        let results: Mutex<Vec<Option<Result<CostCurve, EvalError>>>> =
            Mutex::new((0..misses.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.cfg.worker_count.min(misses.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= misses.len() {
                        break;
                    }
                    let r = self.invoke(misses[i].1);
                    results.lock().expect("result lock")[i] = Some(r);
                });
            }
        });

        for ((key, _), r) in misses.into_iter().zip(results.into_inner().expect("result lock")) {
            match r.expect("every miss evaluated") {
                Ok(curve) => {
                    if let Err(e) = self.store(&key, &curve) {
                        out.errors.push((key.clone(), e));
                    }
                    out.curves.insert(key, curve);
                }
                Err(e) => out.errors.push((key, e)),
            }
        }
        out
    }

    fn stats(&self) -> EvalStats {
        EvalStats {
            requests: self.requests.load(Ordering::SeqCst),
            hits: self.hits.load(Ordering::SeqCst),
            invocations: self.invocations.load(Ordering::SeqCst),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_per_target() {
        let s = parse_response(&[0.3, 0.5], "0.5 90 0.48\n0.3 120 0.31\n").unwrap();
        assert_eq!(s[0], CurveSample { target: 0.3, area: 120.0, delay: 0.31 });
        assert_eq!(s[1].area, 90.0);
    }

    #[test]
    fn missing_target_is_an_error() {
        let e = parse_response(&[0.3, 0.5], "0.3 120 0.31\n").unwrap_err();
        assert!(matches!(e, EvalError::MissingTarget { target, .. } if target == 0.5));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(matches!(parse_response(&[0.3], "0.3 abc 0.31"), Err(EvalError::Malformed { .. })));
        assert!(matches!(parse_response(&[0.3], "0.3 1"), Err(EvalError::Malformed { .. })));
        assert!(matches!(parse_response(&[0.3], "0.3 -1 0.2"), Err(EvalError::Malformed { .. })));
    }
}
