//! Job execution. Every job writes its outputs under its own directory.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use prefixopt::eval::{build_evaluator, EvalConfig, Evaluator};
use prefixopt::pareto::{self, compare, read_records, write_archive, Comparison, DesignRecord, ParetoFront, Source};
use prefixopt::qfunc::ModelConfig;
use prefixopt::train::{anneal, dqn_train, enumerate_with_limit, SAConfig, TrainConfig};
use prefixopt::{PrefixGraph, ScalarWeight, Structure};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{Job, RunManifest};

/// Runs a job, writing the manifest before and after.
pub fn execute(job: Job) -> Result<RunManifest, CliError> {
    let mut manifest = RunManifest::start(job);
    manifest.write()?;
    let outputs = match &manifest.job {
        Job::Train { eval, train, model, out } => run_train(eval, train, model, out)?,
        Job::Anneal { eval, anneal, out } => run_anneal(eval, anneal, out)?,
        Job::Enumerate { eval, n, limit, out } => run_enumerate(eval, *n, *limit, out)?,
        Job::Baselines { eval, n, out } => run_baselines(eval, *n, out)?,
        Job::Pareto { archives, compare, out } => run_pareto(archives, *compare, out)?,
    };
    manifest.finish(outputs);
    manifest.write()?;
    Ok(manifest)
}

fn archive_outputs(records: &[DesignRecord]) -> Vec<String> {
    let mut v = vec!["front.json".to_string(), "front.csv".to_string()];
    if !records.is_empty() {
        v.push("records/".to_string());
    }
    v
}

fn record_for(
    g: &PrefixGraph,
    source: Source,
    w: Option<ScalarWeight>,
    evaluator: &dyn Evaluator,
) -> Result<DesignRecord, CliError> {
    Ok(DesignRecord::new(g, source, w, evaluator.units(), evaluator.points(g)?))
}

/// Keeps the records contributing a point to the front.
fn on_front(records: Vec<DesignRecord>, front: &ParetoFront) -> Vec<DesignRecord> {
    let ids: HashSet<_> = front.points.iter().flat_map(|p| p.ids.iter().cloned()).collect();
    records.into_iter().filter(|r| ids.contains(&r.id)).collect()
}

fn run_train(eval: &EvalConfig, cfg: &TrainConfig, model: &ModelConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let evaluator = build_evaluator(eval)?;
    let mut cfg = cfg.clone();
    if cfg.checkpoint_dir.is_none() && cfg.checkpoint_interval > 0 {
        cfg.checkpoint_dir = Some(out.join("checkpoints"));
    }
    cfg.validate()?;
    let mut vf = model.build(cfg.n, cfg.seed, cfg.learning_rate)?;
    let mut metrics = BufWriter::new(File::create(out.join("metrics.jsonl"))?);
    let outcome = dqn_train(&cfg, evaluator.as_ref(), vf.as_mut(), Some(&mut metrics))?;
    metrics.flush()?;
    let mut outputs = vec!["metrics.jsonl".to_string()];
    if cfg.checkpoint_dir.is_some() {
        outputs.push("checkpoints/".into());
    }
    if let Some(bytes) = vf.checkpoint() {
        std::fs::write(out.join("model.bin"), bytes)?;
        outputs.push("model.bin".into());
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (g, _) in &outcome.greedy_designs {
        if seen.insert(g.canonical_key()) {
            records.push(record_for(g, Source::Dqn, Some(cfg.w), evaluator.as_ref())?);
        }
    }
    let front = pareto::front(&records)?;
    write_archive(out, &records, &front)?;
    outputs.extend(archive_outputs(&records));
    let g = &outcome.final_greedy;
    println!(
        "greedy area {} delay {} scalar {} after {} updates ({} transitions dropped)",
        g.cost.area, g.cost.delay, g.scalar, outcome.updates, outcome.dropped_transitions
    );
    Ok(outputs)
}

fn run_anneal(eval: &EvalConfig, cfg: &SAConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let evaluator = build_evaluator(eval)?;
    let outcome = anneal(cfg, evaluator.as_ref())?;
    let mut traj = BufWriter::new(File::create(out.join("trajectory.jsonl"))?);
    for s in &outcome.trajectory {
        serde_json::to_writer(&mut traj, s).map_err(|e| CliError::Other(e.to_string()))?;
        traj.write_all(b"\n")?;
    }
    traj.flush()?;
    let best_key = outcome.best.canonical_key();
    let mut records = Vec::new();
    for (g, _) in &outcome.visited {
        records.push(record_for(g, Source::Sa, Some(cfg.w), evaluator.as_ref())?);
    }
    if !outcome.visited.iter().any(|(g, _)| g.canonical_key() == best_key) {
        records.push(record_for(&outcome.best, Source::Sa, Some(cfg.w), evaluator.as_ref())?);
    }
    let front = pareto::front(&records)?;
    let best = records.iter().find(|r| r.id == best_key).cloned();
    let mut kept = on_front(records, &front);
    if let Some(best) = best.filter(|b| !kept.iter().any(|k| k.id == b.id)) {
        kept.push(best);
    }
    write_archive(out, &kept, &front)?;
    let mut outputs = vec!["trajectory.jsonl".to_string()];
    outputs.extend(archive_outputs(&kept));
    println!(
        "best area {} delay {} scalar {} ({} states visited)",
        outcome.best_cost.area,
        outcome.best_cost.delay,
        outcome.best_scalar,
        outcome.visited.len()
    );
    Ok(outputs)
}

fn run_enumerate(eval: &EvalConfig, n: usize, limit: usize, out: &Path) -> Result<Vec<String>, CliError> {
    let evaluator = build_evaluator(eval)?;
    let result = enumerate_with_limit(n, evaluator.as_ref(), limit)?;
    let records = on_front(result.records(), &result.front);
    write_archive(out, &records, &result.front)?;
    println!("{} legal graphs, {} front points", result.designs.len(), result.front.len());
    for p in &result.front.points {
        println!("area {} delay {}", p.area, p.delay);
    }
    Ok(archive_outputs(&records))
}

fn run_baselines(eval: &EvalConfig, n: usize, out: &Path) -> Result<Vec<String>, CliError> {
    let evaluator = build_evaluator(eval)?;
    let mut records = Vec::new();
    for s in Structure::ALL {
        let g = s.build(n)?;
        let rec = record_for(&g, Source::Regular(s.name().into()), None, evaluator.as_ref())?;
        for p in &rec.points {
            println!("{} area {} delay {}", s.name(), p.area, p.delay);
        }
        records.push(rec);
    }
    let front = pareto::front(&records)?;
    write_archive(out, &records, &front)?;
    Ok(archive_outputs(&records))
}

#[derive(Serialize)]
struct NamedComparison {
    a: String,
    b: String,
    comparison: Comparison,
}

fn run_pareto(archives: &[std::path::PathBuf], do_compare: bool, out: &Path) -> Result<Vec<String>, CliError> {
    if archives.is_empty() {
        return Err(CliError::Config("at least one archive is required".into()));
    }
    let mut per_archive = Vec::new();
    for dir in archives {
        per_archive.push((dir.display().to_string(), read_records(dir)?));
    }
    let all: Vec<DesignRecord> = per_archive.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let front = pareto::front(&all)?;
    write_archive(out, &on_front(all.clone(), &front), &front)?;
    let mut outputs = archive_outputs(&all);
    println!("{} designs, {} front points", all.len(), front.len());

    if do_compare {
        let groups: Vec<(String, ParetoFront)> = if per_archive.len() > 1 {
            per_archive
                .iter()
                .map(|(name, recs)| Ok((name.clone(), pareto::front(recs)?)))
                .collect::<Result<_, CliError>>()?
        } else {
            let mut by_source: BTreeMap<String, Vec<DesignRecord>> = BTreeMap::new();
            for r in &all {
                let key = match &r.source {
                    Source::Regular(_) => "regular".to_string(),
                    s => s.to_string(),
                };
                by_source.entry(key).or_default().push(r.clone());
            }
            by_source
                .into_iter()
                .map(|(name, recs)| Ok((name, pareto::front(&recs)?)))
                .collect::<Result<_, CliError>>()?
        };
        let mut results = Vec::new();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let c = compare(&groups[i].1, &groups[j].1)?;
                println!(
                    "{} vs {}: {:?}, max area gap {}",
                    groups[i].0,
                    groups[j].0,
                    c.verdict,
                    c.max_area_gap_percent.map_or("n/a".to_string(), |g| format!("{g:.2}%"))
                );
                results.push(NamedComparison { a: groups[i].0.clone(), b: groups[j].0.clone(), comparison: c });
            }
        }
        let text = serde_json::to_string_pretty(&results).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(out.join("compare.json"), text)?;
        outputs.push("compare.json".into());
    }
    Ok(outputs)
}
