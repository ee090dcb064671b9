//! The eight experiment drivers. Each consumes a validated config and
//! produces result rows in deterministic (instance, metric) order plus
//! a summary with embedded pass thresholds.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use puzzlelab::bits::BitString;
use puzzlelab::designs::flatness_stats;
use puzzlelab::dists::{exact_output_distribution, sample_circuit, CircuitFamily};
use puzzlelab::error::Result as LabResult;
use puzzlelab::oracles::SamplerOracle;
use puzzlelab::qsim::{BornSampler, Distribution};
use puzzlelab::reductions::{
    approx_probability, determinism_error_probe, exact_dn, key_recovery_exact_sd,
    key_recovery_per_bit_gap, map_statistical_distance, owp_exact_joint, pseudodet_sample,
    ratio_estimator, uniform_blocks, DualModeFamilies, OwpFromDistribution, PseudodetOutcome,
    ReductionParams,
};
use puzzlelab::rng::derive_rng;
use puzzlelab::statesynth::{geometric_bound_check, random_state_puzzle, run_synthesis, SynthParams};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::{CliError, ResultRow, Verdict, SCHEMA_VERSION};

#[derive(Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub metrics: BTreeMap<String, f64>,
    pub pass: bool,
}

pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
    /// Extra output files (name, contents), e.g. synthesis diagnostics.
    pub artifacts: Vec<(String, String)>,
}

struct Emitter {
    experiment: &'static str,
    rows: Vec<ResultRow>,
    metrics: BTreeMap<String, f64>,
    pass: bool,
}

impl Emitter {
    fn new(kind: ExperimentKind) -> Self {
        Emitter { experiment: kind.name(), rows: Vec::new(), metrics: BTreeMap::new(), pass: true }
    }

    fn row(&mut self, instance: u64, metric: &str, value: f64, verdict: Verdict) {
        if verdict == Verdict::Fail {
            self.pass = false;
        }
        self.rows.push(ResultRow {
            experiment: self.experiment.into(),
            instance,
            metric: metric.into(),
            value,
            verdict,
        });
    }

    fn summary_metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    fn gate(&mut self, name: &str, value: f64, ok: bool) {
        self.summary_metric(name, value);
        if !ok {
            self.pass = false;
        }
    }

    fn finish(self, cfg: &ExperimentConfig) -> RunOutput {
        self.finish_with(cfg, Vec::new())
    }

    fn finish_with(self, cfg: &ExperimentConfig, artifacts: Vec<(String, String)>) -> RunOutput {
        RunOutput {
            rows: self.rows,
            summary: Summary {
                schema_version: SCHEMA_VERSION,
                experiment: self.experiment.into(),
                config_hash: cfg.hash(),
                metrics: self.metrics,
                pass: self.pass,
            },
            artifacts,
        }
    }
}

fn family(cfg: &ExperimentConfig, n: usize, salt: u64) -> CircuitFamily {
    CircuitFamily {
        kind: cfg.family,
        num_qubits: n,
        depth: cfg.depth,
        seed: cfg.seed.wrapping_add(salt),
        gates: Vec::new(),
    }
}

fn distribution(cfg: &ExperimentConfig, n: usize, salt: u64) -> LabResult<Distribution> {
    let fam = family(cfg, n, salt);
    exact_output_distribution(n, &sample_circuit(&fam)?, n)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    match cfg.experiment {
        ExperimentKind::Geom => run_geom(cfg),
        ExperimentKind::Flatness => run_flatness(cfg),
        ExperimentKind::ApproxProb => run_approx_prob(cfg),
        ExperimentKind::OwpRoundtrip => run_owp_roundtrip(cfg),
        ExperimentKind::Keyrec => run_keyrec(cfg),
        ExperimentKind::Pseudodet => run_pseudodet(cfg),
        ExperimentKind::Dualmode => run_dualmode(cfg),
        ExperimentKind::Synth => run_synth(cfg),
    }
}

fn run_geom(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let violations: usize = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "geom", 0, i);
            let gamma = 0.05 + rng.gen::<f64>();
            let gamma_prime = gamma * rng.gen::<f64>() * 0.999;
            let ang = rng.gen::<f64>() * std::f64::consts::TAU;
            let radius = gamma * (1.0 + rng.gen::<f64>());
            let (x, y) = (radius * ang.cos(), radius * ang.sin());
            let off_ang = rng.gen::<f64>() * std::f64::consts::TAU;
            let off = gamma_prime * rng.gen::<f64>();
            let check = geometric_bound_check(
                x,
                y,
                x + off * off_ang.cos(),
                y + off * off_ang.sin(),
                gamma,
                gamma_prime,
            )
            .expect("construction satisfies the preconditions");
            (!check.ok) as usize
        })
        .sum();
    let mut em = Emitter::new(cfg.experiment);
    em.row(0, "violations", violations as f64, Verdict::from_bool(violations == 0));
    em.gate("violations", violations as f64, violations == 0);
    em.summary_metric("trials", cfg.trials as f64);
    Ok(em.finish(cfg))
}

fn run_flatness(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let n = cfg.n;
    let mut rng = derive_rng(cfg.seed, "flatness-state", 0, 0);
    let psi = random_state_puzzle(n, cfg.seed).map_err(CliError::from)?.psi;
    let threshold = cfg.threshold.unwrap_or(64.0 / (1u64 << n) as f64);
    let report = flatness_stats(&psi, cfg.instances, threshold, cfg.heavy_cutoff, &mut rng)
        .map_err(CliError::from)?;
    let mut em = Emitter::new(cfg.experiment);
    for (i, &h) in report.heavy_mass.iter().enumerate() {
        em.row(i as u64, "heavy_mass", h, Verdict::Info);
    }
    let target = 2.0 / ((1u64 << n) as f64 * ((1u64 << n) as f64 + 1.0));
    let rel = (report.empirical_second_moment - target).abs() / target;
    em.row(0, "second_moment", report.empirical_second_moment, Verdict::from_bool(rel <= 0.03));
    em.gate("second_moment", report.empirical_second_moment, rel <= 0.03);
    em.gate("second_moment_rel_dev", rel, rel <= 0.03);
    let heavy_fraction = 1.0 - report.fraction_flat;
    match cfg.heavy_tail_bound {
        Some(bound) => {
            em.row(0, "heavy_fraction", heavy_fraction, Verdict::from_bool(heavy_fraction <= bound));
            em.gate("heavy_fraction", heavy_fraction, heavy_fraction <= bound);
        }
        None => {
            em.row(0, "heavy_fraction", heavy_fraction, Verdict::Info);
            em.summary_metric("heavy_fraction", heavy_fraction);
        }
    }
    Ok(em.finish(cfg))
}

fn run_approx_prob(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let n = cfg.n;
    let d = distribution(cfg, n, 0).map_err(CliError::from)?;
    let sampler = match &cfg.noise {
        Some(spec) if spec.epsilon > 0.0 => SamplerOracle::noisy(&d, spec).map_err(CliError::from)?,
        _ => SamplerOracle::perfect(&d),
    };
    let params = ReductionParams::new(cfg.samples_per_bit, 0.25).map_err(CliError::from)?;
    let cutoff = 1.0 / (8.0 * (1u64 << n) as f64);
    let born = BornSampler::new(&d);
    let results: Vec<(f64, f64)> = (0..cfg.instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "approx-prob", 0, i);
            let x = born.sample(&mut rng);
            let est = approx_probability(&x, &sampler, &params, &mut rng);
            (d.prob(&x), est.value)
        })
        .collect();
    let mut em = Emitter::new(cfg.experiment);
    let mut heavy = 0usize;
    let mut heavy_good = 0usize;
    for (i, &(truth, est)) in results.iter().enumerate() {
        let rel = (est - truth).abs() / truth.max(f64::MIN_POSITIVE);
        let verdict = if truth >= cutoff {
            heavy += 1;
            heavy_good += (rel <= 0.25) as usize;
            Verdict::from_bool(rel <= 0.25)
        } else {
            Verdict::Info
        };
        em.row(i as u64, "rel_error", rel, verdict);
    }
    let frac = if heavy == 0 { 1.0 } else { heavy_good as f64 / heavy as f64 };
    // Per-draw failures are tolerated up to the 10% budget.
    em.pass = true;
    em.gate("heavy_within_frac", frac, frac >= 0.90);
    em.summary_metric("heavy_draws", heavy as f64);
    Ok(em.finish(cfg))
}

fn run_owp_roundtrip(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let d = distribution(cfg, cfg.n, 0).map_err(CliError::from)?;
    let owp = OwpFromDistribution::new(&d).map_err(CliError::from)?;
    let exact = owp_exact_joint(&d);
    let m = cfg.trials;
    let counts = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "owp-roundtrip", 0, i);
            let rec = owp.sample(&mut rng);
            (rec.index, rec.prefix, rec.key)
        })
        .fold(BTreeMap::new, |mut acc: BTreeMap<_, usize>, k| {
            *acc.entry(k).or_insert(0) += 1;
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let emp: BTreeMap<_, f64> = counts.into_iter().map(|(k, c)| (k, c as f64 / m as f64)).collect();
    let sd = map_statistical_distance(&exact, &emp);
    let mut em = Emitter::new(cfg.experiment);
    em.row(0, "joint_sd", sd, Verdict::from_bool(sd <= 0.01));
    em.gate("joint_sd", sd, sd <= 0.01);
    Ok(em.finish(cfg))
}

fn run_keyrec(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let joint = distribution(cfg, 2 * cfg.n, 0).map_err(CliError::from)?;
    let dn = exact_dn(&joint).map_err(CliError::from)?;
    let sd = key_recovery_exact_sd(&joint, &dn).map_err(CliError::from)?;
    let (gap, clips) = key_recovery_per_bit_gap(&joint, &dn, cfg.rel_error);
    let gap_bound = 6.0 * cfg.rel_error + 1e-9;
    let mut em = Emitter::new(cfg.experiment);
    em.row(0, "exact_tree_sd", sd, Verdict::from_bool(sd <= 0.05));
    em.row(0, "per_bit_gap", gap, Verdict::from_bool(gap <= gap_bound));
    em.row(0, "clip_corners", clips as f64, Verdict::Info);
    em.gate("exact_tree_sd", sd, sd <= 0.05);
    em.gate("per_bit_gap", gap, gap <= gap_bound);
    em.summary_metric("clip_corners", clips as f64);
    Ok(em.finish(cfg))
}

fn run_pseudodet(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let n = cfg.n;
    let d = distribution(cfg, n, 0).map_err(CliError::from)?;
    let sampler = SamplerOracle::perfect(&d);
    let params = ReductionParams::new(cfg.samples_per_bit, 0.25).map_err(CliError::from)?;
    let probes: Vec<(f64, bool)> = (0..cfg.instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "pseudodet-probe", 0, i);
            let blocks = uniform_blocks(n, &mut rng);
            let probe = determinism_error_probe(&blocks, &sampler, &params, cfg.repeats, &mut rng)
                .expect("valid blocks");
            (probe.error, probe.threshold_adjacent)
        })
        .collect();
    let mut em = Emitter::new(cfg.experiment);
    let mut stable = 0usize;
    for (i, &(err, adjacent)) in probes.iter().enumerate() {
        stable += (err <= 0.02) as usize;
        em.row(i as u64, "probe_error", err, Verdict::Info);
        em.row(i as u64, "threshold_adjacent", adjacent as u64 as f64, Verdict::Info);
    }
    let counts = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "pseudodet-sd", 1, i);
            let blocks = uniform_blocks(n, &mut rng);
            match pseudodet_sample(&blocks, &sampler, &params, &mut rng).expect("valid blocks") {
                PseudodetOutcome::Output(x) => Some(x),
                PseudodetOutcome::AbortedAt(_) => None,
            }
        })
        .fold(BTreeMap::new, |mut acc: BTreeMap<Option<BitString>, usize>, k| {
            *acc.entry(k).or_insert(0) += 1;
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let mut sd = 0.0;
    let mut seen: BTreeMap<BitString, f64> = BTreeMap::new();
    let mut aborted = 0usize;
    for (k, v) in &counts {
        let emp = *v as f64 / cfg.trials as f64;
        match k {
            Some(x) => {
                seen.insert(*x, emp);
                sd += (emp - d.prob(x)).abs();
            }
            None => {
                aborted = *v;
                sd += emp;
            }
        }
    }
    for (x, p) in d.support() {
        if !seen.contains_key(x) {
            sd += p;
        }
    }
    sd /= 2.0;
    let stable_frac = stable as f64 / cfg.instances as f64;
    em.row(0, "fresh_r_sd", sd, Verdict::from_bool(sd <= 0.1));
    em.gate("stable_frac", stable_frac, stable_frac >= 0.95);
    em.gate("fresh_r_sd", sd, sd <= 0.1);
    em.summary_metric("aborted_runs", aborted as f64);
    Ok(em.finish(cfg))
}

fn run_dualmode(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let n = cfg.n;
    let mut pools = Vec::new();
    for f in 0..cfg.num_families as u64 {
        let mut pool = Vec::new();
        for c in 0..cfg.pool as u64 {
            pool.push(distribution(cfg, n, 1 + f * cfg.pool as u64 + c).map_err(CliError::from)?);
        }
        pools.push(pool);
    }
    let fams = DualModeFamilies::new(pools).map_err(CliError::from)?;
    let exact = fams.exact_oracle();
    let noisy = if cfg.rel_error > 0.0 {
        Some(fams.noisy_oracle(cfg.rel_error, cfg.fail_prob).map_err(CliError::from)?)
    } else {
        None
    };
    let results: Vec<(f64, f64)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "dualmode", 0, i);
            let draw = loop {
                let s = fams.sample(&mut rng);
                if s.b_mode {
                    break s;
                }
            };
            let truth = fams.pools[draw.family][draw.circuit].prob(&draw.payload);
            let e = ratio_estimator(&exact, draw.family, draw.circuit, &draw.payload, &mut rng);
            let exact_err = (e.value - truth).abs();
            let noisy_rel = noisy.as_ref().map_or(0.0, |o| {
                let est = ratio_estimator(o, draw.family, draw.circuit, &draw.payload, &mut rng);
                (est.value - truth).abs() / truth
            });
            (exact_err, noisy_rel)
        })
        .collect();
    let worst_exact = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_noisy = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let noisy_bound = 3.0 * cfg.rel_error + 1e-9;
    let mut em = Emitter::new(cfg.experiment);
    em.row(0, "exact_worst_abs_err", worst_exact, Verdict::from_bool(worst_exact <= 1e-12));
    em.gate("exact_worst_abs_err", worst_exact, worst_exact <= 1e-12);
    if noisy.is_some() {
        em.row(0, "noisy_worst_rel_err", worst_noisy, Verdict::from_bool(worst_noisy <= noisy_bound));
        em.gate("noisy_worst_rel_err", worst_noisy, worst_noisy <= noisy_bound);
    }
    Ok(em.finish(cfg))
}

fn error_stats(errors: &[f64]) -> serde_json::Value {
    // Fixed log-decade histogram keeps the record compact.
    let edges = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let mut buckets = vec![0usize; edges.len() + 1];
    for &e in errors {
        let idx = edges.iter().position(|&edge| e <= edge).unwrap_or(edges.len());
        buckets[idx] += 1;
    }
    serde_json::json!({
        "count": errors.len(),
        "mean": if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 },
        "max": errors.iter().cloned().fold(0.0, f64::max),
        "log_decade_buckets": buckets,
    })
}

fn run_synth(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let n = cfg.n;
    let epsilon = cfg.noise.map_or(0.0, |s| s.epsilon);
    let sampled = cfg.samples_per_bit > 0;
    let params = if sampled {
        SynthParams::sampled(cfg.samples_per_bit, cfg.phase_trials.max(1))
    } else {
        SynthParams::exact()
    };
    type InstanceRecord = (f64, f64, f64, String);
    let outcomes: Vec<Result<InstanceRecord, CliError>> = (0..cfg.instances as u64)
        .into_par_iter()
        .map(|i| {
            let inst = random_state_puzzle(n, cfg.seed.wrapping_add(i)).map_err(CliError::from)?;
            let mut rng = derive_rng(cfg.seed, "synth", 0, i);
            let outcome = run_synthesis(&inst, epsilon, &params, &mut rng).map_err(CliError::from)?;
            let d = &outcome.diagnostics;
            let amp_errors: Vec<f64> = d.amp_errors.iter().map(|&(_, e)| e).collect();
            let phase_errors: Vec<f64> = d.phase_errors.iter().map(|&(_, e)| e).collect();
            let record = serde_json::json!({
                "instance": i,
                "fidelity": outcome.fidelity,
                "pivot": d.pivot.to_string(),
                "inverter_sd": d.inverter_sd,
                "flagged_prefixes": d.flagged_prefixes,
                "amp_errors": error_stats(&amp_errors),
                "phase_errors": error_stats(&phase_errors),
            });
            let amp_max = amp_errors.iter().cloned().fold(0.0, f64::max);
            let phase_max = phase_errors.iter().cloned().fold(0.0, f64::max);
            Ok((outcome.fidelity, amp_max, phase_max, record.to_string()))
        })
        .collect();
    let mut em = Emitter::new(cfg.experiment);
    let mut fidelities = Vec::with_capacity(outcomes.len());
    let mut jsonl = String::new();
    for (i, out) in outcomes.into_iter().enumerate() {
        let (f, amp_max, phase_max, record) = out?;
        em.row(i as u64, "fidelity", f, Verdict::Info);
        em.row(i as u64, "amp_err_max", amp_max, Verdict::Info);
        em.row(i as u64, "phase_err_max", phase_max, Verdict::Info);
        jsonl.push_str(&record);
        jsonl.push('\n');
        fidelities.push(f);
    }
    let mean = fidelities.iter().sum::<f64>() / fidelities.len() as f64;
    let threshold = if sampled { 0.95 } else { 0.999 };
    em.gate("mean_fidelity", mean, mean >= threshold);
    em.summary_metric("fidelity_threshold", threshold);
    em.summary_metric("inverter_epsilon", epsilon);
    Ok(em.finish_with(cfg, vec![("diagnostics.jsonl".into(), jsonl)]))
}

