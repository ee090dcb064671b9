//! The classical reduction algorithms: probability approximation from
//! post-selected sampling, the two puzzle ↔ approximation-hardness
//! constructions, the dual-mode ratio estimator, and the
//! pseudo-deterministic sampler.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::dists::PrefixTable;
use crate::error::{Error, Result};
use crate::oracles::{ProbOracle, SamplerOracle};
use crate::qsim::{BornSampler, Distribution};

/// Sampling budgets. `samples_per_bit` plays the role of the asymptotic
/// per-factor repetition polynomial; desk values are configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReductionParams {
    pub samples_per_bit: usize,
    /// Target relative error (the 1/q(n) of the analysis); recorded for
    /// reporting, not used to steer the estimators.
    pub rel_target: f64,
}

impl ReductionParams {
    pub fn new(samples_per_bit: usize, rel_target: f64) -> Result<Self> {
        if samples_per_bit == 0 {
            return Err(Error::Invalid("samples_per_bit must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&rel_target) {
            return Err(Error::Invalid("rel_target must lie in (0,1)".into()));
        }
        Ok(ReductionParams { samples_per_bit, rel_target })
    }
}

/// Estimate of Pr[v] with an undefined-support flag: the value is 0 and
/// the flag set when some prefix of `v` had no sampler support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxResult {
    pub value: f64,
    pub undefined_support: bool,
}

/// Product over i of the empirical frequency with which the sampler's
/// next bit at prefix v₁…ᵢ₋₁ equals vᵢ.
///
/// The frequency of the first suffix bit equals the frequency of a
/// next-bit draw, so only next bits are sampled.
pub fn approx_probability(
    v: &BitString,
    sampler: &SamplerOracle,
    params: &ReductionParams,
    rng: &mut impl Rng,
) -> ApproxResult {
    indicator_product(v, params.samples_per_bit, rng, |prefix, rng| {
        sampler.query_next_bit(prefix, rng)
    })
}

/// The same prefix-chain estimator with each factor an indicator
/// frequency over inverter calls: ℰ_b(z) = fraction of outputs equal
/// to b.
pub fn prob_approx_from_inverter<F>(
    x: &BitString,
    params: &ReductionParams,
    rng: &mut impl Rng,
    mut inverter: F,
) -> ApproxResult
where
    F: FnMut(&BitString, &mut dyn RngCore) -> Result<bool>,
{
    indicator_product(x, params.samples_per_bit, rng, |prefix, rng| inverter(prefix, rng))
}

fn indicator_product<R: Rng, F>(v: &BitString, m: usize, rng: &mut R, mut next_bit: F) -> ApproxResult
where
    F: FnMut(&BitString, &mut R) -> Result<bool>,
{
    let mut value = 1.0;
    for i in 0..v.len() {
        let prefix = v.prefix(i);
        let mut hits = 0usize;
        for _ in 0..m {
            match next_bit(&prefix, rng) {
                Ok(bit) => hits += (bit == v.get(i)) as usize,
                Err(_) => return ApproxResult { value: 0.0, undefined_support: true },
            }
        }
        value *= hits as f64 / m as f64;
    }
    ApproxResult { value, undefined_support: false }
}

/// A one-way-puzzle instance: puzzle (i, x₁…ᵢ), key xᵢ₊₁.
#[derive(Clone, Debug, PartialEq)]
pub struct PuzzleRecord {
    pub index: usize,
    pub prefix: BitString,
    pub key: bool,
}

/// Desk-scale verification predicate: the puzzle extended by the key
/// must carry mass in the base distribution.
pub fn verify_puzzle(table: &PrefixTable, record: &PuzzleRecord) -> bool {
    record.prefix.len() == record.index
        && table.mass(&record.prefix.push(record.key)) > 0.0
}

/// Draws (i, x) and emits the puzzle/key pair.
pub struct OwpFromDistribution {
    n: usize,
    born: BornSampler,
}

impl OwpFromDistribution {
    pub fn new(d: &Distribution) -> Result<Self> {
        if d.num_bits() == 0 {
            return Err(Error::Invalid("puzzles need at least one bit".into()));
        }
        Ok(OwpFromDistribution { n: d.num_bits(), born: BornSampler::new(d) })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> PuzzleRecord {
        let i = rng.gen_range(0..self.n);
        let x = self.born.sample(rng);
        PuzzleRecord { index: i, prefix: x.prefix(i), key: x.get(i) }
    }
}

/// Exact induced joint Pr[(i, z), b] = (1/n)·Pr[prefix z‖b].
pub fn owp_exact_joint(d: &Distribution) -> BTreeMap<(usize, BitString, bool), f64> {
    let table = PrefixTable::build(d);
    let n = d.num_bits();
    let mut joint = BTreeMap::new();
    for i in 0..n {
        for z in BitString::all(i) {
            for b in [false, true] {
                let p = table.mass(&z.push(b)) / n as f64;
                if p > 0.0 {
                    joint.insert((i, z, b), p);
                }
            }
        }
    }
    joint
}

/// ½ Σ |a − b| over the union of two weighted maps.
pub fn map_statistical_distance<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut total = 0.0;
    for (k, &pa) in a {
        total += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &pb) in b {
        if !a.contains_key(k) {
            total += pb;
        }
    }
    total / 2.0
}

/// An (s, k) sampler with n-bit puzzles and n-bit keys.
pub trait PuzzleSampler: Sync {
    fn n(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> (BitString, BitString);
}

/// Backed by an exact 2n-bit joint table (s = first n bits, k = rest).
pub struct DistributionPuzzleSampler {
    n: usize,
    born: BornSampler,
    joint: Distribution,
}

impl DistributionPuzzleSampler {
    pub fn new(joint: Distribution) -> Result<Self> {
        if !joint.num_bits().is_multiple_of(2) || joint.num_bits() == 0 {
            return Err(Error::Invalid("joint table must cover n-bit puzzles and n-bit keys".into()));
        }
        Ok(DistributionPuzzleSampler {
            n: joint.num_bits() / 2,
            born: BornSampler::new(&joint),
            joint,
        })
    }

    pub fn joint(&self) -> &Distribution {
        &self.joint
    }
}

impl PuzzleSampler for DistributionPuzzleSampler {
    fn n(&self) -> usize {
        self.n
    }

    fn sample(&self, mut rng: &mut dyn RngCore) -> (BitString, BitString) {
        let sk = self.born.sample(&mut rng);
        (sk.prefix(self.n), sk.suffix(self.n))
    }
}

/// Emits one fixed (s₀, k₀) pair.
pub struct FixedPuzzleSampler {
    pub s: BitString,
    pub k: BitString,
}

impl PuzzleSampler for FixedPuzzleSampler {
    fn n(&self) -> usize {
        debug_assert_eq!(self.s.len(), self.k.len());
        self.s.len()
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> (BitString, BitString) {
        (self.s, self.k)
    }
}

/// One draw of the dual-mode distribution built from a puzzle sampler:
/// x = s‖k₁…ᵢ and β either uniform (mode 0) or the next key bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DnSample {
    pub x: BitString,
    pub beta: bool,
}

pub fn dist_from_owp(samp: &dyn PuzzleSampler, rng: &mut impl Rng) -> DnSample {
    let n = samp.n();
    let (s, k) = samp.sample(rng);
    let i = rng.gen_range(0..n);
    let b_mode = rng.gen::<bool>();
    let beta = if b_mode { k.get(i) } else { rng.gen::<bool>() };
    DnSample { x: s.concat(&k.prefix(i)), beta }
}

/// The exact table of the dual-mode distribution: entries keyed by
/// s‖k₁…ᵢ‖β with value (1/n)·Pr[s, k₁…ᵢ]·(1/4 + p_{β|s,k₁…ᵢ}/2).
#[derive(Clone, Debug)]
pub struct DnTable {
    pub n: usize,
    pub probs: BTreeMap<BitString, f64>,
}

pub fn exact_dn(joint: &Distribution) -> Result<DnTable> {
    if !joint.num_bits().is_multiple_of(2) || joint.num_bits() == 0 {
        return Err(Error::Invalid("joint table must cover n-bit puzzles and n-bit keys".into()));
    }
    let n = joint.num_bits() / 2;
    let table = PrefixTable::build(joint);
    let mut probs = BTreeMap::new();
    // Prefixes s‖k₁…ᵢ of the joint string have length n+i.
    for i in 0..n {
        for sz in BitString::all(n + i) {
            let mass = table.mass(&sz);
            if mass <= 0.0 {
                continue;
            }
            let p1 = table.cond1(&sz).expect("positive mass");
            for (b, pb) in [(false, 1.0 - p1), (true, p1)] {
                let value = mass / n as f64 * (0.25 + pb / 2.0);
                probs.insert(sz.push(b), value);
            }
        }
    }
    Ok(DnTable { n, probs })
}

impl DnTable {
    pub fn oracle(&self) -> ProbOracle<BitString> {
        ProbOracle::exact(self.probs.iter().map(|(k, &p)| (*k, p)))
    }

    pub fn noisy_oracle(&self, rel_error: f64, fail_prob: f64) -> Result<ProbOracle<BitString>> {
        ProbOracle::noisy(self.probs.iter().map(|(k, &p)| (*k, p)), rel_error, fail_prob)
    }
}

/// Outcome of one key-bit query: π := (3ã₁ − ã₀)/(2(ã₁ + ã₀)) clipped
/// to [0,1], then Bernoulli(π).
#[derive(Clone, Copy, Debug)]
pub struct KeyBitDraw {
    pub bit: bool,
    pub pi_raw: f64,
    pub clipped: bool,
}

pub fn key_bit_sampler(
    s: &BitString,
    prefix: &BitString,
    oracle: &ProbOracle<BitString>,
    rng: &mut impl Rng,
) -> Result<KeyBitDraw> {
    let q1 = s.concat(prefix).push(true);
    let q0 = s.concat(prefix).push(false);
    let a1 = oracle.query(&q1, q1.len(), rng);
    let a0 = oracle.query(&q0, q0.len(), rng);
    let (pi, raw, clipped) = key_bit_pi(a1, a0)?;
    let _ = pi;
    Ok(KeyBitDraw { bit: rng.gen::<f64>() < clip01(raw), pi_raw: raw, clipped })
}

fn key_bit_pi(a1: f64, a0: f64) -> Result<(f64, f64, bool)> {
    if a1 + a0 <= 0.0 {
        return Err(Error::DegenerateQuery { context: "ã₀ + ã₁ = 0".into() });
    }
    let raw = (3.0 * a1 - a0) / (2.0 * (a1 + a0));
    let clipped = !(0.0..=1.0).contains(&raw);
    Ok((clip01(raw), raw, clipped))
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Iterates the key-bit sampler to recover a full n-bit key.
pub fn full_key_sampler(
    s: &BitString,
    n: usize,
    oracle: &ProbOracle<BitString>,
    rng: &mut impl Rng,
) -> Result<(BitString, usize)> {
    let mut k = BitString::empty();
    let mut clips = 0usize;
    for _ in 0..n {
        let draw = key_bit_sampler(s, &k, oracle, rng)?;
        clips += draw.clipped as usize;
        k = k.push(draw.bit);
    }
    Ok((k, clips))
}

/// Exact enumeration of the full key sampler's outcome tree against an
/// exact dual-mode oracle: SD between the true (s,k) joint and the
/// recovered joint, walking only reachable branches.
pub fn key_recovery_exact_sd(joint: &Distribution, dn: &DnTable) -> Result<f64> {
    let n = dn.n;
    let table = PrefixTable::build(joint);
    let mut recovered: BTreeMap<BitString, f64> = BTreeMap::new();
    // Depth-first over (s, key-prefix) nodes with positive recovery mass.
    let mut stack: Vec<(BitString, f64)> = Vec::new();
    for s in BitString::all(n) {
        let ps = table.mass(&s);
        if ps > 0.0 {
            stack.push((s, ps));
        }
    }
    while let Some((sz, weight)) = stack.pop() {
        if sz.len() == 2 * n {
            recovered.insert(sz, weight);
            continue;
        }
        let a1 = dn.probs.get(&sz.push(true)).copied().unwrap_or(0.0);
        let a0 = dn.probs.get(&sz.push(false)).copied().unwrap_or(0.0);
        let (pi, _, _) = key_bit_pi(a1, a0)?;
        if pi > 0.0 {
            stack.push((sz.push(true), weight * pi));
        }
        if pi < 1.0 {
            stack.push((sz.push(false), weight * (1.0 - pi)));
        }
    }
    let true_joint: BTreeMap<BitString, f64> = joint.support().map(|(k, p)| (*k, p)).collect();
    Ok(map_statistical_distance(&true_joint, &recovered))
}

/// Worst-case per-bit gap |clip(π) − p₁| over the multiplicative error
/// band of the oracle, maximized over in-support (s, key-prefix) nodes;
/// also counts band corners at which clipping activates.
pub fn key_recovery_per_bit_gap(joint: &Distribution, dn: &DnTable, rel_error: f64) -> (f64, usize) {
    let n = dn.n;
    let table = PrefixTable::build(joint);
    let mut max_gap = 0.0f64;
    let mut clip_events = 0usize;
    for i in 0..n {
        for sz in BitString::all(n + i) {
            if table.mass(&sz) <= 0.0 {
                continue;
            }
            let p1 = table.cond1(&sz).expect("positive mass");
            let a1 = dn.probs[&sz.push(true)];
            let a0 = dn.probs[&sz.push(false)];
            // π is monotone in ã₁/ã₀, so the extremes sit at band corners.
            for (t1, t0) in [
                (a1 * (1.0 + rel_error), a0 * (1.0 - rel_error)),
                (a1 * (1.0 - rel_error), a0 * (1.0 + rel_error)),
            ] {
                let (pi, _, clipped) = key_bit_pi(t1, t0).expect("in-support masses are positive");
                clip_events += clipped as usize;
                max_gap = max_gap.max((pi - p1).abs());
            }
        }
    }
    (max_gap, clip_events)
}

/// A finite dual-mode family: uniformly chosen pool index ℓ, uniform
/// circuit C from the pool, then either (0, C, 0^ℓ) or (1, C, x ← C).
pub struct DualModeFamilies {
    /// Exact output tables, `pools[family][circuit]`.
    pub pools: Vec<Vec<Distribution>>,
}

/// Tuple key for the dual-mode probability oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DualModeKey {
    Mode0 { family: usize, circuit: usize },
    Mode1 { family: usize, circuit: usize, x: BitString },
}

#[derive(Clone, Copy, Debug)]
pub struct DualModeSample {
    pub b_mode: bool,
    pub family: usize,
    pub circuit: usize,
    /// `x` for mode 1; mode 0 carries the all-zero string.
    pub payload: BitString,
}

impl DualModeFamilies {
    pub fn new(pools: Vec<Vec<Distribution>>) -> Result<Self> {
        if pools.is_empty() || pools.iter().any(|p| p.is_empty()) {
            return Err(Error::Invalid("dual-mode families must be nonempty".into()));
        }
        Ok(DualModeFamilies { pools })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DualModeSample {
        let family = rng.gen_range(0..self.pools.len());
        let circuit = rng.gen_range(0..self.pools[family].len());
        let d = &self.pools[family][circuit];
        let x = BornSampler::new(d).sample(rng);
        let b_mode = rng.gen::<bool>();
        DualModeSample {
            b_mode,
            family,
            circuit,
            payload: if b_mode { x } else { BitString::zeros(d.num_bits()) },
        }
    }

    /// Exact tuple probabilities of the induced distribution.
    pub fn exact_tuple_probs(&self) -> Vec<(DualModeKey, f64)> {
        let num_families = self.pools.len() as f64;
        let mut out = Vec::new();
        for (fi, pool) in self.pools.iter().enumerate() {
            let w = 0.5 / num_families / pool.len() as f64;
            for (ci, d) in pool.iter().enumerate() {
                out.push((DualModeKey::Mode0 { family: fi, circuit: ci }, w));
                for (x, p) in d.support() {
                    out.push((DualModeKey::Mode1 { family: fi, circuit: ci, x: *x }, w * p));
                }
            }
        }
        out
    }

    pub fn exact_oracle(&self) -> ProbOracle<DualModeKey> {
        ProbOracle::exact(self.exact_tuple_probs())
    }

    pub fn noisy_oracle(&self, rel_error: f64, fail_prob: f64) -> Result<ProbOracle<DualModeKey>> {
        ProbOracle::noisy(self.exact_tuple_probs(), rel_error, fail_prob)
    }
}

/// Mode-1/mode-0 query ratio as an estimate of Pr_C[x].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub zero_denominator: bool,
}

pub fn ratio_estimator(
    oracle: &ProbOracle<DualModeKey>,
    family: usize,
    circuit: usize,
    x: &BitString,
    rng: &mut impl Rng,
) -> RatioEstimate {
    let numer = oracle.query(&DualModeKey::Mode1 { family, circuit, x: *x }, x.len() + 2, rng);
    let denom = oracle.query(&DualModeKey::Mode0 { family, circuit }, x.len() + 2, rng);
    if denom == 0.0 {
        return RatioEstimate { value: f64::INFINITY, zero_denominator: true };
    }
    RatioEstimate { value: numer / denom, zero_denominator: false }
}

/// Result of one pseudo-deterministic run.
#[derive(Clone, Debug, PartialEq)]
pub enum PseudodetOutcome {
    Output(BitString),
    /// A perturbed estimate steered into a zero-mass prefix.
    AbortedAt(usize),
}

/// Per bit i: e ← fraction of next-bit-1 draws at the current prefix;
/// bit = 1 iff 2ⁿ·e > Rᵢ for the supplied randomness blocks Rᵢ ∈ [1, 2ⁿ].
pub fn pseudodet_sample(
    r_blocks: &[u64],
    sampler: &SamplerOracle,
    params: &ReductionParams,
    rng: &mut impl Rng,
) -> Result<PseudodetOutcome> {
    let n = sampler.num_bits();
    validate_blocks(r_blocks, n)?;
    let grid = (1u64 << n) as f64;
    let mut prefix = BitString::empty();
    for (i, &r) in r_blocks.iter().enumerate() {
        if sampler.cond1(&prefix).is_none() {
            return Ok(PseudodetOutcome::AbortedAt(i));
        }
        let mut ones = 0usize;
        for _ in 0..params.samples_per_bit {
            ones += sampler.query_next_bit(&prefix, rng)? as usize;
        }
        let e = ones as f64 / params.samples_per_bit as f64;
        prefix = prefix.push(grid * e > r as f64);
    }
    Ok(PseudodetOutcome::Output(prefix))
}

fn validate_blocks(r_blocks: &[u64], n: usize) -> Result<()> {
    if r_blocks.len() != n {
        return Err(Error::Invalid(format!(
            "need {n} randomness blocks, got {}",
            r_blocks.len()
        )));
    }
    if r_blocks.iter().any(|&r| r == 0 || r > 1u64 << n) {
        return Err(Error::Invalid("randomness blocks must lie in [1, 2ⁿ]".into()));
    }
    Ok(())
}

pub fn uniform_blocks(n: usize, rng: &mut impl Rng) -> Vec<u64> {
    (0..n).map(|_| rng.gen_range(1..=(1u64 << n))).collect()
}

/// 1 − (modal outcome frequency) over repeated runs at fixed randomness.
#[derive(Clone, Debug)]
pub struct DeterminismProbe {
    pub error: f64,
    /// Set when some estimate landed within one grid unit of its
    /// threshold, where near-coin-flip behavior is expected.
    pub threshold_adjacent: bool,
    pub modal: PseudodetOutcome,
}

pub fn determinism_error_probe(
    r_blocks: &[u64],
    sampler: &SamplerOracle,
    params: &ReductionParams,
    repeats: usize,
    rng: &mut impl Rng,
) -> Result<DeterminismProbe> {
    if repeats < 2 {
        return Err(Error::Invalid("probe needs at least two repeats".into()));
    }
    let n = sampler.num_bits();
    validate_blocks(r_blocks, n)?;
    let grid = (1u64 << n) as f64;
    let mut counts: BTreeMap<Option<BitString>, usize> = BTreeMap::new();
    let mut adjacent = false;
    for _ in 0..repeats {
        // Inline run so per-bit estimates can be inspected for
        // threshold adjacency.
        let mut prefix = BitString::empty();
        let mut outcome: Option<BitString> = None;
        for (i, &r) in r_blocks.iter().enumerate() {
            if sampler.cond1(&prefix).is_none() {
                let _ = i;
                break;
            }
            let mut ones = 0usize;
            for _ in 0..params.samples_per_bit {
                ones += sampler.query_next_bit(&prefix, rng)? as usize;
            }
            let e = ones as f64 / params.samples_per_bit as f64;
            if (grid * e - r as f64).abs() <= 1.0 {
                adjacent = true;
            }
            prefix = prefix.push(grid * e > r as f64);
        }
        if prefix.len() == n {
            outcome = Some(prefix);
        }
        *counts.entry(outcome).or_insert(0) += 1;
    }
    let (modal_key, modal_count) = counts
        .iter()
        .max_by_key(|&(_, &c)| c)
        .map(|(k, &c)| (*k, c))
        .expect("repeats ≥ 2");
    Ok(DeterminismProbe {
        error: 1.0 - modal_count as f64 / repeats as f64,
        threshold_adjacent: adjacent,
        modal: match modal_key {
            Some(x) => PseudodetOutcome::Output(x),
            None => PseudodetOutcome::AbortedAt(0),
        },
    })
}
