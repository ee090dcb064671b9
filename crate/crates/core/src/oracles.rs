//! Adversary models: perfect and ε-noisy post-selected samplers and
//! probability oracles, all constructed from exact distribution tables
//! so that error budgets are computable in closed form.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::dists::PrefixTable;
use crate::error::{Error, Result};
use crate::qsim::Distribution;

/// How an ε budget is spent on the conditional tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    None,
    /// Moves conditional mass from the likelier to the less likely
    /// outcome at the heaviest prefixes until the budget is spent.
    MassShift,
    /// Redirects whole conditionals (to the less likely outcome) at a
    /// set of prefixes; the boundary prefix gets a partial redirect so
    /// the realized distance meets the request exactly.
    PrefixCorrupt,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub mode: NoiseMode,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { epsilon: 0.0, mode: NoiseMode::None }
    }

    pub fn mass_shift(epsilon: f64) -> Self {
        NoiseSpec { epsilon, mode: NoiseMode::MassShift }
    }

    pub fn prefix_corrupt(epsilon: f64) -> Self {
        NoiseSpec { epsilon, mode: NoiseMode::PrefixCorrupt }
    }
}

/// One Bernoulli conditional with the weight it carries in the joint
/// (puzzle, key) distribution. Shifting it by δ costs weight·δ of
/// statistical distance.
#[derive(Clone, Copy, Debug)]
pub struct CondItem {
    pub weight: f64,
    pub p1: f64,
}

/// Perturbs a set of weighted Bernoulli conditionals so the joint
/// statistical distance to the exact family equals `epsilon`.
///
/// Returns the perturbed p1 per item. Items are corrupted in descending
/// weight order (ties by index), worst-case-leaning.
pub fn perturb_conditionals(items: &[CondItem], spec: &NoiseSpec) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = items.iter().map(|it| it.p1).collect();
    if spec.mode == NoiseMode::None || spec.epsilon == 0.0 {
        if spec.epsilon != 0.0 {
            return Err(Error::Invalid("epsilon > 0 requires a noise mode".into()));
        }
        return Ok(out);
    }
    if !(0.0..1.0).contains(&spec.epsilon) {
        return Err(Error::Invalid(format!("epsilon {} outside [0,1)", spec.epsilon)));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b].weight.partial_cmp(&items[a].weight).unwrap().then(a.cmp(&b))
    });
    // Shifting toward the less likely outcome can move at most the
    // likelier outcome's whole mass.
    let cap = |p1: f64| p1.max(1.0 - p1);
    let attainable: f64 = items.iter().map(|it| it.weight * cap(it.p1)).sum();
    if attainable + 1e-12 < spec.epsilon {
        return Err(Error::InfeasibleNoise { requested: spec.epsilon, attainable });
    }
    let mut remaining = spec.epsilon;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let it = items[i];
        if it.weight <= 0.0 {
            continue;
        }
        let c = cap(it.p1);
        let delta = match spec.mode {
            NoiseMode::MassShift | NoiseMode::PrefixCorrupt => (remaining / it.weight).min(c),
            NoiseMode::None => unreachable!(),
        };
        // Both modes land on the same per-prefix perturbed conditional;
        // PrefixCorrupt realizes it as a λ-mix of exact and fully
        // redirected, which has identical statistics.
        out[i] = if it.p1 >= 0.5 { it.p1 - delta } else { it.p1 + delta };
        remaining -= it.weight * delta;
    }
    if remaining > 1e-9 {
        return Err(Error::InfeasibleNoise { requested: spec.epsilon, attainable });
    }
    Ok(out)
}

/// A post-selected sampler over a fixed distribution: `query(prefix)`
/// draws a suffix from the (possibly ε-perturbed) conditional
/// distribution given the prefix.
#[derive(Debug)]
pub struct SamplerOracle {
    table: PrefixTable,
    /// Perturbed next-bit conditionals per level, dense by prefix value;
    /// NaN marks zero-mass prefixes.
    tilde: Vec<Vec<f64>>,
    realized_sd: f64,
}

impl SamplerOracle {
    /// Exact conditional sampler.
    pub fn perfect(d: &Distribution) -> Self {
        let table = PrefixTable::build(d);
        let tilde = exact_tilde(&table);
        SamplerOracle { table, tilde, realized_sd: 0.0 }
    }

    /// Sampler whose joint (puzzle, key) distribution — puzzle a
    /// uniform-length prefix, key the next bit — sits at statistical
    /// distance exactly `spec.epsilon` from the exact joint.
    pub fn noisy(d: &Distribution, spec: &NoiseSpec) -> Result<Self> {
        let table = PrefixTable::build(d);
        let n = table.num_bits();
        let mut items = Vec::new();
        let mut coords = Vec::new();
        for level in 0..n {
            for z in BitString::all(level) {
                let mass = table.mass(&z);
                if mass <= 0.0 {
                    continue;
                }
                let p1 = table.cond1(&z).expect("positive mass");
                items.push(CondItem { weight: mass / n as f64, p1 });
                coords.push(z);
            }
        }
        let perturbed = perturb_conditionals(&items, spec)?;
        let mut tilde = exact_tilde(&table);
        for (z, &p1) in coords.iter().zip(&perturbed) {
            tilde[z.len()][z.value() as usize] = p1;
        }
        let mut oracle = SamplerOracle { table, tilde, realized_sd: 0.0 };
        oracle.realized_sd = oracle.joint_sd_vs_exact();
        let dev = (oracle.realized_sd - spec.epsilon).abs();
        if dev > 1e-6 {
            return Err(Error::Invalid(format!(
                "noise construction missed the target: realized {} vs requested {}",
                oracle.realized_sd, spec.epsilon
            )));
        }
        Ok(oracle)
    }

    pub fn num_bits(&self) -> usize {
        self.table.num_bits()
    }

    /// Statistical distance of the realized (uniform-index prefix, next
    /// bit) joint from the exact one, by exact enumeration.
    pub fn joint_sd_vs_exact(&self) -> f64 {
        let n = self.num_bits();
        let mut total = 0.0;
        for level in 0..n {
            for z in BitString::all(level) {
                let mass = self.table.mass(&z);
                if mass <= 0.0 {
                    continue;
                }
                let exact = self.table.cond1(&z).expect("positive mass");
                let noisy = self.tilde[level][z.value() as usize];
                total += mass / n as f64 * (exact - noisy).abs();
            }
        }
        total
    }

    pub fn realized_sd(&self) -> f64 {
        self.realized_sd
    }

    /// The (possibly perturbed) next-bit conditional; `None` off support.
    pub fn cond1(&self, prefix: &BitString) -> Option<f64> {
        let p = self.tilde[prefix.len()][prefix.value() as usize];
        if p.is_nan() {
            None
        } else {
            Some(p)
        }
    }

    pub fn exact_cond1(&self, prefix: &BitString) -> Option<f64> {
        self.table.cond1(prefix)
    }

    pub fn prefix_mass(&self, prefix: &BitString) -> f64 {
        self.table.mass(prefix)
    }

    /// Samples the next bit after `prefix`.
    pub fn query_next_bit(&self, prefix: &BitString, rng: &mut impl Rng) -> Result<bool> {
        match self.cond1(prefix) {
            Some(p1) => Ok(rng.gen::<f64>() < p1),
            None => Err(Error::UndefinedSupport { prefix: prefix.to_string() }),
        }
    }

    /// Samples a full suffix by walking the conditional chain.
    pub fn query(&self, prefix: &BitString, rng: &mut impl Rng) -> Result<BitString> {
        if prefix.len() >= self.num_bits() {
            return Err(Error::Invalid("prefix leaves no suffix to sample".into()));
        }
        if self.table.mass(prefix) <= 0.0 {
            return Err(Error::UndefinedSupport { prefix: prefix.to_string() });
        }
        let mut cur = *prefix;
        let mut suffix = BitString::empty();
        while cur.len() < self.num_bits() {
            let bit = self.query_next_bit(&cur, rng)?;
            cur = cur.push(bit);
            suffix = suffix.push(bit);
        }
        Ok(suffix)
    }
}

fn exact_tilde(table: &PrefixTable) -> Vec<Vec<f64>> {
    let n = table.num_bits();
    (0..n)
        .map(|level| {
            BitString::all(level)
                .map(|z| table.cond1(&z).unwrap_or(f64::NAN))
                .collect()
        })
        .collect()
}

/// A probability oracle over an exact table: exact answers, or answers
/// multiplicatively perturbed within ±rel_error except with probability
/// fail_prob.
///
/// Off-support queries return 0 when exact; when noisy they return an
/// independent uniform value in (0, 2/2^ℓ] for a length-ℓ query — the
/// adversary is unconstrained there, and a concrete reproducible policy
/// is required for tests. Failures draw from the same policy.
pub struct ProbOracle<K: Ord + Clone> {
    table: BTreeMap<K, f64>,
    rel_error: f64,
    fail_prob: f64,
}

impl<K: Ord + Clone> ProbOracle<K> {
    pub fn exact(entries: impl IntoIterator<Item = (K, f64)>) -> Self {
        ProbOracle { table: entries.into_iter().collect(), rel_error: 0.0, fail_prob: 0.0 }
    }

    pub fn noisy(
        entries: impl IntoIterator<Item = (K, f64)>,
        rel_error: f64,
        fail_prob: f64,
    ) -> Result<Self> {
        if rel_error < 0.0 {
            return Err(Error::Invalid("rel_error must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&fail_prob) {
            return Err(Error::Invalid("fail_prob must lie in [0,1]".into()));
        }
        Ok(ProbOracle { table: entries.into_iter().collect(), rel_error, fail_prob })
    }

    pub fn exact_value(&self, key: &K) -> f64 {
        self.table.get(key).copied().unwrap_or(0.0)
    }

    pub fn rel_error(&self) -> f64 {
        self.rel_error
    }

    /// Queries the oracle. `query_len` is the bit length of the queried
    /// string, fixing the off-support answer scale.
    pub fn query(&self, key: &K, query_len: usize, rng: &mut impl Rng) -> f64 {
        let adversarial = |rng: &mut dyn rand::RngCore| {
            let scale = 2.0 / (1u64 << query_len.min(62)) as f64;
            let u: f64 = rng.gen::<f64>();
            scale * (1.0 - u) // uniform in (0, scale]
        };
        match self.table.get(key) {
            None => {
                if self.rel_error == 0.0 && self.fail_prob == 0.0 {
                    0.0
                } else {
                    adversarial(rng)
                }
            }
            Some(&p) => {
                if self.fail_prob > 0.0 && rng.gen::<f64>() < self.fail_prob {
                    return adversarial(rng);
                }
                if self.rel_error == 0.0 {
                    p
                } else {
                    let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                    p * (1.0 + u * self.rel_error)
                }
            }
        }
    }
}

/// Builds a probability oracle over a plain distribution table.
pub fn exact_prob_oracle(d: &Distribution) -> ProbOracle<BitString> {
    ProbOracle::exact(d.support().map(|(k, p)| (*k, p)))
}

pub fn noisy_prob_oracle(
    d: &Distribution,
    rel_error: f64,
    fail_prob: f64,
) -> Result<ProbOracle<BitString>> {
    ProbOracle::noisy(d.support().map(|(k, p)| (*k, p)), rel_error, fail_prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{exact_output_distribution, sample_circuit, CircuitFamily};
    use crate::qsim::statistical_distance;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn ghz_dist() -> Distribution {
        exact_output_distribution(3, &sample_circuit(&CircuitFamily::ghz(3)).unwrap(), 3).unwrap()
    }

    #[test]
    fn perfect_sampler_on_ghz_prefix() {
        let oracle = SamplerOracle::perfect(&ghz_dist());
        let mut rng = seeded(1);
        for _ in 0..100 {
            let suffix = oracle.query(&BitString::parse("1").unwrap(), &mut rng).unwrap();
            assert_eq!(suffix.to_string(), "11");
        }
    }

    #[test]
    fn perfect_sampler_empty_prefix_histogram() {
        let d = exact_output_distribution(
            4,
            &sample_circuit(&CircuitFamily::random_universal(4, 8, 40)).unwrap(),
            4,
        )
        .unwrap();
        let oracle = SamplerOracle::perfect(&d);
        let mut rng = seeded(2);
        let m = 1_000_000;
        let mut counts: BTreeMap<BitString, f64> = BTreeMap::new();
        for _ in 0..m {
            let x = oracle.query(&BitString::empty(), &mut rng).unwrap();
            *counts.entry(x).or_insert(0.0) += 1.0;
        }
        let emp =
            Distribution::new(4, counts.into_iter().map(|(k, c)| (k, c / m as f64)).collect()).unwrap();
        let sd = statistical_distance(&d, &emp).unwrap();
        assert!(sd < 0.01, "sampler histogram SD {sd}");
    }

    #[test]
    fn zero_mass_prefix_is_an_error() {
        let oracle = SamplerOracle::perfect(&ghz_dist());
        let mut rng = seeded(3);
        let err = oracle.query(&BitString::parse("01").unwrap(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::UndefinedSupport { .. }));
    }

    #[test]
    fn noise_epsilon_zero_matches_perfect() {
        let d = ghz_dist();
        let perfect = SamplerOracle::perfect(&d);
        let noisy = SamplerOracle::noisy(&d, &NoiseSpec::mass_shift(0.0)).unwrap();
        for level in 0..3 {
            for z in BitString::all(level) {
                assert_eq!(perfect.cond1(&z).is_some(), noisy.cond1(&z).is_some());
                if let (Some(a), Some(b)) = (perfect.cond1(&z), noisy.cond1(&z)) {
                    assert_abs_diff_eq!(a, b, epsilon = 0.0);
                }
            }
        }
    }

    #[test]
    fn realized_sd_matches_requested_epsilon() {
        for seed in [0u64, 1, 2] {
            let d = exact_output_distribution(
                4,
                &sample_circuit(&CircuitFamily::random_universal(4, 6, 100 + seed)).unwrap(),
                4,
            )
            .unwrap();
            for eps in [0.01, 0.05, 0.2] {
                for spec in [NoiseSpec::mass_shift(eps), NoiseSpec::prefix_corrupt(eps)] {
                    let oracle = SamplerOracle::noisy(&d, &spec).unwrap();
                    assert_abs_diff_eq!(oracle.realized_sd(), eps, epsilon = 1e-6);
                    assert_abs_diff_eq!(oracle.joint_sd_vs_exact(), eps, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn point_distribution_mass_shift() {
        // One-bit point mass {1}: shifting ε = 0.1 puts 0.9 on the true
        // suffix and 0.1 on the designated alternative.
        let d = Distribution::point(BitString::parse("1").unwrap());
        let oracle = SamplerOracle::noisy(&d, &NoiseSpec::mass_shift(0.1)).unwrap();
        let p1 = oracle.cond1(&BitString::empty()).unwrap();
        assert_abs_diff_eq!(p1, 0.9, epsilon = 1e-12);
        let mut rng = seeded(4);
        let mut ones = 0;
        let m = 100_000;
        for _ in 0..m {
            ones += oracle.query(&BitString::empty(), &mut rng).unwrap().get(0) as usize;
        }
        let frac = ones as f64 / m as f64;
        assert!((frac - 0.9).abs() < 0.01, "empirical suffix mass {frac}");
    }

    #[test]
    fn infeasible_epsilon_is_rejected() {
        let d = Distribution::point(BitString::parse("1").unwrap());
        // Max attainable joint SD for a 1-bit point mass is 1; 0.999 is
        // fine, but a two-bit uniform distribution caps at 1/2 per level.
        let uniform = Distribution::from_dense(1, &[0.5, 0.5]).unwrap();
        let err = SamplerOracle::noisy(&uniform, &NoiseSpec::mass_shift(0.9)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleNoise { .. }));
        assert!(SamplerOracle::noisy(&d, &NoiseSpec::mass_shift(0.9)).is_ok());
    }

    #[test]
    fn perfect_sampler_within_chernoff_envelope() {
        // Thm-style envelope: |frequency − p| ≤ 3/√m for nearly every
        // (prefix, repetition) pair.
        let d = exact_output_distribution(
            5,
            &sample_circuit(&CircuitFamily::random_universal(5, 8, 55)).unwrap(),
            5,
        )
        .unwrap();
        let oracle = SamplerOracle::perfect(&d);
        let mut rng = seeded(6);
        let m = 10_000usize;
        let envelope = 3.0 / (m as f64).sqrt();
        let mut pairs = 0usize;
        let mut within = 0usize;
        for level in 0..5 {
            for z in BitString::all(level) {
                let Some(p1) = oracle.exact_cond1(&z) else { continue };
                for _rep in 0..4 {
                    let mut ones = 0usize;
                    for _ in 0..m {
                        ones += oracle.query_next_bit(&z, &mut rng).unwrap() as usize;
                    }
                    let freq = ones as f64 / m as f64;
                    pairs += 1;
                    within += ((freq - p1).abs() <= envelope) as usize;
                }
            }
        }
        assert!(within as f64 >= 0.99 * pairs as f64, "{within}/{pairs} inside envelope");
    }

    #[test]
    fn prob_oracle_exact_values() {
        let d = ghz_dist();
        let oracle = exact_prob_oracle(&d);
        let mut rng = seeded(7);
        let key = BitString::parse("000").unwrap();
        // Exactly the stored table value, which is 0.5 up to simulator
        // roundoff.
        assert_eq!(oracle.query(&key, 3, &mut rng), d.prob(&key));
        assert_abs_diff_eq!(d.prob(&key), 0.5, epsilon = 1e-12);
        assert_eq!(oracle.query(&BitString::parse("010").unwrap(), 3, &mut rng), 0.0);
    }

    #[test]
    fn prob_oracle_noisy_band() {
        let d = ghz_dist();
        let oracle = noisy_prob_oracle(&d, 0.1, 0.0).unwrap();
        let mut rng = seeded(8);
        let key = BitString::parse("111").unwrap();
        for _ in 0..1000 {
            let v = oracle.query(&key, 3, &mut rng);
            assert!((0.45..=0.55).contains(&v), "value {v} outside the band");
        }
        // Off-support answers are adversarial but bounded by 2/2^n.
        let off = oracle.query(&BitString::parse("010").unwrap(), 3, &mut rng);
        assert!(off > 0.0 && off <= 2.0 / 8.0);
    }
}
