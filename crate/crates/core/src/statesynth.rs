//! State-puzzle pipeline: puzzle samplers over secret states, amplitude
//! synthesis over the prefix tree, phase recovery from rotated-basis
//! statistics, full state reconstruction, and the geometric bound that
//! controls arctan2 error propagation.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::bits::BitString;
use crate::designs::{sample_clifford, CliffordElement};
use crate::dists::PrefixTable;
use crate::error::{Error, Result};
use crate::oracles::{perturb_conditionals, CondItem, NoiseSpec};
use crate::qsim::{
    apply_gate, born_distribution, extract_remaining, inner_product, measure_subset, run_circuit,
    BornSampler, GateOp, PureState,
};
use crate::rng::seeded;

const R2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A state puzzle: classical identifier `s` and the secret state.
#[derive(Clone, Debug)]
pub struct StatePuzzleInstance {
    pub s: BitString,
    pub psi: PureState,
    pub seed: u64,
}

/// Generic instance with seeded complex Gaussian amplitudes.
pub fn random_state_puzzle(n: usize, seed: u64) -> Result<StatePuzzleInstance> {
    let mut rng = seeded(seed ^ 0x57a7_e000_0000_0001);
    let amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    Ok(StatePuzzleInstance {
        s: BitString::from_value(seed & ((1 << n) - 1), n),
        psi: PureState::from_unnormalized(n, amps)?,
        seed,
    })
}

/// Instance whose amplitudes are real and nonnegative.
pub fn real_positive_state_puzzle(n: usize, seed: u64) -> Result<StatePuzzleInstance> {
    let mut rng = seeded(seed ^ 0x57a7_e000_0000_0002);
    let amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen::<f64>(), 0.0))
        .collect();
    Ok(StatePuzzleInstance {
        s: BitString::from_value(seed & ((1 << n) - 1), n),
        psi: PureState::from_unnormalized(n, amps)?,
        seed,
    })
}

/// Measures the identifier register of a purified sampler state
/// Σ √p_{s,k}|s⟩|k⟩|junk⟩ (junk appended last) and returns the
/// identifier with the residual state.
pub fn state_puzzle_from_sampler(
    gen: &PureState,
    s_qubits: usize,
    rng: &mut impl Rng,
) -> Result<(BitString, PureState)> {
    if s_qubits == 0 || s_qubits >= gen.num_qubits() {
        return Err(Error::Invalid("identifier register must be a proper prefix".into()));
    }
    let s_register: Vec<usize> = (0..s_qubits).collect();
    let (s, post) = measure_subset(gen, &s_register, rng)?;
    let residual = extract_remaining(&post, &s_register, &s)?;
    Ok((s, residual))
}

/// The reversible two-to-one shift oracle Σ_z |z⟩⟨z| ⊗ X^{f_r(z)} with
/// f_r(z) = min(z, z⊕r) on a fresh n-qubit output register.
pub fn f_r_oracle(n: usize, r: &BitString) -> Result<GateOp> {
    if r.len() != n || r.value() == 0 {
        return Err(Error::Invalid("shift must be a nonzero n-bit string".into()));
    }
    let rv = r.value();
    let table: Vec<u64> = (0..1u64 << n).map(|z| z.min(z ^ rv)).collect();
    Ok(GateOp::FunctionOracle {
        inputs: (0..n).collect(),
        outputs: (n..2 * n).collect(),
        table,
    })
}

/// Polar parameters of a two-term residual state
/// cos(θ/2)|x₀⟩ + sin(θ/2)·e^{−iφ}|x₁⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairStateParams {
    pub theta: f64,
    pub phi: f64,
}

impl PairStateParams {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::Invalid("theta must lie in [0, π]".into()));
        }
        if !(0.0..std::f64::consts::TAU).contains(&phi) {
            return Err(Error::Invalid("phi must lie in [0, 2π)".into()));
        }
        Ok(PairStateParams { theta, phi })
    }

    /// Builds the normalized pair state on an n-qubit register.
    pub fn state(&self, n: usize, x0: &BitString, x1: &BitString) -> Result<PureState> {
        let (a, b) = pair_indices(x0, x1)?;
        if x0.len() != n {
            return Err(Error::DimensionMismatch("pair strings do not fit the register".into()));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[a as usize] = Complex64::new((self.theta / 2.0).cos(), 0.0);
        amps[b as usize] = Complex64::from_polar((self.theta / 2.0).sin(), -self.phi);
        PureState::from_amplitudes(n, amps)
    }

    /// Noise-free measurement laws for β = 0: (A′, B′).
    pub fn beta0_laws(&self) -> (f64, f64) {
        (
            (1.0 + self.theta.sin() * self.phi.cos()) / 2.0,
            (1.0 + self.theta.sin() * self.phi.sin()) / 2.0,
        )
    }
}

/// The unitary mapping |y₀⟩ ↦ (|y₀⟩ + i^b|y₁⟩)/√2 and
/// |y₁⟩ ↦ (|y₀⟩ − i^b|y₁⟩)/√2, identity off span{|y₀⟩, |y₁⟩}.
pub fn make_v(y0: &BitString, y1: &BitString, b: bool) -> Result<GateOp> {
    let (a, bb) = pair_indices(y0, y1)?;
    let ib = if b { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
    Ok(GateOp::TwoLevel {
        index_a: a,
        index_b: bb,
        matrix: [
            [Complex64::new(R2, 0.0), Complex64::new(R2, 0.0)],
            [ib * R2, -ib * R2],
        ],
    })
}

/// Analysis rotation for measuring in the V-rotated basis: applying it
/// and measuring in the computational basis yields outcome y₀ with
/// probability (1 + sinθ·cosφ)/2 for b = 0 and (1 + sinθ·sinφ)/2 for
/// b = 1, for a pair state cos(θ/2)|y₀⟩ + e^{−iφ} sin(θ/2)|y₁⟩.
pub fn pair_measure_gate(y0: &BitString, y1: &BitString, b: bool) -> Result<GateOp> {
    let (a, bb) = pair_indices(y0, y1)?;
    let ib = if b { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
    Ok(GateOp::TwoLevel {
        index_a: a,
        index_b: bb,
        matrix: [
            [Complex64::new(R2, 0.0), ib * R2],
            [Complex64::new(R2, 0.0), -ib * R2],
        ],
    })
}

fn pair_indices(y0: &BitString, y1: &BitString) -> Result<(u64, u64)> {
    if y0.len() != y1.len() {
        return Err(Error::DimensionMismatch("pair strings of unequal length".into()));
    }
    if y0 == y1 {
        return Err(Error::Invalid("pair strings must differ".into()));
    }
    Ok((y0.value(), y1.value()))
}

/// One puzzle/key draw over a rotated secret state.
#[derive(Clone, Debug, PartialEq)]
pub enum SpPuzzle {
    Mode0 { index: usize, prefix: BitString },
    Mode1 { y0: BitString, y1: BitString, b_rot: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpRecord {
    pub puzzle: SpPuzzle,
    /// β: false when the mode-1 outcome was y₀ (resp. the measured bit
    /// in mode 0 was 0).
    pub key: bool,
}

/// The one-way-puzzle sampler over a state puzzle, operating on the
/// already-rotated state |$_{s,c}⟩ = c|$_s⟩.
pub fn owp_sample_statepuzzle(psi_sc: &PureState, rng: &mut impl Rng) -> Result<SpRecord> {
    let n = psi_sc.num_qubits();
    if rng.gen::<bool>() {
        // Mode 1: collapse onto a pair via f_r, then a rotated-basis bit.
        let r = loop {
            let cand = BitString::from_value(rng.gen_range(0..1u64 << n), n);
            if cand.value() != 0 {
                break cand;
            }
        };
        let joint = psi_sc.tensor(&PureState::zero(n)?)?;
        let joint = apply_gate(&joint, &f_r_oracle(n, &r)?)?;
        let image_register: Vec<usize> = (n..2 * n).collect();
        let (x0, post) = measure_subset(&joint, &image_register, rng)?;
        let pair_state = extract_remaining(&post, &image_register, &x0)?;
        let x1 = x0.xor(&r);
        let (y0, y1) = if rng.gen::<bool>() { (x1, x0) } else { (x0, x1) };
        let b_rot = rng.gen::<bool>();
        let key = mode1_measure(&pair_state, &y0, &y1, b_rot, rng)?;
        Ok(SpRecord { puzzle: SpPuzzle::Mode1 { y0, y1, b_rot }, key })
    } else {
        // Mode 0: a uniform-length prefix and the next bit.
        let i = rng.gen_range(0..n);
        let (prefix, post) = if i == 0 {
            (BitString::empty(), psi_sc.clone())
        } else {
            let qubits: Vec<usize> = (0..i).collect();
            measure_subset(psi_sc, &qubits, rng)?
        };
        let (beta, _) = measure_subset(&post, &[i], rng)?;
        Ok(SpRecord { puzzle: SpPuzzle::Mode0 { index: i, prefix }, key: beta.get(0) })
    }
}

/// Measures a two-term residual state in the rotated pair basis;
/// returns β (false for outcome y₀).
pub fn mode1_measure(
    pair_state: &PureState,
    y0: &BitString,
    y1: &BitString,
    b_rot: bool,
    rng: &mut impl Rng,
) -> Result<bool> {
    let rotated = apply_gate(pair_state, &pair_measure_gate(y0, y1, b_rot)?)?;
    let qubits: Vec<usize> = (0..pair_state.num_qubits()).collect();
    let (outcome, _) = measure_subset(&rotated, &qubits, rng)?;
    Ok(outcome != *y0)
}

/// Brute-force inverter for the state-puzzle sampler over a fixed
/// (s, c): exact conditional tables for both query modes, optionally
/// perturbed so the joint (puzzle, key) statistical distance from exact
/// equals a requested ε.
pub struct SynthInverter {
    n: usize,
    prefix: PrefixTable,
    amps: Vec<Complex64>,
    /// Perturbed mode-0 conditionals per level (NaN off support).
    mode0_tilde: Vec<Vec<f64>>,
    /// Perturbed mode-1 Pr[β=0], present only for ε > 0.
    mode1_tilde: BTreeMap<(u64, u64, bool), f64>,
    realized_sd: f64,
}

impl SynthInverter {
    pub fn exact(psi_sc: &PureState) -> Result<Self> {
        let n = psi_sc.num_qubits();
        let qubits: Vec<usize> = (0..n).collect();
        let dist = born_distribution(psi_sc, &qubits)?;
        let prefix = PrefixTable::build(&dist);
        let mode0_tilde = (0..n)
            .map(|level| {
                BitString::all(level)
                    .map(|z| prefix.cond1(&z).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        Ok(SynthInverter {
            n,
            prefix,
            amps: psi_sc.amplitudes().to_vec(),
            mode0_tilde,
            mode1_tilde: BTreeMap::new(),
            realized_sd: 0.0,
        })
    }

    /// Perturbs the conditional tables by the mass-shift scheme until
    /// the joint statistical distance over sampled puzzles equals ε.
    pub fn noisy(psi_sc: &PureState, epsilon: f64) -> Result<Self> {
        let mut inv = Self::exact(psi_sc)?;
        if epsilon == 0.0 {
            return Ok(inv);
        }
        let n = inv.n;
        let r_size = ((1u64 << n) - 1) as f64;
        let mut items = Vec::new();
        let mut coords: Vec<SynthCoord> = Vec::new();
        for level in 0..n {
            for z in BitString::all(level) {
                let mass = inv.prefix.mass(&z);
                if mass <= 0.0 {
                    continue;
                }
                items.push(CondItem {
                    weight: 0.5 * mass / n as f64,
                    p1: inv.prefix.cond1(&z).expect("positive mass"),
                });
                coords.push(SynthCoord::Mode0(z));
            }
        }
        let prob_y0 = |a: f64| 0.5 * (a * (1.0 - 1.0 / r_size) + 1.0 / r_size);
        for y0 in BitString::all(n) {
            let a0 = inv.amps[y0.value() as usize].norm_sqr();
            let w_y0 = prob_y0(a0);
            for y1 in BitString::all(n) {
                if y0 == y1 {
                    continue;
                }
                let a1 = inv.amps[y1.value() as usize].norm_sqr();
                let w_y1 = (a1 + a0) / (1.0 + a0 * (r_size - 1.0));
                for b_rot in [false, true] {
                    let weight = 0.5 * w_y0 * w_y1 * 0.5;
                    let p_beta0 = match inv.exact_beta0(&y0, &y1, b_rot) {
                        Some(p) => p,
                        None => continue, // zero-mass pair, unreachable
                    };
                    items.push(CondItem { weight, p1: p_beta0 });
                    coords.push(SynthCoord::Mode1(y0.value(), y1.value(), b_rot));
                }
            }
        }
        let perturbed = perturb_conditionals(&items, &NoiseSpec::mass_shift(epsilon))?;
        let mut realized = 0.0;
        for ((coord, item), p_new) in coords.iter().zip(&items).zip(&perturbed) {
            realized += item.weight * (item.p1 - p_new).abs();
            match coord {
                SynthCoord::Mode0(z) => {
                    inv.mode0_tilde[z.len()][z.value() as usize] = *p_new;
                }
                SynthCoord::Mode1(a, b, rot) => {
                    if (p_new - item.p1).abs() > 0.0 {
                        inv.mode1_tilde.insert((*a, *b, *rot), *p_new);
                    }
                }
            }
        }
        if (realized - epsilon).abs() > 1e-6 {
            return Err(Error::Invalid(format!(
                "inverter noise construction missed the target: {realized} vs {epsilon}"
            )));
        }
        inv.realized_sd = realized;
        Ok(inv)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn realized_sd(&self) -> f64 {
        self.realized_sd
    }

    pub fn exact_p1(&self, z: &BitString) -> Option<f64> {
        self.prefix.cond1(z)
    }

    pub fn prefix_mass(&self, z: &BitString) -> f64 {
        self.prefix.mass(z)
    }

    /// The inverter's mode-0 conditional (perturbed view).
    pub fn p1(&self, z: &BitString) -> Option<f64> {
        let p = self.mode0_tilde[z.len()][z.value() as usize];
        if p.is_nan() {
            None
        } else {
            Some(p)
        }
    }

    /// One mode-0 key-bit draw. A perfect inverter refuses zero-mass
    /// prefixes; a perturbed one answers a fair coin there (the
    /// adversary is unconstrained off support).
    pub fn sample_mode0(&self, z: &BitString, rng: &mut impl Rng) -> Result<bool> {
        match self.p1(z) {
            Some(p1) => Ok(rng.gen::<f64>() < p1),
            None if self.realized_sd > 0.0 => Ok(rng.gen::<bool>()),
            None => Err(Error::UndefinedSupport { prefix: z.to_string() }),
        }
    }

    /// Exact Pr[β = 0 | (y₀, y₁, b_rot)] from the pair amplitudes;
    /// `None` when the pair carries no mass.
    pub fn exact_beta0(&self, y0: &BitString, y1: &BitString, b_rot: bool) -> Option<f64> {
        let a0 = self.amps[y0.value() as usize];
        let a1 = self.amps[y1.value() as usize];
        let denom = a0.norm_sqr() + a1.norm_sqr();
        if denom <= 1e-300 {
            return None;
        }
        let mixed = if b_rot { a0 + Complex64::new(0.0, 1.0) * a1 } else { a0 + a1 };
        Some(mixed.norm_sqr() / (2.0 * denom))
    }

    /// The inverter's mode-1 key law (perturbed view).
    pub fn beta0(&self, y0: &BitString, y1: &BitString, b_rot: bool) -> Option<f64> {
        if let Some(&p) = self.mode1_tilde.get(&(y0.value(), y1.value(), b_rot)) {
            return Some(p);
        }
        self.exact_beta0(y0, y1, b_rot)
    }

    /// One mode-1 key draw; off-support pairs get a fair coin.
    pub fn sample_mode1(
        &self,
        y0: &BitString,
        y1: &BitString,
        b_rot: bool,
        rng: &mut impl Rng,
    ) -> bool {
        let p_beta0 = self.beta0(y0, y1, b_rot).unwrap_or(0.5);
        rng.gen::<f64>() >= p_beta0
    }
}

enum SynthCoord {
    Mode0(BitString),
    Mode1(u64, u64, bool),
}

/// Amplitude-synthesis budgets and policies.
#[derive(Clone, Copy, Debug)]
pub struct SynthParams {
    /// Inverter calls per prefix estimate (mode 0).
    pub amp_samples: usize,
    /// Inverter calls per (u, v) component of each phase estimate.
    pub phase_trials: usize,
    /// Synthesized amplitudes below this skip phase estimation.
    pub amp_threshold: f64,
    /// When false, conditionals are read off the inverter exactly
    /// instead of being estimated by sampling.
    pub sampled: bool,
}

impl SynthParams {
    pub fn exact() -> Self {
        SynthParams { amp_samples: 1, phase_trials: 1, amp_threshold: 1e-6, sampled: false }
    }

    pub fn sampled(amp_samples: usize, phase_trials: usize) -> Self {
        SynthParams { amp_samples, phase_trials, amp_threshold: 1e-6, sampled: true }
    }
}

/// Output of the amplitude stage: the real-amplitude state over the
/// prefix tree plus the per-prefix estimates used.
#[derive(Clone, Debug)]
pub struct AmpSynthesis {
    pub state: PureState,
    pub estimates: BTreeMap<BitString, f64>,
    pub flagged_prefixes: usize,
}

/// Builds Σ √(Π p̃)|x⟩ from a conditional provider; `None` marks a
/// prefix without inverter support, whose subtree gets amplitude 0.
pub fn amplitude_synthesis_with<F>(n: usize, mut cond: F) -> Result<AmpSynthesis>
where
    F: FnMut(&BitString) -> Option<f64>,
{
    let mut layer: Vec<(BitString, f64)> = vec![(BitString::empty(), 1.0)];
    let mut estimates = BTreeMap::new();
    let mut flagged = 0usize;
    for _ in 0..n {
        let mut next = Vec::with_capacity(layer.len() * 2);
        for (z, weight) in layer {
            match cond(&z) {
                Some(p1) => {
                    estimates.insert(z, p1);
                    if p1 < 1.0 {
                        next.push((z.push(false), weight * (1.0 - p1)));
                    }
                    if p1 > 0.0 {
                        next.push((z.push(true), weight * p1));
                    }
                }
                None => flagged += 1,
            }
        }
        layer = next;
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    for (x, weight) in layer {
        amps[x.value() as usize] = Complex64::new(weight.sqrt(), 0.0);
    }
    // Flagged subtrees lose their mass; renormalize the remainder.
    let state = PureState::from_unnormalized(n, amps)?;
    Ok(AmpSynthesis { state, estimates, flagged_prefixes: flagged })
}

/// Amplitude stage against the inverter, exact or sampled per params.
pub fn amplitude_synthesis(
    inv: &SynthInverter,
    params: &SynthParams,
    rng: &mut impl Rng,
) -> Result<AmpSynthesis> {
    let n = inv.n();
    if params.sampled {
        let m = params.amp_samples;
        amplitude_synthesis_with(n, |z| {
            let mut ones = 0usize;
            for _ in 0..m {
                match inv.sample_mode0(z, rng) {
                    Ok(bit) => ones += bit as usize,
                    Err(_) => return None,
                }
            }
            Some(ones as f64 / m as f64)
        })
    } else {
        amplitude_synthesis_with(n, |z| inv.p1(z))
    }
}

/// (u, v, φ̂) from rotated-basis statistics anchored at `z`.
#[derive(Clone, Copy, Debug)]
pub struct PhaseEstimate {
    pub u: f64,
    pub v: f64,
    pub phi_hat: f64,
}

impl PhaseEstimate {
    fn from_uv(u: f64, v: f64) -> Self {
        PhaseEstimate { u, v, phi_hat: v.atan2(u) }
    }
}

/// u = 2·Pr̂[β=0 | b_rot=0] − 1, v likewise at b_rot=1, φ̂ = arctan2(v, u).
pub fn phase_estimate(
    inv: &SynthInverter,
    anchor: &BitString,
    target: &BitString,
    trials: usize,
    rng: &mut impl Rng,
) -> PhaseEstimate {
    let mut zeros = [0usize; 2];
    for _ in 0..trials {
        zeros[0] += !inv.sample_mode1(anchor, target, false, rng) as usize;
        zeros[1] += !inv.sample_mode1(anchor, target, true, rng) as usize;
    }
    let u = 2.0 * zeros[0] as f64 / trials as f64 - 1.0;
    let v = 2.0 * zeros[1] as f64 / trials as f64 - 1.0;
    PhaseEstimate::from_uv(u, v)
}

/// Noise-free limit of the estimator: u = sinθ·cosφ, v = sinθ·sinφ.
pub fn phase_estimate_exact(inv: &SynthInverter, anchor: &BitString, target: &BitString) -> PhaseEstimate {
    let u = inv.beta0(anchor, target, false).map_or(0.0, |p| 2.0 * p - 1.0);
    let v = inv.beta0(anchor, target, true).map_or(0.0, |p| 2.0 * p - 1.0);
    PhaseEstimate::from_uv(u, v)
}

/// Per-instance record of the synthesis accounting.
#[derive(Clone, Debug)]
pub struct SynthesisDiagnostics {
    pub pivot: BitString,
    /// |p̃ − p| per estimated prefix, where the exact conditional exists.
    pub amp_errors: Vec<(BitString, f64)>,
    /// |e^{−iφ̂} − e^{−iφ}| per phased string with a well-defined true
    /// relative phase.
    pub phase_errors: Vec<(BitString, f64)>,
    pub inverter_sd: f64,
    pub flagged_prefixes: usize,
}

#[derive(Clone, Debug)]
pub struct SynthesisOutcome {
    pub state: PureState,
    pub fidelity: f64,
    pub diagnostics: SynthesisDiagnostics,
}

/// Full reconstruction against an inverter for a fixed Clifford:
/// amplitude tree, pivot draw, per-string phase insertion (anchor phase
/// fixed to 0), then c†; fidelity is against the true |ψ_s⟩, global
/// phase irrelevant.
pub fn full_synthesis(
    inst: &StatePuzzleInstance,
    c: &CliffordElement,
    inv: &SynthInverter,
    params: &SynthParams,
    rng: &mut impl Rng,
) -> Result<SynthesisOutcome> {
    let n = inst.psi.num_qubits();
    let amp = amplitude_synthesis(inv, params, rng)?;
    let qubits: Vec<usize> = (0..n).collect();
    let amp_dist = born_distribution(&amp.state, &qubits)?;
    let pivot = BornSampler::new(&amp_dist).sample(rng);

    let amp_errors: Vec<(BitString, f64)> = amp
        .estimates
        .iter()
        .filter_map(|(z, &p_tilde)| inv.exact_p1(z).map(|p| (*z, (p_tilde - p).abs())))
        .collect();

    // Phase insertion over strings above the amplitude threshold. The
    // per-string estimates are independent; parallelize when sampling.
    let targets: Vec<BitString> = amp
        .state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|&(idx, a)| a.norm() >= params.amp_threshold && idx as u64 != pivot.value())
        .map(|(idx, _)| BitString::from_value(idx as u64, n))
        .collect();
    let estimates: Vec<(BitString, PhaseEstimate)> = if params.sampled {
        let seeds: Vec<(BitString, u64)> = targets.iter().map(|t| (*t, rng.gen())).collect();
        seeds
            .into_par_iter()
            .map(|(t, seed)| {
                let mut local = seeded(seed);
                (t, phase_estimate(inv, &pivot, &t, params.phase_trials, &mut local))
            })
            .collect()
    } else {
        targets.iter().map(|t| (*t, phase_estimate_exact(inv, &pivot, t))).collect()
    };

    let mut amps = amp.state.amplitudes().to_vec();
    let mut phase_errors = Vec::new();
    for (t, est) in &estimates {
        let inserted = Complex64::from_polar(1.0, -est.phi_hat);
        amps[t.value() as usize] *= inserted;
        if let Some(true_rel) = exact_relative_phase(inv, &pivot, t) {
            phase_errors.push((*t, (inserted - true_rel).norm()));
        }
    }
    let phased = PureState::from_unnormalized(n, amps)?;
    let reconstructed = run_circuit(phased, &c.inverse_gates())?;
    let fidelity = inner_product(&inst.psi, &reconstructed)?.norm_sqr().min(1.0);
    Ok(SynthesisOutcome {
        state: reconstructed,
        fidelity,
        diagnostics: SynthesisDiagnostics {
            pivot,
            amp_errors,
            phase_errors,
            inverter_sd: inv.realized_sd(),
            flagged_prefixes: amp.flagged_prefixes,
        },
    })
}

/// e^{−i(φ_t − φ_anchor)} from the exact amplitudes, when both carry mass.
fn exact_relative_phase(inv: &SynthInverter, anchor: &BitString, t: &BitString) -> Option<Complex64> {
    let a = inv.amps[anchor.value() as usize];
    let b = inv.amps[t.value() as usize];
    if a.norm() < 1e-12 || b.norm() < 1e-12 {
        return None;
    }
    // α_z = a_z·e^{−iφ_z} ⇒ e^{−i(φ_t − φ_anchor)} = (β/|β|)·conj(α/|α|).
    Some((b / b.norm()) * (a / a.norm()).conj())
}

/// Samples a Clifford, builds the (s,c)-inverter at the requested noise
/// level, and runs the reconstruction.
pub fn run_synthesis(
    inst: &StatePuzzleInstance,
    epsilon: f64,
    params: &SynthParams,
    rng: &mut impl Rng,
) -> Result<SynthesisOutcome> {
    let c = sample_clifford(inst.psi.num_qubits(), rng)?;
    let psi_sc = c.apply(&inst.psi)?;
    let inv = if epsilon == 0.0 {
        SynthInverter::exact(&psi_sc)?
    } else {
        SynthInverter::noisy(&psi_sc, epsilon)?
    };
    full_synthesis(inst, &c, &inv, params, rng)
}

/// Result of the arctan2 stability check of two planar points.
#[derive(Clone, Copy, Debug)]
pub struct GeomCheck {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Verifies |e^{−i·arctan2(y,x)} − e^{−i·arctan2(y*,x*)}| ≤ 2γ′/γ for
/// points satisfying the preconditions; violated preconditions are a
/// rejected input, not a failure.
pub fn geometric_bound_check(
    x: f64,
    y: f64,
    x_star: f64,
    y_star: f64,
    gamma: f64,
    gamma_prime: f64,
) -> Result<GeomCheck> {
    if gamma <= 0.0 || gamma_prime <= 0.0 || gamma_prime >= gamma {
        return Err(Error::Precondition("need 0 < γ′ < γ".into()));
    }
    if x * x + y * y < gamma * gamma {
        return Err(Error::Precondition("point must lie at radius ≥ γ".into()));
    }
    if (x - x_star).powi(2) + (y - y_star).powi(2) > gamma_prime * gamma_prime {
        return Err(Error::Precondition("perturbed point must lie within γ′".into()));
    }
    let a = Complex64::from_polar(1.0, -y.atan2(x));
    let b = Complex64::from_polar(1.0, -y_star.atan2(x_star));
    let lhs = (a - b).norm();
    let bound = 2.0 * gamma_prime / gamma;
    Ok(GeomCheck { lhs, bound, ok: lhs <= bound })
}

/// Frozen per-prefix estimates on the grid m/2^bits, shared between the
/// classical prefix-tree construction and the literal purified circuit.
#[derive(Clone, Debug)]
pub struct FrozenEstimates {
    pub n: usize,
    pub bits: usize,
    /// v-grid index per internal prefix; absent prefixes are unreachable.
    pub table: BTreeMap<BitString, u64>,
}

impl FrozenEstimates {
    /// Quantizes the inverter's conditionals to the grid.
    pub fn quantize(inv: &SynthInverter, bits: usize) -> Self {
        let n = inv.n();
        let denom = (1u64 << bits) as f64;
        let mut table = BTreeMap::new();
        for level in 0..n {
            for z in BitString::all(level) {
                if let Some(p1) = inv.p1(&z) {
                    if inv.prefix_mass(&z) > 0.0 {
                        table.insert(z, (p1 * denom).round() as u64);
                    }
                }
            }
        }
        FrozenEstimates { n, bits, table }
    }

    fn v(&self, z: &BitString) -> Option<f64> {
        self.table.get(z).map(|&idx| idx as f64 / (1u64 << self.bits) as f64)
    }
}

/// Prefix-tree state from frozen estimates.
pub fn classical_amplitude_state(fr: &FrozenEstimates) -> Result<PureState> {
    let synth = amplitude_synthesis_with(fr.n, |z| fr.v(z))?;
    Ok(synth.state)
}

/// The literal purified construction: per level, a reversible estimate
/// lookup onto a work register, the amplitude rotation controlled by the
/// work register, and the same lookup to uncompute. The work register is
/// checked to return to |0…0⟩ and traced off.
pub fn purified_amplitude_state(fr: &FrozenEstimates) -> Result<PureState> {
    let n = fr.n;
    let v_bits = fr.bits + 1; // grid indices run 0..=2^bits
    let mut state = PureState::zero(n + v_bits)?;
    let v_qubits: Vec<usize> = (n..n + v_bits).collect();
    for level in 0..n {
        let lookup = estimate_lookup_gate(fr, level, n, v_bits);
        state = apply_lookup(state, &lookup)?;
        apply_grid_controlled_rotation(&mut state, &v_qubits, level, fr.bits)?;
        state = apply_lookup(state, &lookup)?;
    }
    extract_remaining(&state, &v_qubits, &BitString::zeros(v_bits))
}

enum Lookup {
    /// Level 0: XOR a constant onto the work register.
    Constant(Vec<GateOp>),
    Oracle(Box<GateOp>),
}

fn estimate_lookup_gate(fr: &FrozenEstimates, level: usize, n: usize, v_bits: usize) -> Lookup {
    if level == 0 {
        let value = fr.table.get(&BitString::empty()).copied().unwrap_or(0);
        let mut gates_list = Vec::new();
        for j in 0..v_bits {
            if (value >> (v_bits - 1 - j)) & 1 == 1 {
                gates_list.push(crate::qsim::gates::x(n + j));
            }
        }
        Lookup::Constant(gates_list)
    } else {
        let table: Vec<u64> = (0..1u64 << level)
            .map(|z| fr.table.get(&BitString::from_value(z, level)).copied().unwrap_or(0))
            .collect();
        Lookup::Oracle(Box::new(GateOp::FunctionOracle {
            inputs: (0..level).collect(),
            outputs: (n..n + v_bits).collect(),
            table,
        }))
    }
}

fn apply_lookup(state: PureState, lookup: &Lookup) -> Result<PureState> {
    match lookup {
        Lookup::Constant(gates_list) => run_circuit(state, gates_list),
        Lookup::Oracle(gate) => apply_gate(&state, gate),
    }
}

/// |v⟩|0⟩ ↦ |v⟩(√(1−v)|0⟩ + √v|1⟩) on the target qubit, the grid value
/// read off the work register.
fn apply_grid_controlled_rotation(
    state: &mut PureState,
    v_qubits: &[usize],
    target: usize,
    bits: usize,
) -> Result<()> {
    let n = state.num_qubits();
    let denom = (1u64 << bits) as f64;
    let tmask = 1usize << (n - 1 - target);
    let amps_len = state.amplitudes().len();
    let mut new_amps = state.amplitudes().to_vec();
    for idx in 0..amps_len {
        if idx & tmask != 0 {
            continue;
        }
        let mut v_idx = 0u64;
        for &q in v_qubits {
            v_idx = (v_idx << 1) | ((idx >> (n - 1 - q)) as u64 & 1);
        }
        let v = (v_idx as f64 / denom).min(1.0);
        let (c, s) = ((1.0 - v).sqrt(), v.sqrt());
        let a = new_amps[idx];
        let b = new_amps[idx | tmask];
        new_amps[idx] = c * a - s * b;
        new_amps[idx | tmask] = s * a + c * b;
    }
    *state = PureState::from_amplitudes(n, new_amps)?;
    Ok(())
}
