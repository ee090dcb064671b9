//! Exact dense statevector simulation.
//!
//! Ground truth for every oracle and reduction in the crate: gates,
//! projective measurement with collapse, exact Born distributions, and
//! the distance metrics the claims are stated in.
//!
//! Conventions: qubit 0 is the leftmost character of outcome strings and
//! the most significant bit of amplitude indices. Amplitudes are double
//! precision; normalization is enforced to [`NORM_TOL`] after every
//! operation, with an explicit renormalization after measurement.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Hard cap on the joint register, working registers included.
pub const QUBIT_CAP: usize = 24;
/// Normalization and unitarity tolerance.
pub const NORM_TOL: f64 = 1e-9;

/// Dense complex amplitude vector over `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl PureState {
    /// |0…0⟩ on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    /// Computational basis state with the given index (qubit 0 = MSB).
    pub fn basis(n: usize, index: u64) -> Result<Self> {
        check_cap(n)?;
        let dim = 1usize << n;
        if index as usize >= dim {
            return Err(Error::Invalid(format!("basis index {index} out of range")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index as usize] = Complex64::new(1.0, 0.0);
        Ok(PureState { num_qubits: n, amps })
    }

    /// Builds from explicit amplitudes; must be normalized within tolerance.
    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_cap(n)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes, got {}",
                1u64 << n,
                amps.len()
            )));
        }
        let state = PureState { num_qubits: n, amps };
        state.check_normalized()?;
        Ok(state)
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn from_unnormalized(n: usize, mut amps: Vec<Complex64>) -> Result<Self> {
        check_cap(n)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes, got {}",
                1u64 << n,
                amps.len()
            )));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Invalid("zero vector cannot be normalized".into()));
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok(PureState { num_qubits: n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, x: &BitString) -> Complex64 {
        assert_eq!(x.len(), self.num_qubits);
        self.amps[x.value() as usize]
    }

    pub fn norm_sqr_sum(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let dev = (self.norm_sqr_sum() - 1.0).abs();
        if dev > NORM_TOL {
            return Err(Error::NotNormalized { deviation: dev });
        }
        Ok(())
    }

    /// Tensor product, `self` on the high-order qubits.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let n = self.num_qubits + other.num_qubits;
        check_cap(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(PureState { num_qubits: n, amps })
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > QUBIT_CAP {
        return Err(Error::QubitCapExceeded { requested: n, cap: QUBIT_CAP });
    }
    Ok(())
}

/// A gate in one of the supported kinds.
///
/// `TwoLevel` acts on two full-register basis states and as identity on
/// the orthogonal complement; it carries the span rotations used by the
/// pair-state machinery. `FunctionOracle` is the reversible
/// Σ_z |z⟩⟨z| ⊗ X^{f(z)} construction on a fresh output register.
#[derive(Clone, Debug)]
pub enum GateOp {
    Single {
        qubit: usize,
        matrix: [[Complex64; 2]; 2],
    },
    Two {
        qubit0: usize,
        qubit1: usize,
        matrix: [[Complex64; 4]; 4],
    },
    TwoLevel {
        index_a: u64,
        index_b: u64,
        matrix: [[Complex64; 2]; 2],
    },
    FunctionOracle {
        inputs: Vec<usize>,
        outputs: Vec<usize>,
        table: Vec<u64>,
    },
}

/// Named gate constructors.
pub mod gates {
    use super::*;

    const R2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn h(q: usize) -> GateOp {
        GateOp::Single { qubit: q, matrix: [[c(R2, 0.0), c(R2, 0.0)], [c(R2, 0.0), c(-R2, 0.0)]] }
    }

    pub fn x(q: usize) -> GateOp {
        GateOp::Single { qubit: q, matrix: [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]] }
    }

    pub fn y(q: usize) -> GateOp {
        GateOp::Single { qubit: q, matrix: [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]] }
    }

    pub fn z(q: usize) -> GateOp {
        GateOp::Single { qubit: q, matrix: [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]] }
    }

    pub fn s(q: usize) -> GateOp {
        GateOp::Single { qubit: q, matrix: [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]] }
    }

    pub fn ry(theta: f64, q: usize) -> GateOp {
        let (sin, cos) = (theta / 2.0).sin_cos();
        GateOp::Single { qubit: q, matrix: [[c(cos, 0.0), c(-sin, 0.0)], [c(sin, 0.0), c(cos, 0.0)]] }
    }

    pub fn single(q: usize, matrix: [[Complex64; 2]; 2]) -> GateOp {
        GateOp::Single { qubit: q, matrix }
    }

    /// CNOT with the first argument as control.
    pub fn cnot(control: usize, target: usize) -> GateOp {
        let mut m = [[c(0.0, 0.0); 4]; 4];
        // basis order: |control,target⟩ ∈ {00,01,10,11}
        m[0][0] = c(1.0, 0.0);
        m[1][1] = c(1.0, 0.0);
        m[2][3] = c(1.0, 0.0);
        m[3][2] = c(1.0, 0.0);
        GateOp::Two { qubit0: control, qubit1: target, matrix: m }
    }

    pub fn two(q0: usize, q1: usize, matrix: [[Complex64; 4]; 4]) -> GateOp {
        GateOp::Two { qubit0: q0, qubit1: q1, matrix }
    }
}

fn unitarity_deviation_2(m: &[[Complex64; 2]; 2]) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e: Complex64 = m.iter().map(|row| row[i].conj() * row[j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((e - target).norm());
        }
    }
    dev
}

fn unitarity_deviation_4(m: &[[Complex64; 4]; 4]) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let e: Complex64 = m.iter().map(|row| row[i].conj() * row[j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((e - target).norm());
        }
    }
    dev
}

impl GateOp {
    /// Validates targets and unitarity against a register of `n` qubits.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            GateOp::Single { qubit, matrix } => {
                check_qubit(*qubit, n)?;
                check_unitary(unitarity_deviation_2(matrix))
            }
            GateOp::Two { qubit0, qubit1, matrix } => {
                check_qubit(*qubit0, n)?;
                check_qubit(*qubit1, n)?;
                if qubit0 == qubit1 {
                    return Err(Error::Invalid("two-qubit gate targets must differ".into()));
                }
                check_unitary(unitarity_deviation_4(matrix))
            }
            GateOp::TwoLevel { index_a, index_b, matrix } => {
                let dim = 1u64 << n;
                if *index_a >= dim || *index_b >= dim {
                    return Err(Error::Invalid("two-level gate index out of range".into()));
                }
                if index_a == index_b {
                    return Err(Error::Invalid("two-level gate indices must differ".into()));
                }
                check_unitary(unitarity_deviation_2(matrix))
            }
            GateOp::FunctionOracle { inputs, outputs, table } => {
                for &q in inputs.iter().chain(outputs) {
                    check_qubit(q, n)?;
                }
                let mut seen = vec![false; n];
                for &q in inputs.iter().chain(outputs) {
                    if seen[q] {
                        return Err(Error::Invalid("oracle registers overlap".into()));
                    }
                    seen[q] = true;
                }
                if table.len() != 1 << inputs.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "oracle table has {} entries for {} input qubits",
                        table.len(),
                        inputs.len()
                    )));
                }
                let out_dim = 1u64 << outputs.len();
                if table.iter().any(|&v| v >= out_dim) {
                    return Err(Error::Invalid("oracle table value exceeds output register".into()));
                }
                Ok(())
            }
        }
    }

    /// Conjugate transpose; the oracle kind is its own inverse.
    pub fn dagger(&self) -> GateOp {
        fn dag2(m: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
            [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
        }
        match self {
            GateOp::Single { qubit, matrix } => GateOp::Single { qubit: *qubit, matrix: dag2(matrix) },
            GateOp::Two { qubit0, qubit1, matrix } => {
                let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        m[i][j] = matrix[j][i].conj();
                    }
                }
                GateOp::Two { qubit0: *qubit0, qubit1: *qubit1, matrix: m }
            }
            GateOp::TwoLevel { index_a, index_b, matrix } => GateOp::TwoLevel {
                index_a: *index_a,
                index_b: *index_b,
                matrix: dag2(matrix),
            },
            GateOp::FunctionOracle { .. } => self.clone(),
        }
    }
}

fn check_qubit(q: usize, n: usize) -> Result<()> {
    if q >= n {
        return Err(Error::IndexOutOfRange { index: q, num_qubits: n });
    }
    Ok(())
}

fn check_unitary(dev: f64) -> Result<()> {
    if dev > NORM_TOL {
        return Err(Error::NonUnitary { deviation: dev });
    }
    Ok(())
}

/// Applies a gate, returning the transformed state; the input is unchanged.
pub fn apply_gate(state: &PureState, gate: &GateOp) -> Result<PureState> {
    let mut out = state.clone();
    apply_gate_mut(&mut out, gate)?;
    Ok(out)
}

/// Runs a gate sequence on an owned state.
pub fn run_circuit(mut state: PureState, circuit: &[GateOp]) -> Result<PureState> {
    for gate in circuit {
        apply_gate_mut(&mut state, gate)?;
    }
    Ok(state)
}

pub(crate) fn apply_gate_mut(state: &mut PureState, gate: &GateOp) -> Result<()> {
    gate.validate(state.num_qubits)?;
    let n = state.num_qubits;
    let amps = &mut state.amps;
    match gate {
        GateOp::Single { qubit, matrix } => {
            let mask = 1usize << (n - 1 - qubit);
            for idx in 0..amps.len() {
                if idx & mask == 0 {
                    let a = amps[idx];
                    let b = amps[idx | mask];
                    amps[idx] = matrix[0][0] * a + matrix[0][1] * b;
                    amps[idx | mask] = matrix[1][0] * a + matrix[1][1] * b;
                }
            }
        }
        GateOp::Two { qubit0, qubit1, matrix } => {
            let m0 = 1usize << (n - 1 - qubit0);
            let m1 = 1usize << (n - 1 - qubit1);
            for idx in 0..amps.len() {
                if idx & m0 == 0 && idx & m1 == 0 {
                    let i = [idx, idx | m1, idx | m0, idx | m0 | m1];
                    let v = [amps[i[0]], amps[i[1]], amps[i[2]], amps[i[3]]];
                    for r in 0..4 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for k in 0..4 {
                            acc += matrix[r][k] * v[k];
                        }
                        amps[i[r]] = acc;
                    }
                }
            }
        }
        GateOp::TwoLevel { index_a, index_b, matrix } => {
            let a = amps[*index_a as usize];
            let b = amps[*index_b as usize];
            amps[*index_a as usize] = matrix[0][0] * a + matrix[0][1] * b;
            amps[*index_b as usize] = matrix[1][0] * a + matrix[1][1] * b;
        }
        GateOp::FunctionOracle { inputs, outputs, table } => {
            for idx in 0..amps.len() {
                let mut z = 0u64;
                for &q in inputs {
                    z = (z << 1) | ((idx >> (n - 1 - q)) as u64 & 1);
                }
                let f = table[z as usize];
                let mut mask = 0usize;
                for (j, &q) in outputs.iter().enumerate() {
                    if (f >> (outputs.len() - 1 - j)) & 1 == 1 {
                        mask |= 1 << (n - 1 - q);
                    }
                }
                let partner = idx ^ mask;
                if partner > idx {
                    amps.swap(idx, partner);
                }
            }
        }
    }
    state.check_normalized()
}

/// Measures the listed qubits in the computational basis.
///
/// The outcome string follows the order of `qubits`; the post state is
/// the renormalized projection on the full register.
pub fn measure_subset(
    state: &PureState,
    qubits: &[usize],
    rng: &mut impl Rng,
) -> Result<(BitString, PureState)> {
    let probs = subset_probabilities(state, qubits)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut outcome = probs.len() - 1;
    for (pattern, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = pattern;
            break;
        }
    }
    let p_outcome = probs[outcome];
    let n = state.num_qubits;
    let mut post = state.clone();
    let scale = 1.0 / p_outcome.sqrt();
    for idx in 0..post.amps.len() {
        if pattern_of(idx, qubits, n) == outcome {
            post.amps[idx] *= scale;
        } else {
            post.amps[idx] = Complex64::new(0.0, 0.0);
        }
    }
    post.check_normalized()?;
    Ok((BitString::from_value(outcome as u64, qubits.len()), post))
}

fn pattern_of(idx: usize, qubits: &[usize], n: usize) -> usize {
    let mut pattern = 0usize;
    for &q in qubits {
        pattern = (pattern << 1) | ((idx >> (n - 1 - q)) & 1);
    }
    pattern
}

fn subset_probabilities(state: &PureState, qubits: &[usize]) -> Result<Vec<f64>> {
    let n = state.num_qubits;
    if qubits.is_empty() {
        return Err(Error::Invalid("measurement subset is empty".into()));
    }
    let mut seen = vec![false; n];
    for &q in qubits {
        check_qubit(q, n)?;
        if seen[q] {
            return Err(Error::Invalid("measurement qubits must be distinct".into()));
        }
        seen[q] = true;
    }
    let mut probs = vec![0.0f64; 1 << qubits.len()];
    for (idx, amp) in state.amps.iter().enumerate() {
        probs[pattern_of(idx, qubits, n)] += amp.norm_sqr();
    }
    Ok(probs)
}

/// Exact marginal distribution of the listed qubits.
pub fn born_distribution(state: &PureState, qubits: &[usize]) -> Result<Distribution> {
    let probs = subset_probabilities(state, qubits)?;
    Distribution::from_dense(qubits.len(), &probs)
}

/// Extracts the complement register when `fixed` qubits hold a definite
/// basis value (e.g. after measuring them); errors if residual mass
/// outside that value exceeds tolerance.
pub fn extract_remaining(state: &PureState, fixed: &[usize], value: &BitString) -> Result<PureState> {
    let n = state.num_qubits;
    if fixed.len() != value.len() {
        return Err(Error::DimensionMismatch("fixed register / value length".into()));
    }
    let keep: Vec<usize> = (0..n).filter(|q| !fixed.contains(q)).collect();
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << keep.len()];
    let mut stray = 0.0;
    for (idx, amp) in state.amps.iter().enumerate() {
        if pattern_of(idx, fixed, n) == value.value() as usize {
            amps[pattern_of(idx, &keep, n)] = *amp;
        } else {
            stray += amp.norm_sqr();
        }
    }
    if stray > NORM_TOL {
        return Err(Error::Invalid(format!(
            "register not definite: stray mass {stray:.3e} outside |{value}⟩"
        )));
    }
    PureState::from_unnormalized(keep.len(), amps)
}

/// ⟨a|b⟩.
pub fn inner_product(a: &PureState, b: &PureState) -> Result<Complex64> {
    if a.num_qubits != b.num_qubits {
        return Err(Error::DimensionMismatch("inner product of unequal registers".into()));
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// ‖a − b‖₂.
pub fn euclidean_distance(a: &PureState, b: &PureState) -> Result<f64> {
    if a.num_qubits != b.num_qubits {
        return Err(Error::DimensionMismatch("distance of unequal registers".into()));
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
}

/// Trace distance of pure states, √(1 − |⟨a|b⟩|²).
pub fn trace_distance_pure(a: &PureState, b: &PureState) -> Result<f64> {
    let ip = inner_product(a, b)?.norm_sqr();
    Ok((1.0 - ip.min(1.0)).max(0.0).sqrt())
}

/// Fidelity of the reduced state on `subsystem` with a pure target:
/// Tr((|target⟩⟨target| ⊗ I) |joint⟩⟨joint|).
pub fn overlap_with_pure(joint: &PureState, target: &PureState, subsystem: &[usize]) -> Result<f64> {
    let n = joint.num_qubits;
    if target.num_qubits != subsystem.len() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} qubits but subsystem lists {}",
            target.num_qubits,
            subsystem.len()
        )));
    }
    let mut seen = vec![false; n];
    for &q in subsystem {
        check_qubit(q, n)?;
        if seen[q] {
            return Err(Error::Invalid("subsystem qubits must be distinct".into()));
        }
        seen[q] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|q| !subsystem.contains(q)).collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); 1 << rest.len()];
    for (idx, amp) in joint.amps.iter().enumerate() {
        let sub = pattern_of(idx, subsystem, n);
        let r = pattern_of(idx, &rest, n);
        acc[r] += target.amps[sub].conj() * amp;
    }
    Ok(acc.iter().map(|c| c.norm_sqr()).sum::<f64>().clamp(0.0, 1.0 + 1e-12).min(1.0))
}

/// Full probability table of a measurement outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    num_bits: usize,
    probs: BTreeMap<BitString, f64>,
}

impl Distribution {
    /// Builds from a map; probabilities must be nonnegative and sum to 1
    /// within [`NORM_TOL`]. Zero entries are dropped.
    pub fn new(num_bits: usize, probs: BTreeMap<BitString, f64>) -> Result<Self> {
        let mut clean = BTreeMap::new();
        let mut sum = 0.0;
        for (k, p) in probs {
            if k.len() != num_bits {
                return Err(Error::InvalidDistribution(format!(
                    "key {k} has length {} but table is over {num_bits} bits",
                    k.len()
                )));
            }
            if p < -1e-12 {
                return Err(Error::InvalidDistribution(format!("negative probability {p} at {k}")));
            }
            if p > 0.0 {
                sum += p;
                clean.insert(k, p);
            }
        }
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {sum} differs from 1")));
        }
        Ok(Distribution { num_bits, probs: clean })
    }

    pub fn from_dense(num_bits: usize, probs: &[f64]) -> Result<Self> {
        if probs.len() != 1 << num_bits {
            return Err(Error::InvalidDistribution("dense table has wrong length".into()));
        }
        let map = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (BitString::from_value(i as u64, num_bits), p))
            .collect();
        Self::new(num_bits, map)
    }

    /// Point mass on a single string.
    pub fn point(x: BitString) -> Self {
        let mut probs = BTreeMap::new();
        let n = x.len();
        probs.insert(x, 1.0);
        Distribution { num_bits: n, probs }
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn prob(&self, x: &BitString) -> f64 {
        self.probs.get(x).copied().unwrap_or(0.0)
    }

    /// Nonzero entries in sorted key order.
    pub fn support(&self) -> impl Iterator<Item = (&BitString, f64)> {
        self.probs.iter().map(|(k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    /// Marginal of the listed string positions (in the given order).
    pub fn marginal(&self, positions: &[usize]) -> Result<Distribution> {
        for &p in positions {
            if p >= self.num_bits {
                return Err(Error::Invalid(format!("marginal position {p} out of range")));
            }
        }
        let mut map: BTreeMap<BitString, f64> = BTreeMap::new();
        for (k, p) in self.support() {
            let mut v = BitString::empty();
            for &pos in positions {
                v = v.push(k.get(pos));
            }
            *map.entry(v).or_insert(0.0) += p;
        }
        Distribution::new(positions.len(), map)
    }

    /// Sorted-key JSON map, for golden-file comparisons.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, f64> =
            self.support().map(|(k, p)| (k.to_string(), p)).collect();
        serde_json::to_string(&map).expect("serializing a string map cannot fail")
    }
}

/// ½ Σ |a(x) − b(x)| over the union of supports.
pub fn statistical_distance(a: &Distribution, b: &Distribution) -> Result<f64> {
    if a.num_bits != b.num_bits {
        return Err(Error::DimensionMismatch(format!(
            "distributions over {} and {} bits",
            a.num_bits, b.num_bits
        )));
    }
    let mut total = 0.0;
    for (k, p) in a.support() {
        total += (p - b.prob(k)).abs();
    }
    for (k, q) in b.support() {
        if a.prob(k) == 0.0 {
            total += q;
        }
    }
    Ok(total / 2.0)
}

/// Precomputed CDF for fast repeated sampling from a fixed table.
pub struct BornSampler {
    keys: Vec<BitString>,
    cdf: Vec<f64>,
}

impl BornSampler {
    pub fn new(d: &Distribution) -> Self {
        let mut keys = Vec::with_capacity(d.support_len());
        let mut cdf = Vec::with_capacity(d.support_len());
        let mut acc = 0.0;
        for (k, p) in d.support() {
            acc += p;
            keys.push(*k);
            cdf.push(acc);
        }
        BornSampler { keys, cdf }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> BitString {
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.keys.len() - 1);
        self.keys[i]
    }
}
