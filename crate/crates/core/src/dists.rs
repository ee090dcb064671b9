//! Circuit-family generators and exact brute-force distribution
//! extraction — the independent oracle every estimator is judged against.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::qsim::{born_distribution, gates, run_circuit, Distribution, GateOp, PureState};
use crate::rng::seeded;

/// A reproducible circuit recipe: same (kind, params, seed) yields a
/// bit-identical gate list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircuitFamily {
    pub kind: FamilyKind,
    pub num_qubits: usize,
    pub depth: usize,
    pub seed: u64,
    /// The literal gate list of the `Explicit` kind; not part of the
    /// serialized config surface.
    #[serde(skip)]
    pub gates: Vec<GateOp>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Layers of Haar-random single-qubit gates alternating with CNOTs
    /// on a fixed brickwork pattern.
    RandomUniversal,
    /// H then a CNOT chain; output {0ⁿ, 1ⁿ} uniform.
    GhzFixture,
    /// Independent seeded Ry rotations per qubit.
    ProductFixture,
    /// A caller-supplied gate list.
    Explicit,
}

impl CircuitFamily {
    pub fn random_universal(num_qubits: usize, depth: usize, seed: u64) -> Self {
        CircuitFamily {
            kind: FamilyKind::RandomUniversal,
            num_qubits,
            depth,
            seed,
            gates: Vec::new(),
        }
    }

    pub fn ghz(num_qubits: usize) -> Self {
        CircuitFamily { kind: FamilyKind::GhzFixture, num_qubits, depth: 0, seed: 0, gates: Vec::new() }
    }

    pub fn product(num_qubits: usize, seed: u64) -> Self {
        CircuitFamily { kind: FamilyKind::ProductFixture, num_qubits, depth: 0, seed, gates: Vec::new() }
    }

    pub fn explicit(num_qubits: usize, gates: Vec<GateOp>) -> Self {
        CircuitFamily { kind: FamilyKind::Explicit, num_qubits, depth: 0, seed: 0, gates }
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one value per call keeps the stream layout simple.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Haar-random 2×2 unitary via Gram-Schmidt on Gaussian entries with
/// uniform diagonal phases.
pub(crate) fn haar_single(rng: &mut impl Rng) -> [[Complex64; 2]; 2] {
    loop {
        let mut g = || Complex64::new(gaussian(rng), gaussian(rng));
        let a = [g(), g()];
        let b = [g(), g()];
        let na = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
        if na < 1e-6 {
            continue;
        }
        let u0 = [a[0] / na, a[1] / na];
        let proj = u0[0].conj() * b[0] + u0[1].conj() * b[1];
        let v = [b[0] - proj * u0[0], b[1] - proj * u0[1]];
        let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if nv < 1e-6 {
            continue;
        }
        let u1 = [v[0] / nv, v[1] / nv];
        let p0 = Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU);
        let p1 = Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU);
        return [[u0[0] * p0, u1[0] * p1], [u0[1] * p0, u1[1] * p1]];
    }
}

/// Materializes the family's circuit. Deterministic in `family.seed`.
pub fn sample_circuit(family: &CircuitFamily) -> Result<Vec<GateOp>> {
    let n = family.num_qubits;
    if n == 0 {
        return Err(Error::Invalid("circuit family needs at least one qubit".into()));
    }
    let mut rng = seeded(family.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut circuit = Vec::new();
    match family.kind {
        FamilyKind::RandomUniversal => {
            for layer in 0..family.depth {
                for q in 0..n {
                    circuit.push(gates::single(q, haar_single(&mut rng)));
                }
                // Brickwork CNOTs, offset alternating with the layer.
                let mut q = layer % 2;
                while q + 1 < n {
                    circuit.push(gates::cnot(q, q + 1));
                    q += 2;
                }
            }
        }
        FamilyKind::GhzFixture => {
            circuit.push(gates::h(0));
            for q in 0..n.saturating_sub(1) {
                circuit.push(gates::cnot(q, q + 1));
            }
        }
        FamilyKind::ProductFixture => {
            for q in 0..n {
                let theta = rng.gen::<f64>() * std::f64::consts::PI;
                circuit.push(gates::ry(theta, q));
            }
        }
        FamilyKind::Explicit => {
            circuit = family.gates.clone();
        }
    }
    Ok(circuit)
}

/// Runs the circuit from |0ⁿ⟩ and tabulates the first `n_out` qubits.
pub fn exact_output_distribution(
    num_qubits: usize,
    circuit: &[GateOp],
    n_out: usize,
) -> Result<Distribution> {
    if n_out == 0 || n_out > num_qubits {
        return Err(Error::Invalid(format!("n_out {n_out} out of range for {num_qubits} qubits")));
    }
    let state = run_circuit(PureState::zero(num_qubits)?, circuit)?;
    let outputs: Vec<usize> = (0..n_out).collect();
    born_distribution(&state, &outputs)
}

/// Exact conditional probabilities of the next bit after a prefix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrefixQuery {
    pub prefix_len: usize,
    pub p0: f64,
    pub p1: f64,
    /// False when the prefix carries zero mass; p0/p1 are then meaningless.
    pub defined: bool,
}

/// Exact next-bit conditional after `prefix`, from the full table.
pub fn conditional_next_bit(d: &Distribution, prefix: &BitString) -> Result<PrefixQuery> {
    if prefix.len() >= d.num_bits() {
        return Err(Error::Invalid(format!(
            "prefix of length {} leaves no next bit in a {}-bit table",
            prefix.len(),
            d.num_bits()
        )));
    }
    let mut mass = [0.0f64; 2];
    for (k, p) in d.support() {
        if k.prefix(prefix.len()) == *prefix {
            mass[k.get(prefix.len()) as usize] += p;
        }
    }
    let total = mass[0] + mass[1];
    if total <= 0.0 {
        return Ok(PrefixQuery { prefix_len: prefix.len(), p0: f64::NAN, p1: f64::NAN, defined: false });
    }
    Ok(PrefixQuery {
        prefix_len: prefix.len(),
        p0: mass[0] / total,
        p1: mass[1] / total,
        defined: true,
    })
}

/// Dense prefix-mass tables for every level of a distribution, giving
/// O(1) conditionals. Entry `z` of level `i` is Pr[x₁…ᵢ = z].
#[derive(Clone, Debug)]
pub struct PrefixTable {
    num_bits: usize,
    levels: Vec<Vec<f64>>,
}

impl PrefixTable {
    pub fn build(d: &Distribution) -> Self {
        let n = d.num_bits();
        let mut levels: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut full = vec![0.0f64; 1 << n];
        for (k, p) in d.support() {
            full[k.value() as usize] = p;
        }
        levels.push(full);
        // Fold bottom-up: mass(z) = mass(z‖0) + mass(z‖1).
        for _ in 0..n {
            let prev = levels.last().unwrap();
            let mut next = vec![0.0f64; prev.len() / 2];
            for (z, m) in next.iter_mut().enumerate() {
                *m = prev[2 * z] + prev[2 * z + 1];
            }
            levels.push(next);
        }
        levels.reverse();
        PrefixTable { num_bits: n, levels }
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    /// Pr[x₁…ᵢ = z] for |z| = i.
    pub fn mass(&self, z: &BitString) -> f64 {
        self.levels[z.len()][z.value() as usize]
    }

    /// Pr[next bit = 1 | prefix z]; `None` on zero-mass prefixes.
    pub fn cond1(&self, z: &BitString) -> Option<f64> {
        assert!(z.len() < self.num_bits, "prefix leaves no next bit");
        let total = self.mass(z);
        if total <= 0.0 {
            return None;
        }
        Some(self.levels[z.len() + 1][((z.value() as usize) << 1) | 1] / total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ghz_fixture_distribution() {
        let circuit = sample_circuit(&CircuitFamily::ghz(3)).unwrap();
        let d = exact_output_distribution(3, &circuit, 3).unwrap();
        assert_abs_diff_eq!(d.prob(&BitString::parse("000").unwrap()), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.prob(&BitString::parse("111").unwrap()), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn depth_zero_is_identity() {
        let circuit = sample_circuit(&CircuitFamily::random_universal(3, 0, 17)).unwrap();
        assert!(circuit.is_empty());
        let d = exact_output_distribution(3, &circuit, 3).unwrap();
        assert_abs_diff_eq!(d.prob(&BitString::zeros(3)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn family_regeneration_is_bit_exact() {
        let fam = CircuitFamily::random_universal(4, 8, 12345);
        let a = sample_circuit(&fam).unwrap();
        let b = sample_circuit(&fam).unwrap();
        assert_eq!(a.len(), b.len());
        for (g, h) in a.iter().zip(&b) {
            match (g, h) {
                (GateOp::Single { qubit: q1, matrix: m1 }, GateOp::Single { qubit: q2, matrix: m2 }) => {
                    assert_eq!(q1, q2);
                    assert_eq!(m1, m2);
                }
                (GateOp::Two { qubit0: a0, qubit1: a1, .. }, GateOp::Two { qubit0: b0, qubit1: b1, .. }) => {
                    assert_eq!((a0, a1), (b0, b1));
                }
                _ => panic!("gate kind mismatch"),
            }
        }
    }

    #[test]
    fn explicit_family_returns_its_gate_list() {
        let fam = CircuitFamily::explicit(2, vec![gates::h(0), gates::cnot(0, 1)]);
        let d = exact_output_distribution(2, &sample_circuit(&fam).unwrap(), 2).unwrap();
        assert_abs_diff_eq!(d.prob(&BitString::parse("00").unwrap()), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.prob(&BitString::parse("11").unwrap()), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn distribution_sums_to_one() {
        let fam = CircuitFamily::random_universal(5, 10, 7);
        let d = exact_output_distribution(5, &sample_circuit(&fam).unwrap(), 5).unwrap();
        let total: f64 = d.support().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ghz_conditionals() {
        let d = exact_output_distribution(3, &sample_circuit(&CircuitFamily::ghz(3)).unwrap(), 3).unwrap();
        let q = conditional_next_bit(&d, &BitString::parse("1").unwrap()).unwrap();
        assert!(q.defined);
        assert_abs_diff_eq!(q.p0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.p1, 1.0, epsilon = 1e-12);

        let dead = conditional_next_bit(&d, &BitString::parse("01").unwrap()).unwrap();
        assert!(!dead.defined);
    }

    #[test]
    fn uniform_conditionals() {
        let d = Distribution::from_dense(2, &[0.25; 4]).unwrap();
        let q = conditional_next_bit(&d, &BitString::parse("0").unwrap()).unwrap();
        assert_abs_diff_eq!(q.p0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q.p1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn chain_rule_against_exact_table() {
        // Product of conditionals along any x in support equals Pr[x].
        let fam = CircuitFamily::random_universal(4, 8, 99);
        let d = exact_output_distribution(4, &sample_circuit(&fam).unwrap(), 4).unwrap();
        let table = PrefixTable::build(&d);
        for (x, p) in d.support() {
            let mut prod = 1.0;
            for i in 0..4 {
                let c1 = table.cond1(&x.prefix(i)).expect("prefix of a support point has mass");
                prod *= if x.get(i) { c1 } else { 1.0 - c1 };
            }
            assert_abs_diff_eq!(prod, p, epsilon = 1e-9);
        }
    }

    #[test]
    fn prefix_mass_monotone() {
        let fam = CircuitFamily::random_universal(4, 6, 5);
        let d = exact_output_distribution(4, &sample_circuit(&fam).unwrap(), 4).unwrap();
        let table = PrefixTable::build(&d);
        for len in 0..4 {
            for z in BitString::all(len) {
                let m = table.mass(&z);
                assert!(m + 1e-15 >= table.mass(&z.push(false)));
                assert!(m + 1e-15 >= table.mass(&z.push(true)));
            }
        }
    }

    #[test]
    fn prefix_table_matches_conditional_next_bit() {
        let fam = CircuitFamily::product(4, 3);
        let d = exact_output_distribution(4, &sample_circuit(&fam).unwrap(), 4).unwrap();
        let table = PrefixTable::build(&d);
        for len in 0..4 {
            for z in BitString::all(len) {
                let q = conditional_next_bit(&d, &z).unwrap();
                match table.cond1(&z) {
                    Some(c1) => {
                        assert!(q.defined);
                        assert_abs_diff_eq!(c1, q.p1, epsilon = 1e-12);
                    }
                    None => assert!(!q.defined),
                }
            }
        }
    }
}
