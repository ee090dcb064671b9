//! Uniform Clifford sampling and 2-design flatness statistics.
//!
//! Elements are drawn exactly uniformly (up to global phase): a uniform
//! symplectic part via the transvection construction, composed with a
//! uniform Pauli layer for the sign bits. Each transvection T_h is
//! realized as the Pauli rotation exp(±iπ P_h/4), decomposed into
//! {H, S, CNOT}, so the gate sequence is correct by construction.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qsim::{born_distribution, gates, run_circuit, Distribution, GateOp, PureState, QUBIT_CAP};
use crate::rng::seeded;

/// A Pauli group element modulo phase, as X/Z bit masks (bit q = qubit q).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pauli {
    x: u64,
    z: u64,
}

impl Pauli {
    const ZERO: Pauli = Pauli { x: 0, z: 0 };

    fn is_zero(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    fn xor(&self, other: &Pauli) -> Pauli {
        Pauli { x: self.x ^ other.x, z: self.z ^ other.z }
    }

    /// Symplectic product ⟨a,b⟩ = parity(a.x·b.z + a.z·b.x).
    fn symp(&self, other: &Pauli) -> bool {
        (((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) & 1) == 1
    }

    /// Transvection T_h: v ↦ v + ⟨v,h⟩h.
    fn transvect(&self, h: &Pauli) -> Pauli {
        if self.symp(h) {
            self.xor(h)
        } else {
            *self
        }
    }
}

fn x_on(q: usize) -> Pauli {
    Pauli { x: 1 << q, z: 0 }
}

#[cfg(test)]
fn z_on(q: usize) -> Pauli {
    Pauli { x: 0, z: 1 << q }
}

/// Local pair (x,z) of a Pauli at one qubit.
fn local(p: &Pauli, q: usize) -> (bool, bool) {
    ((p.x >> q) & 1 == 1, (p.z >> q) & 1 == 1)
}

fn local_symp(a: (bool, bool), b: (bool, bool)) -> bool {
    (a.0 & b.1) ^ (a.1 & b.0)
}

/// A single-qubit Pauli that anticommutes locally with the given
/// nonzero local pair.
fn local_partner(target: (bool, bool)) -> (bool, bool) {
    for cand in [(true, false), (false, true), (true, true)] {
        if local_symp(cand, target) {
            return cand;
        }
    }
    unreachable!("every nonzero local pair has an anticommuting partner")
}

/// Transvection vectors mapping `x` to `y`, in application order.
/// Both must be nonzero.
fn find_transvections(x: &Pauli, y: &Pauli, qubits: std::ops::Range<usize>) -> Vec<Pauli> {
    if x == y {
        return vec![];
    }
    if x.symp(y) {
        return vec![x.xor(y)];
    }
    // ⟨x,y⟩ = 0: route through z with ⟨x,z⟩ = ⟨z,y⟩ = 1.
    let mut z = Pauli::ZERO;
    let mut shared = None;
    for q in qubits.clone() {
        let lx = local(x, q);
        let ly = local(y, q);
        if (lx.0 || lx.1) && (ly.0 || ly.1) {
            shared = Some((q, lx, ly));
            break;
        }
    }
    if let Some((q, lx, ly)) = shared {
        // One qubit where both act: solve both local constraints there.
        let mut found = false;
        for cand in [(true, false), (false, true), (true, true)] {
            if local_symp(cand, lx) && local_symp(cand, ly) {
                z.x |= (cand.0 as u64) << q;
                z.z |= (cand.1 as u64) << q;
                found = true;
                break;
            }
        }
        assert!(found, "two nonzero local forms always admit a common solution");
    } else {
        // Disjoint supports: one qubit for each constraint.
        let qx = qubits.clone().find(|&q| {
            let l = local(x, q);
            l.0 || l.1
        })
        .expect("x is nonzero");
        let qy = qubits.clone().find(|&q| {
            let l = local(y, q);
            l.0 || l.1
        })
        .expect("y is nonzero");
        let px = local_partner(local(x, qx));
        let py = local_partner(local(y, qy));
        z.x |= ((px.0 as u64) << qx) | ((py.0 as u64) << qy);
        z.z |= ((px.1 as u64) << qx) | ((py.1 as u64) << qy);
    }
    // T_{x+z} sends x to z, then T_{y+z} sends z to y.
    let list = vec![x.xor(&z), y.xor(&z)];
    debug_assert_eq!(list.iter().fold(*x, |v, h| v.transvect(h)), *y);
    list
}

/// Samples the transvection decomposition of a uniform element of
/// Sp(2n, F₂), in application order.
fn sample_symplectic(n: usize, rng: &mut impl Rng) -> Vec<Pauli> {
    let mut levels: Vec<Vec<Pauli>> = Vec::with_capacity(n);
    for q in 0..n {
        let active = q..n;
        let active_bits = (n - q) as u32;
        let mask = if active_bits == 64 { u64::MAX } else { ((1u64 << active_bits) - 1) << q };
        let e1 = x_on(q);
        // Uniform nonzero image of e1.
        let v = loop {
            let cand = Pauli { x: rng.gen::<u64>() & mask, z: rng.gen::<u64>() & mask };
            if !cand.is_zero() {
                break cand;
            }
        };
        let t_list = find_transvections(&e1, &v, active.clone());
        // Uniform u with ⟨e1,u⟩ = 1: u = e2 + b·e1 + c, c off the pair.
        let b = rng.gen::<bool>();
        let tail_mask = mask & !(1u64 << q) & !(1u64 << q);
        let c = Pauli { x: rng.gen::<u64>() & tail_mask, z: rng.gen::<u64>() & tail_mask };
        let mut level = Vec::new();
        if b {
            // T_{e1+c} fixes e1 and sends e2 to e2+e1+c.
            level.push(e1.xor(&c));
        } else if !c.is_zero() {
            // T_{e1} then T_{e1+c}: e2 ↦ e2+e1 ↦ e2+c; both fix e1.
            level.push(e1);
            level.push(e1.xor(&c));
        }
        level.extend(t_list);
        levels.push(level);
    }
    // Deeper levels act first: g = S₀·(1 ⊕ S₁·(1 ⊕ …)).
    levels.into_iter().rev().flatten().collect()
}

/// Gate realization of exp(±iπ P_h/4), which acts on Pauli vectors as
/// the transvection T_h. The rotation sign is irrelevant: the uniform
/// Pauli layer appended afterwards covers every sign coset.
fn transvection_gates(h: &Pauli, n: usize, out: &mut Vec<GateOp>) {
    let support: Vec<usize> = (0..n).filter(|&q| local(h, q) != (false, false)).collect();
    assert!(!support.is_empty());
    let mut pre = Vec::new();
    for &q in &support {
        match local(h, q) {
            (true, false) => pre.push(gates::h(q)), // X → Z
            (true, true) => {
                // Y → Z via S† then H; S† = S³ keeps the {H,S,CNOT} set.
                pre.extend([gates::s(q), gates::s(q), gates::s(q), gates::h(q)]);
            }
            (false, true) => {} // already Z
            (false, false) => unreachable!(),
        }
    }
    let ladder: Vec<GateOp> = support.windows(2).map(|w| gates::cnot(w[0], w[1])).collect();
    out.extend(pre.iter().cloned());
    out.extend(ladder.iter().cloned());
    out.push(gates::s(*support.last().unwrap()));
    out.extend(ladder.iter().rev().cloned());
    for &q in support.iter().rev() {
        match local(h, q) {
            (true, false) => out.push(gates::h(q)),
            (true, true) => out.extend([gates::h(q), gates::s(q)]),
            _ => {}
        }
    }
}

/// A uniformly random Clifford element, regenerable bit-exactly from
/// (num_qubits, seed) and stored as a {H, S, CNOT} gate sequence.
#[derive(Clone, Debug)]
pub struct CliffordElement {
    num_qubits: usize,
    seed: u64,
    gates: Vec<GateOp>,
}

impl CliffordElement {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    /// Inverted gate sequence, for applying c† exactly.
    pub fn inverse_gates(&self) -> Vec<GateOp> {
        self.gates.iter().rev().map(|g| g.dagger()).collect()
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        run_circuit(state.clone(), &self.gates)
    }

    pub fn apply_inverse(&self, state: &PureState) -> Result<PureState> {
        run_circuit(state.clone(), &self.inverse_gates())
    }
}

/// Draws a canonical seed from `rng` and builds the element.
pub fn sample_clifford(n: usize, rng: &mut impl Rng) -> Result<CliffordElement> {
    clifford_from_seed(n, rng.gen())
}

/// Deterministic construction from a canonical seed.
pub fn clifford_from_seed(n: usize, seed: u64) -> Result<CliffordElement> {
    if n == 0 || n > QUBIT_CAP {
        return Err(Error::QubitCapExceeded { requested: n, cap: QUBIT_CAP });
    }
    let mut rng = seeded(seed ^ 0xc11f_f0d5_0f5e_ed00);
    let transvections = sample_symplectic(n, &mut rng);
    let mut gate_list = Vec::new();
    for h in &transvections {
        transvection_gates(h, n, &mut gate_list);
    }
    // Uniform Pauli layer: X as HSSH, Z as SS.
    for q in 0..n {
        if rng.gen::<bool>() {
            gate_list.extend([gates::h(q), gates::s(q), gates::s(q), gates::h(q)]);
        }
        if rng.gen::<bool>() {
            gate_list.extend([gates::s(q), gates::s(q)]);
        }
    }
    Ok(CliffordElement { num_qubits: n, seed, gates: gate_list })
}

/// Mass the table puts on strings at or above the threshold.
pub fn heavy_mass(d: &Distribution, threshold: f64) -> f64 {
    // max(0.0) normalizes the empty sum's negative zero.
    d.support().filter(|&(_, p)| p >= threshold).map(|(_, p)| p).sum::<f64>().max(0.0)
}

/// Second moment of outcome probabilities under uniform x: E_x[p(x)²].
pub fn second_moment_uniform(d: &Distribution) -> f64 {
    let dim = 1u64 << d.num_bits();
    d.support().map(|(_, p)| p * p).sum::<f64>() / dim as f64
}

/// Per-Clifford heavy-output statistics and the empirical second moment
/// over a batch of uniformly sampled Cliffords applied to `psi`.
#[derive(Clone, Debug)]
pub struct FlatnessReport {
    pub threshold: f64,
    pub heavy_cutoff: f64,
    /// Heavy mass per sampled Clifford, in sample order.
    pub heavy_mass: Vec<f64>,
    /// Fraction of Cliffords with heavy mass at most `heavy_cutoff`.
    pub fraction_flat: f64,
    /// Mean over Cliffords of E_x[p_C(x)²], full-register enumeration.
    pub empirical_second_moment: f64,
}

pub fn flatness_stats(
    psi: &PureState,
    num_cliffords: usize,
    threshold: f64,
    heavy_cutoff: f64,
    rng: &mut impl Rng,
) -> Result<FlatnessReport> {
    let n = psi.num_qubits();
    let seeds: Vec<u64> = (0..num_cliffords).map(|_| rng.gen()).collect();
    let qubits: Vec<usize> = (0..n).collect();
    let per: Result<Vec<(f64, f64)>> = seeds
        .par_iter()
        .map(|&seed| {
            let c = clifford_from_seed(n, seed)?;
            let rotated = c.apply(psi)?;
            let d = born_distribution(&rotated, &qubits)?;
            Ok((heavy_mass(&d, threshold), second_moment_uniform(&d)))
        })
        .collect();
    let per = per?;
    let heavy: Vec<f64> = per.iter().map(|&(h, _)| h).collect();
    let flat = heavy.iter().filter(|&&h| h <= heavy_cutoff).count();
    let second = per.iter().map(|&(_, s)| s).sum::<f64>() / num_cliffords.max(1) as f64;
    Ok(FlatnessReport {
        threshold,
        heavy_cutoff,
        heavy_mass: heavy,
        fraction_flat: flat as f64 / num_cliffords.max(1) as f64,
        empirical_second_moment: second,
    })
}
