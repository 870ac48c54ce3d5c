//! Partitions, periodic cluster states, existence equations and symmetry
//! bookkeeping.
//!
//! A cluster state with sizes `m_1..m_M` and relative phases `φ_1..φ_M`
//! rotates rigidly at frequency `Ω`. Phases are gauge-fixed so that
//! `φ_1 = 0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coupling::{circle_distance, wrap_phase, Coupling, Phase};
use crate::error::{Error, Result};
use crate::linalg::{solve_linear_with_scale, Matrix};

/// Cluster sizes `m_1..m_M` with `Σ m_k = N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    sizes: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("no clusters".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidPartition(format!(
                "cluster sizes must be positive: {sizes:?}"
            )));
        }
        Ok(Partition { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_oscillators(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn is_nontrivial(&self, k: usize) -> bool {
        self.sizes[k] > 1
    }

    /// Lifts cluster phases to a full phase vector with consecutive oscillator
    /// blocks: cluster 1 occupies indices `0..m_1`, and so on.
    pub fn lift(&self, phases: &[f64]) -> Vec<f64> {
        self.sizes
            .iter()
            .zip(phases)
            .flat_map(|(&m, &p)| std::iter::repeat_n(wrap_phase(p), m))
            .collect()
    }

    /// Cluster index of every oscillator under [`Partition::lift`].
    pub fn assignment(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &m)| std::iter::repeat_n(k, m))
            .collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.sizes.len() {
            return Err(Error::LengthMismatch {
                expected: self.sizes.len(),
                actual: len,
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Partition::new(sizes)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.sizes
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|m| m.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A periodic cluster state `Ψ_k(t) = φ_k + Ω t`.
///
/// Serialized as `{"sizes": [...], "phases": [...], "omega": ω, "Omega": Ω}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClusterState", into = "RawClusterState")]
pub struct ClusterState {
    pub partition: Partition,
    pub phases: Vec<Phase>,
    pub omega: f64,
    pub frequency: f64,
}

#[derive(Serialize, Deserialize)]
struct RawClusterState {
    sizes: Vec<usize>,
    phases: Vec<f64>,
    omega: f64,
    #[serde(rename = "Omega")]
    frequency: f64,
}

impl TryFrom<RawClusterState> for ClusterState {
    type Error = Error;
    fn try_from(raw: RawClusterState) -> Result<Self> {
        let partition = Partition::new(raw.sizes)?;
        partition.check_len(raw.phases.len())?;
        Ok(ClusterState {
            partition,
            phases: raw.phases.into_iter().map(Phase::new).collect(),
            omega: raw.omega,
            frequency: raw.frequency,
        })
    }
}

impl From<ClusterState> for RawClusterState {
    fn from(s: ClusterState) -> Self {
        RawClusterState {
            sizes: s.partition.sizes,
            phases: s.phases.into_iter().map(f64::from).collect(),
            omega: s.omega,
            frequency: s.frequency,
        }
    }
}

impl ClusterState {
    /// Builds a state from phases, filling `Ω` from the frequency relation.
    /// Phases are shifted so that the first one is zero.
    pub fn new<C: Coupling + ?Sized>(
        g: &C,
        partition: Partition,
        phases: &[f64],
        omega: f64,
    ) -> Result<Self> {
        partition.check_len(phases.len())?;
        let gauged = gauge_fix(phases);
        let frequency = frequency(g, &partition, &gauged, omega)?;
        Ok(ClusterState {
            partition,
            phases: gauged.into_iter().map(Phase::new).collect(),
            omega,
            frequency,
        })
    }

    pub fn phase_values(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.value()).collect()
    }

    /// Full phase vector on `T^N` (see [`Partition::lift`]).
    pub fn lift(&self) -> Vec<f64> {
        self.partition.lift(&self.phase_values())
    }
}

fn gauge_fix(phases: &[f64]) -> Vec<f64> {
    let base = phases.first().copied().unwrap_or(0.0);
    phases.iter().map(|p| wrap_phase(p - base)).collect()
}

/// `dΨ_k/dt = ω + (1/N) Σ_l m_l g(Ψ_k − Ψ_l)`.
pub fn reduced_vector_field<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    psi: &[f64],
    omega: f64,
) -> Result<Vec<f64>> {
    partition.check_len(psi.len())?;
    let n = partition.num_oscillators() as f64;
    let m = partition.sizes();
    Ok(psi
        .iter()
        .map(|&pk| {
            let s: f64 = psi
                .iter()
                .zip(m)
                .map(|(&pl, &ml)| ml as f64 * g.value(pk - pl))
                .sum();
            omega + s / n
        })
        .collect())
}

/// `Ω = ω + (1/N) Σ_l m_l g(φ_1 − φ_l)`.
pub fn frequency<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
    omega: f64,
) -> Result<f64> {
    partition.check_len(phases.len())?;
    let n = partition.num_oscillators() as f64;
    let s: f64 = phases
        .iter()
        .zip(partition.sizes())
        .map(|(&pl, &ml)| ml as f64 * g.value(phases[0] - pl))
        .sum();
    Ok(omega + s / n)
}

/// Existence conditions `Σ_l m_l (g_{kl} − g_{1l})`, `k = 2..M`, with
/// `g_{kk} = g(0)`.
pub fn existence_residual<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Vec<f64>> {
    partition.check_len(phases.len())?;
    let mm = partition.num_clusters();
    if mm < 2 {
        return Err(Error::TooFewClusters {
            required: 2,
            actual: mm,
        });
    }
    let m = partition.sizes();
    let row = |k: usize| -> f64 {
        phases
            .iter()
            .zip(m)
            .map(|(&pl, &ml)| ml as f64 * g.value(phases[k] - pl))
            .sum()
    };
    let first = row(0);
    Ok((1..mm).map(|k| row(k) - first).collect())
}

fn residual_jacobian<C: Coupling + ?Sized>(g: &C, partition: &Partition, phases: &[f64]) -> Matrix {
    let mm = partition.num_clusters();
    let m = partition.sizes();
    let gp = |a: usize, b: usize| g.derivative(phases[a] - phases[b]);
    Matrix::from_fn(mm - 1, mm - 1, |row, col| {
        let (k, j) = (row + 1, col + 1);
        let mut v = m[j] as f64 * (gp(0, j) - gp(k, j));
        if k == j {
            v += (0..mm).map(|l| m[l] as f64 * gp(k, l)).sum::<f64>();
        }
        v
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub omega: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            omega: 0.0,
            max_iterations: 50,
            tolerance: 1e-12,
        }
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton iteration on the existence conditions in `(φ_2..φ_M)` with
/// `φ_1 = 0` held fixed. Steps are halved while they increase the residual.
pub fn solve_phases<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    guess: &[f64],
    opts: SolveOptions,
) -> Result<ClusterState> {
    partition.check_len(guess.len())?;
    let mm = partition.num_clusters();
    if mm < 2 {
        return Err(Error::TooFewClusters {
            required: 2,
            actual: mm,
        });
    }
    let mut phases = gauge_fix(guess);
    let mut res = existence_residual(g, partition, &phases)?;
    let mut norm = max_norm(&res);
    let mut iterations = 0;
    while norm >= opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let jac = residual_jacobian(g, partition, &phases);
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let step = solve_linear_with_scale(&jac, &neg, derivative_scale(g, partition, &phases)).ok_or(Error::SingularJacobian {
            iterations,
            residual: norm,
        })?;
        let mut scale = 1.0;
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for _ in 0..30 {
            let trial: Vec<f64> = std::iter::once(0.0)
                .chain(phases[1..].iter().zip(&step).map(|(p, d)| wrap_phase(p + scale * d)))
                .collect();
            let r = existence_residual(g, partition, &trial)?;
            let n = max_norm(&r);
            if best.as_ref().is_none_or(|b| n < b.2) {
                best = Some((trial, r, n));
            }
            if n <= norm {
                break;
            }
            scale *= 0.5;
        }
        let (p, r, n) = best.expect("at least one trial step");
        phases = p;
        res = r;
        norm = n;
    }
    ClusterState::new(g, partition.clone(), &phases, opts.omega)
}

/// `N · max |g'(φ_k − φ_l)|`, the natural size of the residual Jacobian.
fn derivative_scale<C: Coupling + ?Sized>(g: &C, partition: &Partition, phases: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for &a in phases {
        for &b in phases {
            m = m.max(g.derivative(a - b).abs());
        }
    }
    partition.num_oscillators() as f64 * m
}

/// Phase non-degeneracy: every ordered difference `φ_i − φ_j` (`i ≠ j`) is
/// attained by one ordered pair only, measured by `1 − cos` with threshold
/// `tol`.
pub fn is_phase_nondegenerate(phases: &[f64], tol: f64) -> bool {
    let mm = phases.len();
    let pairs: Vec<(usize, usize)> = (0..mm)
        .flat_map(|i| (0..mm).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for &(k, l) in &pairs[a + 1..] {
            if circle_distance(phases[i] - phases[j], phases[k] - phases[l]) <= tol {
                return false;
            }
        }
    }
    true
}

/// Which sufficient condition certifies that all clusters are inequivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certificate {
    /// `N` prime and some cluster has more than one oscillator.
    PrimeN,
    DistinctSizes,
    PhaseNonDegenerate,
    Inconclusive,
}

pub fn inequivalence_certificate(partition: &Partition, phases: &[f64], tol: f64) -> Certificate {
    let n = partition.num_oscillators();
    let sizes = partition.sizes();
    if is_prime(n) && sizes.iter().any(|&m| m > 1) {
        return Certificate::PrimeN;
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).all(|w| w[0] != w[1]) {
        return Certificate::DistinctSizes;
    }
    if is_phase_nondegenerate(phases, tol) {
        return Certificate::PhaseNonDegenerate;
    }
    Certificate::Inconclusive
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

pub const MAX_ENUMERATION_N: usize = 12;

/// Conjugacy class of an isotropy subgroup `S_{m_1} × … × S_{m_M}` of `S_N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsotropyClass {
    /// Block sizes, descending.
    pub sizes: Vec<usize>,
    pub fix_dim: usize,
    pub num_conjugates: u64,
    pub orbit_size: u64,
}

impl IsotropyClass {
    /// Group label such as `S_4 x S_2`, `(S_2)^3` or `I`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < self.sizes.len() {
            let s = self.sizes[i];
            let mult = self.sizes[i..].iter().take_while(|&&x| x == s).count();
            if s > 1 {
                parts.push(if mult == 1 {
                    format!("S_{s}")
                } else {
                    format!("(S_{s})^{mult}")
                });
            }
            i += mult;
        }
        if parts.is_empty() {
            "I".to_string()
        } else {
            parts.join(" x ")
        }
    }

    pub fn sizes_string(&self) -> String {
        self.sizes
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Integer partitions of `n` in descending lexicographic order.
pub fn integer_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(rem: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rem == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=rem.min(max)).rev() {
            cur.push(part);
            rec(rem - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// One class per integer partition of `N`, ordered by fixed-point dimension
/// and then by descending block sizes.
pub fn enumerate_isotropy(n: usize) -> Result<Vec<IsotropyClass>> {
    if !(1..=MAX_ENUMERATION_N).contains(&n) {
        return Err(Error::OutOfRange(format!(
            "N = {n} outside 1..={MAX_ENUMERATION_N}"
        )));
    }
    let nf = factorial(n);
    let mut classes: Vec<IsotropyClass> = integer_partitions(n)
        .into_iter()
        .map(|sizes| {
            let block_product: u64 = sizes.iter().map(|&s| factorial(s)).product();
            let orbit_size = nf / block_product;
            let mut mult_product = 1u64;
            let mut i = 0;
            while i < sizes.len() {
                let mult = sizes[i..].iter().take_while(|&&x| x == sizes[i]).count();
                mult_product *= factorial(mult);
                i += mult;
            }
            IsotropyClass {
                fix_dim: sizes.len(),
                num_conjugates: orbit_size / mult_product,
                orbit_size,
                sizes,
            }
        })
        .collect();
    // stable sort keeps descending-lexicographic order within a dimension
    classes.sort_by_key(|c| c.fix_dim);
    Ok(classes)
}

/// `N! / (m · k_1! ⋯ k_ℓ!)` for `N = m (k_1 + … + k_ℓ)`: the subgroup count
/// quoted for the classes with an extra `Z_m` phase-shift symmetry.
///
/// Only evaluated as a formula; those classes are not enumerated.
pub fn phase_shift_class_count(m: usize, ks: &[usize]) -> Result<u64> {
    if m == 0 || ks.is_empty() || ks.contains(&0) {
        return Err(Error::OutOfRange("m and every k_i must be positive".into()));
    }
    let n = m * ks.iter().sum::<usize>();
    if n > 20 {
        return Err(Error::OutOfRange(format!("N = {n} too large for u64 factorials")));
    }
    let denom: u64 = m as u64 * ks.iter().map(|&k| factorial(k)).product::<u64>();
    Ok(factorial(n) / denom)
}

/// Writes the enumeration as CSV with columns `sizes, fix_dim, num_conjugates,
/// orbit_size`.
pub fn write_isotropy_csv<W: std::io::Write>(classes: &[IsotropyClass], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sizes", "fix_dim", "num_conjugates", "orbit_size"])?;
    for c in classes {
        w.write_record([
            c.sizes_string(),
            c.fix_dim.to_string(),
            c.num_conjugates.to_string(),
            c.orbit_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::FourierCoupling;
    use proptest::prelude::*;
    use std::collections::HashMap;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn p222() -> Partition {
        Partition::new(vec![2, 2, 2]).unwrap()
    }

    fn preset(name: &str) -> FourierCoupling {
        FourierCoupling::preset(name).unwrap()
    }

    // Roots of the existence equations for the case1/case2 couplings at
    // sizes (2,2,2), computed independently with scipy.optimize.fsolve.
    const CASE1_ROOT: [f64; 3] = [0.0, 1.701_115_99, 4.758_869_91];
    const CASE2_ROOT: [f64; 3] = [0.0, 1.708_659_67, 4.776_240_01];

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![2, 0]).is_err());
        let p = Partition::new(vec![2, 1, 3]).unwrap();
        assert_eq!(p.num_oscillators(), 6);
        assert_eq!(p.lift(&[0.0, 1.0, 2.0]), vec![0.0, 0.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(p.assignment(), vec![0, 0, 1, 2, 2, 2]);
    }

    #[test]
    fn reduced_field_case0() {
        let f = reduced_vector_field(&preset("case0"), &p222(), &[0.0, FRAC_PI_2, PI], 1.0).unwrap();
        for v in f {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reduced_field_single_cluster() {
        let g = preset("case1");
        let p = Partition::new(vec![6]).unwrap();
        let f = reduced_vector_field(&g, &p, &[0.0], 0.0).unwrap();
        assert!((f[0] - g.eval(0.0)).abs() < 1e-15);
        assert!(reduced_vector_field(&g, &p, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn reduced_field_case1_rounded_phases() {
        let g = preset("case1");
        let f = reduced_vector_field(&g, &p222(), &[0.0, 1.7014, 4.7573], 0.0).unwrap();
        let spread = f.iter().cloned().fold(f64::MIN, f64::max) - f.iter().cloned().fold(f64::MAX, f64::min);
        // phases quoted to four decimals leave a visible residual
        assert!(spread < 5e-3, "spread {spread}");
        let omega = frequency(&g, &p222(), &CASE1_ROOT, 0.0).unwrap();
        assert!((omega - 1.017_119_279_215_396_7).abs() < 1e-7);
    }

    #[test]
    fn existence_residual_cases() {
        let r = existence_residual(&preset("case0"), &p222(), &[0.0, FRAC_PI_2, PI]).unwrap();
        assert!(max_norm(&r) < 1e-12);
        let r = existence_residual(&preset("case2"), &p222(), &[0.0; 3]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        let r = existence_residual(&preset("case1"), &p222(), &[0.0, 1.7014, 4.7573]).unwrap();
        assert!(max_norm(&r) < 1e-2);
        let single = Partition::new(vec![6]).unwrap();
        assert!(matches!(
            existence_residual(&preset("case1"), &single, &[0.0]),
            Err(Error::TooFewClusters { .. })
        ));
    }

    #[test]
    fn solve_case0() {
        let s = solve_phases(&preset("case0"), &p222(), &[0.0, 1.5, 3.1], SolveOptions::default()).unwrap();
        let ph = s.phase_values();
        assert!(ph[0].abs() < 1e-15);
        assert!((ph[1] - FRAC_PI_2).abs() < 1e-9);
        assert!((ph[2] - PI).abs() < 1e-9);
    }

    #[test]
    fn solve_case1_and_case2() {
        for (name, guess, root) in [
            ("case1", [0.0, 1.70, 4.76], CASE1_ROOT),
            ("case2", [0.0, 1.70, 4.78], CASE2_ROOT),
        ] {
            let g = preset(name);
            let s = solve_phases(&g, &p222(), &guess, SolveOptions::default()).unwrap();
            let ph = s.phase_values();
            for (a, b) in ph.iter().zip(root) {
                assert!((a - b).abs() < 1e-7, "{name}: {a} vs {b}");
            }
            let r = existence_residual(&g, &p222(), &ph).unwrap();
            assert!(max_norm(&r) < 1e-12);
        }
    }

    #[test]
    fn solve_reports_singularity_and_gauges_guess() {
        // g ≡ 0: every configuration satisfies the existence conditions,
        // so the guess is returned as is (shifted so φ_1 = 0)
        let g = FourierCoupling::zero(2);
        let s = solve_phases(&g, &p222(), &[1.0, 2.0, 3.0], SolveOptions::default()).unwrap();
        assert_eq!(s.phase_values()[0], 0.0);
        assert!((s.phase_values()[1] - 1.0).abs() < 1e-15);

        // g = sin φ on sizes (1,1): the residual is 2 sin φ_2, whose
        // derivative vanishes at φ_2 = π/2 where the residual does not
        let g = FourierCoupling::new(vec![0.0, 0.0], vec![1.0]).unwrap();
        let p = Partition::new(vec![1, 1]).unwrap();
        let err = solve_phases(&g, &p, &[0.0, FRAC_PI_2], SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { .. }), "{err:?}");
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = preset("case1");
        let opts = SolveOptions {
            max_iterations: 1,
            ..SolveOptions::default()
        };
        let err = solve_phases(&g, &p222(), &[0.0, 1.0, 4.0], opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }

    #[test]
    fn nondegeneracy() {
        assert!(!is_phase_nondegenerate(&[0.0, FRAC_PI_2, PI], 1e-6));
        assert!(is_phase_nondegenerate(&[0.0, 1.7014, 4.7573], 1e-6));
        // (0, 2π/L, 6π/L): φ_3 − φ_2 = 4π/L equals φ_1 − φ_3 mod 2π for L = 5
        let l5 = [0.0, TAU / 5.0, 3.0 * TAU / 5.0];
        assert!(!is_phase_nondegenerate(&l5, 1e-6));
        for l in 7..=12 {
            let lf = l as f64;
            assert!(is_phase_nondegenerate(&[0.0, TAU / lf, 3.0 * TAU / lf], 1e-6), "L = {l}");
        }
    }

    #[test]
    fn certificates() {
        let p = Partition::new(vec![2, 2, 3]).unwrap();
        assert_eq!(inequivalence_certificate(&p, &[0.0, 0.0, 0.0], 1e-6), Certificate::PrimeN);
        let p = Partition::new(vec![1, 2, 3]).unwrap();
        assert_eq!(inequivalence_certificate(&p, &[0.0, 0.0, 0.0], 1e-6), Certificate::DistinctSizes);
        assert_eq!(
            inequivalence_certificate(&p222(), &[0.0, 1.7014, 4.7573], 1e-6),
            Certificate::PhaseNonDegenerate
        );
        assert_eq!(
            inequivalence_certificate(&p222(), &[0.0, FRAC_PI_2, PI], 1e-6),
            Certificate::Inconclusive
        );
    }

    #[test]
    fn enumeration_n6_rows() {
        let classes = enumerate_isotropy(6).unwrap();
        assert_eq!(classes.len(), 11);
        let find = |s: &[usize]| classes.iter().find(|c| c.sizes == s).unwrap().clone();
        let c = find(&[3, 3]);
        assert_eq!((c.fix_dim, c.num_conjugates, c.orbit_size), (2, 10, 20));
        let c = find(&[2, 2, 2]);
        assert_eq!((c.fix_dim, c.num_conjugates, c.orbit_size), (3, 15, 90));
        let c = find(&[1; 6]);
        assert_eq!((c.fix_dim, c.num_conjugates, c.orbit_size), (6, 1, 720));
        let c = find(&[4, 1, 1]);
        assert_eq!((c.fix_dim, c.num_conjugates, c.orbit_size), (3, 15, 30));
        assert_eq!(c.label(), "S_4");
        assert_eq!(find(&[2, 2, 2]).label(), "(S_2)^3");
        assert_eq!(find(&[4, 2]).label(), "S_4 x S_2");
        assert_eq!(find(&[1; 6]).label(), "I");
        assert!(classes.windows(2).all(|w| w[0].fix_dim <= w[1].fix_dim));
    }

    #[test]
    fn enumeration_small_and_range() {
        let c2 = enumerate_isotropy(2).unwrap();
        assert_eq!(c2.iter().map(|c| c.sizes.clone()).collect::<Vec<_>>(), vec![vec![2], vec![1, 1]]);
        let c7 = enumerate_isotropy(7).unwrap();
        let row = c7.iter().find(|c| c.sizes == [3, 2, 2]).unwrap();
        assert_eq!(row.orbit_size, 210);
        assert!(enumerate_isotropy(0).is_err());
        assert!(enumerate_isotropy(13).is_err());
    }

    /// Counts set partitions of {0..n} by sorted block-size multiset via
    /// restricted growth strings.
    fn brute_force_set_partitions(n: usize) -> HashMap<Vec<usize>, u64> {
        let mut counts = HashMap::new();
        let mut rgs = vec![0usize; n];
        loop {
            let blocks = rgs.iter().max().unwrap() + 1;
            let mut sizes = vec![0usize; blocks];
            for &b in &rgs {
                sizes[b] += 1;
            }
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            *counts.entry(sizes).or_insert(0) += 1;
            // next restricted growth string
            let mut i = n - 1;
            loop {
                if i == 0 {
                    return counts;
                }
                let prefix_max = rgs[..i].iter().max().copied().unwrap();
                if rgs[i] <= prefix_max {
                    rgs[i] += 1;
                    for x in &mut rgs[i + 1..] {
                        *x = 0;
                    }
                    break;
                }
                i -= 1;
            }
        }
    }

    #[test]
    fn conjugate_counts_match_brute_force() {
        for n in 1..=9 {
            let brute = brute_force_set_partitions(n);
            let classes = enumerate_isotropy(n).unwrap();
            assert_eq!(classes.len(), brute.len(), "N = {n}");
            for c in classes {
                assert_eq!(brute[&c.sizes], c.num_conjugates, "N = {n}, {:?}", c.sizes);
                assert!(c.num_conjugates <= c.orbit_size);
            }
        }
    }

    #[test]
    fn phase_shift_formula() {
        // m = 1 reduces to the orbit size; (3,3) as k = (3) with m = 2 gives 6!/(2·3!) = 60
        assert_eq!(phase_shift_class_count(1, &[3, 3]).unwrap(), 20);
        assert_eq!(phase_shift_class_count(2, &[3]).unwrap(), 60);
        assert!(phase_shift_class_count(0, &[3]).is_err());
    }

    #[test]
    fn enumeration_csv() {
        let mut buf = Vec::new();
        write_isotropy_csv(&enumerate_isotropy(2).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "sizes,fix_dim,num_conjugates,orbit_size\n2,1,1,1\n1 1,2,1,2\n");
    }

    #[test]
    fn cluster_state_json() {
        let g = preset("case0");
        let s = ClusterState::new(&g, p222(), &[0.0, FRAC_PI_2, PI], 1.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["sizes"], serde_json::json!([2, 2, 2]));
        assert_eq!(v["omega"], serde_json::json!(1.0));
        assert!((v["Omega"].as_f64().unwrap() - 1.0).abs() < 1e-15);
        let back: ClusterState = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        let bad = serde_json::json!({"sizes": [2, 2], "phases": [0.0], "omega": 0.0, "Omega": 0.0});
        assert!(serde_json::from_value::<ClusterState>(bad).is_err());
    }

    fn arb_coupling() -> impl Strategy<Value = FourierCoupling> {
        (1usize..=5)
            .prop_flat_map(|r| {
                (
                    prop::collection::vec(-1.0f64..1.0, r + 1),
                    prop::collection::vec(-1.0f64..1.0, r),
                )
            })
            .prop_map(|(c, s)| FourierCoupling::new(c, s).unwrap())
    }

    proptest! {
        #[test]
        fn residual_gauge_invariant(
            g in arb_coupling(),
            sizes in prop::collection::vec(1usize..4, 2..5),
            shift in -10.0f64..10.0,
            seed in prop::collection::vec(0.0f64..TAU, 5),
        ) {
            let p = Partition::new(sizes).unwrap();
            let phases = &seed[..p.num_clusters()];
            let shifted: Vec<f64> = phases.iter().map(|x| x + shift).collect();
            let a = existence_residual(&g, &p, phases).unwrap();
            let b = existence_residual(&g, &p, &shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn solved_states_rotate_rigidly(
            g in arb_coupling(),
            sizes in prop::collection::vec(1usize..4, 2..5),
            seed in prop::collection::vec(0.0f64..TAU, 5),
        ) {
            let p = Partition::new(sizes).unwrap();
            if let Ok(s) = solve_phases(&g, &p, &seed[..p.num_clusters()], SolveOptions::default()) {
                let f = reduced_vector_field(&g, &p, &s.phase_values(), 0.3).unwrap();
                for v in &f {
                    prop_assert!((v - f[0]).abs() < 1e-10);
                }
                prop_assert!((f[0] - 0.3 - s.frequency).abs() < 1e-10);
            }
        }

        #[test]
        fn nondegenerate_never_inconclusive(
            sizes in prop::collection::vec(1usize..4, 2..5),
            seed in prop::collection::vec(0.0f64..TAU, 5),
        ) {
            let p = Partition::new(sizes).unwrap();
            let phases = &seed[..p.num_clusters()];
            if is_phase_nondegenerate(phases, 1e-9) {
                prop_assert_ne!(inequivalence_certificate(&p, phases, 1e-9), Certificate::Inconclusive);
            }
        }
    }
}
