//! Linear stability of periodic cluster states.
//!
//! Perturbations that keep the clustering see the `M×M` tangential matrix
//! `T`; perturbations that split cluster `k` see a single transverse
//! exponent of multiplicity `m_k − 1`. Together they make up the spectrum of
//! the full `N×N` Jacobian, which [`full_jacobian`] provides as an
//! independent check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cluster::{existence_residual, Partition};
use crate::coupling::{default_bump_epsilon, min_pairwise_separation, BumpPerturbation, Coupling, PerturbedCoupling};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, sort_spectrum, Matrix};
use crate::par::{self, Exec};

/// Half-width of the band around a threshold inside which a state is
/// reported as [`TransverseClass::Marginal`].
pub const MARGINAL_BAND: f64 = 1e-9;

fn check_len(partition: &Partition, phases: &[f64]) -> Result<()> {
    if phases.len() != partition.num_clusters() {
        return Err(Error::LengthMismatch {
            expected: partition.num_clusters(),
            actual: phases.len(),
        });
    }
    Ok(())
}

/// `g'(φ_k − φ_l)` for all cluster pairs.
fn derivative_table<C: Coupling + ?Sized>(g: &C, phases: &[f64]) -> Vec<Vec<f64>> {
    phases
        .iter()
        .map(|&a| phases.iter().map(|&b| g.derivative(a - b)).collect())
        .collect()
}

/// `T_{kl} = (1/N)[δ_{kl} Σ_{r≠k} m_r g'_{kr} − (1 − δ_{kl}) m_l g'_{kl}]`.
///
/// Every row sums to zero, which carries the neutral rotation direction.
pub fn tangential_matrix<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Matrix> {
    check_len(partition, phases)?;
    let n = partition.num_oscillators() as f64;
    let m = partition.sizes();
    let gp = derivative_table(g, phases);
    let mm = m.len();
    Ok(Matrix::from_fn(mm, mm, |k, l| {
        if k == l {
            (0..mm)
                .filter(|&r| r != k)
                .map(|r| m[r] as f64 * gp[k][r])
                .sum::<f64>()
                / n
        } else {
            -(m[l] as f64) * gp[k][l] / n
        }
    }))
}

/// `μ` and `ν` of a three-cluster state, with `ν` evaluated in both its
/// pairwise-product and its quadratic-form arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuNu {
    pub mu: f64,
    pub nu: f64,
    pub nu_alt: f64,
}

/// `μ`, `ν` from sizes and the off-diagonal derivatives `gp[i][j] = g'_{ij}`.
pub fn mu_nu_from_derivatives(m: [f64; 3], gp: [[f64; 3]; 3]) -> MuNu {
    let n = m[0] + m[1] + m[2];
    let [m1, m2, m3] = m;
    let g12 = gp[0][1];
    let g13 = gp[0][2];
    let g21 = gp[1][0];
    let g23 = gp[1][2];
    let g31 = gp[2][0];
    let g32 = gp[2][1];
    let mu = (m2 * g12 + m3 * g13 + m1 * g21 + m3 * g23 + m1 * g31 + m2 * g32) / n;

    let a1 = m2 * g12 + m3 * g13;
    let a2 = m1 * g21 + m3 * g23;
    let a3 = m1 * g31 + m2 * g32;
    let nu = 4.0 / (n * n)
        * (a2 * a3 - m2 * m3 * g32 * g23 + a1 * a3 - m1 * m3 * g31 * g13 + a1 * a2
            - m1 * m2 * g21 * g12);

    let nu_alt = 4.0 / (n * n)
        * (m1 * m1 * g21 * g31
            + m2 * m2 * g12 * g32
            + m3 * m3 * g13 * g23
            + m1 * m2 * (g21 * g32 + g12 * g31)
            + m1 * m3 * (g23 * g31 + g13 * g21)
            + m2 * m3 * (g13 * g32 + g12 * g23));
    MuNu { mu, nu, nu_alt }
}

fn three_sizes(partition: &Partition) -> Result<[f64; 3]> {
    match partition.sizes() {
        &[a, b, c] => Ok([a as f64, b as f64, c as f64]),
        s => Err(Error::ClusterCount {
            required: 3,
            actual: s.len(),
        }),
    }
}

pub fn three_cluster_mu_nu<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<MuNu> {
    let m = three_sizes(partition)?;
    check_len(partition, phases)?;
    let t = derivative_table(g, phases);
    let gp = [
        [t[0][0], t[0][1], t[0][2]],
        [t[1][0], t[1][1], t[1][2]],
        [t[2][0], t[2][1], t[2][2]],
    ];
    Ok(mu_nu_from_derivatives(m, gp))
}

/// Nontrivial eigenvalues `½(μ ± √(μ² − ν))` of the three-cluster tangential
/// block; complex when `ν > μ²`.
pub fn three_cluster_pair(mu: f64, nu: f64) -> [Complex64; 2] {
    let disc = mu * mu - nu;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [Complex64::new(0.5 * (mu - r), 0.0), Complex64::new(0.5 * (mu + r), 0.0)]
    } else {
        let r = (-disc).sqrt();
        [Complex64::new(0.5 * mu, -0.5 * r), Complex64::new(0.5 * mu, 0.5 * r)]
    }
}

/// Spectrum of `T`, including the trivial zero. Three-cluster states use the
/// closed form in `μ`, `ν`; all others go through the eigen-solver.
pub fn tangential_eigenvalues<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Vec<Complex64>> {
    if partition.num_clusters() == 3 {
        let MuNu { mu, nu, .. } = three_cluster_mu_nu(g, partition, phases)?;
        let mut ev = vec![Complex64::new(0.0, 0.0)];
        ev.extend(three_cluster_pair(mu, nu));
        sort_spectrum(&mut ev);
        return Ok(ev);
    }
    tangential_eigenvalues_numeric(g, partition, phases)
}

/// Spectrum of `T` via the eigen-solver, for any `M`.
pub fn tangential_eigenvalues_numeric<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Vec<Complex64>> {
    eigenvalues(&tangential_matrix(g, partition, phases)?)
}

/// Transverse exponent of one cluster; `exponent` is `None` for a trivial
/// (single-oscillator) cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseExponent {
    pub cluster: usize,
    pub exponent: Option<f64>,
    pub multiplicity: usize,
}

/// `λ_k = (1/N)[m_k g'(0) + Σ_{l≠k} m_l g'_{kl}]` with multiplicity `m_k − 1`.
pub fn transverse_exponents<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Vec<TransverseExponent>> {
    check_len(partition, phases)?;
    let n = partition.num_oscillators() as f64;
    let m = partition.sizes();
    let gp = derivative_table(g, phases);
    let g0 = g.derivative(0.0);
    Ok((0..m.len())
        .map(|k| {
            let others: f64 = (0..m.len())
                .filter(|&l| l != k)
                .map(|l| m[l] as f64 * gp[k][l])
                .sum();
            TransverseExponent {
                cluster: k,
                exponent: (m[k] > 1).then(|| (m[k] as f64 * g0 + others) / n),
                multiplicity: m[k] - 1,
            }
        })
        .collect())
}

/// `K_k = (1/m_k) Σ_{l≠k} m_l g'_{kl}`, in cluster order. Cluster `k` is
/// transversely stable iff `K_k < −g'(0)`.
pub fn transverse_thresholds<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Vec<f64>> {
    check_len(partition, phases)?;
    let m = partition.sizes();
    let gp = derivative_table(g, phases);
    Ok((0..m.len())
        .map(|k| {
            (0..m.len())
                .filter(|&l| l != k)
                .map(|l| m[l] as f64 * gp[k][l])
                .sum::<f64>()
                / m[k] as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransverseClass {
    AllUnstable,
    OneStable,
    TwoStable,
    AllStable,
    Marginal,
}

impl TransverseClass {
    fn from_count(stable: usize) -> Self {
        match stable {
            0 => TransverseClass::AllUnstable,
            1 => TransverseClass::OneStable,
            2 => TransverseClass::TwoStable,
            _ => TransverseClass::AllStable,
        }
    }
}

/// Thresholds `K` sorted ascending, with `order[i]` the cluster whose
/// threshold sits at position `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub k_sorted: Vec<f64>,
    pub order: Vec<usize>,
    pub minus_g0_prime: f64,
    pub class: TransverseClass,
    pub tangentially_stable: bool,
}

/// Classifies transverse stability of a three-cluster state by where `−g'(0)`
/// falls among the sorted thresholds.
pub fn transverse_classification<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<Classification> {
    three_sizes(partition)?;
    let k = transverse_thresholds(g, partition, phases)?;
    let mut order: Vec<usize> = (0..k.len()).collect();
    order.sort_by(|&a, &b| k[a].total_cmp(&k[b]));
    let k_sorted: Vec<f64> = order.iter().map(|&i| k[i]).collect();
    let minus_g0_prime = -g.derivative(0.0);

    let tangentially_stable = is_tangentially_stable(&tangential_eigenvalues(g, partition, phases)?);
    if !tangentially_stable {
        log::warn!("classifying transverse stability of a tangentially unstable state");
    }

    let class = if k_sorted.iter().any(|kk| (minus_g0_prime - kk).abs() < MARGINAL_BAND) {
        TransverseClass::Marginal
    } else {
        TransverseClass::from_count(k_sorted.iter().filter(|&&kk| kk < minus_g0_prime).count())
    };
    Ok(Classification {
        k_sorted,
        order,
        minus_g0_prime,
        class,
        tangentially_stable,
    })
}

/// All nontrivial tangential eigenvalues (everything except the one closest
/// to zero) have negative real part.
pub fn is_tangentially_stable(tangential: &[Complex64]) -> bool {
    let Some(trivial) = tangential
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
    else {
        return false;
    };
    tangential
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != trivial)
        .all(|(_, z)| z.re < 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sizes: Vec<usize>,
    pub phases: Vec<f64>,
    /// `M` values, including the trivial zero.
    pub tangential: Vec<Complex64>,
    pub transverse: Vec<TransverseExponent>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    /// `K_1 ≤ … ≤ K_M`.
    pub k_values: Vec<f64>,
    pub tangentially_stable: bool,
    /// Number of nontrivial clusters with a negative transverse exponent.
    pub stable_clusters: usize,
    pub nontrivial_clusters: usize,
    /// Three nontrivial clusters only.
    pub classification: Option<TransverseClass>,
}

impl StabilityReport {
    /// Tangential eigenvalues plus every transverse exponent repeated by its
    /// multiplicity: the predicted spectrum of the full Jacobian.
    pub fn predicted_full_spectrum(&self) -> Vec<Complex64> {
        let mut out = self.tangential.clone();
        for t in &self.transverse {
            if let Some(e) = t.exponent {
                out.extend(std::iter::repeat_n(Complex64::new(e, 0.0), t.multiplicity));
            }
        }
        sort_spectrum(&mut out);
        out
    }
}

pub fn stability_report<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
) -> Result<StabilityReport> {
    check_len(partition, phases)?;
    let tangential = tangential_eigenvalues(g, partition, phases)?;
    let transverse = transverse_exponents(g, partition, phases)?;
    let mut k_values = transverse_thresholds(g, partition, phases)?;
    k_values.sort_by(f64::total_cmp);
    let (mu, nu) = match three_cluster_mu_nu(g, partition, phases) {
        Ok(mn) => (Some(mn.mu), Some(mn.nu)),
        Err(_) => (None, None),
    };
    let nontrivial_clusters = transverse.iter().filter(|t| t.exponent.is_some()).count();
    let stable_clusters = transverse
        .iter()
        .filter(|t| t.exponent.is_some_and(|e| e < 0.0))
        .count();
    let classification = if partition.num_clusters() == 3 && nontrivial_clusters == 3 {
        Some(transverse_classification(g, partition, phases)?.class)
    } else {
        None
    };
    Ok(StabilityReport {
        sizes: partition.sizes().to_vec(),
        phases: phases.to_vec(),
        tangentially_stable: is_tangentially_stable(&tangential),
        tangential,
        transverse,
        mu,
        nu,
        k_values,
        stable_clusters,
        nontrivial_clusters,
        classification,
    })
}

/// Transverse bifurcation points of the family `g_r = g + r·h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationThresholds {
    /// `r_k = g'(0) + K_k`, ascending.
    pub r_values: Vec<f64>,
    /// Cluster that changes stability at each `r_k`.
    pub clusters: Vec<usize>,
    /// Sign change of each cluster's exponent under `g_r`, located by bisection.
    pub located: Vec<f64>,
    pub epsilon_used: f64,
    /// Largest change of the existence residual or tangential spectrum
    /// across the sampled `r`, relative to `r = 0`.
    pub invariance_error: f64,
}

/// Computes `r_1 ≤ … ≤ r_M` for a state with only nontrivial clusters. Below
/// `r_1` every cluster is transversely unstable; above `r_k` exactly `k` are
/// stable.
///
/// `epsilon` defaults to half the smallest wrapped phase separation.
pub fn bifurcation_thresholds<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
    epsilon: Option<f64>,
) -> Result<BifurcationThresholds> {
    check_len(partition, phases)?;
    if let Some(k) = (0..partition.num_clusters()).find(|&k| !partition.is_nontrivial(k)) {
        return Err(Error::TrivialCluster(k));
    }
    let separation = min_pairwise_separation(phases).ok_or(Error::TooFewClusters {
        required: 2,
        actual: phases.len(),
    })?;
    let epsilon = epsilon.unwrap_or_else(|| default_bump_epsilon(phases).unwrap_or(0.0));
    let bump = BumpPerturbation::new(epsilon, 0.0)?;
    if epsilon >= separation {
        return Err(Error::EpsilonTooLarge {
            epsilon,
            separation,
        });
    }

    let g0 = g.derivative(0.0);
    let k = transverse_thresholds(g, partition, phases)?;
    let mut clusters: Vec<usize> = (0..k.len()).collect();
    clusters.sort_by(|&a, &b| k[a].total_cmp(&k[b]));
    let r_values: Vec<f64> = clusters.iter().map(|&c| g0 + k[c]).collect();

    let exponent_at = |r: f64, cluster: usize| -> Result<f64> {
        let gr = PerturbedCoupling::new(g, bump.with_strength(r));
        let t = transverse_exponents(&gr, partition, phases)?;
        Ok(t[cluster].exponent.expect("nontrivial cluster"))
    };

    let mut located = Vec::with_capacity(r_values.len());
    for (&r, &cluster) in r_values.iter().zip(&clusters) {
        let mut width = 1.0 + r.abs();
        let (mut lo, mut hi) = (r - width, r + width);
        // exponent decreases in r: positive below the threshold
        while exponent_at(lo, cluster)? <= 0.0 || exponent_at(hi, cluster)? >= 0.0 {
            width *= 2.0;
            lo = r - width;
            hi = r + width;
            if width > 1e12 {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    residual: width,
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if exponent_at(mid, cluster)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        located.push(0.5 * (lo + hi));
    }

    let base_res = existence_residual(g, partition, phases)?;
    let base_tan = tangential_eigenvalues(g, partition, phases)?;
    let mut invariance_error = 0.0f64;
    let first = r_values.first().copied().unwrap_or(0.0);
    let last = r_values.last().copied().unwrap_or(0.0);
    for r in r_values.iter().copied().chain([first - 1.0, last + 1.0]) {
        let gr = PerturbedCoupling::new(g, bump.with_strength(r));
        let res = existence_residual(&gr, partition, phases)?;
        let tan = tangential_eigenvalues(&gr, partition, phases)?;
        for (a, b) in res.iter().zip(&base_res) {
            invariance_error = invariance_error.max((a - b).abs());
        }
        for (a, b) in tan.iter().zip(&base_tan) {
            invariance_error = invariance_error.max((a - b).norm());
        }
    }

    Ok(BifurcationThresholds {
        r_values,
        clusters,
        located,
        epsilon_used: epsilon,
        invariance_error,
    })
}

/// One row of an `r` sweep over the bump family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub r: f64,
    pub exponents: Vec<Option<f64>>,
    pub stable_clusters: usize,
    pub classification: Option<TransverseClass>,
}

/// Transverse exponents and classification of a fixed cluster state under
/// `g_r = g + r·h` for each `r`.
pub fn design_sweep<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    phases: &[f64],
    epsilon: f64,
    r_values: &[f64],
    exec: Exec,
) -> Result<Vec<DesignRow>> {
    let bump = BumpPerturbation::new(epsilon, 0.0)?;
    if let Some(sep) = min_pairwise_separation(phases) {
        if epsilon >= sep {
            return Err(Error::EpsilonTooLarge {
                epsilon,
                separation: sep,
            });
        }
    }
    par::map(exec, r_values, |&r| {
        let gr = PerturbedCoupling::new(g, bump.with_strength(r));
        let report = stability_report(&gr, partition, phases)?;
        Ok(DesignRow {
            r,
            exponents: report.transverse.iter().map(|t| t.exponent).collect(),
            stable_clusters: report.stable_clusters,
            classification: report.classification,
        })
    })
    .into_iter()
    .collect()
}

/// Jacobian of the full oscillator vector field at `θ`:
/// `J_{ij} = −(1/N) g'(θ_i − θ_j)` off the diagonal, rows summing to zero.
pub fn full_jacobian<C: Coupling + ?Sized>(g: &C, theta: &[f64]) -> Matrix {
    let n = theta.len();
    let nf = n as f64;
    let mut j = Matrix::zeros(n, n);
    for a in 0..n {
        let mut diag = 0.0;
        for b in 0..n {
            if a != b {
                let d = g.derivative(theta[a] - theta[b]) / nf;
                j[(a, b)] = -d;
                diag += d;
            }
        }
        j[(a, a)] = diag;
    }
    j
}
