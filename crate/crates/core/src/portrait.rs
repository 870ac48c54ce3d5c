//! Fixed points of the three-cluster flow in difference coordinates
//! `(u, v) = (Ψ_1 − Ψ_3, Ψ_2 − Ψ_3)`.
//!
//! A cluster state with phases `(A, B, C)` maps to `(A − C, B − C)`; the
//! global rotation drops out, and so does `ω`.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cluster::Partition;
use crate::coupling::{wrap_phase, wrap_signed, Coupling, Phase};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, solve_linear_with_scale, Matrix};
use crate::par::{self, Exec};

pub const DEFAULT_GRID_DENSITY: usize = 32;
pub const HYPERBOLICITY_MARGIN: f64 = 1e-8;
pub const MERGE_TOL: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointKind {
    Source,
    Saddle,
    Sink,
    NonHyperbolic,
}

impl FixedPointKind {
    pub fn classify(ev: &[Complex64; 2]) -> Self {
        if ev.iter().any(|z| z.re.abs() < HYPERBOLICITY_MARGIN) {
            return FixedPointKind::NonHyperbolic;
        }
        match ev.iter().filter(|z| z.re < 0.0).count() {
            2 => FixedPointKind::Sink,
            1 => FixedPointKind::Saddle,
            _ => FixedPointKind::Source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedFixedPoint {
    pub u: Phase,
    pub v: Phase,
    pub kind: FixedPointKind,
    pub jacobian_eigenvalues: [Complex64; 2],
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

/// Cluster phases `(A, B, C)` to difference coordinates.
pub fn to_difference(phases: [f64; 3]) -> (f64, f64) {
    (wrap_phase(phases[0] - phases[2]), wrap_phase(phases[1] - phases[2]))
}

/// `(F_1 − F_3, F_2 − F_3)` at `Ψ = (u, v, 0)`.
pub fn difference_field<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    u: f64,
    v: f64,
) -> Result<(f64, f64)> {
    let m = three_sizes(partition)?;
    Ok(field(g, m, u, v))
}

fn field<C: Coupling + ?Sized>(g: &C, m: [f64; 3], u: f64, v: f64) -> (f64, f64) {
    let n = m[0] + m[1] + m[2];
    let psi = [u, v, 0.0];
    let f = |k: usize| -> f64 { (0..3).map(|l| m[l] * g.value(psi[k] - psi[l])).sum::<f64>() / n };
    let f3 = f(2);
    (f(0) - f3, f(1) - f3)
}

/// Analytic Jacobian of [`difference_field`] with respect to `(u, v)`.
pub fn difference_jacobian<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    u: f64,
    v: f64,
) -> Result<[[f64; 2]; 2]> {
    let m = three_sizes(partition)?;
    Ok(jacobian(g, m, u, v))
}

fn jacobian<C: Coupling + ?Sized>(g: &C, m: [f64; 3], u: f64, v: f64) -> [[f64; 2]; 2] {
    let n = m[0] + m[1] + m[2];
    let psi = [u, v, 0.0];
    let mut gp = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            gp[k][l] = g.derivative(psi[k] - psi[l]);
        }
    }
    // ∂F_k/∂Ψ_j
    let d = |k: usize, j: usize| -> f64 {
        let diag = if k == j {
            (0..3).map(|l| m[l] * gp[k][l]).sum::<f64>()
        } else {
            0.0
        };
        (diag - m[j] * gp[k][j]) / n
    };
    [
        [d(0, 0) - d(2, 0), d(0, 1) - d(2, 1)],
        [d(1, 0) - d(2, 0), d(1, 1) - d(2, 1)],
    ]
}

fn jacobian_eigenvalues(j: [[f64; 2]; 2]) -> [Complex64; 2] {
    let mat = Matrix::from_fn(2, 2, |r, c| j[r][c]);
    match eigenvalues(&mat) {
        Ok(ev) if ev.len() == 2 => [ev[0], ev[1]],
        _ => [Complex64::new(f64::NAN, 0.0); 2],
    }
}

fn newton<C: Coupling + ?Sized>(g: &C, m: [f64; 3], u0: f64, v0: f64) -> Option<(f64, f64)> {
    let (mut u, mut v) = (u0, v0);
    let (mut fu, mut fv) = field(g, m, u, v);
    let mut norm = fu.abs().max(fv.abs());
    let scale = (0..=16)
        .map(|k| g.derivative(k as f64 * TAU / 16.0).abs())
        .fold(0.0, f64::max);
    for _ in 0..NEWTON_MAX_ITER {
        if norm < NEWTON_TOL {
            return Some((wrap_phase(u), wrap_phase(v)));
        }
        let j = jacobian(g, m, u, v);
        let mat = Matrix::from_fn(2, 2, |r, c| j[r][c]);
        let step = solve_linear_with_scale(&mat, &[-fu, -fv], scale)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let (nu, nv) = (u + t * step[0], v + t * step[1]);
            let (gu, gv) = field(g, m, nu, nv);
            let n2 = gu.abs().max(gv.abs());
            if n2 < norm {
                accepted = Some((nu, nv, gu, gv, n2));
                break;
            }
            t *= 0.5;
        }
        let (nu, nv, gu, gv, n2) = accepted?;
        (u, v, fu, fv, norm) = (nu, nv, gu, gv, n2);
    }
    (norm < NEWTON_TOL).then(|| (wrap_phase(u), wrap_phase(v)))
}

fn wrapped_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    wrap_signed(a.0 - b.0).abs().max(wrap_signed(a.1 - b.1).abs())
}

/// Newton refinement from a `grid_density × grid_density` grid of seeds over
/// `[0, 2π)²`. Converged points closer than [`MERGE_TOL`] are merged; the
/// result is sorted by `(u, v)`.
pub fn find_fixed_points<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    grid_density: usize,
    exec: Exec,
) -> Result<Vec<ReducedFixedPoint>> {
    let m = three_sizes(partition)?;
    if grid_density < 8 {
        return Err(Error::OutOfRange(format!("grid density {grid_density} below 8")));
    }
    let h = TAU / grid_density as f64;
    let seeds = par::map_range(exec, grid_density * grid_density, |i| {
        let (a, b) = (i / grid_density, i % grid_density);
        newton(g, m, a as f64 * h, b as f64 * h)
    });

    let mut found: Vec<(f64, f64)> = Vec::new();
    for p in seeds.into_iter().flatten() {
        if !found.iter().any(|q| wrapped_distance(p, *q) < MERGE_TOL) {
            found.push(p);
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(found
        .into_iter()
        .map(|(u, v)| {
            let ev = jacobian_eigenvalues(jacobian(g, m, u, v));
            ReducedFixedPoint {
                u: Phase::new(u),
                v: Phase::new(v),
                kind: FixedPointKind::classify(&ev),
                jacobian_eigenvalues: ev,
            }
        })
        .collect())
}

/// Index of the fixed point within [`MERGE_TOL`] of `(u, v)`.
pub fn locate(points: &[ReducedFixedPoint], u: f64, v: f64) -> Option<usize> {
    points
        .iter()
        .position(|p| wrapped_distance((p.u.value(), p.v.value()), (u, v)) < MERGE_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portrait {
    pub resolution: usize,
    pub samples: Vec<FieldSample>,
    pub fixed_points: Vec<ReducedFixedPoint>,
}

/// Field samples on a `resolution × resolution` grid (row-major in `u`)
/// plus the fixed points from a `grid_density` Newton search.
pub fn export_portrait<C: Coupling + ?Sized>(
    g: &C,
    partition: &Partition,
    resolution: usize,
    grid_density: usize,
    exec: Exec,
) -> Result<Portrait> {
    let m = three_sizes(partition)?;
    if resolution < 16 {
        return Err(Error::OutOfRange(format!("resolution {resolution} below 16")));
    }
    let h = TAU / resolution as f64;
    let samples = par::map_range(exec, resolution * resolution, |i| {
        let (u, v) = ((i / resolution) as f64 * h, (i % resolution) as f64 * h);
        let (du, dv) = field(g, m, u, v);
        FieldSample { u, v, du, dv }
    });
    Ok(Portrait {
        resolution,
        samples,
        fixed_points: find_fixed_points(g, partition, grid_density, exec)?,
    })
}

pub fn write_field_csv<W: Write>(portrait: &Portrait, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["u", "v", "du", "dv"])?;
    for s in &portrait.samples {
        w.serialize((s.u, s.v, s.du, s.dv))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fixed_points_json<W: Write>(points: &[ReducedFixedPoint], out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{reduced_vector_field, solve_phases, SolveOptions};
    use crate::coupling::FourierCoupling;
    use crate::simulator::saddle_set;
    use crate::stability::tangential_eigenvalues;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn p222() -> Partition {
        Partition::new(vec![2, 2, 2]).unwrap()
    }

    fn case1() -> (FourierCoupling, Vec<f64>) {
        let g = FourierCoupling::preset("case1").unwrap();
        let s = solve_phases(&g, &p222(), &[0.0, 1.70, 4.76], SolveOptions::default()).unwrap();
        (g, s.phase_values())
    }

    #[test]
    fn simple_zeros() {
        let g0 = FourierCoupling::preset("case0").unwrap();
        let (u, v) = to_difference([0.0, FRAC_PI_2, PI]);
        assert!((wrap_signed(u + PI)).abs() < 1e-15 && (wrap_signed(v + FRAC_PI_2)).abs() < 1e-15);
        let (du, dv) = difference_field(&g0, &p222(), u, v).unwrap();
        assert!(du.abs() < 1e-14 && dv.abs() < 1e-14);
        let g1 = case1().0;
        assert_eq!(difference_field(&g1, &p222(), 0.0, 0.0).unwrap(), (0.0, 0.0));
        assert!(difference_field(&g1, &Partition::new(vec![3, 3]).unwrap(), 0.0, 0.0).is_err());
    }

    #[test]
    fn omega_cancels_and_matches_cluster_field() {
        let (g, _) = case1();
        for (u, v) in [(0.3, 2.0), (4.0, 1.1)] {
            let f = reduced_vector_field(&g, &p222(), &[u, v, 0.0], 3.7).unwrap();
            let (du, dv) = difference_field(&g, &p222(), u, v).unwrap();
            assert!((du - (f[0] - f[2])).abs() < 1e-14);
            assert!((dv - (f[1] - f[2])).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (g, _) = case1();
        let p = Partition::new(vec![1, 2, 3]).unwrap();
        let (u, v) = (1.3, 4.4);
        let j = difference_jacobian(&g, &p, u, v).unwrap();
        let h = 1e-6;
        let fd = |du: f64, dv: f64| difference_field(&g, &p, u + du, v + dv).unwrap();
        let (a, b) = (fd(h, 0.0), fd(-h, 0.0));
        let (c, d) = (fd(0.0, h), fd(0.0, -h));
        let num = [
            [(a.0 - b.0) / (2.0 * h), (c.0 - d.0) / (2.0 * h)],
            [(a.1 - b.1) / (2.0 * h), (c.1 - d.1) / (2.0 * h)],
        ];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[r][c] - num[r][c]).abs() < 1e-8, "{j:?} vs {num:?}");
            }
        }
    }

    #[test]
    fn case1_saddles_are_sinks_with_tangential_spectrum() {
        let (g, ph) = case1();
        let pts = find_fixed_points(&g, &p222(), DEFAULT_GRID_DENSITY, Exec::Sequential).unwrap();
        let saddles = saddle_set(ph[1], ph[2]).unwrap();
        let tan = tangential_eigenvalues(&g, &p222(), &ph).unwrap();
        for i in 1..=6 {
            let (u, v) = to_difference(saddles.cluster_phases(i));
            let k = locate(&pts, u, v).unwrap_or_else(|| panic!("P{i} not found"));
            assert_eq!(pts[k].kind, FixedPointKind::Sink);
            let mut got: Vec<f64> = pts[k].jacobian_eigenvalues.iter().map(|z| z.re).collect();
            got.sort_by(f64::total_cmp);
            assert!((got[0] - tan[0].re).abs() < 1e-8 && (got[1] - tan[1].re).abs() < 1e-8);
        }
        for kind in [FixedPointKind::Source, FixedPointKind::Saddle] {
            assert!(pts.iter().any(|p| p.kind == kind), "no {kind:?}");
        }
        for p in &pts {
            let (du, dv) = difference_field(&g, &p222(), p.u.value(), p.v.value()).unwrap();
            assert!(du.abs().max(dv.abs()) < 1e-10);
        }
        assert!(pts.windows(2).all(|w| (w[0].u.value(), w[0].v.value()) < (w[1].u.value(), w[1].v.value())));
    }

    #[test]
    fn fixed_point_set_is_symmetric() {
        let (g, _) = case1();
        let pts = find_fixed_points(&g, &p222(), 24, Exec::Parallel).unwrap();
        let maps: [fn(f64, f64) -> (f64, f64); 3] = [|u, v| (v, u), |u, v| (-u, v - u), |u, v| (u - v, -v)];
        for p in &pts {
            for f in maps {
                let (a, b) = f(p.u.value(), p.v.value());
                let k = locate(&pts, wrap_phase(a), wrap_phase(b)).expect("image is a fixed point");
                assert_eq!(pts[k].kind, p.kind);
            }
        }
    }

    #[test]
    fn zero_coupling_is_degenerate() {
        let g = FourierCoupling::zero(2);
        let pts = find_fixed_points(&g, &p222(), 8, Exec::Sequential).unwrap();
        assert_eq!(pts.len(), 64);
        assert!(pts.iter().all(|p| p.kind == FixedPointKind::NonHyperbolic));
        assert!(find_fixed_points(&g, &p222(), 4, Exec::Sequential).is_err());
    }

    #[test]
    fn export_grid_and_periodicity() {
        let (g, _) = case1();
        let port = export_portrait(&g, &p222(), 64, 16, Exec::Parallel).unwrap();
        assert_eq!(port.samples.len(), 4096);
        let direct = find_fixed_points(&g, &p222(), 16, Exec::Sequential).unwrap();
        assert_eq!(port.fixed_points.len(), direct.len());
        for (a, b) in port.fixed_points.iter().zip(&direct) {
            assert!(wrapped_distance((a.u.value(), a.v.value()), (b.u.value(), b.v.value())) < 1e-9);
        }
        for s in port.samples.iter().step_by(97) {
            let (du, dv) = difference_field(&g, &p222(), s.u + TAU, s.v - TAU).unwrap();
            assert!((du - s.du).abs() < 1e-12 && (dv - s.dv).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        write_field_csv(&port, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4097);
        assert!(text.starts_with("u,v,du,dv\n"));
        let mut buf = Vec::new();
        write_fixed_points_json(&port.fixed_points, &mut buf).unwrap();
        let back: Vec<ReducedFixedPoint> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back.len(), port.fixed_points.len());
        for (a, b) in back.iter().zip(&port.fixed_points) {
            assert_eq!(a.kind, b.kind);
            assert!((a.u.value() - b.u.value()).abs() < 1e-15);
        }
        assert!(export_portrait(&g, &p222(), 8, 16, Exec::Sequential).is_err());
    }
}
