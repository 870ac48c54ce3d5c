//! Full-Jacobian spectra checked against nalgebra's eigenvalue routine.

use std::f64::consts::TAU;

use clustersync::cluster::solve_phases;
use clustersync::linalg::spectrum_distance;
use clustersync::stability::{full_jacobian, stability_report};
use clustersync::{FourierCoupling, Partition, SolveOptions};
use num_complex::Complex64;
use proptest::prelude::*;

fn nalgebra_spectrum(theta: &[f64], g: &FourierCoupling) -> Vec<Complex64> {
    let j = full_jacobian(g, theta);
    let n = j.rows();
    let rows = j.to_rows();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    nalgebra::DMatrix::from_row_slice(n, n, &flat)
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

#[test]
fn shipped_cases_match_nalgebra() {
    let p = Partition::new(vec![2, 2, 2]).unwrap();
    for (name, guess) in [("case1", [0.0, 1.70, 4.76]), ("case2", [0.0, 1.70, 4.78])] {
        let g = FourierCoupling::preset(name).unwrap();
        let ph = solve_phases(&g, &p, &guess, SolveOptions::default())
            .unwrap()
            .phase_values();
        let predicted = stability_report(&g, &p, &ph).unwrap().predicted_full_spectrum();
        let oracle = nalgebra_spectrum(&p.lift(&ph), &g);
        let d = spectrum_distance(&predicted, &oracle).unwrap();
        assert!(d < 1e-9, "{name}: {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_matches_nalgebra(
        sizes in prop::collection::vec(1usize..4, 2..4),
        phases in prop::collection::vec(0.0..TAU, 3),
        c in prop::collection::vec(-1.0..1.0f64, 4),
        s in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let g = FourierCoupling::new(c, s).unwrap();
        let p = Partition::new(sizes).unwrap();
        let ph = &phases[..p.num_clusters()];
        let predicted = stability_report(&g, &p, ph).unwrap().predicted_full_spectrum();
        let oracle = nalgebra_spectrum(&p.lift(ph), &g);
        let d = spectrum_distance(&predicted, &oracle).unwrap();
        prop_assert!(d < 1e-6, "distance {}", d);
    }
}
