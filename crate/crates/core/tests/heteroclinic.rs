use clustersync::cluster::{existence_residual, solve_phases};
use clustersync::simulator::{
    connection_graph, integrate, itinerary, itinerary_legality, longest_three_cycle, saddle_set,
    unstable_pair, ConnectionOptions, InitialCondition, ItineraryOptions, SaddleSet, SimConfig,
    Subspace,
};
use clustersync::stability::transverse_exponents;
use clustersync::{FourierCoupling, Partition, SolveOptions};

fn case1() -> (FourierCoupling, SaddleSet) {
    let g = FourierCoupling::preset("case1").unwrap();
    let p = Partition::new(vec![2, 2, 2]).unwrap();
    let ph = solve_phases(&g, &p, &[0.0, 1.70, 4.76], SolveOptions::default())
        .unwrap()
        .phase_values();
    let s = saddle_set(ph[1], ph[2]).unwrap();
    (g, s)
}

#[test]
fn every_saddle_solves_the_existence_conditions() {
    let (g, s) = case1();
    let p = Partition::new(vec![2, 2, 2]).unwrap();
    for i in 1..=6 {
        let r = existence_residual(&g, &p, &s.cluster_phases(i)).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-10), "P{i}: {r:?}");
    }
}

#[test]
fn every_saddle_has_one_unstable_pair() {
    let (g, s) = case1();
    let p = Partition::new(vec![2, 2, 2]).unwrap();
    let mut pairs = Vec::new();
    for i in 1..=6 {
        let t = transverse_exponents(&g, &p, &s.cluster_phases(i)).unwrap();
        let positive = t.iter().filter(|x| x.exponent.unwrap() > 0.0).count();
        assert_eq!(positive, 1, "P{i}");
        pairs.push(unstable_pair(&g, &s, i).unwrap());
    }
    assert_eq!(pairs, [2, 1, 0, 2, 0, 1]);
}

#[test]
fn connection_graph_is_two_three_cycles() {
    let (g, s) = case1();
    let graph = connection_graph(&g, &s, ConnectionOptions::default()).unwrap();
    let edges: Vec<(usize, Subspace, Option<usize>)> =
        graph.iter().map(|c| (c.source, c.subspace, c.target)).collect();
    assert_eq!(
        edges,
        [
            (1, Subspace::I2, Some(3)),
            (2, Subspace::I3, Some(1)),
            (3, Subspace::I1, Some(2)),
            (4, Subspace::I2, Some(6)),
            (5, Subspace::I1, Some(4)),
            (6, Subspace::I3, Some(5)),
        ]
    );
    for c in &graph {
        assert!(c.distance < 1e-10, "{c:?}");
    }
}

#[test]
fn noisy_itinerary_follows_the_connection_graph() {
    let (g, s) = case1();
    let graph = connection_graph(&g, &s, ConnectionOptions::default()).unwrap();
    let mut cfg = SimConfig::new(6, g, 3000.0);
    cfg.noise_amplitude = 1e-12;
    cfg.rng_seed = 2;
    cfg.initial = InitialCondition::Random;
    cfg.record_stride = 100;
    let traj = integrate(&cfg).unwrap();
    let events = itinerary(&traj, &s, ItineraryOptions::default()).unwrap();
    assert!(events.len() > 10, "{} events", events.len());
    let legal = itinerary_legality(&events, &graph).unwrap();
    assert!(legal > 0.95, "legality {legal}");
    let (_, reps) = longest_three_cycle(&events).unwrap();
    assert!(reps >= 3);
}
