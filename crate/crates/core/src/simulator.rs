//! Time integration of the full oscillator network and analysis of the
//! resulting trajectories: observables, clustering detection, the six
//! (2,2,2) saddles and heteroclinic itineraries between them.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cluster::{is_phase_nondegenerate, Partition};
use crate::coupling::{circle_distance, wrap_phase, wrap_signed, Coupling, FourierCoupling, Phase};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::stability::transverse_exponents;

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_NOISY_DT: f64 = 0.001;
pub const DEFAULT_ENTER_TOL: f64 = 0.05;
pub const DEFAULT_MIN_DWELL: f64 = 5.0;

/// Initial phases: explicit, or uniform on `[0, 2π)^N` from the run seed.
///
/// In JSON this is either the string `"random"` or an array of phases.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawInitial", into = "RawInitial")]
pub enum InitialCondition {
    #[default]
    Random,
    Phases(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Name(String),
    Phases(Vec<f64>),
}

impl TryFrom<RawInitial> for InitialCondition {
    type Error = String;
    fn try_from(raw: RawInitial) -> std::result::Result<Self, String> {
        match raw {
            RawInitial::Name(s) if s == "random" => Ok(InitialCondition::Random),
            RawInitial::Name(s) => Err(format!("unknown initial condition {s:?}")),
            RawInitial::Phases(p) => Ok(InitialCondition::Phases(p)),
        }
    }
}

impl From<InitialCondition> for RawInitial {
    fn from(ic: InitialCondition) -> Self {
        match ic {
            InitialCondition::Random => RawInitial::Name("random".into()),
            InitialCondition::Phases(p) => RawInitial::Phases(p),
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub g: FourierCoupling,
    #[serde(default)]
    pub omega: f64,
    /// Defaults to [`DEFAULT_DT`] without noise and [`DEFAULT_NOISY_DT`] with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(n: usize, g: FourierCoupling, t_end: f64) -> Self {
        SimConfig {
            n,
            g,
            omega: 0.0,
            dt: None,
            t_end,
            noise_amplitude: 0.0,
            rng_seed: 0,
            initial: InitialCondition::Random,
            record_stride: 1,
        }
    }

    pub fn effective_dt(&self) -> f64 {
        self.dt.unwrap_or(if self.noise_amplitude > 0.0 {
            DEFAULT_NOISY_DT
        } else {
            DEFAULT_DT
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        let dt = self.effective_dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return bad(format!("dt must be positive, got {dt}"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad(format!("noise_amplitude must be >= 0, got {}", self.noise_amplitude));
        }
        if !self.omega.is_finite() {
            return bad("omega must be finite".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if let InitialCondition::Phases(p) = &self.initial {
            if p.len() != self.n {
                return bad(format!("initial has {} phases, N = {}", p.len(), self.n));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return bad("initial phases must be finite".into());
            }
        }
        Ok(())
    }

    /// Number of fixed steps covering `[0, t_end]`.
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.effective_dt()).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Each state wrapped to `[0, 2π)`.
    pub states: Vec<Vec<f64>>,
    pub config: SimConfig,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `dθ_i/dt = ω + (1/N) Σ_j g(θ_i − θ_j)`.
///
/// Each component is summed over `j` in the same order, so oscillators with
/// identical phases get bitwise identical velocities.
pub fn vector_field<C: Coupling + ?Sized>(g: &C, omega: f64, theta: &[f64], out: &mut [f64]) {
    let inv = 1.0 / theta.len() as f64;
    for (o, &ti) in out.iter_mut().zip(theta) {
        let mut s = 0.0;
        for &tj in theta {
            s += g.value(ti - tj);
        }
        *o = omega + s * inv;
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<C: Coupling + ?Sized>(&mut self, g: &C, omega: f64, dt: f64, theta: &mut [f64]) {
        let h = 0.5 * dt;
        vector_field(g, omega, theta, &mut self.k1);
        for i in 0..theta.len() {
            self.tmp[i] = theta[i] + h * self.k1[i];
        }
        vector_field(g, omega, &self.tmp, &mut self.k2);
        for i in 0..theta.len() {
            self.tmp[i] = theta[i] + h * self.k2[i];
        }
        vector_field(g, omega, &self.tmp, &mut self.k3);
        for i in 0..theta.len() {
            self.tmp[i] = theta[i] + dt * self.k3[i];
        }
        vector_field(g, omega, &self.tmp, &mut self.k4);
        for i in 0..theta.len() {
            let inc = self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i];
            theta[i] = wrap_phase(theta[i] + dt / 6.0 * inc);
        }
    }
}

fn check_finite(theta: &[f64], step: usize, dt: f64) -> Result<()> {
    if theta.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState {
            step,
            time: step as f64 * dt,
        })
    }
}

/// Integrates with fixed-step RK4 when `noise_amplitude` is zero, otherwise
/// Euler–Maruyama with increments `noise_amplitude · √dt · ξ`, `ξ ~ N(0, 1)`.
///
/// All randomness (random initial phases, then the noise stream) comes from a
/// ChaCha8 generator seeded with `rng_seed`.
pub fn integrate(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = config.n;
    let dt = config.effective_dt();
    let steps = config.num_steps();
    let g = &config.g;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut theta: Vec<f64> = match &config.initial {
        InitialCondition::Random => (0..n).map(|_| rng.random_range(0.0..TAU)).collect(),
        InitialCondition::Phases(p) => p.iter().map(|&x| wrap_phase(x)).collect(),
    };

    let stride = config.record_stride;
    let capacity = steps / stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(theta.clone());

    let noisy = config.noise_amplitude > 0.0;
    let sigma = config.noise_amplitude * dt.sqrt();
    let mut rk = Rk4::new(n);
    let mut f = vec![0.0; n];
    for step in 1..=steps {
        if noisy {
            vector_field(g, config.omega, &theta, &mut f);
            for (t, fi) in theta.iter_mut().zip(&f) {
                let xi: f64 = rng.sample(StandardNormal);
                *t = wrap_phase(*t + dt * fi + sigma * xi);
            }
        } else {
            rk.step(g, config.omega, dt, &mut theta);
        }
        check_finite(&theta, step, dt)?;
        if step % stride == 0 || step == steps {
            times.push(step as f64 * dt);
            states.push(theta.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        config: config.clone(),
    })
}

/// Runs independent configurations, each sequential and deterministic.
pub fn integrate_many(configs: &[SimConfig], exec: Exec) -> Vec<Result<Trajectory>> {
    par::map(exec, configs, integrate)
}

/// `Y_k(t) = sin(θ_k(t) − θ_ref(t))` for every oscillator; `reference` is a
/// zero-based index.
pub fn observables(traj: &Trajectory, reference: usize) -> Result<Vec<Vec<f64>>> {
    let n = traj.config.n;
    if reference >= n {
        return Err(Error::OutOfRange(format!(
            "reference oscillator {reference} with N = {n}"
        )));
    }
    Ok(traj
        .states
        .iter()
        .map(|s| s.iter().map(|&t| (t - s[reference]).sin()).collect())
        .collect())
}

/// Partition (sizes descending) and the cluster index of every oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub partition: Partition,
    pub assignment: Vec<usize>,
}

impl Clustering {
    /// Oscillator indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.partition.num_clusters()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Single-linkage grouping under `1 − cos(θ_i − θ_j) < tol`. Clusters are
/// numbered by decreasing size, ties broken by smallest member.
pub fn detect_clustering(theta: &[f64], tol: f64) -> Result<Clustering> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange(format!("clustering tolerance {tol}")));
    }
    let n = theta.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if circle_distance(theta[i], theta[j]) < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_group = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_group[r] == usize::MAX {
            root_group[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_group[r]].push(i);
    }
    // groups are already ordered by smallest member; a stable sort keeps that
    // as the tie-break
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    let mut assignment = vec![0; n];
    for (c, g) in groups.iter().enumerate() {
        for &i in g {
            assignment[i] = c;
        }
    }
    Ok(Clustering {
        partition: Partition::new(groups.iter().map(Vec::len).collect())?,
        assignment,
    })
}

/// The six (2,2,2) states `P_1 … P_6` built from the cluster phases
/// `(0, α, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSet {
    pub alpha: Phase,
    pub beta: Phase,
    pub points: [[f64; 6]; 6],
}

/// Tolerance on `1 − cos` used to reject phase-degenerate `(α, β)`.
const DEGENERACY_TOL: f64 = 1e-9;

pub fn saddle_set(alpha: f64, beta: f64) -> Result<SaddleSet> {
    if !(0.0 < alpha && alpha < beta && beta < TAU) {
        return Err(Error::DegenerateSaddles(format!(
            "need 0 < alpha < beta < 2pi, got ({alpha}, {beta})"
        )));
    }
    if !is_phase_nondegenerate(&[0.0, alpha, beta], DEGENERACY_TOL) {
        return Err(Error::DegenerateSaddles(format!(
            "(0, {alpha}, {beta}) is phase degenerate"
        )));
    }
    let (a, b) = (alpha, beta);
    let triples = [
        [0.0, a, b],
        [0.0, b - a, TAU - a],
        [0.0, TAU - b, TAU + a - b],
        [0.0, TAU - a, b - a],
        [0.0, TAU + a - b, TAU - b],
        [0.0, b, a],
    ];
    let mut points = [[0.0; 6]; 6];
    for (p, t) in points.iter_mut().zip(triples) {
        for k in 0..3 {
            let v = wrap_phase(t[k]);
            p[2 * k] = v;
            p[2 * k + 1] = v;
        }
    }
    Ok(SaddleSet {
        alpha: Phase::new(alpha),
        beta: Phase::new(beta),
        points,
    })
}

impl SaddleSet {
    /// Cluster phases `(P[0], P[2], P[4])` of saddle `index` (1-based).
    pub fn cluster_phases(&self, index: usize) -> [f64; 3] {
        let p = &self.points[index - 1];
        [p[0], p[2], p[4]]
    }
}

/// Euclidean distance between `theta` and `point` on the torus after removing
/// the best global rotation. Returns `(distance, rotation)`.
pub fn rotation_min_distance(theta: &[f64], point: &[f64]) -> (f64, f64) {
    let n = theta.len() as f64;
    let d: Vec<f64> = theta.iter().zip(point).map(|(a, b)| wrap_signed(a - b)).collect();
    let (s, c) = d
        .iter()
        .fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
    let shift = s.atan2(c);
    let e: Vec<f64> = d.iter().map(|x| wrap_signed(x - shift)).collect();
    let mean = e.iter().sum::<f64>() / n;
    let dist = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt();
    (dist, wrap_phase(shift + mean))
}

/// Rotation-minimized distance, also minimized over the eight swaps within
/// the pairs (1,2), (3,4), (5,6).
fn pair_swap_min_distance(theta: &[f64], point: &[f64; 6]) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let mut swapped = [0.0; 6];
    for mask in 0..8u8 {
        for k in 0..3 {
            let (a, b) = (theta[2 * k], theta[2 * k + 1]);
            let flip = mask & (1 << k) != 0;
            swapped[2 * k] = if flip { b } else { a };
            swapped[2 * k + 1] = if flip { a } else { b };
        }
        let cand = rotation_min_distance(&swapped, point);
        if cand.0 < best.0 {
            best = cand;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItineraryEvent {
    /// 1 to 6.
    pub saddle_index: usize,
    pub t_enter: f64,
    pub t_exit: f64,
    pub alignment: Phase,
    pub min_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItineraryOptions {
    pub enter_tol: f64,
    pub min_dwell: f64,
    /// Relabel oscillators so the most frequent (2,2,2) pairing becomes
    /// (1,2), (3,4), (5,6) before matching.
    pub align_pairing: bool,
}

impl Default for ItineraryOptions {
    fn default() -> Self {
        ItineraryOptions {
            enter_tol: DEFAULT_ENTER_TOL,
            min_dwell: DEFAULT_MIN_DWELL,
            align_pairing: true,
        }
    }
}

/// The (2,2,2) pairing seen most often along the trajectory, as an oscillator
/// order `[a1, b1, a2, b2, a3, b3]` with pairs sorted by smallest member.
/// `None` when no recorded state is (2,2,2)-clustered within `phase_tol`.
pub fn dominant_pairing(traj: &Trajectory, phase_tol: f64) -> Option<[usize; 6]> {
    if traj.config.n != 6 {
        return None;
    }
    let tol = 1.0 - phase_tol.cos();
    let mut counts: std::collections::BTreeMap<[usize; 6], usize> = Default::default();
    for s in &traj.states {
        let Ok(c) = detect_clustering(s, tol) else { continue };
        if c.partition.sizes() != [2, 2, 2] {
            continue;
        }
        let mut pairs = c.members();
        pairs.sort();
        let key = [pairs[0][0], pairs[0][1], pairs[1][0], pairs[1][1], pairs[2][0], pairs[2][1]];
        *counts.entry(key).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
}

fn relabel(state: &[f64], order: &[usize; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (o, &i) in out.iter_mut().zip(order) {
        *o = state[i];
    }
    out
}

/// Visits to the saddles, in time order.
///
/// An event opens when the distance to some `P_i` drops below `enter_tol`
/// and closes once it exceeds `2·enter_tol`. Events shorter than `min_dwell`
/// are dropped and consecutive visits to the same saddle are merged.
pub fn itinerary(
    traj: &Trajectory,
    saddles: &SaddleSet,
    opts: ItineraryOptions,
) -> Result<Vec<ItineraryEvent>> {
    if traj.config.n != 6 {
        return Err(Error::LengthMismatch {
            expected: 6,
            actual: traj.config.n,
        });
    }
    if !(opts.enter_tol > 0.0 && opts.min_dwell >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "itinerary tolerances enter_tol={} min_dwell={}",
            opts.enter_tol, opts.min_dwell
        )));
    }
    let order = if opts.align_pairing {
        dominant_pairing(traj, opts.enter_tol).unwrap_or([0, 1, 2, 3, 4, 5])
    } else {
        [0, 1, 2, 3, 4, 5]
    };

    let mut raw: Vec<ItineraryEvent> = Vec::new();
    let mut open: Option<ItineraryEvent> = None;
    for (&t, s) in traj.times.iter().zip(&traj.states) {
        let theta = relabel(s, &order);
        match open.as_mut() {
            Some(ev) => {
                let (d, c) = pair_swap_min_distance(&theta, &saddles.points[ev.saddle_index - 1]);
                if d < ev.min_distance {
                    ev.min_distance = d;
                    ev.alignment = Phase::new(c);
                }
                if d > 2.0 * opts.enter_tol {
                    ev.t_exit = t;
                    raw.push(*ev);
                    open = None;
                }
            }
            None => {
                let (i, (d, c)) = saddles
                    .points
                    .iter()
                    .map(|p| pair_swap_min_distance(&theta, p))
                    .enumerate()
                    .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                    .expect("six saddles");
                if d < opts.enter_tol {
                    open = Some(ItineraryEvent {
                        saddle_index: i + 1,
                        t_enter: t,
                        t_exit: t,
                        alignment: Phase::new(c),
                        min_distance: d,
                    });
                }
            }
        }
    }
    if let Some(mut ev) = open {
        ev.t_exit = traj.times.last().copied().unwrap_or(ev.t_enter);
        if ev.t_exit > ev.t_enter {
            raw.push(ev);
        }
    }

    let mut events: Vec<ItineraryEvent> = Vec::new();
    for ev in raw.into_iter().filter(|e| e.t_exit - e.t_enter >= opts.min_dwell) {
        match events.last_mut() {
            Some(prev) if prev.saddle_index == ev.saddle_index => {
                prev.t_exit = ev.t_exit;
                if ev.min_distance < prev.min_distance {
                    prev.min_distance = ev.min_distance;
                    prev.alignment = ev.alignment;
                }
            }
            _ => events.push(ev),
        }
    }
    Ok(events)
}

/// The 90 ways to lay six oscillators onto the pair slots of a (2,2,2) state:
/// 15 pairings times 6 orderings of the pairs.
fn pair_layouts() -> Vec<[usize; 6]> {
    let mut pairings: Vec<[[usize; 2]; 3]> = Vec::new();
    for b in 1..6 {
        let rest: Vec<usize> = (1..6).filter(|&x| x != b).collect();
        for j in 1..4 {
            let r: Vec<usize> = rest[1..].iter().copied().filter(|&x| x != rest[j]).collect();
            pairings.push([[0, b], [rest[0], rest[j]], [r[0], r[1]]]);
        }
    }
    const ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(90);
    for p in &pairings {
        for o in ORDERS {
            out.push([p[o[0]][0], p[o[0]][1], p[o[1]][0], p[o[1]][1], p[o[2]][0], p[o[2]][1]]);
        }
    }
    out
}

/// A label-free visit to the saddle set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleVisit {
    pub t_enter: f64,
    pub t_exit: f64,
    pub min_distance: f64,
}

/// Visits to the neighbourhood of the whole saddle orbit, with distance
/// minimized over every oscillator permutation. Uses the same open/close and
/// dwell rules as [`itinerary`] but does not track which saddle is visited,
/// so runs whose pairing changes over time are counted correctly.
pub fn saddle_visits(
    traj: &Trajectory,
    saddles: &SaddleSet,
    opts: ItineraryOptions,
) -> Result<Vec<SaddleVisit>> {
    if traj.config.n != 6 {
        return Err(Error::LengthMismatch {
            expected: 6,
            actual: traj.config.n,
        });
    }
    let layouts = pair_layouts();
    let p1 = &saddles.points[0];
    let dist = |s: &[f64]| {
        layouts
            .iter()
            .map(|l| rotation_min_distance(&relabel(s, l), p1).0)
            .fold(f64::INFINITY, f64::min)
    };
    let mut visits = Vec::new();
    let mut open: Option<SaddleVisit> = None;
    for (&t, s) in traj.times.iter().zip(&traj.states) {
        let d = dist(s);
        match open.as_mut() {
            Some(v) => {
                v.min_distance = v.min_distance.min(d);
                if d > 2.0 * opts.enter_tol {
                    v.t_exit = t;
                    visits.push(*v);
                    open = None;
                }
            }
            None if d < opts.enter_tol => {
                open = Some(SaddleVisit {
                    t_enter: t,
                    t_exit: t,
                    min_distance: d,
                })
            }
            None => {}
        }
    }
    if let Some(mut v) = open {
        v.t_exit = traj.times.last().copied().unwrap_or(v.t_enter);
        visits.push(v);
    }
    visits.retain(|v| v.t_exit - v.t_enter >= opts.min_dwell);
    Ok(visits)
}

/// Number of returns to the saddle set: visits after the first.
pub fn saddle_returns(traj: &Trajectory, saddles: &SaddleSet, opts: ItineraryOptions) -> Result<usize> {
    Ok(saddle_visits(traj, saddles, opts)?.len().saturating_sub(1))
}

/// Longest run of back-to-back repetitions of one 3-cycle over distinct
/// saddle indices drawn entirely from {1,2,3} or from {4,5,6}. Returns the
/// cycle and the number of full repetitions.
pub fn longest_three_cycle(events: &[ItineraryEvent]) -> Option<([usize; 3], usize)> {
    let idx: Vec<usize> = events.iter().map(|e| e.saddle_index).collect();
    let mut best: Option<([usize; 3], usize)> = None;
    for start in 0..idx.len().saturating_sub(2) {
        let c = [idx[start], idx[start + 1], idx[start + 2]];
        let distinct = c[0] != c[1] && c[1] != c[2] && c[0] != c[2];
        let same_half = c.iter().all(|&i| i <= 3) || c.iter().all(|&i| i >= 4);
        if !(distinct && same_half) {
            continue;
        }
        let mut len = 3;
        while start + len < idx.len() && idx[start + len] == c[len % 3] {
            len += 1;
        }
        let reps = len / 3;
        if best.is_none_or(|b| reps > b.1) {
            best = Some((c, reps));
        }
    }
    best
}

/// The three invariant subspaces of `I_0` that free exactly one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subspace {
    /// Pair (1,2) may split.
    I1,
    /// Pair (5,6) may split.
    I2,
    /// Pair (3,4) may split.
    I3,
}

impl Subspace {
    pub const ALL: [Subspace; 3] = [Subspace::I1, Subspace::I2, Subspace::I3];

    /// Zero-based index of the pair that is free to split.
    pub fn split_pair(self) -> usize {
        match self {
            Subspace::I1 => 0,
            Subspace::I2 => 2,
            Subspace::I3 => 1,
        }
    }

    pub fn splitting(pair: usize) -> Option<Subspace> {
        Subspace::ALL.into_iter().find(|s| s.split_pair() == pair)
    }

    /// Largest `|θ_a − θ_b|` over the pairs that must stay equal.
    pub fn drift(self, theta: &[f64]) -> f64 {
        (0..3)
            .filter(|&k| k != self.split_pair())
            .map(|k| wrap_signed(theta[2 * k] - theta[2 * k + 1]).abs())
            .fold(0.0, f64::max)
    }

    fn project(self, theta: &mut [f64]) {
        for k in (0..3).filter(|&k| k != self.split_pair()) {
            let half = 0.5 * wrap_signed(theta[2 * k + 1] - theta[2 * k]);
            let mid = wrap_phase(theta[2 * k] + half);
            theta[2 * k] = mid;
            theta[2 * k + 1] = mid;
        }
    }
}

impl std::fmt::Display for Subspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Subspace::I1 => "I1",
            Subspace::I2 => "I2",
            Subspace::I3 => "I3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionOptions {
    pub kick: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Distance below which the target counts as reached.
    pub reach_tol: f64,
    /// Drift off the subspace above which a step is projected back.
    pub drift_tol: f64,
}

impl Default for ConnectionOptions {
    fn default() -> Self {
        ConnectionOptions {
            kick: 1e-6,
            dt: DEFAULT_DT,
            t_max: 1000.0,
            reach_tol: 1e-6,
            drift_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionResult {
    pub reached: bool,
    pub final_distance: f64,
    pub time: f64,
    pub max_drift: f64,
    /// Saddle (1-based) nearest to the final state.
    pub nearest: usize,
    pub nearest_distance: f64,
}

/// The pair whose transverse exponent is positive at saddle `index`, if it is
/// the only one.
pub fn unstable_pair<C: Coupling + ?Sized>(g: &C, saddles: &SaddleSet, index: usize) -> Result<usize> {
    let p = Partition::new(vec![2, 2, 2])?;
    let t = transverse_exponents(g, &p, &saddles.cluster_phases(index))?;
    let positive: Vec<usize> = t
        .iter()
        .filter(|x| x.exponent.is_some_and(|e| e > 0.0))
        .map(|x| x.cluster)
        .collect();
    match positive.as_slice() {
        &[k] => Ok(k),
        other => Err(Error::WrongStabilitySignature(format!(
            "P{index} has {} positive transverse exponents",
            other.len()
        ))),
    }
}

fn check_saddle_index(index: usize) -> Result<()> {
    if (1..=6).contains(&index) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("saddle index {index}")))
    }
}

/// Kicks saddle `source` along its unstable transverse direction inside
/// `subspace` and integrates without noise until the state comes within
/// `reach_tol` of `target` or `t_max` elapses.
pub fn connection_check<C: Coupling + ?Sized>(
    g: &C,
    saddles: &SaddleSet,
    source: usize,
    subspace: Subspace,
    target: usize,
    opts: ConnectionOptions,
) -> Result<ConnectionResult> {
    check_saddle_index(source)?;
    check_saddle_index(target)?;
    let pair = unstable_pair(g, saddles, source)?;
    if pair != subspace.split_pair() {
        return Err(Error::WrongStabilitySignature(format!(
            "P{source} is unstable in pair {} but {subspace} splits pair {}",
            pair + 1,
            subspace.split_pair() + 1
        )));
    }
    let mut theta = saddles.points[source - 1].to_vec();
    theta[2 * pair] = wrap_phase(theta[2 * pair] + opts.kick * FRAC_1_SQRT_2);
    theta[2 * pair + 1] = wrap_phase(theta[2 * pair + 1] - opts.kick * FRAC_1_SQRT_2);

    let target_point = &saddles.points[target - 1];
    let steps = (opts.t_max / opts.dt).round() as usize;
    let mut rk = Rk4::new(6);
    let mut max_drift = 0.0f64;
    let mut distance = rotation_min_distance(&theta, target_point).0;
    let mut time = 0.0;
    for step in 1..=steps {
        rk.step(g, 0.0, opts.dt, &mut theta);
        check_finite(&theta, step, opts.dt)?;
        let drift = subspace.drift(&theta);
        max_drift = max_drift.max(drift);
        if drift > opts.drift_tol {
            subspace.project(&mut theta);
        }
        time = step as f64 * opts.dt;
        distance = rotation_min_distance(&theta, target_point).0;
        if distance < opts.reach_tol {
            break;
        }
    }
    let (nearest, nearest_distance) = nearest_saddle(&theta, saddles);
    Ok(ConnectionResult {
        reached: distance < opts.reach_tol,
        final_distance: distance,
        time,
        max_drift,
        nearest,
        nearest_distance,
    })
}

fn nearest_saddle(theta: &[f64], saddles: &SaddleSet) -> (usize, f64) {
    saddles
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1, rotation_min_distance(theta, p).0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("six saddles")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub source: usize,
    pub subspace: Subspace,
    /// Saddle reached within `reach_tol`, if any.
    pub target: Option<usize>,
    pub distance: f64,
}

/// Follows the unstable direction of each saddle and records where the
/// trajectory lands.
pub fn connection_graph<C: Coupling + ?Sized>(
    g: &C,
    saddles: &SaddleSet,
    opts: ConnectionOptions,
) -> Result<Vec<Connection>> {
    (1..=6)
        .map(|source| {
            let pair = unstable_pair(g, saddles, source)?;
            let subspace = Subspace::splitting(pair).expect("pair index below 3");
            // run to t_max against the source itself, then read off the nearest
            let r = connection_check(
                g,
                saddles,
                source,
                subspace,
                source,
                ConnectionOptions {
                    reach_tol: 0.0,
                    ..opts
                },
            )?;
            let hit = r.nearest != source && r.nearest_distance < opts.reach_tol;
            Ok(Connection {
                source,
                subspace,
                target: hit.then_some(r.nearest),
                distance: r.nearest_distance,
            })
        })
        .collect()
}

/// Fraction of consecutive event pairs `(i, j)` with `j` the successor of `i`
/// in `graph`. `None` with fewer than two events.
pub fn itinerary_legality(events: &[ItineraryEvent], graph: &[Connection]) -> Option<f64> {
    if events.len() < 2 {
        return None;
    }
    let succ = |i: usize| graph.iter().find(|c| c.source == i).and_then(|c| c.target);
    let legal = events
        .windows(2)
        .filter(|w| succ(w[0].saddle_index) == Some(w[1].saddle_index))
        .count();
    Some(legal as f64 / (events.len() - 1) as f64)
}

/// `t, theta_1, …, theta_N`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    write_series(traj, &traj.states, "theta", out)
}

/// `t, Y_1, …, Y_N`.
pub fn write_observables_csv<W: Write>(traj: &Trajectory, y: &[Vec<f64>], out: W) -> csv::Result<()> {
    write_series(traj, y, "Y", out)
}

fn write_series<W: Write>(traj: &Trajectory, rows: &[Vec<f64>], prefix: &str, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.config.n).map(|i| format!("{prefix}_{i}")));
    w.write_record(&header)?;
    for (t, row) in traj.times.iter().zip(rows) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(t.to_string());
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
