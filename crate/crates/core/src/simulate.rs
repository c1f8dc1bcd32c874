//! Exact event-driven simulation of the restrained branching random walk
//! with `k` immortal particles per site on a finite active region `Λ`.
//!
//! Each particle of a site `x ∈ Λ` carries a death clock of rate `γ` and a
//! birth clock of rate `λ = c(0)`. Their superposition has total rate
//! `(γ + λ) Σ_{x∈Λ} η(x)`; a ring picks a uniformly random particle through
//! a Fenwick tree over the occupancies, then thins:
//!
//! * death: the particle dies iff it is one of the `(η(x) - k)⁺` mortal
//!   ones, giving the rate `γ (η(x) - k)⁺`;
//! * birth: a target `y` is drawn from `p(x, ·)`; draws falling on lost row
//!   mass or outside `Λ` are discarded (this realizes `p_Λ`), and the birth
//!   is accepted with probability `c(η(y)) / λ`.
//!
//! Sites outside `Λ` never act. With `frozen_exterior` they may hold an
//! initial configuration that stays fixed; otherwise the initial state must
//! vanish outside `Λ`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AlphaWeights, Kernel, Region};
use crate::profiles::RateProfile;
use crate::rng::{replica_rng, SimRng};
use crate::scalar::Scalar;

/// Occupancy map `η: X → ℕ` with cached total count and, when weights are
/// attached, cached `α`-norm.
#[derive(Debug, Clone)]
pub struct Configuration<T> {
    occ: Vec<u32>,
    total: u64,
    alpha: Option<(Vec<T>, T)>,
}

impl<T: Scalar> Configuration<T> {
    pub fn from_vec(occ: Vec<u32>) -> Self {
        let total = occ.iter().map(|&n| n as u64).sum();
        Self { occ, total, alpha: None }
    }

    /// `𝟎`.
    pub fn zeros(n: usize) -> Self {
        Self::from_vec(vec![0; n])
    }

    /// `k·𝟏`.
    pub fn constant(n: usize, k: u32) -> Self {
        Self::from_vec(vec![k; n])
    }

    /// `δ_x`.
    pub fn delta(n: usize, x: usize) -> Self {
        let mut occ = vec![0; n];
        occ[x] = 1;
        Self::from_vec(occ)
    }

    pub fn with_alpha(mut self, weights: &AlphaWeights<T>) -> Self {
        let w = weights.weights().to_vec();
        let norm = weights.norm(&self.occ);
        self.alpha = Some((w, norm));
        self
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn get(&self, x: usize) -> u32 {
        self.occ[x]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.occ
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `‖η‖ = Σ η(x) α(x)`, if weights are attached.
    pub fn alpha_norm(&self) -> Option<T> {
        self.alpha.as_ref().map(|(_, n)| *n)
    }

    pub fn increment(&mut self, x: usize) {
        self.occ[x] += 1;
        self.total += 1;
        if let Some((w, n)) = self.alpha.as_mut() {
            *n += w[x];
        }
    }

    pub fn decrement(&mut self, x: usize) {
        assert!(self.occ[x] > 0, "decrement of an empty site");
        self.occ[x] -= 1;
        self.total -= 1;
        if let Some((w, n)) = self.alpha.as_mut() {
            *n -= w[x];
        }
    }

    /// Pointwise order `self ≤ other`.
    pub fn le(&self, other: &Self) -> bool {
        self.occ.len() == other.occ.len() && self.occ.iter().zip(&other.occ).all(|(a, b)| a <= b)
    }

    /// Pointwise maximum.
    pub fn join(&self, other: &Self) -> Self {
        Self::from_vec(self.occ.iter().zip(&other.occ).map(|(&a, &b)| a.max(b)).collect())
    }

    /// Pointwise minimum.
    pub fn meet(&self, other: &Self) -> Self {
        Self::from_vec(self.occ.iter().zip(&other.occ).map(|(&a, &b)| a.min(b)).collect())
    }
}

impl<T> PartialEq for Configuration<T> {
    fn eq(&self, other: &Self) -> bool {
        self.occ == other.occ
    }
}

/// Fenwick tree over nonnegative integer weights.
#[derive(Debug, Clone)]
pub(crate) struct Fenwick {
    tree: Vec<u64>,
    total: u64,
}

impl Fenwick {
    pub(crate) fn new(weights: &[u64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0u64; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            let mut j = i + 1;
            while j <= n {
                tree[j] += w;
                j += j & j.wrapping_neg();
            }
        }
        Self {
            tree,
            total: weights.iter().sum(),
        }
    }

    pub(crate) fn total(&self) -> u64 {
        self.total
    }

    pub(crate) fn add(&mut self, i: usize, delta: i64) {
        let n = self.tree.len() - 1;
        let mut j = i + 1;
        while j <= n {
            self.tree[j] = self.tree[j].wrapping_add_signed(delta);
            j += j & j.wrapping_neg();
        }
        self.total = self.total.wrapping_add_signed(delta);
    }

    /// Index `i` with `prefix(i) ≤ u < prefix(i + 1)`, plus the offset
    /// `u - prefix(i)`.
    pub(crate) fn find(&self, mut u: u64) -> (usize, u64) {
        debug_assert!(u < self.total);
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        (pos, u)
    }
}

/// Target drawn from `p(x, ·)` by inversion, `None` on lost row mass.
pub(crate) fn draw_target<T: Scalar>(row: &[(usize, T)], u: T) -> Option<usize> {
    let mut acc = T::zero();
    for &(y, w) in row {
        acc += w;
        if u < acc {
            return Some(y);
        }
    }
    None
}

pub(crate) fn uniform<T: Scalar>(rng: &mut SimRng) -> T {
    T::lit(rng.random::<f64>())
}

/// Exponential waiting time with the given rate.
pub(crate) fn exp_time<T: Scalar>(rng: &mut SimRng, rate: T) -> T {
    // 1 - U lies in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    T::lit(-u.ln()) / rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams<T> {
    /// Death-rate factor `γ ≥ 0`.
    pub gamma: T,
    /// Immortal floor `k`.
    pub floor: u32,
    /// Active region `Λ`.
    pub region: Region,
    pub profile: RateProfile<T>,
    pub t_end: T,
    pub seed: u64,
    /// Observation grid, strictly increasing within `[0, t_end]`.
    pub sample_times: Vec<T>,
    pub frozen_exterior: bool,
    /// Stop after this many clock rings.
    pub max_events: Option<u64>,
}

impl<T: Scalar> SimParams<T> {
    /// Main model (`γ = 1`, `k = 0`) on the whole graph.
    pub fn main_model(n: usize, profile: RateProfile<T>, t_end: T, seed: u64, sample_times: Vec<T>) -> Self {
        Self {
            gamma: T::one(),
            floor: 0,
            region: Region::all(n),
            profile,
            t_end,
            seed,
            sample_times,
            frozen_exterior: false,
            max_events: None,
        }
    }

    pub fn with_sample_grid(mut self, points: usize) -> Self {
        self.sample_times = uniform_grid(self.t_end, points);
        self
    }
}

/// `points` equally spaced times `t_end/points, …, t_end`.
pub fn uniform_grid<T: Scalar>(t_end: T, points: usize) -> Vec<T> {
    (1..=points)
        .map(|i| t_end * T::from_count(i as u64) / T::from_count(points as u64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Death,
    Birth,
}

/// One clock ring. Rejected attempts are reported with `accepted = false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event<T> {
    pub time: T,
    pub site: usize,
    pub kind: EventKind,
    pub target: Option<usize>,
    pub accepted: bool,
}

/// Stepper over the chain; [`run_sim`] drives it over a sampling grid.
pub struct Simulation<'a, T> {
    kernel: &'a Kernel<T>,
    params: &'a SimParams<T>,
    eta: Configuration<T>,
    sampler: Fenwick,
    rng: SimRng,
    time: T,
    events: u64,
    accepted: u64,
    max_occupancy: u32,
    dominating: T,
}

impl<'a, T: Scalar> Simulation<'a, T> {
    pub fn new(kernel: &'a Kernel<T>, params: &'a SimParams<T>, eta0: &Configuration<T>, rng: SimRng) -> Result<Self> {
        validate(kernel, params, eta0)?;
        let weights: Vec<u64> = (0..eta0.len())
            .map(|x| if params.region.contains(x) { eta0.get(x) as u64 } else { 0 })
            .collect();
        Ok(Self {
            kernel,
            params,
            eta: eta0.clone(),
            sampler: Fenwick::new(&weights),
            rng,
            time: T::zero(),
            events: 0,
            accepted: 0,
            max_occupancy: eta0.as_slice().iter().copied().max().unwrap_or(0),
            dominating: params.gamma + params.profile.lambda(),
        })
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn config(&self) -> &Configuration<T> {
        &self.eta
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Largest occupancy ever observed at any site.
    pub fn max_occupancy(&self) -> u32 {
        self.max_occupancy
    }

    /// No particle in `Λ` can act again.
    pub fn is_absorbed(&self) -> bool {
        self.sampler.total() == 0
    }

    /// Mortal particles left in `Λ`: `Σ_{x∈Λ} (η(x) - k)`.
    pub fn mortal_count(&self) -> u64 {
        self.sampler.total() - self.params.floor as u64 * self.params.region.len() as u64
    }

    /// Advances to the next clock ring if it happens no later than
    /// `horizon`; otherwise moves the clock to `horizon` (exact by
    /// memorylessness) and returns `None`.
    pub fn step_until(&mut self, horizon: T) -> Option<Event<T>> {
        let w = self.sampler.total();
        if w == 0 {
            self.time = self.time.max(horizon);
            return None;
        }
        let rate = self.dominating * T::from_count(w);
        let t_next = self.time + exp_time(&mut self.rng, rate);
        if t_next > horizon {
            self.time = horizon;
            return None;
        }
        self.time = t_next;
        self.events += 1;
        let (x, offset) = self.sampler.find(self.rng.random_range(0..w));
        let p = self.params;
        let death = uniform::<T>(&mut self.rng) * self.dominating < p.gamma;
        let event = if death {
            let eta_x = self.eta.get(x);
            let mortal = eta_x.saturating_sub(p.floor) as u64;
            let accepted = offset < mortal;
            if accepted {
                self.eta.decrement(x);
                self.sampler.add(x, -1);
            }
            Event {
                time: t_next,
                site: x,
                kind: EventKind::Death,
                target: None,
                accepted,
            }
        } else {
            let target = draw_target(self.kernel.row(x), uniform(&mut self.rng));
            let v: T = uniform(&mut self.rng);
            let accepted = match target {
                Some(y) if p.region.contains(y) => v * p.profile.lambda() < p.profile.rate(self.eta.get(y)),
                _ => false,
            };
            if let (true, Some(y)) = (accepted, target) {
                self.eta.increment(y);
                self.sampler.add(y, 1);
                self.max_occupancy = self.max_occupancy.max(self.eta.get(y));
            }
            Event {
                time: t_next,
                site: x,
                kind: EventKind::Birth,
                target,
                accepted,
            }
        };
        if event.accepted {
            self.accepted += 1;
        }
        Some(event)
    }

    fn budget_left(&self) -> bool {
        self.params.max_events.is_none_or(|m| self.events < m)
    }
}

fn validate<T: Scalar>(kernel: &Kernel<T>, params: &SimParams<T>, eta0: &Configuration<T>) -> Result<()> {
    let n = kernel.len();
    if eta0.len() != n || params.region.universe() != n {
        return Err(Error::Mismatch("configuration / region / kernel sizes differ".into()));
    }
    if params.region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if !params.t_end.is_finite() || params.t_end < T::zero() {
        return Err(Error::NonFinite(format!("t_end = {}", params.t_end)));
    }
    if !(params.gamma >= T::zero()) || !params.gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma = {}", params.gamma)));
    }
    let mut prev = None;
    for &s in &params.sample_times {
        if !(s >= T::zero() && s <= params.t_end) || prev.is_some_and(|p| s <= p) {
            return Err(Error::InvalidParameter(
                "sample times must be strictly increasing within [0, t_end]".into(),
            ));
        }
        prev = Some(s);
    }
    for x in 0..n {
        if params.region.contains(x) {
            if eta0.get(x) < params.floor {
                return Err(Error::FloorViolation {
                    site: x,
                    floor: params.floor,
                });
            }
        } else if !params.frozen_exterior && eta0.get(x) > 0 {
            return Err(Error::OutsideRegion(x));
        }
    }
    Ok(())
}

/// Sampled path of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub seed: u64,
    pub replica: u64,
    pub region: Region,
    pub sample_times: Vec<T>,
    /// Configuration at each sample time; shorter than `sample_times` only
    /// when the event budget ran out first.
    pub snapshots: Vec<Vec<u32>>,
    /// Time at which `Λ` emptied (the chain is then absorbed).
    pub extinction_time: Option<T>,
    pub events: u64,
    pub accepted: u64,
    pub max_occupancy: u32,
    pub stopped_early: bool,
    pub final_time: T,
    pub final_config: Vec<u32>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn is_extinct_by(&self, t: T) -> bool {
        self.extinction_time.is_some_and(|e| e <= t)
    }
}

/// One run from replica stream 0 of `params.seed`.
pub fn run_sim<T: Scalar>(kernel: &Kernel<T>, params: &SimParams<T>, eta0: &Configuration<T>) -> Result<Trajectory<T>> {
    run_replica(kernel, params, eta0, 0)
}

pub fn run_replica<T: Scalar>(
    kernel: &Kernel<T>,
    params: &SimParams<T>,
    eta0: &Configuration<T>,
    replica: u64,
) -> Result<Trajectory<T>> {
    run_with_observer(kernel, params, eta0, replica, |_, _| {})
}

/// Like [`run_replica`], calling `observer(event, state_after)` on every
/// clock ring.
pub fn run_with_observer<T, F>(
    kernel: &Kernel<T>,
    params: &SimParams<T>,
    eta0: &Configuration<T>,
    replica: u64,
    mut observer: F,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    F: FnMut(&Event<T>, &Configuration<T>),
{
    let mut sim = Simulation::new(kernel, params, eta0, replica_rng(params.seed, replica))?;
    let mut snapshots = Vec::with_capacity(params.sample_times.len());
    let mut extinction_time = sim.is_absorbed().then(T::zero);
    let mut stopped_early = false;
    let mut horizons: Vec<(T, bool)> = params.sample_times.iter().map(|&s| (s, true)).collect();
    if horizons.last().is_none_or(|&(s, _)| s < params.t_end) {
        horizons.push((params.t_end, false));
    }
    'outer: for (horizon, record) in horizons {
        loop {
            if !sim.budget_left() {
                stopped_early = true;
                break 'outer;
            }
            match sim.step_until(horizon) {
                Some(ev) => {
                    observer(&ev, sim.config());
                    if extinction_time.is_none() && sim.is_absorbed() {
                        extinction_time = Some(ev.time);
                    }
                }
                None => break,
            }
        }
        if record {
            snapshots.push(sim.config().as_slice().to_vec());
        }
    }
    Ok(Trajectory {
        seed: params.seed,
        replica,
        region: params.region.clone(),
        sample_times: params.sample_times.clone(),
        snapshots,
        extinction_time,
        events: sim.events(),
        accepted: sim.accepted(),
        max_occupancy: sim.max_occupancy(),
        stopped_early,
        final_time: sim.time(),
        final_config: sim.config().as_slice().to_vec(),
    })
}

/// Runs `replicas` independent replicas concurrently, in replica order.
pub fn run_replicas<T: Scalar>(
    kernel: &Kernel<T>,
    params: &SimParams<T>,
    eta0: &Configuration<T>,
    replicas: usize,
) -> Result<Vec<Trajectory<T>>> {
    use rayon::prelude::*;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(kernel, params, eta0, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// Mean occupancy over the sites of `Λ`.
    SiteMean,
    /// Particles in `Λ`.
    TotalMass,
    /// 1 once `Λ` has emptied, else 0.
    ExtinctFlag,
    /// Occupancy counts pooled over `Λ` at one sample index (the last one
    /// when `None`).
    OccupancyHistogram { sample: Option<usize> },
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::SiteMean => "site-mean",
            Statistic::TotalMass => "total-mass",
            Statistic::ExtinctFlag => "extinct-flag",
            Statistic::OccupancyHistogram { .. } => "occupancy-histogram",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "site-mean" => Ok(Statistic::SiteMean),
            "total-mass" => Ok(Statistic::TotalMass),
            "extinct-flag" => Ok(Statistic::ExtinctFlag),
            "occupancy-histogram" => Ok(Statistic::OccupancyHistogram { sample: None }),
            other => Err(Error::UnknownStatistic(other.to_string())),
        }
    }
}

/// Statistic at each recorded sample time (for histograms: the count per
/// occupancy level).
pub fn summarize<T: Scalar>(traj: &Trajectory<T>, what: Statistic) -> Result<Vec<T>> {
    let in_region = |snap: &Vec<u32>| -> u64 { traj.region.iter().map(|x| snap[x] as u64).sum() };
    match what {
        Statistic::TotalMass => Ok(traj.snapshots.iter().map(|s| T::from_count(in_region(s))).collect()),
        Statistic::SiteMean => {
            let sites = T::from_count(traj.region.len() as u64);
            Ok(traj
                .snapshots
                .iter()
                .map(|s| T::from_count(in_region(s)) / sites)
                .collect())
        }
        Statistic::ExtinctFlag => Ok(traj
            .sample_times
            .iter()
            .take(traj.snapshots.len())
            .map(|&t| if traj.is_extinct_by(t) { T::one() } else { T::zero() })
            .collect()),
        Statistic::OccupancyHistogram { sample } => {
            let idx = match sample {
                Some(i) => i,
                None => traj
                    .snapshots
                    .len()
                    .checked_sub(1)
                    .ok_or_else(|| Error::InvalidParameter("trajectory has no samples".into()))?,
            };
            let snap = traj
                .snapshots
                .get(idx)
                .ok_or_else(|| Error::InvalidParameter(format!("no sample at index {idx}")))?;
            let top = traj.region.iter().map(|x| snap[x]).max().unwrap_or(0) as usize;
            let mut hist = vec![T::zero(); top + 1];
            for x in traj.region.iter() {
                hist[snap[x] as usize] += T::one();
            }
            Ok(hist)
        }
    }
}
