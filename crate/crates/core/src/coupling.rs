//! Nested monotone coupling of `N` immortal-particle processes driven by
//! shared clocks.
//!
//! Component `h` has region `Λ_h`, floor `k_h`, death factor `γ_h` and
//! profile `c_h`. With `A(x) = max_h η_h(x)`, `γ̄ = max γ_h` and
//! `c̄ = max c_h(0)`, every site `x ∈ Λ_N` carries a death clock of rate
//! `γ̄ A(x)` and a birth clock of rate `c̄ A(x)`. When a clock rings, one
//! uniform is shared by all components:
//!
//! * death at `x`: component `h` loses a particle iff
//!   `U ≤ γ_h 𝟙_{Λ_h}(x) (η_h(x) - k_h)⁺ / (γ̄ A(x))`;
//! * birth from `x`: a target `y ~ p(x, ·)` (unrestricted kernel) is drawn
//!   once; component `h` gains a particle at `y` iff
//!   `V ≤ η_h(x) p_{Λ_h}(x, y) c_h(η_h(y)) / (c̄ A(x) p(x, y))`.
//!
//! `A` and the clock rates are refreshed after every ring. Under the nesting
//! hypotheses checked by [`validate_spec`] the order
//! `η_1 ≤ η_2 ≤ … ≤ η_N` is preserved; [`run_coupled`] verifies it after
//! every event and reports the outcome in a [`Certificate`].

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Kernel, Region};
use crate::profiles::RateProfile;
use crate::rng::{replica_rng, SimRng};
use crate::scalar::Scalar;
use crate::simulate::{draw_target, exp_time, Configuration, Fenwick, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct Component<T> {
    pub region: Region,
    pub floor: u32,
    pub gamma: T,
    pub profile: RateProfile<T>,
    pub initial: Configuration<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec<T> {
    pub components: Vec<Component<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SizeMismatch { h: usize },
    RegionNotNested { h: usize },
    FloorDecreasing { h: usize },
    GammaIncreasing { h: usize },
    ProfileNotDominated { h: usize, occupancy: u32 },
    InitialNotOrdered { h: usize, site: usize },
    InitialBelowFloor { h: usize, site: usize },
    /// Component `h` is frozen at `x ∈ Λ_{h+1} \ Λ_h` above the next floor,
    /// so deaths of `h + 1` there could break the order.
    FrozenAboveNextFloor { h: usize, site: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // components are reported 1-based
        match *self {
            Violation::SizeMismatch { h } => write!(f, "component {}: size mismatch", h + 1),
            Violation::RegionNotNested { h } => write!(f, "region {} not contained in region {}", h + 1, h + 2),
            Violation::FloorDecreasing { h } => write!(f, "k_{} > k_{}", h + 1, h + 2),
            Violation::GammaIncreasing { h } => write!(f, "gamma_{} < gamma_{}", h + 1, h + 2),
            Violation::ProfileNotDominated { h, occupancy } => {
                write!(f, "c_{}({occupancy}) > c_{}({occupancy})", h + 1, h + 2)
            }
            Violation::InitialNotOrdered { h, site } => {
                write!(f, "initial state {} exceeds {} at site {site}", h + 1, h + 2)
            }
            Violation::InitialBelowFloor { h, site } => {
                write!(f, "initial state {} below its floor at site {site}", h + 1)
            }
            Violation::FrozenAboveNextFloor { h, site } => write!(
                f,
                "component {} frozen above k_{} at site {site} of region {}",
                h + 1,
                h + 2,
                h + 2
            ),
        }
    }
}

/// Checks every nesting hypothesis; an empty list means the coupling is valid.
pub fn validate_spec<T: Scalar>(spec: &CouplingSpec<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let comps = &spec.components;
    let Some(first) = comps.first() else {
        return out;
    };
    let n = first.region.universe();
    for (h, c) in comps.iter().enumerate() {
        if c.region.universe() != n || c.initial.len() != n {
            out.push(Violation::SizeMismatch { h });
            continue;
        }
        for x in c.region.iter() {
            if c.initial.get(x) < c.floor {
                out.push(Violation::InitialBelowFloor { h, site: x });
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for h in 0..comps.len().saturating_sub(1) {
        let (a, b) = (&comps[h], &comps[h + 1]);
        if !a.region.is_subset_of(&b.region) {
            out.push(Violation::RegionNotNested { h });
        }
        if a.floor > b.floor {
            out.push(Violation::FloorDecreasing { h });
        }
        if a.gamma < b.gamma {
            out.push(Violation::GammaIncreasing { h });
        }
        if !a.profile.dominated_from(&b.profile, b.floor) {
            let end = a.profile.tabulated_len().max(b.profile.tabulated_len()) as u32 + 1;
            let occupancy = (b.floor..end.max(b.floor + 1))
                .find(|&k| a.profile.rate(k) > b.profile.rate(k))
                .unwrap_or(end);
            out.push(Violation::ProfileNotDominated { h, occupancy });
        }
        for x in 0..n {
            if a.initial.get(x) > b.initial.get(x) {
                out.push(Violation::InitialNotOrdered { h, site: x });
            }
            if b.region.contains(x) && !a.region.contains(x) && a.initial.get(x) > b.floor {
                out.push(Violation::FrozenAboveNextFloor { h, site: x });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationRecord<T> {
    pub time: T,
    pub site: usize,
    /// Lower component index `h`; the pair is `(h, h + 1)`.
    pub component: usize,
    pub occupancies: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T> {
    pub components: usize,
    pub events: u64,
    pub checks: u64,
    pub violations: u64,
    pub first_violation: Option<ViolationRecord<T>>,
    /// Events at which two tied components had acceptance thresholds in the
    /// wrong order.
    pub threshold_inversions: u64,
}

impl<T: Scalar> Certificate<T> {
    pub fn is_clean(&self) -> bool {
        self.violations == 0 && self.threshold_inversions == 0
    }
}

impl<T: Scalar> fmt::Display for Certificate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ordering {}: components={} events={} checks={} violations={} threshold_inversions={}",
            if self.is_clean() { "OK" } else { "VIOLATED" },
            self.components,
            self.events,
            self.checks,
            self.violations,
            self.threshold_inversions
        )?;
        if let Some(v) = &self.first_violation {
            write!(
                f,
                " first_violation=(time={}, site={}, components={}<={}, occupancies={}>{})",
                v.time,
                v.site,
                v.component + 1,
                v.component + 2,
                v.occupancies.0,
                v.occupancies.1
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun<T> {
    pub trajectories: Vec<Trajectory<T>>,
    pub certificate: Certificate<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRunParams<T> {
    pub t_end: T,
    pub seed: u64,
    pub replica: u64,
    pub sample_times: Vec<T>,
    pub max_events: Option<u64>,
}

struct CoupledState<'a, T> {
    kernel: &'a Kernel<T>,
    comps: &'a [Component<T>],
    etas: Vec<Configuration<T>>,
    outer: &'a Region,
    sampler: Fenwick,
    gamma_bar: T,
    c_bar: T,
    rng: SimRng,
    time: T,
    cert: Certificate<T>,
}

impl<'a, T: Scalar> CoupledState<'a, T> {
    fn site_max(&self, x: usize) -> u32 {
        self.etas.iter().map(|e| e.get(x)).max().unwrap_or(0)
    }

    fn refresh(&mut self, x: usize, before: u32) {
        if self.outer.contains(x) {
            let after = self.site_max(x);
            self.sampler.add(x, after as i64 - before as i64);
        }
    }

    fn check_site(&mut self, x: usize) {
        self.cert.checks += 1;
        for h in 0..self.etas.len() - 1 {
            let (a, b) = (self.etas[h].get(x), self.etas[h + 1].get(x));
            if a > b {
                self.cert.violations += 1;
                if self.cert.first_violation.is_none() {
                    self.cert.first_violation = Some(ViolationRecord {
                        time: self.time,
                        site: x,
                        component: h,
                        occupancies: (a, b),
                    });
                }
            }
        }
    }

    fn open01(&mut self) -> T {
        T::lit(1.0 - self.rng.random::<f64>())
    }

    /// Returns false when the horizon is reached first.
    fn step_until(&mut self, horizon: T) -> bool {
        let total = self.sampler.total();
        let dominating = self.gamma_bar + self.c_bar;
        if total == 0 || dominating == T::zero() {
            self.time = horizon;
            return false;
        }
        let t_next = self.time + exp_time(&mut self.rng, dominating * T::from_count(total));
        if t_next > horizon {
            self.time = horizon;
            return false;
        }
        self.time = t_next;
        self.cert.events += 1;
        let (x, _) = self.sampler.find(self.rng.random_range(0..total));
        let a_x = T::from_count(self.site_max(x) as u64);
        let is_death = T::lit(self.rng.random::<f64>()) * dominating < self.gamma_bar;
        if is_death {
            let u = self.open01();
            let scale = self.gamma_bar * a_x;
            let thresholds: Vec<T> = self
                .comps
                .iter()
                .zip(&self.etas)
                .map(|(c, e)| {
                    if c.region.contains(x) {
                        c.gamma * T::from_count(e.get(x).saturating_sub(c.floor) as u64) / scale
                    } else {
                        T::zero()
                    }
                })
                .collect();
            // tied components: the lower one must die at least as easily
            for h in 0..thresholds.len() - 1 {
                if self.etas[h].get(x) == self.etas[h + 1].get(x) && thresholds[h] < thresholds[h + 1] {
                    self.cert.threshold_inversions += 1;
                }
            }
            let before = self.site_max(x);
            for (h, &thr) in thresholds.iter().enumerate() {
                if u <= thr {
                    self.etas[h].decrement(x);
                }
            }
            self.refresh(x, before);
            self.check_site(x);
        } else {
            let Some(y) = draw_target(self.kernel.row(x), T::lit(self.rng.random::<f64>())) else {
                return true;
            };
            let v = self.open01();
            let scale = self.c_bar * a_x;
            let thresholds: Vec<T> = self
                .comps
                .iter()
                .zip(&self.etas)
                .map(|(c, e)| {
                    if c.region.contains(x) && c.region.contains(y) {
                        T::from_count(e.get(x) as u64) * c.profile.rate(e.get(y)) / scale
                    } else {
                        T::zero()
                    }
                })
                .collect();
            // tied at the target: the upper one must accept at least as easily
            for h in 0..thresholds.len() - 1 {
                if self.etas[h].get(y) == self.etas[h + 1].get(y) && thresholds[h] > thresholds[h + 1] {
                    self.cert.threshold_inversions += 1;
                }
            }
            let before = self.site_max(y);
            for (h, &thr) in thresholds.iter().enumerate() {
                if v <= thr {
                    self.etas[h].increment(y);
                }
            }
            self.refresh(y, before);
            self.check_site(y);
        }
        true
    }
}

/// Runs the coupled chain. Fails only on an invalid spec; ordering
/// violations are reported in the certificate.
pub fn run_coupled<T: Scalar>(
    kernel: &Kernel<T>,
    spec: &CouplingSpec<T>,
    run: &CouplingRunParams<T>,
) -> Result<CoupledRun<T>> {
    if spec.components.is_empty() {
        return Err(Error::InvalidCoupling("no components".into()));
    }
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::InvalidCoupling(msg));
    }
    let n = kernel.len();
    if spec.components[0].region.universe() != n {
        return Err(Error::Mismatch("coupling spec vs kernel size".into()));
    }
    if !run.t_end.is_finite() && run.max_events.is_none() {
        return Err(Error::NonFinite("t_end is infinite and no event budget is set".into()));
    }
    let mut prev = None;
    for &s in &run.sample_times {
        if !(s >= T::zero() && s <= run.t_end) || prev.is_some_and(|p| s <= p) {
            return Err(Error::InvalidParameter(
                "sample times must be strictly increasing within [0, t_end]".into(),
            ));
        }
        prev = Some(s);
    }
    let comps = &spec.components;
    let outer = &comps.last().unwrap().region;
    let etas: Vec<Configuration<T>> = comps.iter().map(|c| c.initial.clone()).collect();
    let weights: Vec<u64> = (0..n)
        .map(|x| {
            if outer.contains(x) {
                etas.iter().map(|e| e.get(x)).max().unwrap_or(0) as u64
            } else {
                0
            }
        })
        .collect();
    let mut state = CoupledState {
        kernel,
        comps,
        etas,
        outer,
        sampler: Fenwick::new(&weights),
        gamma_bar: comps.iter().map(|c| c.gamma).fold(T::zero(), T::max),
        c_bar: comps.iter().map(|c| c.profile.lambda()).fold(T::zero(), T::max),
        rng: replica_rng(run.seed, run.replica),
        time: T::zero(),
        cert: Certificate {
            components: comps.len(),
            events: 0,
            checks: 0,
            violations: 0,
            first_violation: None,
            threshold_inversions: 0,
        },
    };
    for x in 0..n {
        state.check_site(x);
    }

    let absorbed = |s: &CoupledState<T>, h: usize| {
        let c = &s.comps[h];
        c.floor == 0 && c.region.iter().all(|x| s.etas[h].get(x) == 0)
    };
    let mut extinction: Vec<Option<T>> = (0..comps.len())
        .map(|h| absorbed(&state, h).then(T::zero))
        .collect();
    let mut snapshots: Vec<Vec<Vec<u32>>> = vec![Vec::new(); comps.len()];
    let mut horizons: Vec<(T, bool)> = run.sample_times.iter().map(|&s| (s, true)).collect();
    if horizons.last().is_none_or(|&(s, _)| s < run.t_end) {
        horizons.push((run.t_end, false));
    }
    let mut stopped_early = false;
    'outer: for (horizon, record) in horizons {
        loop {
            if run.max_events.is_some_and(|m| state.cert.events >= m) {
                stopped_early = true;
                break 'outer;
            }
            if !state.step_until(horizon) {
                break;
            }
            for (h, ext) in extinction.iter_mut().enumerate() {
                if ext.is_none() && absorbed(&state, h) {
                    *ext = Some(state.time);
                }
            }
        }
        if record {
            for (h, e) in state.etas.iter().enumerate() {
                snapshots[h].push(e.as_slice().to_vec());
            }
        }
    }

    let trajectories = comps
        .iter()
        .enumerate()
        .map(|(h, c)| {
            let eta = &state.etas[h];
            Trajectory {
                seed: run.seed,
                replica: run.replica,
                region: c.region.clone(),
                sample_times: run.sample_times.clone(),
                snapshots: std::mem::take(&mut snapshots[h]),
                extinction_time: extinction[h],
                events: state.cert.events,
                accepted: 0,
                max_occupancy: eta.as_slice().iter().copied().max().unwrap_or(0),
                stopped_early,
                final_time: state.time,
                final_config: eta.as_slice().to_vec(),
            }
        })
        .collect();
    Ok(CoupledRun {
        trajectories,
        certificate: state.cert,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use std::sync::Arc;

    fn kernel(l: usize) -> Kernel<f64> {
        Kernel::simple(Arc::new(Graph::lattice_torus(1, l).unwrap()))
    }

    fn component(n: usize, floor: u32, start: u32, profile: &RateProfile<f64>) -> Component<f64> {
        Component {
            region: Region::all(n),
            floor,
            gamma: 1.0,
            profile: profile.clone(),
            initial: Configuration::constant(n, start),
        }
    }

    fn run_params(seed: u64, max_events: u64) -> CouplingRunParams<f64> {
        CouplingRunParams {
            t_end: f64::INFINITY,
            seed,
            replica: 0,
            sample_times: vec![],
            max_events: Some(max_events),
        }
    }

    #[test]
    fn single_component_is_always_valid() {
        let c = RateProfile::constant(2.0).unwrap();
        let spec = CouplingSpec {
            components: vec![component(5, 0, 0, &c)],
        };
        assert!(validate_spec(&spec).is_empty());
    }

    #[test]
    fn identical_components_valid_and_identical() {
        let c = RateProfile::step(3.0, 2, 0.5).unwrap();
        let spec = CouplingSpec {
            components: vec![component(12, 0, 1, &c), component(12, 0, 1, &c)],
        };
        assert!(validate_spec(&spec).is_empty());
        let mut p = run_params(3, 20_000);
        p.t_end = 5.0;
        p.max_events = None;
        p.sample_times = crate::simulate::uniform_grid(5.0, 10);
        let out = run_coupled(&kernel(12), &spec, &p).unwrap();
        assert_eq!(out.trajectories[0].snapshots, out.trajectories[1].snapshots);
        assert!(out.certificate.is_clean());
    }

    #[test]
    fn floors_with_same_profile_are_valid() {
        let c = RateProfile::step(3.0, 2, 0.5).unwrap();
        let spec = CouplingSpec {
            components: vec![component(6, 0, 0, &c), component(6, 1, 1, &c)],
        };
        assert!(validate_spec(&spec).is_empty());
    }

    #[test]
    fn detects_each_hypothesis() {
        let c = RateProfile::step(3.0, 2, 0.5).unwrap();
        let big = RateProfile::constant(4.0).unwrap();
        let mut a = component(6, 1, 2, &big);
        a.gamma = 0.5;
        let b = component(6, 0, 1, &c);
        let v = validate_spec(&CouplingSpec {
            components: vec![a, b],
        });
        assert!(v.contains(&Violation::FloorDecreasing { h: 0 }));
        assert!(v.contains(&Violation::GammaIncreasing { h: 0 }));
        assert!(v.iter().any(|x| matches!(x, Violation::ProfileNotDominated { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::InitialNotOrdered { .. })));

        let mut lo = component(6, 0, 0, &c);
        lo.region = Region::from_vertices(6, 0..4).unwrap();
        let mut hi = component(6, 0, 0, &c);
        hi.region = Region::from_vertices(6, 2..6).unwrap();
        let v = validate_spec(&CouplingSpec {
            components: vec![lo, hi],
        });
        assert_eq!(v, vec![Violation::RegionNotNested { h: 0 }]);

        let below = component(6, 2, 1, &c);
        assert_eq!(
            validate_spec(&CouplingSpec {
                components: vec![below]
            })
            .len(),
            6
        );
    }

    #[test]
    fn invalid_spec_refused() {
        let c = RateProfile::step(3.0, 2, 0.5).unwrap();
        let spec = CouplingSpec {
            components: vec![component(6, 0, 2, &c), component(6, 0, 1, &c)],
        };
        assert!(matches!(
            run_coupled(&kernel(6), &spec, &run_params(1, 10)),
            Err(Error::InvalidCoupling(_))
        ));
    }

    #[test]
    fn nested_floors_stay_ordered() {
        let c = RateProfile::step(2.0, 3, 0.5).unwrap();
        let spec = CouplingSpec {
            components: vec![component(20, 0, 0, &c), component(20, 1, 1, &c), component(20, 2, 2, &c)],
        };
        for seed in 0..5 {
            let out = run_coupled(&kernel(20), &spec, &run_params(seed, 20_000)).unwrap();
            assert_eq!(out.certificate.events, 20_000);
            assert!(out.certificate.is_clean(), "{}", out.certificate);
        }
    }

    #[test]
    fn nested_regions_and_profiles_stay_ordered() {
        let n = 16;
        let small = Region::from_vertices(n, 4..12).unwrap();
        let c_lo = RateProfile::step(2.0, 2, 0.2).unwrap();
        let c_hi = RateProfile::step(3.0, 3, 0.4).unwrap();
        let mut init_lo = vec![0u32; n];
        let mut init_hi = vec![0u32; n];
        for x in 4..12 {
            init_lo[x] = 1;
            init_hi[x] = 2;
        }
        let lo = Component {
            region: small,
            floor: 0,
            gamma: 1.5,
            profile: c_lo,
            initial: Configuration::from_vec(init_lo),
        };
        let hi = Component {
            region: Region::all(n),
            floor: 0,
            gamma: 1.0,
            profile: c_hi,
            initial: Configuration::from_vec(init_hi),
        };
        let spec = CouplingSpec { components: vec![lo, hi] };
        assert!(validate_spec(&spec).is_empty());
        for seed in 0..5 {
            let out = run_coupled(&kernel(n), &spec, &run_params(seed, 20_000)).unwrap();
            assert!(out.certificate.is_clean(), "{}", out.certificate);
            // the lower component never leaves its region
            assert!(out.trajectories[0].final_config[..4].iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn certificate_reports_first_violation() {
        let cert = Certificate {
            components: 2,
            events: 10,
            checks: 12,
            violations: 1,
            first_violation: Some(ViolationRecord {
                time: 0.5,
                site: 3,
                component: 0,
                occupancies: (2, 1),
            }),
            threshold_inversions: 0,
        };
        let line = cert.to_string();
        assert!(line.starts_with("ordering VIOLATED"));
        assert!(line.contains("site=3"));
    }
}
