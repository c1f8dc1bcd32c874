//! Regime classification of replicated runs and finite-volume
//! stabilization.
//!
//! The four long-time behaviours of the restrained walk are labelled
//! `extinct`, `surviving`, `exploding-mean` and `bounded-mean`. Every
//! numeric cut-off used by the classifier lives in [`Thresholds`].

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{Kernel, Region};
use crate::invariant_measure::tightness_bound;
use crate::profiles::RateProfile;
use crate::rng::replica_rng;
use crate::scalar::Scalar;
use crate::simulate::{run_replicas, uniform_grid, Configuration, SimParams, Simulation, Trajectory};
use crate::spectral::{rho_estimate, theta_estimate, theta_estimate_unguarded};
use crate::stats::{linear_fit, MeanVar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Extinct,
    Surviving,
    ExplodingMean,
    BoundedMean,
    Unclassified,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Extinct => "extinct",
            Regime::Surviving => "surviving",
            Regime::ExplodingMean => "exploding-mean",
            Regime::BoundedMean => "bounded-mean",
            Regime::Unclassified => "unclassified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Fraction of extinct replicas needed for `extinct`.
    pub extinct_fraction: f64,
    /// Growth rate the lower confidence limit must exceed for
    /// `exploding-mean`.
    pub explode_slope: f64,
    /// Confidence-interval half-width in standard errors.
    pub z: f64,
    /// Half-width of the flat band the slope interval must meet for
    /// `bounded-mean`.
    pub flat_band: f64,
    /// Fraction of replicas with the reference site occupied for
    /// `surviving`.
    pub occupied_fraction: f64,
    /// Trailing fraction of the horizon used for fits and late means.
    pub fit_window: f64,
    pub min_replicas: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            extinct_fraction: 0.95,
            explode_slope: 0.05,
            z: 3.0,
            flat_band: 0.01,
            occupied_fraction: 0.2,
            fit_window: 0.6,
            min_replicas: 50,
        }
    }
}

/// Whether the start is a finite perturbation (`δ_x`) or a spatially
/// extended bounded configuration (`k𝟏`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Delta(usize),
    Constant(u32),
}

impl Start {
    pub fn configuration<T: Scalar>(&self, n: usize) -> Configuration<T> {
        match *self {
            Start::Delta(x) => Configuration::delta(n, x),
            Start::Constant(k) => Configuration::constant(n, k),
        }
    }

    fn is_extended(&self) -> bool {
        matches!(self, Start::Constant(k) if *k > 0)
    }
}

/// Replica summaries the classifier works from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummaries {
    pub sample_times: Vec<f64>,
    /// `total_mass[r][i]` at `sample_times[i]`.
    pub total_mass: Vec<Vec<f64>>,
    pub sites: usize,
    pub extinct: Vec<bool>,
    /// Reference site occupied at the final time.
    pub occupied: Vec<bool>,
    pub extended_start: bool,
}

impl RunSummaries {
    pub fn from_trajectories<T: Scalar>(trajs: &[Trajectory<T>], x0: usize, start: Start) -> Self {
        let sample_times = trajs
            .first()
            .map(|t| t.sample_times.iter().map(|s| s.as_f64()).collect())
            .unwrap_or_default();
        Self {
            sample_times,
            total_mass: trajs
                .iter()
                .map(|t| {
                    t.snapshots
                        .iter()
                        .map(|s| t.region.iter().map(|x| s[x] as f64).sum())
                        .collect()
                })
                .collect(),
            sites: trajs.first().map(|t| t.region.len()).unwrap_or(0),
            extinct: trajs.iter().map(|t| t.extinction_time.is_some()).collect(),
            occupied: trajs.iter().map(|t| t.final_config[x0] > 0).collect(),
            extended_start: start.is_extended(),
        }
    }

    pub fn replicas(&self) -> usize {
        self.extinct.len()
    }

    /// `(time, mean total mass, standard error)` per sample time.
    pub fn mean_series(&self) -> Vec<(f64, f64, f64)> {
        self.sample_times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mv: MeanVar = self.total_mass.iter().filter_map(|r| r.get(i).copied()).collect();
                (t, mv.mean(), mv.std_err())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub replicas: usize,
    pub extinct_fraction: f64,
    pub occupied_fraction: f64,
    /// Least-squares growth rate of the log mean total mass over the fit
    /// window, if at least three positive means are available.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    /// Density (mass per site) averaged over the fit window and replicas.
    pub late_density: f64,
    pub late_density_se: f64,
}

/// Labels a set of replicas. Rules are tried in the order extinct,
/// exploding-mean, bounded-mean (extended starts only), surviving.
pub fn classify_run(summ: &RunSummaries, thr: &Thresholds) -> Result<(Regime, Evidence)> {
    let reps = summ.replicas();
    if reps < thr.min_replicas {
        return Err(Error::InsufficientReplicas {
            got: reps,
            needed: thr.min_replicas,
        });
    }
    let frac = |v: &[bool]| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
    let extinct_fraction = frac(&summ.extinct);
    let occupied_fraction = frac(&summ.occupied);
    let t_end = summ.sample_times.last().copied().unwrap_or(0.0);
    let start = t_end * (1.0 - thr.fit_window);
    let window: Vec<usize> = (0..summ.sample_times.len())
        .filter(|&i| summ.sample_times[i] >= start)
        .collect();
    let series = summ.mean_series();
    let (xs, ys): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter(|&&i| series[i].1 > 0.0)
        .map(|&i| (series[i].0, series[i].1.ln()))
        .unzip();
    let fit = linear_fit(&xs, &ys);
    let late: MeanVar = summ
        .total_mass
        .iter()
        .map(|r| {
            let vals: Vec<f64> = window.iter().filter_map(|&i| r.get(i).copied()).collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64 / summ.sites.max(1) as f64
        })
        .collect();
    let ev = Evidence {
        replicas: reps,
        extinct_fraction,
        occupied_fraction,
        slope: fit.map(|f| f.slope),
        slope_se: fit.map(|f| f.slope_std_err),
        late_density: late.mean(),
        late_density_se: late.std_err(),
    };
    let label = if extinct_fraction >= thr.extinct_fraction {
        Regime::Extinct
    } else if fit.is_some_and(|f| f.slope - thr.z * f.slope_std_err > thr.explode_slope) {
        Regime::ExplodingMean
    } else if summ.extended_start
        && fit.is_some_and(|f| (f.slope.abs() - thr.z * f.slope_std_err) <= thr.flat_band)
    {
        Regime::BoundedMean
    } else if occupied_fraction >= thr.occupied_fraction {
        Regime::Surviving
    } else {
        Regime::Unclassified
    };
    Ok((label, ev))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub name: String,
    pub profile: RateProfile<T>,
    pub start: Start,
    pub t_end: T,
    pub replicas: usize,
    pub sample_points: usize,
    pub seed: u64,
    pub expected: Option<Regime>,
    /// Run a contact-process pilot (`c` truncated at 1) first and report
    /// its survival fraction.
    pub pilot_cp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport<T> {
    pub scenario: String,
    pub label: Regime,
    pub expected: Option<Regime>,
    pub evidence: Evidence,
    pub profile: RateProfile<T>,
    pub start: Start,
    pub t_end: T,
    pub seed: u64,
    pub rho_hat: T,
    pub theta_hat: T,
    /// Moment bound on late occupancies when `c(+∞) < 1/θ̂`.
    pub u1: Option<T>,
    pub pilot_cp_survival: Option<f64>,
    pub series: Vec<(f64, f64, f64)>,
}

impl<T: Scalar> RegimeReport<T> {
    pub fn matches(&self) -> bool {
        self.expected.is_none_or(|e| e == self.label)
    }
}

impl<T: Scalar> fmt::Display for RegimeReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.evidence;
        write!(
            f,
            "{}: label={} expected={} extinct={:.3} occupied={:.3} slope={} late_density={:.4}±{:.4} rho_hat={:.4} theta_hat={:.4}",
            self.scenario,
            self.label,
            self.expected.map_or("-".to_string(), |r| r.to_string()),
            e.extinct_fraction,
            e.occupied_fraction,
            e.slope
                .map_or("-".to_string(), |s| format!("{s:.4}±{:.4}", e.slope_se.unwrap_or(0.0))),
            e.late_density,
            e.late_density_se,
            self.rho_hat,
            self.theta_hat
        )?;
        if let Some(u) = self.u1 {
            write!(f, " U1={u:.4}")?;
        }
        if let Some(p) = self.pilot_cp_survival {
            write!(f, " pilot_cp_survival={p:.3}")?;
        }
        Ok(())
    }
}

/// `ρ̂` and `θ̂` for the kernel. Finite stochastic kernels have `ρ = θ = 1`
/// exactly; the estimates are still returned for the record.
pub fn spectral_targets<T: Scalar>(kernel: &Kernel<T>, x0: usize) -> (T, T) {
    const N_MAX: usize = 40;
    let rho = rho_estimate(kernel, x0, N_MAX)
        .map(|e| e.extrapolated)
        .unwrap_or(T::one());
    let theta = theta_estimate(kernel, N_MAX)
        .or_else(|_| theta_estimate_unguarded(kernel, N_MAX))
        .map(|e| e.extrapolated)
        .unwrap_or(T::one());
    (rho, theta)
}

/// The four canonical scenarios targeting the critical values `1/ρ` and
/// `1/θ` (both 1 on a finite stochastic kernel):
///
/// 1. `c ≡ λ = 0.5/ρ` from `δ_{x0}`: extinct;
/// 2. `c = 8` below 3, `0.5/θ` from 3 on, from `δ_{x0}`: surviving;
/// 3. `c ≡ 2/ρ` from `δ_{x0}`: exploding mean;
/// 4. the profile of (2) from `𝟏`: bounded mean.
pub fn canonical_scenarios<T: Scalar>(x0: usize, rho: T, theta: T, seed: u64) -> Result<Vec<Scenario<T>>> {
    let step = RateProfile::step(T::lit(8.0), 3, T::lit(0.5) / theta)?;
    Ok(vec![
        Scenario {
            name: "i-subcritical-brw".into(),
            profile: RateProfile::constant(T::lit(0.5) / rho)?,
            start: Start::Delta(x0),
            t_end: T::lit(50.0),
            replicas: 200,
            sample_points: 50,
            seed,
            expected: Some(Regime::Extinct),
            pilot_cp: false,
        },
        Scenario {
            name: "ii-supercritical-cp".into(),
            profile: step.clone(),
            start: Start::Delta(x0),
            t_end: T::lit(40.0),
            replicas: 200,
            sample_points: 40,
            seed: seed.wrapping_add(1),
            expected: Some(Regime::Surviving),
            pilot_cp: true,
        },
        Scenario {
            name: "iii-supercritical-brw".into(),
            profile: RateProfile::constant(T::lit(2.0) / rho)?,
            start: Start::Delta(x0),
            t_end: T::lit(10.0),
            replicas: 200,
            sample_points: 40,
            seed: seed.wrapping_add(2),
            expected: Some(Regime::ExplodingMean),
            pilot_cp: false,
        },
        Scenario {
            name: "iv-bounded".into(),
            profile: step,
            start: Start::Constant(1),
            t_end: T::lit(20.0),
            replicas: 200,
            sample_points: 40,
            seed: seed.wrapping_add(3),
            expected: Some(Regime::BoundedMean),
            pilot_cp: false,
        },
    ])
}

pub fn run_scenario<T: Scalar>(
    kernel: &Kernel<T>,
    x0: usize,
    sc: &Scenario<T>,
    thr: &Thresholds,
    targets: (T, T),
) -> Result<RegimeReport<T>> {
    let n = kernel.len();
    let eta0 = sc.start.configuration(n);
    let params = SimParams::main_model(n, sc.profile.clone(), sc.t_end, sc.seed, uniform_grid(sc.t_end, sc.sample_points));
    let pilot_cp_survival = if sc.pilot_cp {
        let mut pilot = params.clone();
        pilot.profile = sc.profile.truncate(1)?;
        pilot.seed = sc.seed ^ 0x5eed;
        let trajs = run_replicas(kernel, &pilot, &eta0, sc.replicas)?;
        Some(trajs.iter().filter(|t| t.extinction_time.is_none()).count() as f64 / trajs.len() as f64)
    } else {
        None
    };
    let trajs = run_replicas(kernel, &params, &eta0, sc.replicas)?;
    let summ = RunSummaries::from_trajectories(&trajs, x0, sc.start);
    let (label, evidence) = classify_run(&summ, thr)?;
    let (rho_hat, theta_hat) = targets;
    let u1 = if sc.profile.tail() < T::one() / theta_hat {
        tightness_bound(kernel, &sc.profile, Some(theta_hat)).ok().map(|b| b.u1)
    } else {
        None
    };
    Ok(RegimeReport {
        scenario: sc.name.clone(),
        label,
        expected: sc.expected,
        evidence,
        profile: sc.profile.clone(),
        start: sc.start,
        t_end: sc.t_end,
        seed: sc.seed,
        rho_hat,
        theta_hat,
        u1,
        pilot_cp_survival,
        series: summ.mean_series(),
    })
}

/// Runs every scenario; the spectral values are estimated once.
pub fn regime_suite<T: Scalar>(
    kernel: &Kernel<T>,
    x0: usize,
    scenarios: &[Scenario<T>],
    thr: &Thresholds,
) -> Result<Vec<RegimeReport<T>>> {
    let targets = spectral_targets(kernel, x0);
    scenarios.iter().map(|sc| run_scenario(kernel, x0, sc, thr, targets)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeLevel {
    pub radius: usize,
    pub sites: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeReport {
    pub levels: Vec<VolumeLevel>,
    /// `|stat(Λ_{i+1}) - stat(Λ_i)|`.
    pub differences: Vec<f64>,
    /// Each difference is at most the previous one plus `z` combined SE.
    pub shrinking: bool,
    /// The two largest regions agree within `z` combined SE.
    pub top_agree: bool,
    /// Every successive difference has the same sign and exceeds `z` SE.
    pub systematic_drift: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeScenario<T> {
    pub profile: RateProfile<T>,
    pub start: Start,
    pub t: T,
    pub replicas: usize,
    pub seed: u64,
}

/// Mean occupancy of `x0` at time `t` for the dynamics restricted to balls
/// `B(x0, r)`, all levels driven by the same replica streams.
pub fn volume_convergence<T: Scalar>(
    kernel: &Kernel<T>,
    x0: usize,
    radii: &[usize],
    sc: &VolumeScenario<T>,
    z: f64,
) -> Result<VolumeReport> {
    if radii.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 ladder levels, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
    }
    if sc.replicas < 2 {
        return Err(Error::InsufficientReplicas {
            got: sc.replicas,
            needed: 2,
        });
    }
    let n = kernel.len();
    let mut levels = Vec::with_capacity(radii.len());
    let mut per_level: Vec<Vec<f64>> = Vec::with_capacity(radii.len());
    for &r in radii {
        let region = Region::ball(kernel.graph(), x0, r);
        let full = sc.start.configuration::<T>(n);
        let eta0 = Configuration::from_vec(
            (0..n)
                .map(|x| if region.contains(x) { full.get(x) } else { 0 })
                .collect(),
        );
        let params = SimParams {
            region: region.clone(),
            ..SimParams::main_model(n, sc.profile.clone(), sc.t, sc.seed, vec![])
        };
        use rayon::prelude::*;
        let values: Vec<f64> = (0..sc.replicas as u64)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                let mut sim = Simulation::new(kernel, &params, &eta0, replica_rng(sc.seed, rep))?;
                while sim.step_until(sc.t).is_some() {}
                Ok(sim.config().get(x0) as f64)
            })
            .collect::<Result<_>>()?;
        let mv: MeanVar = values.iter().copied().collect();
        levels.push(VolumeLevel {
            radius: r,
            sites: region.len(),
            mean: mv.mean(),
            se: mv.std_err(),
        });
        per_level.push(values);
    }
    // shared seeds make levels correlated: use the SE of paired differences
    let diff_se: Vec<f64> = per_level
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| b - a)
                .collect::<MeanVar>()
                .std_err()
        })
        .collect();
    let signed: Vec<f64> = levels.windows(2).map(|w| w[1].mean - w[0].mean).collect();
    let differences: Vec<f64> = signed.iter().map(|d| d.abs()).collect();
    let shrinking = (1..differences.len()).all(|i| {
        differences[i] <= differences[i - 1] + z * (diff_se[i].powi(2) + diff_se[i - 1].powi(2)).sqrt()
    });
    let last = differences.len() - 1;
    let top_agree = differences[last] <= z * diff_se[last];
    let systematic_drift = signed.iter().zip(&diff_se).all(|(d, s)| d.abs() > z * s)
        && (signed.iter().all(|&d| d > 0.0) || signed.iter().all(|&d| d < 0.0));
    Ok(VolumeReport {
        levels,
        differences,
        shrinking,
        top_agree,
        systematic_drift,
    })
}
