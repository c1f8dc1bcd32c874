//! Stationary measures `μ_n` of the truncated dynamics `c_n = c·𝟙_{[0,n-1]}`
//! (main model, `γ = 1`, no floor) started from the ceiling `n𝟏`, estimated
//! by time averages over independent replicas, plus the diagnostics expected
//! of the sequence `(μ_n)`: stochastic monotonicity in `n`, a uniform moment
//! bound and the resulting Chebyshev tails.

use std::fmt;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::{Family, Kernel, Region};
use crate::moments::MomentSystem;
use crate::profiles::RateProfile;
use crate::rng::replica_rng;
use crate::scalar::Scalar;
use crate::simulate::{Configuration, EventKind, SimParams, Simulation};
use crate::spectral::{theta_estimate, theta_estimate_unguarded};
use crate::stats::MeanVar;

#[derive(Debug, Clone, PartialEq)]
pub struct MuOptions<T> {
    /// Defaults to `10 n`.
    pub t_burn: Option<T>,
    pub t_sample: T,
    pub replicas: usize,
    pub seed: u64,
}

/// Per-replica time averages over one window.
#[derive(Debug, Clone, PartialEq)]
struct ReplicaStats {
    /// `hist[x][j]`: fraction of the window with `η(x) = j`.
    hist: Vec<Vec<f64>>,
    half_means: [f64; 2],
    max_occupancy: u32,
    cap_violations: u64,
    events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuEstimate<T> {
    pub n: u32,
    pub t_burn: T,
    pub t_sample: T,
    pub seed: u64,
    pub replicas: usize,
    pub profile: RateProfile<T>,
    pub family: Family,
    /// Time-and-replica averaged `P(η(x) = j)`, indexed `[x][j]`.
    pub site_hist: Vec<Vec<f64>>,
    pub site_means: Vec<f64>,
    /// Standard error of one site mean, from the across-replica variance
    /// pooled over sites.
    pub site_se: f64,
    /// Site-averaged histogram.
    pub pooled_hist: Vec<f64>,
    pub pooled_mean: f64,
    pub pooled_se: f64,
    /// Per-replica site-averaged CDFs, used for error bands.
    replica_cdfs: Vec<Vec<f64>>,
    /// Mean over replicas of (second half - first half) pooled means.
    pub half_difference: f64,
    pub half_difference_se: f64,
    pub max_occupancy: u32,
    pub cap_violations: u64,
    pub events: u64,
    pub warnings: Vec<String>,
}

impl<T: Scalar> MuEstimate<T> {
    pub fn sites(&self) -> usize {
        self.site_means.len()
    }

    /// Empirical `P(η(x) > r)`.
    pub fn tail(&self, x: usize, r: u32) -> f64 {
        self.site_hist[x].iter().skip(r as usize + 1).sum()
    }

    /// Site-averaged empirical CDF `F(j) = P(η ≤ j)`.
    pub fn pooled_cdf(&self) -> Vec<f64> {
        cumulative(&self.pooled_hist)
    }

    fn cdf_se(&self, j: usize) -> f64 {
        self.replica_cdfs
            .iter()
            .map(|c| c.get(j).copied().unwrap_or(1.0))
            .collect::<MeanVar>()
            .std_err()
    }
}

fn cumulative(h: &[f64]) -> Vec<f64> {
    h.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Runs the `c_n` dynamics on the whole graph from `n𝟏` and time-averages
/// the occupancies over `[t_burn, t_burn + t_sample]`.
pub fn estimate_mu_n<T: Scalar>(
    kernel: &Kernel<T>,
    profile: &RateProfile<T>,
    n: u32,
    opts: &MuOptions<T>,
) -> Result<MuEstimate<T>> {
    if !(opts.t_sample > T::zero()) || !opts.t_sample.is_finite() {
        return Err(Error::InvalidParameter(format!("t_sample must be positive, got {}", opts.t_sample)));
    }
    if opts.replicas < 2 {
        return Err(Error::InsufficientReplicas {
            got: opts.replicas,
            needed: 2,
        });
    }
    let t_burn = opts.t_burn.unwrap_or(T::from_count(10 * n as u64));
    if !(t_burn >= T::zero()) || !t_burn.is_finite() {
        return Err(Error::InvalidParameter(format!("t_burn must be nonnegative, got {t_burn}")));
    }
    let truncated = profile.truncate(n)?;
    let sites = kernel.len();
    let t_mid = t_burn + opts.t_sample / T::lit(2.0);
    let t_end = t_burn + opts.t_sample;
    let params = SimParams {
        gamma: T::one(),
        floor: 0,
        region: Region::all(sites),
        profile: truncated.clone(),
        t_end,
        seed: opts.seed,
        sample_times: vec![],
        frozen_exterior: false,
        max_events: None,
    };
    let eta0 = Configuration::constant(sites, n);

    let per_replica: Vec<ReplicaStats> = (0..opts.replicas as u64)
        .into_par_iter()
        .map(|r| run_window(kernel, &params, &eta0, n, r, [t_burn, t_mid, t_end]))
        .collect::<Result<_>>()?;

    let width = per_replica
        .iter()
        .flat_map(|s| s.hist.iter().map(Vec::len))
        .max()
        .unwrap_or(1);
    let reps = per_replica.len() as f64;
    let mut site_hist = vec![vec![0.0; width]; sites];
    for s in &per_replica {
        for (acc, h) in site_hist.iter_mut().zip(&s.hist) {
            for (a, &p) in acc.iter_mut().zip(h) {
                *a += p / reps;
            }
        }
    }
    let mean_of = |h: &[f64]| h.iter().enumerate().map(|(j, &p)| j as f64 * p).sum::<f64>();
    let site_means: Vec<f64> = site_hist.iter().map(|h| mean_of(h)).collect();
    // across-replica variance of each site mean, pooled over sites
    let pooled_var = (0..sites)
        .map(|x| {
            per_replica
                .iter()
                .map(|s| mean_of(&s.hist[x]))
                .collect::<MeanVar>()
                .variance()
        })
        .sum::<f64>()
        / sites as f64;
    let site_se = (pooled_var / reps).sqrt();

    let pooled_of = |hist: &[Vec<f64>]| -> Vec<f64> {
        let mut out = vec![0.0; width];
        for h in hist {
            for (o, &p) in out.iter_mut().zip(h) {
                *o += p / sites as f64;
            }
        }
        out
    };
    let pooled_hist = pooled_of(&site_hist);
    let replica_pooled: Vec<Vec<f64>> = per_replica.iter().map(|s| pooled_of(&s.hist)).collect();
    let pooled_stats: MeanVar = replica_pooled.iter().map(|h| mean_of(h)).collect();
    let halves: MeanVar = per_replica.iter().map(|s| s.half_means[1] - s.half_means[0]).collect();

    let mut warnings = Vec::new();
    if profile.lambda() <= T::one() {
        warnings.push(format!(
            "c(0) = {} <= 1: the truncated dynamics may die out",
            profile.lambda()
        ));
    }
    if profile.tail() >= T::one() {
        warnings.push(format!("c(+inf) = {} >= 1: occupancies may be unbounded in n", profile.tail()));
    }

    Ok(MuEstimate {
        n,
        t_burn,
        t_sample: opts.t_sample,
        seed: opts.seed,
        replicas: opts.replicas,
        profile: profile.clone(),
        family: kernel.graph().family(),
        site_hist,
        site_means,
        site_se,
        pooled_mean: pooled_stats.mean(),
        pooled_se: pooled_stats.std_err(),
        pooled_hist,
        replica_cdfs: replica_pooled.iter().map(|h| cumulative(h)).collect(),
        half_difference: halves.mean(),
        half_difference_se: halves.std_err(),
        max_occupancy: per_replica.iter().map(|s| s.max_occupancy).max().unwrap_or(0),
        cap_violations: per_replica.iter().map(|s| s.cap_violations).sum(),
        events: per_replica.iter().map(|s| s.events).sum(),
        warnings,
    })
}

fn run_window<T: Scalar>(
    kernel: &Kernel<T>,
    params: &SimParams<T>,
    eta0: &Configuration<T>,
    cap: u32,
    replica: u64,
    [t_burn, t_mid, t_end]: [T; 3],
) -> Result<ReplicaStats> {
    let sites = kernel.len();
    let mut sim = Simulation::new(kernel, params, eta0, replica_rng(params.seed, replica))?;
    let mut cap_violations = 0u64;
    let changed = |ev: &crate::simulate::Event<T>| -> Option<usize> {
        if !ev.accepted {
            return None;
        }
        match ev.kind {
            EventKind::Death => Some(ev.site),
            EventKind::Birth => ev.target,
        }
    };
    let check_cap = |sim: &Simulation<T>, x: usize, violations: &mut u64| {
        if sim.config().get(x) > cap {
            *violations += 1;
        }
    };
    while let Some(ev) = sim.step_until(t_burn) {
        if let Some(x) = changed(&ev) {
            check_cap(&sim, x, &mut cap_violations);
        }
    }
    let width = cap as usize + 1;
    let mut time_at: Vec<Vec<f64>> = vec![vec![0.0; width]; sites];
    let mut occupancy_time = [0.0f64; 2];
    let mut last = vec![t_burn.as_f64(); sites];
    let window = (t_end - t_burn).as_f64();
    for (half, horizon) in [t_mid, t_end].into_iter().enumerate() {
        let mut credit = |x: usize, occ: u32, now: f64, last: &mut [f64], time_at: &mut [Vec<f64>]| {
            let dt = now - last[x];
            let row = &mut time_at[x];
            if row.len() <= occ as usize {
                row.resize(occ as usize + 1, 0.0);
            }
            row[occ as usize] += dt;
            occupancy_time[half] += occ as f64 * dt;
            last[x] = now;
        };
        while let Some(ev) = sim.step_until(horizon) {
            if let Some(x) = changed(&ev) {
                let now = ev.time.as_f64();
                let after = sim.config().get(x);
                let before = match ev.kind {
                    EventKind::Death => after + 1,
                    EventKind::Birth => after - 1,
                };
                credit(x, before, now, &mut last, &mut time_at);
                check_cap(&sim, x, &mut cap_violations);
            }
        }
        let now = horizon.as_f64();
        for x in 0..sites {
            credit(x, sim.config().get(x), now, &mut last, &mut time_at);
        }
    }
    let half_len = window / 2.0 * sites as f64;
    Ok(ReplicaStats {
        hist: time_at
            .into_iter()
            .map(|row| row.into_iter().map(|t| t / window).collect())
            .collect(),
        half_means: [occupancy_time[0] / half_len, occupancy_time[1] / half_len],
        max_occupancy: sim.max_occupancy(),
        cap_violations,
        events: sim.events(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// `U₁` of the dominating immortal-particle BRW: `k̄ = min{k : c(k) < 1/θ̂}`,
/// birth rate `c(k̄)`, `γ = 1`, floor `k̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessBound<T> {
    pub theta_hat: T,
    pub k_bar: u32,
    pub rate: T,
    pub u1: T,
}

pub fn tightness_bound<T: Scalar>(
    kernel: &Kernel<T>,
    profile: &RateProfile<T>,
    theta_hat: Option<T>,
) -> Result<TightnessBound<T>> {
    let theta_hat = match theta_hat {
        Some(t) => t,
        None => default_theta(kernel)?,
    };
    let k_bar = profile
        .first_below(T::one() / theta_hat)
        .ok_or_else(|| Error::InvalidParameter(format!("c(+inf) >= 1/theta = {}", T::one() / theta_hat)))?;
    let rate = profile.rate(k_bar);
    let u1 = if rate == T::zero() {
        T::from_count(k_bar as u64)
    } else {
        MomentSystem::new(kernel, &Region::all(kernel.len()), rate, T::one(), k_bar)?
            .steady_first_moment()?
            .u1
    };
    Ok(TightnessBound {
        theta_hat,
        k_bar,
        rate,
        u1,
    })
}

fn default_theta<T: Scalar>(kernel: &Kernel<T>) -> Result<T> {
    const N_MAX: usize = 40;
    match theta_estimate(kernel, N_MAX) {
        Ok(e) => Ok(e.extrapolated),
        Err(Error::TruncationTooShallow(_)) => Ok(theta_estimate_unguarded(kernel, N_MAX)?.extrapolated),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticOptions<T> {
    pub theta_hat: Option<T>,
    pub chebyshev_r: Vec<u32>,
    /// Error-band width in standard errors.
    pub z: f64,
}

impl<T> Default for DiagnosticOptions<T> {
    fn default() -> Self {
        Self {
            theta_hat: None,
            chebyshev_r: vec![5, 10, 20],
            z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuReport<T> {
    pub levels: Vec<u32>,
    pub bound: TightnessBound<T>,
    pub checks: Vec<DiagnosticCheck>,
}

impl<T> MuReport<T> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&DiagnosticCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl<T: Scalar> fmt::Display for MuReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mu_n diagnostics for n = {:?} (theta_hat = {}, k_bar = {}, U1 = {})",
            self.levels, self.bound.theta_hat, self.bound.k_bar, self.bound.u1
        )?;
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Checks a sequence of estimates (sorted by `n` internally) made on the
/// same kernel and profile.
pub fn mu_sequence_diagnostics<T: Scalar>(
    kernel: &Kernel<T>,
    estimates: &[MuEstimate<T>],
    opts: &DiagnosticOptions<T>,
) -> Result<MuReport<T>> {
    if estimates.len() < 2 {
        return Err(Error::InvalidParameter("need at least two estimates".into()));
    }
    let first = &estimates[0];
    for e in estimates {
        if e.profile != first.profile || e.sites() != first.sites() || e.family != first.family {
            return Err(Error::Mismatch("estimates come from different graphs or profiles".into()));
        }
    }
    if first.sites() != kernel.len() {
        return Err(Error::Mismatch("estimates and kernel sizes differ".into()));
    }
    let mut sorted: Vec<&MuEstimate<T>> = estimates.iter().collect();
    sorted.sort_by_key(|e| e.n);
    let bound = tightness_bound(kernel, &first.profile, opts.theta_hat)?;
    let u1 = bound.u1.as_f64();
    let z = opts.z;
    let mut checks = Vec::new();

    // (a) monotone site means
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0usize;
    for w in sorted.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let band = z * (lo.site_se.powi(2) + hi.site_se.powi(2)).sqrt();
        for x in 0..lo.sites() {
            let excess = lo.site_means[x] - hi.site_means[x] - band;
            worst = worst.max(excess);
            if excess > 0.0 {
                failures += 1;
            }
        }
    }
    checks.push(DiagnosticCheck {
        name: "monotone-means".into(),
        passed: failures == 0,
        detail: format!("{failures} site comparisons exceed {z} pooled SE (worst excess {worst:.4})"),
    });

    // (a') stochastic order of the site-averaged laws
    let mut failures = 0usize;
    for w in sorted.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (f_lo, f_hi) = (lo.pooled_cdf(), hi.pooled_cdf());
        let len = f_lo.len().max(f_hi.len());
        for j in 0..len {
            let a = f_lo.get(j).copied().unwrap_or(1.0);
            let b = f_hi.get(j).copied().unwrap_or(1.0);
            let band = z * (lo.cdf_se(j).powi(2) + hi.cdf_se(j).powi(2)).sqrt();
            if b > a + band {
                failures += 1;
            }
        }
    }
    checks.push(DiagnosticCheck {
        name: "cdf-order".into(),
        passed: failures == 0,
        detail: format!("{failures} CDF levels out of order beyond {z} SE"),
    });

    // (b) tightness
    let sup = sorted
        .iter()
        .flat_map(|e| e.site_means.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(DiagnosticCheck {
        name: "tightness".into(),
        passed: sup <= u1,
        detail: format!("sup_n max_x mean = {sup:.4} vs U1 = {u1:.4}"),
    });

    // (c) Chebyshev tails
    let mut detail = Vec::new();
    let mut ok = true;
    for &r in &opts.chebyshev_r {
        let tail = sorted
            .iter()
            .flat_map(|e| (0..e.sites()).map(move |x| e.tail(x, r)))
            .fold(0.0, f64::max);
        let limit = u1 / r as f64;
        ok &= tail <= limit;
        detail.push(format!("r={r}: {tail:.2e} <= {limit:.3}"));
    }
    checks.push(DiagnosticCheck {
        name: "chebyshev".into(),
        passed: ok,
        detail: detail.join(", "),
    });

    // stationarity of the sampling window
    let mut bad = Vec::new();
    for e in &sorted {
        if e.half_difference.abs() > z * e.half_difference_se {
            bad.push(e.n);
        }
    }
    checks.push(DiagnosticCheck {
        name: "stationarity".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "window halves agree for every n".into()
        } else {
            format!("window halves differ for n = {bad:?}")
        },
    });

    // translation invariance on tori
    if matches!(first.family, Family::LatticeTorus { .. }) {
        // family-wise level of a single z-SE two-sided test
        let alpha = 2.0 * (1.0 - Normal::standard().cdf(z));
        let z_site = Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * first.sites() as f64));
        let mut bad = Vec::new();
        for e in &sorted {
            let avg = e.site_means.iter().sum::<f64>() / e.sites() as f64;
            let spread = e.site_means.iter().map(|m| (m - avg).abs()).fold(0.0, f64::max);
            if spread > z_site * e.site_se {
                bad.push(e.n);
            }
        }
        checks.push(DiagnosticCheck {
            name: "symmetry".into(),
            passed: bad.is_empty(),
            detail: if bad.is_empty() {
                format!("site means agree within {z_site:.2} SE")
            } else {
                format!("site means spread beyond {z_site:.2} SE for n = {bad:?}")
            },
        });
    }

    Ok(MuReport {
        levels: sorted.iter().map(|e| e.n).collect(),
        bound,
        checks,
    })
}
