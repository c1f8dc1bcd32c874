use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use rbrw_core::coupling::{run_coupled, validate_spec, Component, CouplingRunParams, CouplingSpec};
use rbrw_core::experiments::{canonical_scenarios, regime_suite, spectral_targets, volume_convergence, Start, VolumeScenario};
use rbrw_core::graph::{Graph, Kernel, Region};
use rbrw_core::invariant_measure::{estimate_mu_n, mu_sequence_diagnostics, DiagnosticOptions, MuOptions};
use rbrw_core::io;
use rbrw_core::moments::MomentSystem;
use rbrw_core::rng::replica_rng;
use rbrw_core::simulate::{run_with_observer, uniform_grid, Configuration, SimParams, Simulation, Statistic};
use rbrw_core::spectral::{rho_estimate, theta_estimate, theta_estimate_unguarded, tree_closed_forms, TreeRadial};

use crate::config::{self, ExperimentConfig, GraphSpec, KernelSpec};
use crate::{CliError, Command};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn bad(e: rbrw_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects output files in memory and writes them in order.
struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> rbrw_core::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.put(name, &buf)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    outputs: &'a BTreeMap<String, String>,
}

/// What a finished command reports. `failure` is set when the run completed
/// but its own checks did not pass.
pub struct Outcome {
    pub out_dir: PathBuf,
    pub failure: Option<String>,
}

pub fn run(cmd: Command, config_text: &str, config_dir: &Path, cli_seed: Option<u64>, cli_out: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = config::parse(config_text)?;
    if let Some(c) = &cfg.command {
        if c != cmd.name() {
            return Err(invalid(format!("config is for `{c}`, not `{}`", cmd.name())));
        }
    }
    let seed = cfg.seed(cli_seed)?;
    let out_dir = cli_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.as_ref().map(|p| config_dir.join(p)))
        .ok_or_else(|| invalid("no output directory: set `out` in the config or pass --out"))?;
    let kernel = cfg.kernel(config_dir)?;

    let mut out = Outputs::new(&out_dir)?;
    let ctx = Ctx {
        cfg: &cfg,
        kernel: &kernel,
        seed,
    };
    let failure = match cmd {
        Command::Simulate => ctx.simulate(&mut out)?,
        Command::Couple => ctx.couple(&mut out)?,
        Command::Moments => ctx.moments(&mut out)?,
        Command::Spectral => ctx.spectral(&mut out)?,
        Command::Invariant => ctx.invariant(&mut out)?,
        Command::Phases => ctx.phases(&mut out)?,
        Command::Volumes => ctx.volumes(&mut out)?,
    };

    let files = out.files.clone();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        outputs: &files,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    out.put("manifest.json", &json)?;
    Ok(Outcome { out_dir, failure })
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    kernel: &'a Kernel<f64>,
    seed: u64,
}

fn section<'a, S>(s: &'a Option<S>, name: &str) -> Result<&'a S, CliError> {
    s.as_ref().ok_or_else(|| invalid(format!("missing `[{name}]` section")))
}

fn restrict_to(mut eta: Configuration<f64>, region: &Region) -> Configuration<f64> {
    for x in 0..eta.len() {
        while !region.contains(x) && eta.get(x) > 0 {
            eta.decrement(x);
        }
    }
    eta
}

fn graph_of(kernel: &Kernel<f64>) -> &Graph {
    kernel.graph()
}

impl Ctx<'_> {
    fn simulate(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = section(&self.cfg.simulate, "simulate")?;
        let graph = graph_of(self.kernel);
        let replicas = self.cfg.replicas()?;
        let region = config::region(graph, s.region_radius);
        let mut eta0 = s.start.resolve(graph)?.configuration::<f64>(graph.len());
        if !s.frozen_exterior {
            eta0 = restrict_to(eta0, &region);
        }
        let params = SimParams {
            gamma: s.gamma,
            floor: s.floor,
            region,
            profile: self.cfg.profile()?,
            t_end: s.t_end,
            seed: self.seed,
            sample_times: uniform_grid(s.t_end, s.sample_points),
            frozen_exterior: s.frozen_exterior,
            max_events: s.max_events,
        };
        Simulation::new(self.kernel, &params, &eta0, replica_rng(self.seed, 0)).map_err(bad)?;

        let runs = (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let mut log = Vec::new();
                let traj = run_with_observer(self.kernel, &params, &eta0, r, |ev, _| {
                    if s.event_log {
                        io::write_event(&mut log, r, ev).expect("event serialization into memory");
                    }
                })?;
                Ok((traj, log))
            })
            .collect::<rbrw_core::Result<Vec<_>>>()?;
        let (trajs, logs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
        let stats = [
            Statistic::TotalMass,
            Statistic::SiteMean,
            Statistic::ExtinctFlag,
            Statistic::OccupancyHistogram { sample: None },
        ];
        out.csv("trajectories.csv", |w| io::write_trajectory_summaries(&trajs, &stats, w))?;
        if s.event_log {
            out.put("events.jsonl", &logs.concat())?;
        }
        let extinct = trajs.iter().filter(|t| t.extinction_time.is_some()).count();
        let mean_final: f64 = trajs.iter().map(|t| t.final_config.iter().map(|&k| k as f64).sum::<f64>()).sum::<f64>() / replicas as f64;
        println!(
            "simulate: {replicas} replicas to t = {}; mean final total = {mean_final:.4}; extinct = {extinct}",
            s.t_end
        );
        let capped = trajs.iter().filter(|t| t.stopped_early).count();
        if capped > 0 {
            println!("simulate: {capped} replicas hit max_events before t_end");
        }
        Ok(None)
    }

    fn couple(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = section(&self.cfg.couple, "couple")?;
        let graph = graph_of(self.kernel);
        let replicas = self.cfg.replicas()?;
        let components = s
            .components
            .iter()
            .map(|c| {
                let region = config::region(graph, c.radius);
                let initial = restrict_to(c.start.resolve(graph)?.configuration(graph.len()), &region);
                Ok(Component {
                    region,
                    floor: c.floor,
                    gamma: c.gamma,
                    profile: c.profile.build()?,
                    initial,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let spec = CouplingSpec { components };
        if spec.components.is_empty() {
            return Err(invalid("`[[couple.components]]` is empty"));
        }
        let problems = validate_spec(&spec);
        if !problems.is_empty() {
            let list: Vec<String> = problems.iter().map(|v| v.to_string()).collect();
            return Err(invalid(format!("coupling is not monotone: {}", list.join("; "))));
        }
        let runs = (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let run = CouplingRunParams {
                    t_end: s.t_end,
                    seed: self.seed,
                    replica: r,
                    sample_times: uniform_grid(s.t_end, s.sample_points),
                    max_events: s.max_events,
                };
                run_coupled(self.kernel, &spec, &run)
            })
            .collect::<rbrw_core::Result<Vec<_>>>()?;
        let stats = [Statistic::TotalMass, Statistic::SiteMean];
        for h in 0..spec.components.len() {
            let trajs: Vec<_> = runs.iter().map(|r| r.trajectories[h].clone()).collect();
            out.csv(&format!("component_{}.csv", h + 1), |w| io::write_trajectory_summaries(&trajs, &stats, w))?;
        }
        let certs: Vec<_> = runs.iter().enumerate().map(|(r, run)| (r as u64, run.certificate.clone())).collect();
        out.csv("certificates.csv", |w| io::write_certificates(&certs, w))?;
        let dirty: Vec<_> = certs.iter().filter(|(_, c)| !c.is_clean()).collect();
        for (r, c) in &dirty {
            println!("replica {r}: {c}");
        }
        let events: u64 = certs.iter().map(|(_, c)| c.events).sum();
        println!(
            "couple: {} components, {replicas} replicas, {events} events, {} with ordering violations",
            spec.components.len(),
            dirty.len()
        );
        Ok((!dirty.is_empty()).then(|| format!("{} replicas violated the ordering", dirty.len())))
    }

    fn moments(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = section(&self.cfg.moments, "moments")?;
        let graph = graph_of(self.kernel);
        let region = config::region(graph, s.region_radius);
        let mut sys = MomentSystem::new(self.kernel, &region, s.lambda, s.gamma, s.floor).map_err(bad)?;
        if let Some(b) = s.pair_budget {
            sys = sys.with_pair_budget(b);
        }
        if s.steady && !sys.stable() {
            return Err(invalid(format!(
                "no steady state: gamma = {} does not exceed lambda * theta_hat = {}",
                s.gamma,
                s.lambda * sys.theta_hat()
            )));
        }
        // a delta start adds one mobile particle on top of the floor
        let eta0 = match s.start.resolve(graph)? {
            Start::Delta(x) => {
                let mut eta = Configuration::<f64>::constant(graph.len(), s.floor);
                eta.increment(x);
                eta
            }
            start => start.configuration(graph.len()),
        };
        let xi0 = sys.xi_from_occupancy(eta0.as_slice()).map_err(bad)?;
        let grid = uniform_grid(s.t_end, s.points);
        let vertices = sys.vertices().to_vec();
        if s.second {
            let path = sys.second_moment(&xi0, &grid)?;
            let first = rbrw_core::moments::MomentPath {
                times: path.times.clone(),
                values: path.m.clone(),
            };
            out.csv("first_moment.csv", |w| io::write_first_moment(&first, &vertices, w))?;
            out.csv("second_moment.csv", |w| io::write_second_moment(&path, &vertices, w))?;
            println!("moments: max asymmetry of C = {:e}", path.max_asymmetry());
        } else {
            let path = sys.first_moment(&xi0, &grid)?;
            out.csv("first_moment.csv", |w| io::write_first_moment(&path, &vertices, w))?;
        }
        if s.steady {
            if s.second {
                let ss = sys.steady_state()?;
                out.csv("steady_first.csv", |w| io::write_site_values(&vertices, &ss.m, "m", w))?;
                out.csv("steady_pair.csv", |w| io::write_pair_matrix(&vertices, &ss.c, w))?;
                println!("moments: steady state U1 = {:.6}, U2 = {:.6}, condition = {:.3e}", ss.u1, ss.u2, ss.condition);
            } else {
                let ss = sys.steady_first_moment()?;
                out.csv("steady_first.csv", |w| io::write_site_values(&vertices, &ss.m, "m", w))?;
                println!("moments: steady state U1 = {:.6}, condition = {:.3e}", ss.u1, ss.condition);
            }
        }
        println!("moments: |region| = {}, theta_hat = {:.6}, stable = {}", sys.len(), sys.theta_hat(), sys.stable());
        Ok(None)
    }

    /// Biased trees use the radial reduction of the infinite tree, so
    /// `n_max` is not limited by the depth of the stored graph.
    fn spectral(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = section(&self.cfg.spectral, "spectral")?;
        let graph = graph_of(self.kernel);
        let x = config::site(graph, s.site)?;
        let (theta, rho) = match (&self.cfg.graph, &self.cfg.kernel) {
            (GraphSpec::Tree { branching, .. }, KernelSpec::BiasedTree { p }) => {
                let radial = TreeRadial::new(*branching, *p).map_err(bad)?;
                let cf = tree_closed_forms(*branching, *p)?;
                println!("spectral: closed forms rho = {:.6}, theta in [{:.6}, {:.6}]", cf.rho, cf.theta_lo, cf.theta_hi);
                (radial.theta_estimate(s.n_max)?, radial.rho_estimate(s.n_max)?)
            }
            _ => (
                theta_estimate(self.kernel, s.n_max).or_else(|_| theta_estimate_unguarded(self.kernel, s.n_max))?,
                rho_estimate(self.kernel, x, s.n_max)?,
            ),
        };
        out.csv("theta.csv", |w| io::write_spectral(&theta, w))?;
        out.csv("rho.csv", |w| io::write_spectral(&rho, w))?;
        println!("spectral: theta_hat = {:.6}, rho_hat = {:.6} (n_max = {})", theta.extrapolated, rho.extrapolated, s.n_max);
        Ok(None)
    }

    fn invariant(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = section(&self.cfg.invariant, "invariant")?;
        let replicas = self.cfg.replicas()?;
        let profile = self.cfg.profile()?;
        if s.levels.is_empty() || s.levels.contains(&0) {
            return Err(invalid("`levels` must be a nonempty list of positive integers"));
        }
        let opts = MuOptions {
            t_burn: s.t_burn,
            t_sample: s.t_sample,
            replicas,
            seed: self.seed,
        };
        let mut levels = s.levels.clone();
        levels.sort_unstable();
        levels.dedup();
        let estimates = levels
            .iter()
            .map(|&n| estimate_mu_n(self.kernel, &profile, n, &opts))
            .collect::<rbrw_core::Result<Vec<_>>>()?;
        for e in &estimates {
            out.csv(&format!("mu_{}.csv", e.n), |w| io::write_mu_histogram(e, w))?;
            println!("invariant: n = {}, pooled mean = {:.5} ± {:.5}", e.n, e.pooled_mean, e.pooled_se);
        }
        if estimates.len() < 2 {
            return Ok(None);
        }
        let mut dopts = DiagnosticOptions::default();
        if let Some(r) = &s.chebyshev_r {
            dopts.chebyshev_r = r.clone();
        }
        if let Some(z) = s.z {
            dopts.z = z;
        }
        let report = mu_sequence_diagnostics(self.kernel, &estimates, &dopts)?;
        print!("{report}");
        out.put("mu_report.txt", report.to_string().as_bytes())?;
        Ok((!report.passed()).then(|| "mu_n diagnostics failed".to_string()))
    }

    fn phases(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = self.cfg.phases.clone().unwrap_or_default();
        let graph = graph_of(self.kernel);
        let x0 = config::site(graph, s.site)?;
        let finite_stochastic = self.kernel.lossy_vertices().is_empty();
        let (rho, theta) = if finite_stochastic {
            (1.0, 1.0)
        } else {
            spectral_targets(self.kernel, x0)
        };
        let mut scenarios = canonical_scenarios(x0, rho, theta, self.seed)?;
        if let Some(r) = s.replicas {
            for sc in &mut scenarios {
                sc.replicas = r;
            }
        }
        let reports = regime_suite(self.kernel, x0, &scenarios, &s.thresholds.resolve())?;
        out.csv("regime_evidence.csv", |w| io::write_regime_evidence(&reports, w))?;
        let text: String = reports.iter().map(|r| format!("{r}\n")).collect();
        print!("{text}");
        out.put("regimes.txt", text.as_bytes())?;
        let wrong = reports.iter().filter(|r| !r.matches()).count();
        Ok((wrong > 0).then(|| format!("{wrong} scenarios mislabelled")))
    }

    fn volumes(&self, out: &mut Outputs) -> Result<Option<String>, CliError> {
        let s = section(&self.cfg.volumes, "volumes")?;
        let graph = graph_of(self.kernel);
        let x0 = config::site(graph, s.site)?;
        let sc = VolumeScenario {
            profile: self.cfg.profile()?,
            start: s.start.resolve(graph)?,
            t: s.t,
            replicas: self.cfg.replicas()?,
            seed: self.seed,
        };
        let report = volume_convergence(self.kernel, x0, &s.radii, &sc, s.z.unwrap_or(3.0)).map_err(|e| match e {
            rbrw_core::Error::InvalidParameter(_) | rbrw_core::Error::InsufficientReplicas { .. } => bad(e),
            e => e.into(),
        })?;
        out.csv("volumes.csv", |w| io::write_volume_report(&report, w))?;
        for l in &report.levels {
            println!("volumes: r = {:>3} |B| = {:>6} mean = {:.5} ± {:.5}", l.radius, l.sites, l.mean, l.se);
        }
        println!(
            "volumes: shrinking = {}, top two agree = {}, systematic drift = {}",
            report.shrinking, report.top_agree, report.systematic_drift
        );
        Ok(None)
    }
}
