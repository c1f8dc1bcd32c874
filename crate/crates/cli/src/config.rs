//! TOML experiment configuration.
//!
//! Physical parameters (`gamma`, `floor`, `lambda`) have no defaults; only
//! tolerances and output switches do. A configuration without a seed is
//! rejected unless `--seed` is given.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use rbrw_core::experiments::{Start, Thresholds};
use rbrw_core::graph::{Graph, Kernel, KernelKind, Region};
use rbrw_core::profiles::RateProfile;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
    /// If present, must name the subcommand being run.
    pub command: Option<String>,
    pub graph: GraphSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub profile: Option<ProfileSpec>,
    pub simulate: Option<SimulateSection>,
    pub couple: Option<CoupleSection>,
    pub moments: Option<MomentsSection>,
    pub spectral: Option<SpectralSection>,
    pub invariant: Option<InvariantSection>,
    pub phases: Option<PhasesSection>,
    pub volumes: Option<VolumesSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    Torus { dim: usize, side: usize },
    Box { dim: usize, side: usize },
    Tree { branching: usize, depth: usize },
    /// `src,dst,weight` CSV, resolved relative to the config file. The
    /// weights are the kernel; `[kernel]` must be left at `simple`.
    Edges { path: PathBuf, root: usize },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Simple,
    BiasedTree { p: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Constant,
    Contact,
    /// `lambda` below `threshold`, `tail` from `threshold` on.
    Step,
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    pub lambda: Option<f64>,
    pub table: Option<Vec<f64>>,
    pub tail: Option<f64>,
    pub threshold: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSpec {
    /// One particle at `site` (default: the graph root).
    Delta { site: Option<usize> },
    Constant { k: u32 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub t_end: f64,
    pub gamma: f64,
    pub floor: u32,
    pub sample_points: usize,
    pub start: StartSpec,
    /// Restrict to the ball of this radius around the root.
    pub region_radius: Option<usize>,
    #[serde(default)]
    pub frozen_exterior: bool,
    #[serde(default)]
    pub event_log: bool,
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    pub t_end: f64,
    pub sample_points: usize,
    pub max_events: Option<u64>,
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    /// Ball radius around the root; absent means the whole graph.
    pub radius: Option<usize>,
    pub floor: u32,
    pub gamma: f64,
    pub profile: ProfileSpec,
    pub start: StartSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub lambda: f64,
    pub gamma: f64,
    pub floor: u32,
    pub region_radius: Option<usize>,
    pub t_end: f64,
    pub points: usize,
    pub start: StartSpec,
    #[serde(default)]
    pub second: bool,
    #[serde(default)]
    pub steady: bool,
    pub pair_budget: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub n_max: usize,
    pub site: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSection {
    pub levels: Vec<u32>,
    pub t_burn: Option<f64>,
    pub t_sample: f64,
    pub chebyshev_r: Option<Vec<u32>>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasesSection {
    pub site: Option<usize>,
    /// Overrides the per-scenario replica count.
    pub replicas: Option<usize>,
    #[serde(default)]
    pub thresholds: ThresholdOverrides,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdOverrides {
    pub extinct_fraction: Option<f64>,
    pub explode_slope: Option<f64>,
    pub z: Option<f64>,
    pub flat_band: Option<f64>,
    pub occupied_fraction: Option<f64>,
    pub fit_window: Option<f64>,
    pub min_replicas: Option<usize>,
}

impl ThresholdOverrides {
    pub fn resolve(&self) -> Thresholds {
        let d = Thresholds::default();
        Thresholds {
            extinct_fraction: self.extinct_fraction.unwrap_or(d.extinct_fraction),
            explode_slope: self.explode_slope.unwrap_or(d.explode_slope),
            z: self.z.unwrap_or(d.z),
            flat_band: self.flat_band.unwrap_or(d.flat_band),
            occupied_fraction: self.occupied_fraction.unwrap_or(d.occupied_fraction),
            fit_window: self.fit_window.unwrap_or(d.fit_window),
            min_replicas: self.min_replicas.unwrap_or(d.min_replicas),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumesSection {
    pub radii: Vec<usize>,
    pub t: f64,
    pub start: StartSpec,
    pub site: Option<usize>,
    pub z: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn bad(e: rbrw_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

/// Syntax errors are parse errors; schema mismatches (missing or unknown
/// fields, wrong types) are validation errors.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
    toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))
}

impl ExperimentConfig {
    pub fn seed(&self, cli_seed: Option<u64>) -> Result<u64, CliError> {
        cli_seed
            .or(self.seed)
            .ok_or_else(|| invalid("no seed: set `seed` in the config or pass --seed"))
    }

    pub fn replicas(&self) -> Result<usize, CliError> {
        match self.replicas {
            Some(0) => Err(invalid("`replicas` must be positive")),
            Some(r) => Ok(r),
            None => Err(invalid("`replicas` is required for this command")),
        }
    }

    pub fn profile(&self) -> Result<RateProfile<f64>, CliError> {
        self.profile
            .as_ref()
            .ok_or_else(|| invalid("`[profile]` is required for this command"))?
            .build()
    }

    pub fn kernel(&self, base_dir: &Path) -> Result<Kernel<f64>, CliError> {
        match &self.graph {
            GraphSpec::Edges { path, root } => {
                if !matches!(self.kernel, KernelSpec::Simple) {
                    return Err(invalid("an edge-list graph carries its own weights; drop `[kernel]`"));
                }
                let file = std::fs::File::open(base_dir.join(path))
                    .map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))?;
                rbrw_core::io::read_kernel_edges(file, *root).map_err(bad)
            }
            spec => {
                let graph = Arc::new(match *spec {
                    GraphSpec::Torus { dim, side } => Graph::lattice_torus(dim, side).map_err(bad)?,
                    GraphSpec::Box { dim, side } => Graph::lattice_box(dim, side).map_err(bad)?,
                    GraphSpec::Tree { branching, depth } => Graph::tree(branching, depth).map_err(bad)?,
                    GraphSpec::Edges { .. } => unreachable!(),
                });
                let kind = match self.kernel {
                    KernelSpec::Simple => KernelKind::Simple,
                    KernelSpec::BiasedTree { p } => KernelKind::BiasedTree { p },
                };
                Kernel::build(graph, kind).map_err(bad)
            }
        }
    }
}

impl ProfileSpec {
    pub fn build(&self) -> Result<RateProfile<f64>, CliError> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| invalid(format!("profile field `{name}` is required")));
        let p = match self.kind {
            ProfileKind::Constant => RateProfile::constant(need(self.lambda, "lambda")?).map_err(bad)?,
            ProfileKind::Contact => RateProfile::contact(need(self.lambda, "lambda")?).map_err(bad)?,
            ProfileKind::Step => {
                let threshold = self.threshold.ok_or_else(|| invalid("profile field `threshold` is required"))?;
                RateProfile::step(need(self.lambda, "lambda")?, threshold, need(self.tail, "tail")?).map_err(bad)?
            }
            ProfileKind::Table => {
                let table = self.table.clone().ok_or_else(|| invalid("profile field `table` is required"))?;
                let p = RateProfile::from_table(table, need(self.tail, "tail")?).map_err(bad)?;
                if let Some(l) = self.lambda {
                    if l != p.lambda() {
                        return Err(invalid(format!("`lambda` = {l} disagrees with table[0] = {}", p.lambda())));
                    }
                }
                p
            }
        };
        Ok(p)
    }
}

impl StartSpec {
    pub fn resolve(&self, graph: &Graph) -> Result<Start, CliError> {
        match *self {
            StartSpec::Delta { site } => {
                let x = site.unwrap_or(graph.root());
                if x >= graph.len() {
                    return Err(invalid(format!("start site {x} is not a vertex")));
                }
                Ok(Start::Delta(x))
            }
            StartSpec::Constant { k } => Ok(Start::Constant(k)),
        }
    }
}

pub fn region(graph: &Graph, radius: Option<usize>) -> Region {
    match radius {
        Some(r) => Region::ball(graph, graph.root(), r),
        None => Region::all(graph.len()),
    }
}

pub fn site(graph: &Graph, site: Option<usize>) -> Result<usize, CliError> {
    let x = site.unwrap_or(graph.root());
    if x >= graph.len() {
        return Err(invalid(format!("site {x} is not a vertex")));
    }
    Ok(x)
}
