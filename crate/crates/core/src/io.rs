//! CSV and JSON-lines output. Every CSV starts with a fixed header row:
//!
//! | file            | header                                         |
//! |-----------------|------------------------------------------------|
//! | kernel edges    | `src,dst,weight`                               |
//! | trajectories    | `time,statistic,value,replica,seed`            |
//! | spectral        | `n,value,root_estimate,ratio_estimate`         |
//! | first moment    | `t,x,m`                                        |
//! | second moment   | `t,x,y,C`                                      |
//! | steady first    | `x,m`                                          |
//! | steady pair     | `x,y,C`                                        |
//! | `μ_n` histogram | `site,occupancy,frequency`                     |
//! | regime evidence | `scenario,time,mean_total_mass,std_err`        |
//! | volume ladder   | `radius,sites,mean,std_err`                    |
//! | certificates    | `replica,events,checks,violations,threshold_inversions` |
//!
//! Missing optional values are written as empty fields. Events are written
//! one JSON object per line.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::coupling::Certificate;
use crate::error::{Error, Result};
use crate::experiments::{RegimeReport, VolumeReport};
use crate::graph::{Graph, Kernel};
use crate::invariant_measure::MuEstimate;
use crate::moments::{MomentPath, SecondMomentPath};
use crate::scalar::Scalar;
use crate::simulate::{summarize, Event, Statistic, Trajectory};
use crate::spectral::SpectralEstimate;

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_kernel_edges<T: Scalar, W: Write>(kernel: &Kernel<T>, w: W) -> Result<()> {
    let mut out = writer(w, &["src", "dst", "weight"])?;
    for (x, y, p) in kernel.edges() {
        out.write_record([x.to_string(), y.to_string(), p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `src,dst,weight` edge list into a custom graph and kernel. The
/// graph gets an undirected edge wherever either direction has positive
/// weight; `root` becomes the distance origin.
pub fn read_kernel_edges<T: Scalar, R: std::io::Read>(r: R, root: usize) -> Result<Kernel<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["src", "dst", "weight"] {
        return Err(Error::Io(format!("unexpected edge-list header {headers:?}")));
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| rec.get(i).ok_or_else(|| Error::Io("short edge record".into()));
        let x: usize = parse(0)?.trim().parse().map_err(|e| Error::Io(format!("src: {e}")))?;
        let y: usize = parse(1)?.trim().parse().map_err(|e| Error::Io(format!("dst: {e}")))?;
        let w: f64 = parse(2)?.trim().parse().map_err(|e| Error::Io(format!("weight: {e}")))?;
        entries.push((x, y, w));
    }
    let v = entries.iter().map(|&(x, y, _)| x.max(y) + 1).max().unwrap_or(0);
    let edges: Vec<(usize, usize)> = entries
        .iter()
        .filter(|&&(_, _, w)| w > 0.0)
        .map(|&(x, y, _)| (x, y))
        .collect();
    let graph = std::sync::Arc::new(Graph::from_edges(v, &edges, root)?);
    let mut rows = vec![Vec::new(); v];
    for (x, y, w) in entries {
        if w > 0.0 {
            rows[x].push((y, T::lit(w)));
        }
    }
    Kernel::from_rows(graph, rows)
}

/// One row per (sample time, statistic, replica). Histograms write one row
/// per occupancy level with the level appended to the statistic name.
pub fn write_trajectory_summaries<T: Scalar, W: Write>(trajs: &[Trajectory<T>], stats: &[Statistic], w: W) -> Result<()> {
    let mut out = writer(w, &["time", "statistic", "value", "replica", "seed"])?;
    for traj in trajs {
        for &stat in stats {
            match stat {
                Statistic::OccupancyHistogram { sample } => {
                    let idx = sample.unwrap_or(traj.snapshots.len().saturating_sub(1));
                    let time = traj.sample_times.get(idx).copied();
                    for (level, v) in summarize(traj, stat)?.into_iter().enumerate() {
                        out.write_record([
                            opt(time),
                            format!("{}:{level}", stat.name()),
                            v.to_string(),
                            traj.replica.to_string(),
                            traj.seed.to_string(),
                        ])?;
                    }
                }
                _ => {
                    for (t, v) in traj.sample_times.iter().zip(summarize(traj, stat)?) {
                        out.write_record([
                            t.to_string(),
                            stat.name().to_string(),
                            v.to_string(),
                            traj.replica.to_string(),
                            traj.seed.to_string(),
                        ])?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_spectral<T: Scalar, W: Write>(est: &SpectralEstimate<T>, w: W) -> Result<()> {
    let mut out = writer(w, &["n", "value", "root_estimate", "ratio_estimate"])?;
    for p in &est.points {
        out.write_record([
            p.n.to_string(),
            p.value.to_string(),
            opt(p.root_estimate),
            opt(p.ratio_estimate),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `vertices[i]` labels local index `i`.
pub fn write_first_moment<T: Scalar, W: Write>(path: &MomentPath<T>, vertices: &[usize], w: W) -> Result<()> {
    let mut out = writer(w, &["t", "x", "m"])?;
    for (t, m) in path.times.iter().zip(&path.values) {
        for (i, v) in m.iter().enumerate() {
            out.write_record([t.to_string(), vertices[i].to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_second_moment<T: Scalar, W: Write>(path: &SecondMomentPath<T>, vertices: &[usize], w: W) -> Result<()> {
    let mut out = writer(w, &["t", "x", "y", "C"])?;
    let n = path.n;
    for (t, c) in path.times.iter().zip(&path.c) {
        for x in 0..n {
            for y in 0..n {
                out.write_record([
                    t.to_string(),
                    vertices[x].to_string(),
                    vertices[y].to_string(),
                    c[x * n + y].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_site_values<T: Scalar, W: Write>(vertices: &[usize], values: &[T], column: &str, w: W) -> Result<()> {
    let mut out = writer(w, &["x", column])?;
    for (x, v) in vertices.iter().zip(values) {
        out.write_record([x.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Row-major `|Λ| × |Λ|` matrix.
pub fn write_pair_matrix<T: Scalar, W: Write>(vertices: &[usize], c: &[T], w: W) -> Result<()> {
    let mut out = writer(w, &["x", "y", "C"])?;
    let n = vertices.len();
    for (i, x) in vertices.iter().enumerate() {
        for (j, y) in vertices.iter().enumerate() {
            out.write_record([x.to_string(), y.to_string(), c[i * n + j].to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_mu_histogram<T: Scalar, W: Write>(est: &MuEstimate<T>, w: W) -> Result<()> {
    let mut out = writer(w, &["site", "occupancy", "frequency"])?;
    for (x, h) in est.site_hist.iter().enumerate() {
        for (j, p) in h.iter().enumerate() {
            out.write_record([x.to_string(), j.to_string(), p.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_regime_evidence<T: Scalar, W: Write>(reports: &[RegimeReport<T>], w: W) -> Result<()> {
    let mut out = writer(w, &["scenario", "time", "mean_total_mass", "std_err"])?;
    for r in reports {
        for &(t, m, se) in &r.series {
            out.write_record([r.scenario.clone(), t.to_string(), m.to_string(), se.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_volume_report<W: Write>(report: &VolumeReport, w: W) -> Result<()> {
    let mut out = writer(w, &["radius", "sites", "mean", "std_err"])?;
    for l in &report.levels {
        out.write_record([l.radius.to_string(), l.sites.to_string(), l.mean.to_string(), l.se.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_certificates<T: Scalar, W: Write>(certs: &[(u64, Certificate<T>)], w: W) -> Result<()> {
    let mut out = writer(w, &["replica", "events", "checks", "violations", "threshold_inversions"])?;
    for (r, c) in certs {
        out.write_record([
            r.to_string(),
            c.events.to_string(),
            c.checks.to_string(),
            c.violations.to_string(),
            c.threshold_inversions.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EventLine<'a, T: Serialize> {
    replica: u64,
    #[serde(flatten)]
    event: &'a Event<T>,
}

pub fn write_event<T: Scalar + Serialize, W: Write>(w: &mut W, replica: u64, event: &Event<T>) -> Result<()> {
    serde_json::to_writer(&mut *w, &EventLine { replica, event })?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Number of non-empty lines, for checking event logs.
pub fn count_lines<R: BufRead>(r: R) -> Result<usize> {
    let mut n = 0;
    for line in r.lines() {
        if !line?.trim().is_empty() {
            n += 1;
        }
    }
    Ok(n)
}
