//! On-disk artifacts: spectra and profile CSVs, gnuplot `.dat` files and run manifests.
//!
//! CSV column contracts (version [`FORMAT_VERSION`]):
//! - spectra: `replica,re,im`
//! - profile: `re_zhat,im_zhat,empirical,predicted,se`
//! - kernel grid: `re_zhat,im_zhat,prediction`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edgestat::EdgeReport;
use crate::error::{Error, Result};
use crate::kernels::{clamp_for_plot, GridPoint};
use crate::sampler::SpectrumSample;

/// Version of the column contracts above; bumped on any change.
pub const FORMAT_VERSION: u32 = 1;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Serialize)]
struct SpectrumRow {
    replica: u64,
    re: f64,
    im: f64,
}

pub fn write_spectra_csv(path: &Path, samples: &[SpectrumSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for s in samples {
        for z in &s.eigenvalues {
            w.serialize(SpectrumRow { replica: s.replica, re: z.re, im: z.im }).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow {
    re_zhat: f64,
    im_zhat: f64,
    empirical: f64,
    predicted: f64,
    se: f64,
}

/// One row per bin, at the bin centre.
pub fn write_profile_csv(path: &Path, report: &EdgeReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for b in &report.bins {
        w.serialize(ProfileRow {
            re_zhat: b.re_center,
            im_zhat: b.im_center,
            empirical: b.empirical,
            predicted: clamp_for_plot(b.predicted),
            se: b.se,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated blocks, one per normal-coordinate column, separated by blank
/// lines (the layout `splot ... with pm3d` expects).
pub fn write_profile_dat(path: &Path, report: &EdgeReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# re_zhat im_zhat empirical predicted se")?;
    writeln!(
        w,
        "# beta={} t={} z0=({}, {}) replicas={}",
        report.frame.beta, report.frame.t, report.frame.z0.re, report.frame.z0.im, report.replica_count
    )?;
    let mut last = None;
    for b in &report.bins {
        if last.is_some_and(|r: f64| r != b.re_center) {
            writeln!(w)?;
        }
        last = Some(b.re_center);
        writeln!(w, "{} {} {:.10e} {:.10e} {:.10e}", b.re_center, b.im_center, b.empirical, clamp_for_plot(b.predicted), b.se)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GridRow {
    re_zhat: f64,
    im_zhat: f64,
    prediction: f64,
}

pub fn write_grid_csv(path: &Path, grid: &[GridPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for g in grid {
        w.serialize(GridRow { re_zhat: g.re_zhat, im_zhat: g.im_zhat, prediction: clamp_for_plot(g.prediction) }).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Everything needed to regenerate an artifact directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub software_version: String,
    pub format_version: u32,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub wall_time_secs: f64,
    /// False when the run stopped early; the listed files may be partial.
    pub complete: bool,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            software_version: SOFTWARE_VERSION.to_string(),
            format_version: FORMAT_VERSION,
            config,
            seed,
            fingerprint: None,
            wall_time_secs: 0.0,
            complete: false,
            files: Vec::new(),
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let f = File::open(dir.join("manifest.json"))?;
        Ok(serde_json::from_reader(f)?)
    }
}
