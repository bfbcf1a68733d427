//! Resolution of a command's configuration and execution of its workflow.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ginlab::duality::{self, DualityCase, DualityReport};
use ginlab::edgestat::{self, CriticalScalingSpec, EdgeOptions, OutlierScalingSpec};
use ginlab::integrals::{self, MatrixIntegralSpec, Prop13Spec};
use ginlab::kernels::{evaluate_grid, EdgeFrame};
use ginlab::mc::par_map;
use ginlab::model::EnsembleConfig;
use ginlab::persist::{self, Manifest};
use ginlab::sampler::DeformedSampler;
use ginlab::C64;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{
    self, ConfigError, CriticalParams, DualityParams, EdgeParams, Format, IntegralParams, KernelParams, OutlierParams, Prop13Params,
    RunFile, SampleParams,
};

/// Significance level for single-profile edge comparisons.
const EDGE_ALPHA: f64 = 0.01;
/// Largest accepted z-score of the real-axis density check.
const AXIS_Z: f64 = 3.0;

pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lab(#[from] ginlab::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum Resolved {
    Sample(SampleParams),
    Edge(EdgeParams),
    Kernel(KernelParams),
    Duality(DualityParams),
    Charpoly(DualityParams),
    Integral(IntegralParams),
    Prop13(Prop13Params),
    Outlier(OutlierParams),
    Critical(CriticalParams),
}

impl Resolved {
    fn to_value(&self) -> Value {
        let v = match self {
            Resolved::Sample(p) => serde_json::to_value(p),
            Resolved::Edge(p) => serde_json::to_value(p),
            Resolved::Kernel(p) => serde_json::to_value(p),
            Resolved::Duality(p) | Resolved::Charpoly(p) => serde_json::to_value(p),
            Resolved::Integral(p) => serde_json::to_value(p),
            Resolved::Prop13(p) => serde_json::to_value(p),
            Resolved::Outlier(p) => serde_json::to_value(p),
            Resolved::Critical(p) => serde_json::to_value(p),
        };
        v.expect("parameters serialize")
    }

    /// Whether a master seed must be supplied; a duality case file carries its own.
    fn needs_seed(&self) -> bool {
        match self {
            Resolved::Kernel(_) => false,
            Resolved::Duality(p) | Resolved::Charpoly(p) => p.suite || p.case.is_none(),
            _ => true,
        }
    }
}

fn resolve_command(command: &str, file: &RunFile, flags: Map<String, Value>, seed: Option<u64>) -> Result<Resolved, ConfigError> {
    if let Some(c) = &file.command {
        if c != command {
            return Err(ConfigError::CommandMismatch { file: c.clone(), cli: command.to_string() });
        }
    }
    let p = &file.parameters;
    let resolved = match command {
        "sample" => Resolved::Sample(config::resolve(command, p, flags)?),
        "edge-stats" => Resolved::Edge(config::resolve(command, p, flags)?),
        "kernel-eval" => Resolved::Kernel(config::resolve(command, p, flags)?),
        "duality-check" => Resolved::Duality(config::resolve(command, p, flags)?),
        "charpoly-check" => Resolved::Charpoly(config::resolve(command, p, flags)?),
        "integral-check" => Resolved::Integral(config::resolve(command, p, flags)?),
        "prop13-check" => Resolved::Prop13(config::resolve(command, p, flags)?),
        "outlier-scaling" => Resolved::Outlier(config::resolve(command, p, flags)?),
        "critical-scaling" => Resolved::Critical(config::resolve(command, p, flags)?),
        other => return Err(ConfigError::Invalid(format!("unknown command \"{other}\""))),
    };
    if resolved.needs_seed() && seed.is_none() {
        return Err(ConfigError::MissingSeed { command: command.to_string() });
    }
    Ok(resolved)
}

fn seed_of(seed: Option<u64>) -> u64 {
    seed.expect("checked during resolution")
}

fn edge_setup(p: &EdgeParams, seed: u64) -> Result<(EnsembleConfig, EdgeFrame, EdgeOptions), RunError> {
    let cfg = config::ensemble(p.beta, p.n, &p.jordan, None, seed)?;
    let frame = edgestat::frame_for(&cfg, C64::new(p.z0_re, p.z0_im))?;
    let bin_side = match p.bins {
        Some(0) => return Err(ConfigError::Invalid("bins must be positive".into()).into()),
        Some(k) => 2.0 * p.window / k as f64,
        None => EdgeOptions::default().bin_side,
    };
    let opts = EdgeOptions { window: p.window, bin_side, replicas: p.replicas, min_expected: p.min_expected };
    opts.validate()?;
    Ok((cfg, frame, opts))
}

fn duality_cases(p: &DualityParams, seed: Option<u64>, charpoly: bool) -> Result<Vec<DualityCase>, RunError> {
    let samples = p.samples.unwrap_or(100_000);
    if p.suite {
        let s = seed_of(seed);
        let cases =
            if charpoly { duality::standard_charpoly_suite(p.beta, samples, s) } else { duality::standard_suite(p.beta, samples, s) };
        return Ok(cases);
    }
    let Some(input) = &p.case else {
        return Err(ConfigError::Invalid("give a case file (--case) or --suite".into()).into());
    };
    let mut case = input.load()?;
    if let Some(b) = p.beta {
        if b != case.beta {
            return Err(ConfigError::Invalid(format!("--beta {b} contradicts the case's beta = {}", case.beta)).into());
        }
    }
    if let Some(s) = seed {
        case.seed = s;
    }
    if let Some(m) = p.samples {
        case.samples = m;
    }
    case.validate()?;
    Ok(vec![case])
}

fn integral_specs(p: &IntegralParams, seed: u64) -> Result<Vec<MatrixIntegralSpec>, RunError> {
    let specs = match &p.points {
        Some(points) => {
            vec![MatrixIntegralSpec { t: p.t.unwrap_or(0), points: points.clone(), z0: C64::new(1.0, 0.0), samples: p.samples, seed }]
        }
        None => integrals::standard_grid(p.samples, seed).into_iter().filter(|s| p.t.is_none_or(|t| t == s.t)).collect(),
    };
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

fn prop13_specs(p: &Prop13Params, seed: u64) -> Result<Vec<Prop13Spec>, RunError> {
    let specs = match p.a {
        Some(a) => vec![Prop13Spec {
            a,
            z: p.z.unwrap_or(integrals::PROP13_SUITE_Z),
            n: p.n,
            samples: p.samples,
            replicas: p.replicas,
            bin: p.bin,
            seed,
        }],
        None => {
            let mut v = integrals::standard_prop13_suite(p.n, p.samples, p.replicas, seed);
            if let Some(z) = p.z {
                v.iter_mut().for_each(|s| s.z = z);
            }
            for s in &mut v {
                s.bin = p.bin;
            }
            v
        }
    };
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

fn outlier_spec(p: &OutlierParams, seed: u64) -> Result<OutlierScalingSpec, RunError> {
    let spec = OutlierScalingSpec {
        p: p.p,
        theta: C64::new(p.theta_re, p.theta_im),
        ns: p.ns.clone(),
        replicas: p.replicas,
        n_eff: p.n_eff,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn critical_spec(p: &CriticalParams, seed: u64) -> Result<CriticalScalingSpec, RunError> {
    let spec = CriticalScalingSpec {
        p: p.p,
        z0: C64::new(p.z0_re, p.z0_im),
        theta_hat: C64::new(p.theta_hat_re, p.theta_hat_im),
        ns: p.ns.clone(),
        replicas: p.replicas,
        window: p.window,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Builds every core object a run would use, without running it.
fn check_semantics(r: &Resolved, seed: Option<u64>) -> Result<(), RunError> {
    match r {
        Resolved::Sample(p) => {
            config::ensemble(p.beta, p.n, &p.jordan, p.tau, seed_of(seed))?;
        }
        Resolved::Edge(p) => {
            edge_setup(p, seed_of(seed))?;
        }
        Resolved::Kernel(p) => {
            config::parse_grid(&p.grid)?;
            EdgeFrame::new(C64::new(p.z0_re, p.z0_im), p.beta, p.t, 1)?;
        }
        Resolved::Duality(p) => {
            duality_cases(p, seed, false)?;
        }
        Resolved::Charpoly(p) => {
            duality_cases(p, seed, true)?;
        }
        Resolved::Integral(p) => {
            integral_specs(p, seed_of(seed))?;
        }
        Resolved::Prop13(p) => {
            prop13_specs(p, seed_of(seed))?;
        }
        Resolved::Outlier(p) => {
            outlier_spec(p, seed_of(seed))?;
        }
        Resolved::Critical(p) => {
            critical_spec(p, seed_of(seed))?;
        }
    }
    Ok(())
}

struct Sink {
    dir: Option<PathBuf>,
    files: Vec<String>,
    fingerprint: Option<String>,
}

impl Sink {
    fn path(&mut self, name: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        self.files.push(name.to_string());
        Some(dir.join(name))
    }

    fn report<T: Serialize>(&mut self, value: &T) -> Result<(), RunError> {
        match self.path("report.json") {
            Some(p) => persist::write_json(&p, value)?,
            None => println!("{}", serde_json::to_string_pretty(value).map_err(ginlab::Error::from)?),
        }
        Ok(())
    }
}

/// Resolves and runs `command`; `Ok(false)` means the acceptance rule failed.
pub fn run(command: &str, flags: Map<String, Value>, g: &Globals) -> Result<bool, RunError> {
    let file = match &g.config {
        Some(p) => config::read_run_file(p)?,
        None => RunFile::default(),
    };
    let seed = g.seed.or(file.seed);
    let resolved = resolve_command(command, &file, flags, seed)?;
    let format = g.format.or(file.format).unwrap_or(Format::Csv);
    let dir = g.out.clone().or(file.output_dir.clone()).or_else(|| match resolved {
        Resolved::Kernel(_) => None,
        _ => Some(PathBuf::from("out").join(command)),
    });
    if let Some(d) = &dir {
        std::fs::create_dir_all(d)?;
    }
    let mut resolved_config = json!({ "command": command, "parameters": resolved.to_value(), "format": format });
    if let Some(s) = seed {
        resolved_config["masterSeed"] = json!(s);
    }
    if let Some(d) = &dir {
        resolved_config["outputDir"] = json!(d);
    }
    let mut manifest = Manifest::new(command, resolved_config, seed);
    let mut sink = Sink { dir: dir.clone(), files: Vec::new(), fingerprint: None };
    let start = Instant::now();
    let result = execute(&resolved, seed, format, &mut sink);
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.files = sink.files;
    manifest.fingerprint = sink.fingerprint;
    match &result {
        Ok(_) => manifest.complete = true,
        Err(e) => manifest.error = Some(e.to_string()),
    }
    if let Some(d) = &dir {
        manifest.write(d)?;
    }
    result
}

#[derive(Serialize)]
struct SampleReport {
    fingerprint: String,
    beta: u8,
    n: usize,
    replicas: u64,
    eigenvalues_per_replica: usize,
}

#[derive(Serialize)]
struct SuiteEntry<T: Serialize> {
    case: T,
    report: DualityReport,
}

fn execute(r: &Resolved, seed: Option<u64>, format: Format, sink: &mut Sink) -> Result<bool, RunError> {
    match r {
        Resolved::Sample(p) => {
            let cfg = config::ensemble(p.beta, p.n, &p.jordan, p.tau, seed_of(seed))?;
            let sampler = DeformedSampler::new(&cfg)?;
            let spectra = par_map(p.replicas, |k| sampler.spectrum(k))?;
            sink.fingerprint = Some(cfg.fingerprint());
            match format {
                Format::Csv => {
                    if let Some(path) = sink.path("spectra.csv") {
                        persist::write_spectra_csv(&path, &spectra)?;
                    }
                }
                Format::Json => {
                    if let Some(path) = sink.path("spectra.json") {
                        persist::write_json(&path, &spectra)?;
                    }
                }
            }
            sink.report(&SampleReport {
                fingerprint: cfg.fingerprint(),
                beta: cfg.beta,
                n: cfg.n,
                replicas: p.replicas,
                eigenvalues_per_replica: cfg.matrix_dim(),
            })?;
            Ok(true)
        }
        Resolved::Edge(p) => {
            let (cfg, frame, opts) = edge_setup(p, seed_of(seed))?;
            sink.fingerprint = Some(cfg.fingerprint());
            let report = edgestat::collect(&cfg, &frame, &opts)?;
            sink.report(&report)?;
            if let Some(path) = sink.path("profile.csv") {
                persist::write_profile_csv(&path, &report)?;
            }
            if let Some(path) = sink.path("profile.dat") {
                persist::write_profile_dat(&path, &report)?;
            }
            let axis_ok = report.real_axis.as_ref().is_none_or(|c| c.zscore <= AXIS_Z);
            Ok(report.passes(EDGE_ALPHA) && axis_ok)
        }
        Resolved::Kernel(p) => {
            let res = config::parse_grid(&p.grid)?;
            let frame = EdgeFrame::new(C64::new(p.z0_re, p.z0_im), p.beta, p.t, 1)?;
            let grid = evaluate_grid(&frame, &res, &[p.im])?;
            match (format, sink.path(if format == Format::Csv { "kernel.csv" } else { "kernel.json" })) {
                (Format::Csv, Some(path)) => persist::write_grid_csv(&path, &grid)?,
                (Format::Json, Some(path)) => persist::write_json(&path, &grid)?,
                (Format::Csv, None) => {
                    println!("re_zhat,im_zhat,prediction");
                    for g in &grid {
                        println!("{},{},{}", g.re_zhat, g.im_zhat, ginlab::kernels::clamp_for_plot(g.prediction));
                    }
                }
                (Format::Json, None) => println!("{}", serde_json::to_string_pretty(&grid).map_err(ginlab::Error::from)?),
            }
            Ok(true)
        }
        Resolved::Duality(p) | Resolved::Charpoly(p) => {
            let charpoly = matches!(r, Resolved::Charpoly(_));
            let cases = duality_cases(p, seed, charpoly)?;
            let mut entries = Vec::with_capacity(cases.len());
            for case in cases {
                let report = if charpoly { duality::verify_charpoly(&case)? } else { duality::verify_duality(&case)? };
                entries.push(SuiteEntry {
                    case: json!({"beta": case.beta, "n": case.n, "k1": case.k1, "k2": case.k2, "seed": case.seed}),
                    report,
                });
            }
            let pass = entries.iter().all(|e| e.report.pass);
            if p.suite {
                sink.report(&entries)?;
            } else {
                sink.report(&entries[0].report)?;
            }
            Ok(pass)
        }
        Resolved::Integral(p) => {
            let specs = integral_specs(p, seed_of(seed))?;
            let checks = specs.iter().map(integrals::check_i2).collect::<Result<Vec<_>, _>>()?;
            let pass = checks.iter().all(|c| c.pass);
            sink.report(&checks)?;
            Ok(pass)
        }
        Resolved::Prop13(p) => {
            let specs = prop13_specs(p, seed_of(seed))?;
            let reports = specs.iter().map(integrals::verify_prop13_scalar).collect::<Result<Vec<_>, _>>()?;
            let pass = reports.iter().all(|r| r.pass);
            sink.report(&reports)?;
            Ok(pass)
        }
        Resolved::Outlier(p) => {
            let fit = edgestat::outlier_scaling(&outlier_spec(p, seed_of(seed))?)?;
            let pass = fit.passes(p.tolerance);
            sink.report(&fit)?;
            Ok(pass)
        }
        Resolved::Critical(p) => {
            let fit = edgestat::critical_scaling(&critical_spec(p, seed_of(seed))?)?;
            sink.report(&fit)?;
            Ok(fit.pass)
        }
    }
}

#[derive(Serialize)]
pub struct Diagnostics {
    pub valid: bool,
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved: Option<Value>,
    pub diagnostics: Vec<String>,
}

/// Schema and semantic check of a configuration file; never runs the workflow.
pub fn validate(path: &Path) -> (bool, Diagnostics) {
    let mut d = Diagnostics { valid: false, command: None, resolved: None, diagnostics: Vec::new() };
    let file = match config::read_run_file(path) {
        Ok(f) => f,
        Err(e) => {
            d.diagnostics.push(e.to_string());
            return (false, d);
        }
    };
    let Some(command) = file.command.clone() else {
        d.diagnostics.push(ConfigError::MissingCommand.to_string());
        return (false, d);
    };
    d.command = Some(command.clone());
    let resolved = match resolve_command(&command, &file, Map::new(), file.seed) {
        Ok(r) => r,
        Err(e) => {
            d.diagnostics.push(e.to_string());
            return (false, d);
        }
    };
    d.resolved = Some(json!({ "masterSeed": file.seed, "parameters": resolved.to_value() }));
    if let Err(e) = check_semantics(&resolved, file.seed) {
        d.diagnostics.push(e.to_string());
        return (false, d);
    }
    d.valid = true;
    (true, d)
}
