use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lcap_core::aloha::capacity_aloha;
use lcap_core::contour::{trace_contour, write_contour_csv, TraceConfig};
use lcap_core::engine::estimate_capacity;
use lcap_core::process::{read_csv, GridKind, ProcessSpec, Scheme};
use lcap_core::{ChannelParams, Point2D, Region, TransmitterSet};
use serde::Serialize;

use crate::cli::{Command, RunFlags};
use crate::config::{load_run, RunConfig, SchemeName, SweepConfig, DEFAULT_GRID_SAMPLES};
use crate::output::{line_chart, write_preamble, write_scaled, Family, ResultRow, RowWriter};
use crate::{code_version, CliError};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Capacity(flags) => cmd_capacity(&flags),
        Command::Sweep { file, flags } => cmd_sweep(&file, &flags),
        Command::Trace { flags, points, index } => cmd_trace(&flags, points.as_deref(), index),
    }
}

fn merged(flags: &RunFlags) -> Result<RunConfig, CliError> {
    let base = match &flags.config {
        Some(path) => load_run(path)?,
        None => RunConfig::default(),
    };
    let run = base.overlay(flags.to_config());
    run.validate()?;
    Ok(run)
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn trace_config(run: &RunConfig, length_scale: f64) -> TraceConfig {
    match run.dt {
        Some(dt) => TraceConfig::with_dt(dt),
        None => TraceConfig::for_spacing(length_scale),
    }
}

/// The process behind a scheme name; closed-form ALOHA maps to Poisson.
fn core_scheme(scheme: SchemeName, run: &RunConfig, alpha: f64) -> Result<Scheme, CliError> {
    let d = run.d();
    Ok(match scheme {
        SchemeName::Grid(lattice) => Scheme::Grid {
            kind: GridKind::new(lattice, d)?,
            offset: Point2D::ORIGIN,
        },
        SchemeName::Aloha | SchemeName::AlohaMc => Scheme::Poisson { lambda: 1.0 / (d * d) },
        SchemeName::Coloring => Scheme::Coloring { d },
        SchemeName::Csma => Scheme::Csma {
            theta: run.theta(alpha),
        },
    })
}

/// One result row. Grids run `grid_samples` samples, the others the
/// configured count.
pub fn estimate(
    scheme: SchemeName,
    beta: f64,
    alpha: f64,
    run: &RunConfig,
    grid_samples: usize,
) -> Result<ResultRow, CliError> {
    let channel = ChannelParams::new(beta, alpha)?;
    let d = run.d();
    let row = |d_or_theta, samples, failures, lambda, sigma, capacity, stderr| ResultRow {
        scheme: scheme.to_string(),
        beta,
        alpha,
        d_or_theta,
        samples,
        failures,
        lambda,
        sigma,
        capacity,
        stderr,
        seed: run.seed(),
        code_version: code_version(),
    };
    if scheme == SchemeName::Aloha {
        let c = capacity_aloha(beta, alpha)?;
        let lambda = 1.0 / (d * d);
        return Ok(row(d, 0, 0, lambda, c / lambda, c, 0.0));
    }
    let cs = core_scheme(scheme, run, alpha)?;
    let samples = match scheme {
        SchemeName::Grid(_) => grid_samples,
        _ => run.samples(),
    };
    let spec = ProcessSpec::new(cs, Region::square(run.region())?, run.seed())?;
    let trace = trace_config(run, cs.length_scale(alpha));
    let est = estimate_capacity(&spec, &channel, samples, &trace)?;
    Ok(row(
        if let Scheme::Csma { theta } = cs { theta } else { d },
        est.samples,
        est.failures,
        est.mean_lambda,
        est.mean_sigma,
        est.capacity,
        est.stderr_capacity,
    ))
}

#[derive(Serialize)]
struct RunEcho<'a> {
    run: &'a RunConfig,
}

fn echo_run(run: &RunConfig) -> String {
    let run = RunConfig {
        out: None,
        ..run.clone()
    };
    toml::to_string(&RunEcho { run: &run }).expect("config serializes")
}

pub fn cmd_capacity(flags: &RunFlags) -> Result<(), CliError> {
    let run = merged(flags)?;
    let scheme = required(run.scheme, "scheme")?;
    let beta = required(run.beta()?, "beta")?;
    let alpha = required(run.alpha, "alpha")?;
    let row = estimate(scheme, beta, alpha, &run, run.samples().min(DEFAULT_GRID_SAMPLES))?;
    let mut stdout = RowWriter::new(io::stdout().lock())?;
    stdout.write(&row)?;
    if let Some(path) = &run.out {
        let mut file = BufWriter::new(File::create(path)?);
        write_preamble(&mut file, "lcap capacity", &code_version(), Some(&echo_run(&run)))?;
        let mut w = RowWriter::new(file)?;
        w.write(&row)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

pub fn cmd_sweep(config: &Path, flags: &RunFlags) -> Result<(), CliError> {
    if flags.config.is_some() {
        return Err(CliError::Usage(
            "sweep takes its config file as the positional argument".into(),
        ));
    }
    let mut cfg = SweepConfig::load(config)?;
    cfg.run = cfg.run.clone().overlay(flags.to_config());
    cfg.validate()?;
    run_sweep(
        &cfg,
        cfg.run.out.clone().unwrap_or_else(|| PathBuf::from(".")).as_path(),
    )
}

/// Writes `{beta,alpha}_sweep.csv` and `scaled_{beta,alpha}.csv` under
/// `dir`, plus SVG charts when asked.
pub fn run_sweep(cfg: &SweepConfig, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let version = code_version();
    let echo = cfg.echo();
    let mut schemes = cfg.sweep.schemes.clone();
    if !schemes.contains(&SchemeName::TRIANGULAR) {
        // every scaled value needs it
        schemes.insert(0, SchemeName::TRIANGULAR);
    }
    let s = &cfg.sweep;
    for family in [Family::Beta, Family::Alpha] {
        let points: Vec<(f64, f64)> = match family {
            Family::Beta => s.beta_values.iter().map(|&b| (b, s.fixed_alpha)).collect(),
            Family::Alpha => s.alpha_values.iter().map(|&a| (s.fixed_beta, a)).collect(),
        };
        let name = family.name();
        let mut file = create(&dir.join(format!("{name}_sweep.csv")))?;
        write_preamble(&mut file, &format!("lcap sweep over {name}"), &version, Some(&echo))?;
        let mut w = RowWriter::new(file)?;
        let mut rows = Vec::new();
        for &(beta, alpha) in &points {
            for &scheme in &schemes {
                let row = estimate(scheme, beta, alpha, &cfg.run, cfg.grid_samples())?;
                eprintln!("{scheme} beta={beta} alpha={alpha} c={:.4}", row.capacity);
                w.write(&row)?;
                rows.push(row);
            }
        }
        drop(w);

        let mut scaled = create(&dir.join(format!("scaled_{name}.csv")))?;
        write_preamble(
            &mut scaled,
            &format!("lcap sweep over {name}, capacity over grid:tri"),
            &version,
            Some(&echo),
        )?;
        write_scaled(&mut scaled, &points, &schemes, &rows)?;
        scaled.flush()?;

        if s.svg {
            let series = |value: &dyn Fn(&ResultRow) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
                schemes
                    .iter()
                    .map(|sc| {
                        let label = sc.to_string();
                        let pts = rows
                            .iter()
                            .filter(|r| r.scheme == label)
                            .map(|r| (family.x(r), value(r)))
                            .collect();
                        (label, pts)
                    })
                    .collect()
            };
            let tri = SchemeName::TRIANGULAR.to_string();
            let reference = |r: &ResultRow| {
                rows.iter()
                    .find(|t| t.scheme == tri && t.beta == r.beta && t.alpha == r.alpha)
                    .map_or(f64::NAN, |t| t.capacity)
            };
            let plain = line_chart(
                &format!("capacity vs {name}"),
                name,
                "capacity",
                &series(&|r| r.capacity),
            );
            let ratio = line_chart(
                &format!("capacity over grid:tri vs {name}"),
                name,
                "scaled capacity",
                &series(&|r| r.capacity / reference(r)),
            );
            fs::write(dir.join(format!("{name}_sweep.svg")), plain)?;
            fs::write(dir.join(format!("scaled_{name}.svg")), ratio)?;
        }
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct TraceSidecar {
    #[serde(flatten)]
    contour: lcap_core::contour::ContourSidecar,
    index: usize,
    scheme_label: String,
    seed: Option<u64>,
    vertices: usize,
}

pub fn cmd_trace(flags: &RunFlags, points: Option<&Path>, index: Option<usize>) -> Result<(), CliError> {
    let run = merged(flags)?;
    let beta = required(run.beta()?, "beta")?;
    let alpha = required(run.alpha, "alpha")?;
    let channel = ChannelParams::new(beta, alpha)?;
    let (set, seed): (TransmitterSet, Option<u64>) = match points {
        Some(path) => {
            let f = File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            read_csv(BufReader::new(f))?
        }
        None => {
            let scheme = required(run.scheme, "scheme")?;
            let cs = core_scheme(scheme, &run, alpha)?;
            let spec = ProcessSpec::new(cs, Region::square(run.region())?, run.seed())?;
            (spec.generate(alpha)?, Some(run.seed()))
        }
    };
    let i = match index {
        Some(i) => {
            set.point(i)?;
            i
        }
        None => set
            .nearest_to(Point2D::ORIGIN)
            .ok_or_else(|| CliError::Usage("empty transmitter set".into()))?,
    };
    let cfg = match run.dt {
        Some(dt) => TraceConfig::with_dt(dt),
        None => TraceConfig::for_spacing(set.nearest_neighbor(i)?.1),
    };
    let contour = trace_contour(&set, i, &channel, &cfg)?;
    let prefix = run.out.clone().unwrap_or_else(|| PathBuf::from("contour"));
    let mut csv = create(&with_suffix(&prefix, ".csv"))?;
    write_contour_csv(&contour, &mut csv)?;
    csv.flush()?;
    let sidecar = TraceSidecar {
        contour: contour.sidecar(&channel),
        index: i,
        scheme_label: set.scheme_label().to_string(),
        seed,
        vertices: contour.vertices.len(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(with_suffix(&prefix, ".json"), json + "\n")?;
    println!(
        "area={} shoelace_area={} steps={} vertices={}",
        contour.area,
        contour.shoelace_area,
        contour.steps(),
        contour.vertices.len()
    );
    Ok(())
}
