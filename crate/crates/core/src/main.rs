use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use strata_profiles::coeff::{discrete_besov_norm, lp_proxy_norm, sobolev_seq_norm, Normalization, NormParams};
use strata_profiles::group::GroupSpec;
use strata_profiles::profiler::{classify_pair, extract, ClassifyParams, ExtractParams, ScaleCorePair};
use strata_profiles::sampling::preset_sampling_set;
use strata_profiles::transform::{analyze, besov_norm_continuous, reconstruct, FrameOptions, KernelSet};
use strata_profiles::window::{build_narrow_window, build_window, log_grid, verify_partition, SpectralWindow};
use strata_profiles::workbench::formats::{read_field, read_grid_binary, read_snapshots, write_snapshots};
use strata_profiles::workbench::report::{to_json, DecompositionReport};
use strata_profiles::workbench::{generate, GeneratorFile};
use strata_profiles::Error;

#[derive(Parser)]
#[command(name = "lieprof", version, about = "Wavelet profile decomposition on stratified groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic snapshots from a generator file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract profiles from snapshots and write a report.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Check the partition of unity of a window.
    VerifyWindow {
        #[arg(long, default_value_t = 1.0)]
        sharpness: f64,
        #[arg(long = "J", default_value_t = 8)]
        big_j: i32,
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Use the sharp band window instead of the smooth one.
        #[arg(long)]
        narrow: bool,
    },
    /// Analyze a grid function, reconstruct it and compare norms.
    VerifyFrame {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = -4, allow_negative_numbers = true)]
        j_min: i32,
        #[arg(long, default_value_t = 4, allow_negative_numbers = true)]
        j_max: i32,
        #[arg(long, default_value_t = 1.0)]
        sharpness: f64,
    },
    /// Sequence norms of a coefficient field.
    Norms {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        s: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
    },
    /// Orthogonality verdict for two scale-core tracks.
    Classify {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 8)]
        tail: usize,
        #[arg(long, default_value_t = 4.0)]
        t_div: f64,
        #[arg(long, default_value_t = 1e-9)]
        eps_stable: f64,
    },
}

/// A track file for `classify`.
#[derive(Deserialize)]
struct TrackFile {
    group: GroupSpec,
    #[serde(flatten)]
    pair: ScaleCorePair,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UndecidableOrthogonality { .. } | Error::NonconvergentCoefficient { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_slice(&read(path)?)?)
}

fn print<T: Serialize>(v: &T) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    out.write_all(to_json(v)?.as_bytes())?;
    Ok(())
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Generate { spec, out } => {
            let file: GeneratorFile = parse(&spec)?;
            let snaps = generate(&file.sampling, &file.generator)?;
            let mut w = BufWriter::new(File::create(&out)?);
            write_snapshots(&mut w, &snaps)?;
            w.flush()?;
            log::info!("wrote {} snapshots to {}", snaps.len(), out.display());
            Ok(0)
        }
        Command::Decompose { input, params, report } => {
            let bytes = read(&input)?;
            let param_bytes = read(&params)?;
            let snaps = read_snapshots(bytes.as_slice())?;
            let p: ExtractParams = serde_json::from_slice(&param_bytes)?;
            let d = extract(&snaps, &p)?;
            let r = DecompositionReport::new(&bytes, &param_bytes, snaps.sampling(), &d);
            std::fs::write(&report, to_json(&r)?)?;
            Ok(0)
        }
        Command::VerifyWindow {
            sharpness,
            big_j,
            points,
            narrow,
        } => {
            if points == 0 || big_j < 0 {
                return Err(Error::Domain("need J >= 0 and at least one point".into()));
            }
            let w = if narrow {
                SpectralWindow::Narrow(build_narrow_window())
            } else {
                SpectralWindow::Smooth(build_window(sharpness)?)
            };
            let grid = log_grid(4f64.powi(-big_j), 4f64.powi(big_j), points);
            let r = verify_partition(&w, big_j, &grid);
            let ok = r.max_deviation <= 1e-12;
            print(&serde_json::json!({"window": w, "J": big_j, "report": r, "pass": ok}))?;
            Ok(if ok { 0 } else { 1 })
        }
        Command::VerifyFrame {
            grid,
            density,
            p,
            s,
            j_min,
            j_max,
            sharpness,
        } => {
            let f = read_grid_binary(BufReader::new(File::open(&grid)?))?;
            let g = GroupSpec::abelian(f.grid().dim);
            let gs = preset_sampling_set(&g, density)?;
            let ks = KernelSet::build(SpectralWindow::Smooth(build_window(sharpness)?), j_min, j_max, *f.grid())?;
            let c = analyze(&f, &ks, &gs, Normalization::lp(p)?)?;
            let rec = reconstruct(&c, &ks, &gs, FrameOptions::default())?;
            let err = rec.function.sub(&f)?.l2() / f.l2().max(f64::MIN_POSITIVE);
            let np = NormParams::new(s, 2.0, 2.0)?;
            let cont = besov_norm_continuous(&f, &ks, &np)?;
            let disc = discrete_besov_norm(&c.to_l1(), &np)?;
            print(&serde_json::json!({
                "coefficients": c.len(),
                "relative_error": err,
                "iterations": rec.iterations,
                "residual": rec.residual,
                "frame_bounds": [rec.lower_bound, rec.upper_bound],
                "converged": rec.converged,
                "besov_continuous": cont,
                "besov_discrete": disc,
                "ratio": cont / disc,
            }))?;
            Ok(0)
        }
        Command::Norms { input, s, p, q } => {
            let c = read_field(BufReader::new(File::open(&input)?))?;
            let np = NormParams::new(s, p, q)?;
            let besov = discrete_besov_norm(&c.to_l1(), &np)?;
            let lp_form = c.to_lp(p)?;
            print(&serde_json::json!({
                "entries": c.len(),
                "besov": besov,
                "sobolev_seq": sobolev_seq_norm(&lp_form)?,
                "lp_proxy": lp_proxy_norm(&lp_form)?,
            }))?;
            Ok(0)
        }
        Command::Classify {
            a,
            b,
            tail,
            t_div,
            eps_stable,
        } => {
            let ta: TrackFile = parse(&a)?;
            let tb: TrackFile = parse(&b)?;
            if ta.group != tb.group {
                return Err(Error::Domain("tracks live on different groups".into()));
            }
            let cp = ClassifyParams { tail, t_div, eps_stable };
            let v = classify_pair(&ta.group, &ta.pair, &tb.pair, &cp)?;
            print(&v)?;
            Ok(if v == strata_profiles::profiler::Verdict::Undecided { 2 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
