//! The `dtfilter` command line.
//!
//! Data goes to stdout (or `--out`), diagnostics to stderr. Exit codes:
//! 0 success, 1 failed check or IO/format error, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edge_model::{init_edge_model, model_edges, train::train_from};
use crate::error::DtError;
use crate::forward::{filter_2d_threaded, gradient_magnitude_edges};
use crate::gradcheck::{run_gradcheck, DEFAULT_STEP};
use crate::io;
use crate::metrics::{mean_iou, trimap_curve};
use crate::suite::TrainConfig;
use crate::types::{DtParams, EdgeMap, ScoreMap};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "DT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dtfilter", version, about = "Edge-preserving domain transform filtering of score maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a score tensor guided by an edge tensor or an image.
    #[command(group(ArgGroup::new("guide").required(true).args(["edges", "image"])))]
    Filter {
        #[arg(long)]
        scores: PathBuf,
        /// Single-channel edge tensor.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// P6 image; edges are its gradient magnitude.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 100.0)]
        sigma_s: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_r: f64,
        #[arg(long, default_value_t = 3)]
        iters: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write an edge map as 8-bit PGM, scaled by its maximum.
    Edges {
        #[arg(long)]
        image: PathBuf,
        /// Checkpoint; gradient-magnitude edges when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an edge model on synthetic data.
    Train {
        /// key=value file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        history: PathBuf,
    },
    /// Compare analytic gradients with central differences on random instances.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Mean IOU over a grid of filter parameters.
    Sweep {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Label PGM.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        sigma_s_grid: String,
        #[arg(long)]
        sigma_r_grid: String,
        #[arg(long)]
        iters_grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Time the filter on random data.
    Bench {
        #[arg(long, default_value_t = 513)]
        height: usize,
        #[arg(long, default_value_t = 513)]
        width: usize,
        #[arg(long, default_value_t = 21)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        iters: usize,
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean IOU and boundary-band IOU of a predicted label map.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value = "0,2,6,10")]
        trimap_widths: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Check(String),
    Error(DtError),
}

impl From<DtError> for Failure {
    fn from(e: DtError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Check(msg)) => {
            let _ = writeln!(stderr, "{msg}");
            EXIT_CHECK
        }
        Err(Failure::Error(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_CHECK
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> std::result::Result<usize, Failure> {
    let threads = match flag {
        Some(t) => t,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            Err(_) => 1,
        },
    };
    if threads == 0 {
        return Err(Failure::Usage("thread count must be at least 1".into()));
    }
    Ok(threads)
}

fn params(sigma_s: f64, sigma_r: f64, iters: usize) -> std::result::Result<DtParams, Failure> {
    DtParams::new(sigma_s, sigma_r, iters).map_err(|e| Failure::Usage(e.to_string()))
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Error(DtError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        ))))
    }
}

fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> std::result::Result<Vec<T>, Failure> {
    if text.trim().is_empty() {
        return Err(Failure::Usage(format!("{name} is empty")));
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("{name}: cannot parse '{t}'")))
        })
        .collect()
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Divides by the maximum so the strongest edge maps to 1; an all-zero map stays zero.
pub fn normalize_edges(edges: &EdgeMap) -> EdgeMap {
    let top = edges.max_value();
    if top <= 0.0 {
        return edges.clone();
    }
    let data = edges.data().iter().map(|v| v / top).collect();
    EdgeMap::from_vec(edges.height(), edges.width(), data).expect("scaled edges stay finite and nonnegative")
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    match command {
        Command::Filter {
            scores,
            edges,
            image,
            sigma_s,
            sigma_r,
            iters,
            out,
            threads,
        } => {
            let p = params(sigma_s, sigma_r, iters)?;
            let threads = resolve_threads(threads)?;
            require_file(&scores)?;
            let x = io::read_tensor(&scores)?;
            let g = match (edges, image) {
                (Some(e), _) => io::read_edge_tensor(e)?,
                (None, Some(img)) => gradient_magnitude_edges(&io::read_ppm(img)?)?,
                (None, None) => unreachable!("clap enforces the guide group"),
            };
            let (y, _) = filter_2d_threaded(&x, &g, &p, false, threads)?;
            io::write_tensor(&out, &y)?;
            writeln!(stderr, "filtered {x} with K={iters} into {}", out.display())?;
        }
        Command::Edges { image, model, out } => {
            let img = io::read_ppm(&image)?;
            let edges = match model {
                Some(ckpt) => model_edges(&img, &io::read_checkpoint(ckpt)?)?,
                None => gradient_magnitude_edges(&img)?,
            };
            std::fs::write(&out, io::encode_edge_pgm(&normalize_edges(&edges)))?;
        }
        Command::Train { config, out, history } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = TrainConfig::parse(&text).map_err(|e| Failure::Usage(e.to_string()))?;
            let samples = cfg.training_set()?;
            let init = init_edge_model(cfg.seed);
            let outcome = train_from(init, &samples, &cfg.params()?, &cfg.hyper())?;
            io::write_checkpoint(&out, &outcome.model)?;
            let mut csv = String::from("epoch,loss\n");
            for (e, loss) in outcome.history.iter().enumerate() {
                let _ = writeln!(csv, "{e},{loss}");
            }
            std::fs::write(&history, csv)?;
            if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
                writeln!(stderr, "trained {} epochs: loss {first} -> {last}", outcome.history.len())?;
            }
        }
        Command::Gradcheck { seed, cases, tol } => {
            if cases == 0 {
                return Err(Failure::Usage("--cases must be at least 1".into()));
            }
            if !(tol >= 0.0) {
                return Err(Failure::Usage("--tol must be nonnegative".into()));
            }
            let report = run_gradcheck(seed, cases, DEFAULT_STEP)?;
            writeln!(stdout, "cases,max_relative_error")?;
            writeln!(stdout, "{},{}", report.cases, report.max_relative_error)?;
            if report.max_relative_error > tol {
                let dump = report.worst.map(|c| c.to_string()).unwrap_or_default();
                return Err(Failure::Check(format!(
                    "gradient check failed: max relative error {} exceeds {tol}\nworst instance:\n{dump}",
                    report.max_relative_error
                )));
            }
        }
        Command::Sweep {
            scores,
            edges,
            labels,
            sigma_s_grid,
            sigma_r_grid,
            iters_grid,
            out,
            threads,
        } => {
            let ss: Vec<f64> = parse_list("--sigma-s-grid", &sigma_s_grid)?;
            let sr: Vec<f64> = parse_list("--sigma-r-grid", &sigma_r_grid)?;
            let ks: Vec<usize> = parse_list("--iters-grid", &iters_grid)?;
            let mut grid = Vec::new();
            for &s in &ss {
                for &r in &sr {
                    for &k in &ks {
                        grid.push(params(s, r, k)?);
                    }
                }
            }
            let threads = resolve_threads(threads)?;
            let x = io::read_tensor(&scores)?;
            let g = io::read_edge_tensor(&edges)?;
            let gt = io::read_label_pgm(&labels)?;
            let mut csv = String::from("sigma_s,sigma_r,K,miou\n");
            for p in grid {
                let (y, _) = filter_2d_threaded(&x, &g, &p, false, threads)?;
                let report = mean_iou(&y.argmax(), &gt, x.channels())?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    p.sigma_s,
                    p.sigma_r,
                    p.iterations,
                    crate::metrics::fmt_opt(report.mean_iou)
                );
            }
            emit(out.as_deref(), stdout, &csv)?;
        }
        Command::Bench {
            height,
            width,
            channels,
            iters,
            repeat,
            threads,
            seed,
        } => {
            if height == 0 || width == 0 || channels == 0 || repeat == 0 {
                return Err(Failure::Usage("sizes and --repeat must be positive".into()));
            }
            let p = params(100.0, 1.0, iters)?;
            let threads = resolve_threads(threads)?;
            let (x, g) = bench_inputs(height, width, channels, seed)?;
            filter_2d_threaded(&x, &g, &p, false, threads)?;
            let mut times = Vec::with_capacity(repeat);
            for _ in 0..repeat {
                let t = Instant::now();
                filter_2d_threaded(&x, &g, &p, false, threads)?;
                times.push(t.elapsed().as_secs_f64() * 1e3);
            }
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let min = times.iter().copied().fold(f64::INFINITY, f64::min);
            writeln!(stdout, "height,width,channels,iters,threads,repeat,mean_ms,min_ms")?;
            writeln!(stdout, "{height},{width},{channels},{iters},{threads},{repeat},{mean:.3},{min:.3}")?;
        }
        Command::Eval {
            pred,
            gt,
            classes,
            trimap_widths,
            out,
        } => {
            if classes == 0 {
                return Err(Failure::Usage("--classes must be at least 1".into()));
            }
            let widths: Vec<f64> = parse_list("--trimap-widths", &trimap_widths)?;
            let p = io::read_label_pgm(&pred)?;
            let g = io::read_label_pgm(&gt)?;
            let report = mean_iou(&p, &g, classes)?;
            let curve = trimap_curve(&p, &g, classes, &widths)?;
            let text = format!("{}\n{}", report.to_csv(), curve.to_csv());
            emit(out.as_deref(), stdout, &text)?;
        }
    }
    Ok(())
}

/// Uniform random scores in `[0, 1)` and edges in `[0, 2)`.
pub fn bench_inputs(height: usize, width: usize, channels: usize, seed: u64) -> crate::Result<(ScoreMap, EdgeMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..height * width * channels).map(|_| rng.random::<f64>()).collect();
    let g = (0..height * width).map(|_| 2.0 * rng.random::<f64>()).collect();
    Ok((
        ScoreMap::from_vec(height, width, channels, x)?,
        EdgeMap::from_vec(height, width, g)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("dtfilter").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["filter", "--out", "x"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["gradcheck", "--cases", "0"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["bench", "--height", "0"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("gradcheck"));
    }

    #[test]
    fn gradcheck_exit_codes() {
        let (code, out, _) = run_args(&["gradcheck", "--cases", "3"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("cases,max_relative_error\n3,"));
        let (code, _, err) = run_args(&["gradcheck", "--cases", "2", "--tol", "0"]);
        assert_eq!(code, EXIT_CHECK);
        assert!(err.contains("worst instance"));
    }

    #[test]
    fn normalize_handles_zero_maps() {
        let z = EdgeMap::new(2, 2, 0.0).unwrap();
        assert_eq!(normalize_edges(&z), z);
        let e = EdgeMap::from_vec(1, 2, vec![0.5, 2.0]).unwrap();
        assert_eq!(normalize_edges(&e).data(), &[0.25, 1.0]);
    }

    #[test]
    fn bench_reports_min_not_above_mean() {
        let (code, out, _) = run_args(&["bench", "--height", "16", "--width", "12", "--channels", "2", "--repeat", "3"]);
        assert_eq!(code, EXIT_OK);
        let line = out.lines().nth(1).unwrap();
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(f[7] <= f[6] + 1e-9);
    }
}
