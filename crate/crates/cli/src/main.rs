//! `momentmix` command-line driver.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid arguments or an
//! infeasible shape/rank, 3 missing tensor entry, 4 degenerate spectrum.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod experiment;
mod io;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use momentmix::decomposition::{
    approximate, approximation_errors, choose_params, decompose, max_rank, vec_err_max, Decomposition, DecompositionParams,
    Diagnostics,
};
use momentmix::experiments::planted_tensor;
use momentmix::gmm::{
    accuracy, classify, em_baseline, learn_from_moments, parameter_error, sample_gmm, EmOptions, GmmModel, LearnOptions,
    MomentPlan,
};
use momentmix::numerics::derive_seed;
use momentmix::tensor_store::{perturb, IncompleteSymmetricTensor};

use crate::experiment::{run_experiment, ExperimentArgs};
use crate::table::{Cell, Format, Table};

const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(
    name = "momentmix",
    version,
    about = "Incomplete symmetric tensor decomposition and Gaussian mixture learning"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output file for the command's main artifact (stdout if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of printed tables and metrics.
    #[arg(long, global = true, value_enum, default_value_t = Format::Md)]
    format: Format,
}

#[derive(Debug, Args)]
struct Shape {
    /// Dimension (number of coordinates, including the first).
    #[arg(long)]
    d: usize,
    /// Tensor order.
    #[arg(long)]
    m: usize,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Tensor JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Rank to recover.
    #[arg(long)]
    r: usize,
    /// Override the automatic basis choice (needs --k).
    #[arg(long, requires = "k")]
    p: Option<usize>,
    /// Override the automatic basis choice (needs --p).
    #[arg(long, requires = "p")]
    k: Option<usize>,
    /// Ground-truth components (decomposition JSON) for vec-err-max.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Largest rank the decomposition handles for (d, m).
    Maxrank(Shape),
    /// Basis parameters (p, k) chosen for (d, m, r).
    Params {
        #[command(flatten)]
        shape: Shape,
        /// Number of components.
        #[arg(long)]
        r: usize,
    },
    /// Random rank-r tensor on its distinct-index entries.
    GenTensor {
        #[command(flatten)]
        shape: Shape,
        /// Number of components.
        #[arg(long)]
        r: usize,
        /// Where to write the planted components.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Exact decomposition without refinement.
    Decompose(SolveArgs),
    /// Decomposition followed by least-squares refinement.
    Approximate {
        #[command(flatten)]
        solve: SolveArgs,
        /// Add noise of this norm to the input first and score against the clean input.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Random starts allowed for the refinement.
        #[arg(long, default_value_t = momentmix::decomposition::DEFAULT_STARTS)]
        starts: usize,
    },
    /// Random diagonal Gaussian mixture.
    GenGmm {
        /// Dimension.
        #[arg(long)]
        d: usize,
        /// Number of components.
        #[arg(long)]
        r: usize,
    },
    /// Draw samples (CSV) and their component labels.
    Sample {
        /// Mixture model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Labels file (default: `<out stem>.labels.csv`).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Moments needed to learn an r-component mixture from order-m moments.
    Moments {
        /// Samples CSV, one row per sample.
        #[arg(long, required_unless_present = "model", conflicts_with = "model")]
        samples: Option<PathBuf>,
        /// Use the exact population moments of this model instead of samples.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Number of components.
        #[arg(long)]
        r: usize,
        /// Moment order used for the decomposition.
        #[arg(long)]
        m: usize,
    },
    /// Learn a mixture by the moment method.
    Learn {
        /// Samples CSV, one row per sample.
        #[arg(long, required_unless_present = "moments", conflicts_with = "moments")]
        samples: Option<PathBuf>,
        /// Precomputed moments file.
        #[arg(long)]
        moments: Option<PathBuf>,
        /// Number of components.
        #[arg(long)]
        r: usize,
        /// Moment order used for the decomposition.
        #[arg(long)]
        m: usize,
    },
    /// Learn a mixture with the EM baseline.
    Em {
        /// Samples CSV, one row per sample.
        #[arg(long)]
        samples: PathBuf,
        /// Number of components.
        #[arg(long)]
        r: usize,
        /// Iteration cap.
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        /// Added to every variance in each M-step.
        #[arg(long, default_value_t = 1e-3)]
        reg: f64,
    },
    /// Score a model on labeled samples.
    Evaluate {
        /// Mixture model JSON to score.
        #[arg(long)]
        model: PathBuf,
        /// Samples CSV, one row per sample.
        #[arg(long)]
        samples: PathBuf,
        /// Labels file (default: `<samples stem>.labels.csv`).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// True model, for the parameter error.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Rerun one of the experiment tables.
    Experiment(ExperimentArgs),
}

/// Argument values that parse but describe an impossible request.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use momentmix::Error as E;
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err
        .chain()
        .find_map(|e| e.downcast_ref::<momentmix::Error>())
        .map(|e| e.root())
    {
        Some(E::MissingEntry(_)) => 3,
        Some(E::DegenerateSpectrum { .. }) => 4,
        Some(E::RankTooLarge { .. } | E::OrderExceedsDim { .. } | E::ShapeCondition(_) | E::OrderConflict { .. }) => 2,
        _ => 1,
    }
}

fn check_shape(d: usize, m: usize) -> Result<()> {
    if m < 3 {
        return Err(usage(format!("order m = {m} must be at least 3")));
    }
    if d <= m {
        return Err(usage(format!("dimension d = {d} must exceed the order m = {m}")));
    }
    Ok(())
}

fn print(table: &Table, format: Format) {
    print!("{}", table.render(format));
}

// Metrics go to stdout unless stdout already carries the artifact.
fn report(table: &Table, format: Format, out: Option<&Path>) {
    match out {
        Some(_) => print(table, format),
        None => eprint!("{}", table.render(format)),
    }
}

fn read_tensor(path: &Path) -> Result<IncompleteSymmetricTensor> {
    IncompleteSymmetricTensor::read_json(io::open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> Result<GmmModel> {
    GmmModel::read_json(io::open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn solve_params(t: &IncompleteSymmetricTensor, a: &SolveArgs, seed: u64) -> Result<DecompositionParams> {
    let params = match (a.p, a.k) {
        (Some(p), Some(k)) => DecompositionParams::new(a.r, p, k),
        _ => choose_params(t.dim().saturating_sub(1), t.order(), a.r)?,
    };
    Ok(params.with_seed(seed))
}

fn write_decomposition(out: Option<&Path>, dec: &Decomposition) -> Result<()> {
    io::emit(out, |w| Ok(dec.write_json(w)?))
}

fn truth_error(a: &SolveArgs, dec: &Decomposition) -> Result<Option<f64>> {
    let Some(path) = &a.truth else { return Ok(None) };
    let truth = Decomposition::read_json(io::open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if truth.rank() != dec.rank() || truth.d != dec.d {
        bail!(
            "truth has {} components of length {}, fit has {} of length {}",
            truth.rank(),
            truth.d,
            dec.rank(),
            dec.d
        );
    }
    Ok(Some(vec_err_max(&truth.components, &dec.components, dec.m)))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let out = g.out.as_deref();
    match &cli.command {
        Command::Maxrank(s) => {
            check_shape(s.d, s.m)?;
            let b = max_rank(s.d - 1, s.m)?;
            let t = Table::record(vec![
                ("d", s.d.into()),
                ("m", s.m.into()),
                ("r_max", b.r_max.into()),
                ("p_star", b.p_star.into()),
                ("k_star", b.k_star.into()),
                ("guaranteed", b.guaranteed.into()),
            ]);
            print(&t, g.format);
        }
        Command::Params { shape, r } => {
            check_shape(shape.d, shape.m)?;
            let p = choose_params(shape.d - 1, shape.m, *r)?;
            let t = Table::record(vec![
                ("d", shape.d.into()),
                ("m", shape.m.into()),
                ("r", (*r).into()),
                ("p", p.p.into()),
                ("k", p.k.into()),
            ]);
            print(&t, g.format);
        }
        Command::GenTensor { shape, r, truth } => {
            check_shape(shape.d, shape.m)?;
            if *r == 0 {
                return Err(usage("rank must be positive"));
            }
            let (t, comps) = planted_tensor(shape.d, shape.m, *r, g.seed)?;
            io::emit(out, |w| Ok(t.write_json(w)?))?;
            if let Some(path) = truth {
                let dec = Decomposition {
                    d: shape.d,
                    m: shape.m,
                    components: comps,
                    diagnostics: Diagnostics::default(),
                };
                write_decomposition(Some(path), &dec)?;
            }
        }
        Command::Decompose(a) => {
            let t = read_tensor(&a.input)?;
            let dec = decompose(&t, &solve_params(&t, a, g.seed)?)?;
            let vec_err = truth_error(a, &dec)?;
            write_decomposition(out, &dec)?;
            let mut pairs = vec![("r", dec.rank().into()), ("decomp_err", dec.diagnostics.decomp_err.into())];
            if let Some(v) = vec_err {
                pairs.push(("vec_err_max", v.into()));
            }
            report(&Table::record(pairs), g.format, out);
        }
        Command::Approximate {
            solve: a,
            epsilon,
            starts,
        } => {
            let clean = read_tensor(&a.input)?;
            let noisy = match epsilon {
                Some(e) if !(*e >= 0.0) => return Err(usage("epsilon must be nonnegative")),
                Some(e) => perturb(&clean, *e, derive_seed(g.seed, 1)),
                None => clean.clone(),
            };
            let mut params = solve_params(&noisy, a, g.seed)?;
            params.starts = *starts;
            let dec = approximate(&noisy, &params)?;
            let vec_err = truth_error(a, &dec)?;
            write_decomposition(out, &dec)?;
            let mut pairs = vec![("r", dec.rank().into()), ("decomp_err", dec.diagnostics.decomp_err.into())];
            if epsilon.is_some() {
                let e = approximation_errors(&dec, &clean, &noisy)?;
                pairs.push(("abs_err", e.abs_err.into()));
                pairs.push(("rel_err", e.rel_err.into()));
            }
            if let Some(v) = vec_err {
                pairs.push(("vec_err_max", v.into()));
            }
            report(&Table::record(pairs), g.format, out);
        }
        Command::GenGmm { d, r } => {
            if *d == 0 || *r == 0 {
                return Err(usage("d and r must be positive"));
            }
            let model = GmmModel::random(*d, *r, g.seed);
            io::emit(out, |w| Ok(model.write_json(w)?))?;
        }
        Command::Sample { model, n, labels } => {
            let Some(out) = out else {
                return Err(usage("sample needs --out for the CSV file"));
            };
            if *n == 0 {
                return Err(usage("--n must be positive"));
            }
            let s = sample_gmm(&read_model(model)?, *n, g.seed)?;
            io::write_samples(out, &s)?;
            let lp = labels.clone().unwrap_or_else(|| io::labels_path(out));
            io::write_labels(&lp, s.labels.as_deref().unwrap_or_default())?;
        }
        Command::Moments { samples, model, r, m } => {
            let moments = match (samples, model) {
                (Some(p), _) => {
                    let s = io::read_samples(p)?;
                    MomentPlan::new(s.dim(), *r, *m)?.from_samples(&s)?
                }
                (None, Some(p)) => {
                    let model = read_model(p)?;
                    MomentPlan::new(model.dim(), *r, *m)?.exact(&model)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            io::emit(out, |w| io::write_moments(w, &moments))?;
        }
        Command::Learn { samples, moments, r, m } => {
            let mo = match (samples, moments) {
                (Some(p), _) => {
                    let s = io::read_samples(p)?;
                    MomentPlan::new(s.dim(), *r, *m)?.from_samples(&s)?
                }
                (None, Some(p)) => io::read_moments(p)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            if mo.high.order != *m {
                return Err(usage(format!("moments file has order {}, --m is {m}", mo.high.order)));
            }
            let (model, rep) = learn_from_moments(
                &mo,
                *r,
                &LearnOptions {
                    seed: g.seed,
                    ..Default::default()
                },
            )?;
            io::emit(out, |w| Ok(model.write_json(w)?))?;
            {
                let t = Table::record(vec![
                    ("r", model.r().into()),
                    ("t", rep.t.into()),
                    ("p", rep.params.p.into()),
                    ("k", rep.params.k.into()),
                    ("attempts", rep.attempts.into()),
                    ("decomp_err", rep.decomp_err.into()),
                    ("refine_objective", rep.refine_objective.into()),
                ]);
                report(&t, g.format, out);
            }
        }
        Command::Em {
            samples,
            r,
            max_iters,
            reg,
        } => {
            let s = io::read_samples(samples)?;
            let fit = em_baseline(
                &s,
                *r,
                &EmOptions {
                    max_iters: *max_iters,
                    reg_value: *reg,
                    seed: g.seed,
                },
            )?;
            io::emit(out, |w| Ok(fit.model.write_json(w)?))?;
            {
                let t = Table::record(vec![
                    ("r", fit.model.r().into()),
                    ("iterations", fit.log_likelihoods.len().into()),
                    ("log_likelihood", fit.log_likelihoods.last().copied().into()),
                    ("converged", fit.converged.into()),
                ]);
                report(&t, g.format, out);
            }
        }
        Command::Evaluate {
            model,
            samples,
            labels,
            truth,
        } => {
            let model = read_model(model)?;
            let s = io::read_samples(samples)?;
            if s.dim() != model.dim() {
                return Err(usage(format!(
                    "samples have {} columns, model has dimension {}",
                    s.dim(),
                    model.dim()
                )));
            }
            let lp = labels.clone().unwrap_or_else(|| io::labels_path(samples));
            let truth_labels = io::read_labels(&lp)?;
            if truth_labels.len() != s.len() {
                bail!("{} labels for {} samples", truth_labels.len(), s.len());
            }
            let acc = accuracy(&classify(&model, &s), &truth_labels);
            let mut pairs = vec![("n", s.len().into()), ("accuracy", acc.into())];
            if let Some(tp) = truth {
                let tm = read_model(tp)?;
                let err = if tm.r() == model.r() && tm.dim() == model.dim() {
                    Some(parameter_error(&tm, &model))
                } else {
                    None
                };
                pairs.push(("parameter_error", Cell::from(err)));
            }
            print(&Table::record(pairs), g.format);
        }
        Command::Experiment(a) => {
            let t = run_experiment(a, g.seed)?;
            let text = t.render(g.format);
            match out {
                Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn init_pool() -> Result<()> {
    if let Ok(v) = std::env::var("MOMENTMIX_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("MOMENTMIX_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(usage("MOMENTMIX_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    eprintln!("config: {:?}", cli);
    match init_pool().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
