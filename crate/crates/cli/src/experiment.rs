use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use momentmix::decomposition::max_rank;
use momentmix::experiments::{approx_trial, exact_trial, gmm_trial, summarize, ApproxTrial, ExactTrial, GmmTrial};
use momentmix::numerics::derive_seed;
use rayon::prelude::*;

use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Exact decomposition of planted tensors.
    Table2,
    /// Approximation of noisy planted tensors.
    Table3,
    /// Mixture learning against the EM baseline.
    Table4,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    pub name: Experiment,
    /// Dimension.
    #[arg(long, default_value_t = 15)]
    pub d: usize,
    /// Tensor orders, one row group each.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Single order; shorthand for `--orders <m>`.
    #[arg(long, conflicts_with = "orders")]
    pub m: Option<usize>,
    /// Ranks matching `--orders`; defaults to the largest computable rank.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Same rank for every order.
    #[arg(long, conflicts_with = "ranks")]
    pub r: Option<usize>,
    /// Trials per row (default 20, or 5 for table4).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Noise levels (table3).
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    pub epsilons: Vec<f64>,
    /// Samples per trial (table4).
    #[arg(long, default_value_t = 100_000)]
    pub n_samples: usize,
}

struct Row {
    m: usize,
    r: usize,
}

fn rows(args: &ExperimentArgs) -> Result<Vec<Row>> {
    let orders = match (&args.orders, args.m) {
        (Some(o), _) => o.clone(),
        (None, Some(m)) => vec![m],
        (None, None) if args.name == Experiment::Table4 => vec![3],
        (None, None) => vec![3, 4],
    };
    if orders.is_empty() {
        bail!("no orders given");
    }
    let ranks = match (&args.ranks, args.r) {
        (Some(r), _) if r.len() != orders.len() => bail!(
            "--ranks needs one value per order ({} given, {} orders)",
            r.len(),
            orders.len()
        ),
        (Some(r), _) => r.clone(),
        (None, Some(r)) => vec![r; orders.len()],
        (None, None) => orders
            .iter()
            .map(|&m| max_rank(args.d - 1, m).map(|b| b.r_max))
            .collect::<momentmix::Result<_>>()?,
    };
    Ok(orders.into_iter().zip(ranks).map(|(m, r)| Row { m, r }).collect())
}

// Trials run in the global pool; collecting by index keeps the output order
// independent of scheduling.
fn run<T: Send>(trials: usize, seed: u64, f: impl Fn(u64) -> momentmix::Result<T> + Sync) -> Vec<momentmix::Result<T>> {
    (0..trials).into_par_iter().map(|i| f(derive_seed(seed, i as u64))).collect()
}

fn stats(values: &[f64]) -> [Cell; 3] {
    match summarize(values) {
        Some(s) => [s.min.into(), s.mean.into(), s.max.into()],
        None => [Cell::Empty, Cell::Empty, Cell::Empty],
    }
}

fn report_failures<T>(label: &str, results: &[momentmix::Result<T>]) -> usize {
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        if let Err(e) = r {
            eprintln!("{label} trial {i}: {e}");
            failed += 1;
        }
    }
    failed
}

pub fn run_experiment(args: &ExperimentArgs, seed: u64) -> Result<Table> {
    if args.d < 2 {
        bail!("--d must be at least 2");
    }
    let plan = rows(args)?;
    match args.name {
        Experiment::Table2 => {
            let trials = args.trials.unwrap_or(20);
            let mut t = Table::new(&[
                "d",
                "m",
                "r",
                "decomp_err_min",
                "decomp_err_avg",
                "decomp_err_max",
                "vec_err_max",
                "failed",
            ]);
            for row in &plan {
                let res = run(trials, seed, |s| exact_trial(args.d, row.m, row.r, s));
                let failed = report_failures(&format!("m={} r={}", row.m, row.r), &res);
                let ok: Vec<&ExactTrial> = res.iter().filter_map(|r| r.as_ref().ok()).collect();
                if trials == 0 {
                    continue;
                }
                let errs: Vec<f64> = ok.iter().map(|e| e.decomp_err).collect();
                let vec_max = ok.iter().map(|e| e.vec_err_max).reduce(f64::max);
                let [lo, avg, hi] = stats(&errs);
                t.push(vec![
                    args.d.into(),
                    row.m.into(),
                    row.r.into(),
                    lo,
                    avg,
                    hi,
                    vec_max.into(),
                    failed.into(),
                ]);
            }
            Ok(t)
        }
        Experiment::Table3 => {
            let trials = args.trials.unwrap_or(20);
            let mut t = Table::new(&[
                "d",
                "m",
                "r",
                "epsilon",
                "rel_err_min",
                "rel_err_avg",
                "rel_err_max",
                "abs_err_min",
                "abs_err_avg",
                "abs_err_max",
                "failed",
            ]);
            for row in &plan {
                for &eps in &args.epsilons {
                    let res = run(trials, seed, |s| approx_trial(args.d, row.m, row.r, eps, s));
                    let failed = report_failures(&format!("m={} r={} eps={eps}", row.m, row.r), &res);
                    if trials == 0 {
                        continue;
                    }
                    let ok: Vec<&ApproxTrial> = res.iter().filter_map(|r| r.as_ref().ok()).collect();
                    let rel = stats(&ok.iter().map(|a| a.rel_err).collect::<Vec<_>>());
                    let abs = stats(&ok.iter().map(|a| a.abs_err).collect::<Vec<_>>());
                    let mut cells = vec![args.d.into(), row.m.into(), row.r.into(), eps.into()];
                    cells.extend(rel);
                    cells.extend(abs);
                    cells.push(failed.into());
                    t.push(cells);
                }
            }
            Ok(t)
        }
        Experiment::Table4 => {
            let trials = args.trials.unwrap_or(5);
            let mut t = Table::new(&[
                "d",
                "m",
                "r",
                "n_samples",
                "moment_accuracy",
                "em_accuracy",
                "moment_wins",
                "moment_failed",
                "failed",
            ]);
            for row in &plan {
                let res = run(trials, seed, |s| gmm_trial(args.d, row.m, row.r, args.n_samples, s));
                let failed = report_failures(&format!("m={} r={}", row.m, row.r), &res);
                if trials == 0 {
                    continue;
                }
                let ok: Vec<&GmmTrial> = res.iter().filter_map(|r| r.as_ref().ok()).collect();
                for (i, g) in ok.iter().enumerate() {
                    if let Some(e) = &g.moment_error {
                        eprintln!("m={} r={} trial {i}: moment method failed: {e}", row.m, row.r);
                    }
                }
                // a failed moment fit scores zero
                let moment: Vec<f64> = ok.iter().map(|g| g.moment.unwrap_or(0.0)).collect();
                let em: Vec<f64> = ok.iter().map(|g| g.em).collect();
                let wins = ok.iter().filter(|g| g.moment.is_some_and(|a| a >= g.em)).count();
                let moment_failed = ok.iter().filter(|g| g.moment.is_none()).count();
                let mean = |v: &[f64]| summarize(v).map(|s| s.mean);
                t.push(vec![
                    args.d.into(),
                    row.m.into(),
                    row.r.into(),
                    args.n_samples.into(),
                    mean(&moment).into(),
                    mean(&em).into(),
                    wins.into(),
                    moment_failed.into(),
                    failed.into(),
                ]);
            }
            Ok(t)
        }
    }
}
