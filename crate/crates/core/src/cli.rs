//! The `gil` batch driver. Exit codes: 0 pass, 1 usage/config/runtime
//! error, 2 a checked condition or bound failed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::codec::{decode_field, encode_stream};
use crate::conditions::{check_fcond, scale_to_unit, ConditionReport};
use crate::config::{Condition, ExperimentConfig, FreeEnergyMethod};
use crate::error::{GilError, Result};
use crate::gaussian::poincare_constant;
use crate::integrate::gauss_legendre;
use crate::lattice::{Field, Tilt, Torus};
use crate::oracle::free_energy;
use crate::renorm::{fmt17, verify_theorem, DecompositionPlan, HessianMethod, InducedH1};
use crate::sampler::{
    poincare_variance_check, run_chain, sample_observables, verify_l1norm_bounds, ChainConfig, ChainReport, GibbsTarget, Linear, Target,
};
use crate::stats::{Batches, Method};

#[derive(Debug, Parser)]
#[command(name = "gil", version, about = "Gradient interface lattice experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallness conditions at the configured β (JSON).
    Check(Args),
    /// f(u) − f(0) over the u grid (CSV).
    FreeEnergy(Args),
    /// Hessian lower bound over the u grid (CSV).
    Hessian(Args),
    /// Fourier and variance bounds for the induced measure (JSON).
    VerifyLemma(Args),
    /// Gibbs chain observables over the u grid (CSV).
    Sample(Args),
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Experiment config (JSON, see schema/config.schema.json).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; defaults to the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to GIL_THREADS.
    #[arg(long, env = "GIL_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 2,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: &Command) -> Result<Outcome> {
    let args = match command {
        Command::Check(a) | Command::FreeEnergy(a) | Command::Hessian(a) | Command::VerifyLemma(a) | Command::Sample(a) => a,
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(GilError::Config("threads must be >= 1".into()));
        }
        // an already-initialized pool (repeated calls in one process) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = std::fs::read_to_string(&args.config).map_err(|e| GilError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let out =
        args.out.clone().or_else(|| cfg.out.clone()).ok_or_else(|| GilError::Config("no output path: pass --out or set \"out\"".into()))?;
    let (body, outcome) = match command {
        Command::Check(_) => cmd_check(&cfg)?,
        Command::FreeEnergy(_) => cmd_free_energy(&cfg, args.seed)?,
        Command::Hessian(_) => cmd_hessian(&cfg, args.seed)?,
        Command::VerifyLemma(_) => cmd_verify_lemma(&cfg, args.seed)?,
        Command::Sample(_) => {
            let (csv, snapshot) = cmd_sample(&cfg, args.seed)?;
            if let Some(s) = snapshot {
                write(&snapshot_path(&out), &s)?;
            }
            (csv, Outcome::Pass)
        }
    };
    write(&out, &body)?;
    Ok(outcome)
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(GilError::from)
}

/// `<out>.fields`
pub fn snapshot_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".fields");
    PathBuf::from(s)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn u_header(d: usize) -> String {
    (1..=d).map(|i| format!("u_{i},")).collect()
}

fn u_cells(u: &[f64]) -> String {
    u.iter().map(|x| format!("{},", fmt17(*x))).collect()
}

fn verdict(report: &ConditionReport, condition: Condition, pessimistic: bool) -> bool {
    let s = if pessimistic { report.satisfied_pessimistic } else { report.satisfied };
    match condition {
        Condition::Fcond => s.fcond,
        Condition::Alt9 => s.alt_9,
        Condition::Alt11 => s.alt_11,
        Condition::Any => s.fcond || s.alt_9 || s.alt_11,
    }
}

pub fn cmd_check(cfg: &ExperimentConfig) -> Result<(String, Outcome)> {
    let p = cfg.potential()?;
    let beta = cfg.resolve_beta()?;
    let norms = p.norms(1e-10)?;
    let report = check_fcond(beta, cfg.d, &p, &norms)?;
    let pass = verdict(&report, cfg.check.condition, cfg.check.pessimistic);
    let body = json!({
        "command": "check",
        "beta": beta,
        "d": cfg.d,
        "condition": cfg.check.condition,
        "pessimistic": cfg.check.pessimistic,
        "satisfied": pass,
        "norms": {
            "l1_g0pp": norms.l1_g0pp,
            "l2_g0p": norms.l2_g0p,
            "l1_g0": norms.l1_g0,
            "quadrature_error": norms.quadrature_error,
        },
        "report": report,
    });
    Ok((to_json(&body), Outcome::from_pass(pass)))
}

pub fn cmd_free_energy(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(String, Outcome)> {
    let t = cfg.torus()?;
    let p = cfg.potential()?;
    let beta = cfg.resolve_beta()?;
    let q = cfg.quadrature;
    let use_oracle = match cfg.free_energy.method {
        FreeEnergyMethod::Oracle => true,
        FreeEnergyMethod::Integration => false,
        FreeEnergyMethod::Auto => t.dof() <= q.max_dof,
    };
    let mut out = format!("{}f_diff,method,std_error\n", u_header(cfg.d));
    if cfg.u_grid.is_empty() {
        return Ok((out, Outcome::Pass));
    }
    if use_oracle {
        let f0 = free_energy(&Tilt::zero(cfg.d), &p, &t, beta, &q)?.value;
        for u in &cfg.u_grid {
            let f = free_energy(&Tilt(u.clone()), &p, &t, beta, &q)?.value;
            out.push_str(&format!("{}{},oracle,{}\n", u_cells(u), fmt17(f - f0), fmt17(0.0)));
        }
    } else {
        let chain = cfg.chain_for("free-energy integration", seed)?;
        for (row, u) in cfg.u_grid.iter().enumerate() {
            let (value, se) = integrate_path(&t, &p, beta, u, cfg.free_energy.path_nodes, &chain, row)?;
            out.push_str(&format!("{}{},chain,{}\n", u_cells(u), fmt17(value), fmt17(se)));
        }
    }
    Ok((out, Outcome::Pass))
}

/// f(u) − f(0) = ∫₀¹ ⟨D_uH⟩(su)·u ds by Gauss–Legendre in s.
pub fn integrate_path(
    t: &Torus,
    p: &crate::potential::Potential,
    beta: f64,
    u: &[f64],
    nodes: usize,
    chain: &ChainConfig,
    row: usize,
) -> Result<(f64, f64)> {
    let (xs, ws) = gauss_legendre(nodes);
    let mut value = 0.0;
    let mut var = 0.0;
    for (j, (x, w)) in xs.iter().zip(&ws).enumerate() {
        let s = 0.5 * (x + 1.0);
        let tilt = Tilt(u.iter().map(|ui| s * ui).collect());
        let target = GibbsTarget::new(t, &tilt, p, beta)?;
        let stream = ((row * nodes + j) * chain.n_chains) as u64;
        let run = sample_observables(&target, chain, stream, &vec![0.0; t.dof()], 1, |x, out| {
            let (d1, _) = target.tilt_derivatives(x);
            out.push(d1.iter().zip(u).map(|(a, b)| a * b).sum());
        })?;
        let est = run.batches(chain)?.mean_of(0, Method::Chain);
        value += 0.5 * w * est.value;
        var += (0.5 * w * est.std_error).powi(2);
    }
    Ok((value, var.sqrt()))
}

pub fn cmd_hessian(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(String, Outcome)> {
    let t = cfg.torus()?;
    let p = cfg.potential()?;
    let beta = cfg.resolve_beta()?;
    let q = cfg.quadrature;
    let needs_chain = match cfg.hessian.method {
        HessianMethod::Chain => true,
        HessianMethod::Oracle => false,
        HessianMethod::Auto => t.dof() > q.max_dof,
    };
    let chain = if needs_chain {
        cfg.chain_for("hessian", seed)?
    } else {
        // never consulted on the oracle path
        ChainConfig::new(1.0, 2, 1)
    };
    let report = verify_theorem(&p, beta, &t, &cfg.grid(), cfg.hessian.method, &q, &chain)?;
    Ok((report.to_csv(cfg.d), Outcome::from_pass(report.passed())))
}

pub fn cmd_verify_lemma(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(String, Outcome)> {
    let k_grid = cfg.k_grid.ok_or_else(|| GilError::Config("verify-lemma needs a \"k_grid\" block".into()))?;
    let chain = cfg.chain_for("verify-lemma", seed)?;
    let t = cfg.torus()?;
    let beta = cfg.resolve_beta()?;
    let (ps, factor) = scale_to_unit(&cfg.potential()?, beta)?;
    let u = cfg.lemma.u.clone().or_else(|| cfg.u_grid.first().cloned()).unwrap_or_else(|| vec![0.0; cfg.d]);
    let u = Tilt(u).scaled(factor);
    let base = DecompositionPlan::new(&ps, &t)?;
    let lambda = cfg.lemma.lambda.unwrap_or(base.lambda);
    let plan = base.with_lambda(lambda)?;
    let psi = Field::zeros(&t);
    let l1 = verify_l1norm_bounds(&ps, &t, &u, &psi, lambda, cfg.lemma.axis, cfg.lemma.site, &k_grid, &chain)?;

    let delta = (1.0 / lambda - plan.cbar) * poincare_constant(&t)?.delta_m;
    let h1 = InducedH1::new(&plan, &u, &psi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut poincare = Vec::with_capacity(cfg.lemma.observables);
    for j in 0..cfg.lemma.observables {
        let mut v: Vec<f64> = (0..h1.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut c = chain.clone();
        c.seed = chain.seed.wrapping_add(1 + j as u64);
        poincare.push(poincare_variance_check(&h1, delta, &Linear(v), &c)?);
    }
    let pass = l1.pass && poincare.iter().all(|r| r.pass);
    let body = json!({
        "command": "verify-lemma",
        "beta": beta,
        "lambda": lambda,
        "tilt_scaled": u.0,
        "l1norm": l1,
        "poincare": poincare,
        "pass": pass,
    });
    Ok((to_json(&body), Outcome::from_pass(pass)))
}

/// Observable rows, the chain's report, and its final state.
type ChainOutput = (Vec<f64>, ChainReport, Vec<f64>);

/// Returns the CSV and, when requested, the last state of every chain.
pub fn cmd_sample(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(String, Option<String>)> {
    let chain = cfg.chain_for("sample", seed)?;
    let t = cfg.torus()?;
    let p = cfg.potential()?;
    let beta = cfg.resolve_beta()?;
    let start = match &cfg.sample.start_field {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| GilError::Config(format!("{}: {e}", path.display())))?;
            let (ft, f) = decode_field(&text)?;
            if ft.d() != t.d() || ft.m() != t.m() {
                return Err(GilError::Config("start_field lies on a different torus".into()));
            }
            f.free().to_vec()
        }
        None => vec![0.0; t.dof()],
    };
    let names: Vec<String> = std::iter::once("energy_per_site".to_string()).chain((1..=cfg.d).map(|i| format!("d_u{i}_h"))).collect();
    let mut out = format!("{}observable,value,std_error,n_effective,method,acceptance\n", u_header(cfg.d));
    let mut last_states = Vec::new();
    let n = t.volume() as f64;
    for (row, u) in cfg.u_grid.iter().enumerate() {
        let target = GibbsTarget::new(&t, &Tilt(u.clone()), &p, beta)?;
        let runs: Vec<Result<ChainOutput>> = (0..chain.n_chains)
            .into_par_iter()
            .map(|c| {
                let mut rows = Vec::new();
                let mut last = start.clone();
                let report = run_chain(&target, &chain, (row * chain.n_chains + c) as u64, &start, |x| {
                    rows.push(target.energy(x) / (beta * n));
                    rows.extend(target.tilt_derivatives(x).0);
                    last.clear();
                    last.extend_from_slice(x);
                })?;
                Ok((rows, report, last))
            })
            .collect();
        let mut series = Vec::with_capacity(chain.n_chains);
        let mut acceptance = 0.0;
        for r in runs {
            let (rows, report, last) = r?;
            series.push(rows);
            acceptance += report.acceptance / chain.n_chains as f64;
            last_states.push(Field::from_free(&t, &last)?);
        }
        let batches = Batches::from_chains(&series, names.len(), chain.batches_per_chain())?;
        for (k, name) in names.iter().enumerate() {
            let e = batches.mean_of(k, Method::Chain);
            out.push_str(&format!(
                "{}{name},{},{},{},{},{}\n",
                u_cells(u),
                fmt17(e.value),
                fmt17(e.std_error),
                fmt17(e.n_effective),
                e.method.as_str(),
                fmt17(acceptance)
            ));
        }
    }
    let snapshot = cfg.sample.snapshot.then(|| encode_stream(&t, &last_states));
    Ok((out, snapshot))
}
