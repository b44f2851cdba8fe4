//! Metropolis-adjusted Langevin sampling on the free coordinates of a pinned
//! field, and the Gibbs averages built on it: the fluctuation Hessian of the
//! free energy, the characteristic function of a gradient under the induced
//! measure, and Poincaré-type variance checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::scale_to_unit;
use crate::error::{GilError, Result};
use crate::lattice::{Field, Tilt, Torus};
use crate::potential::Potential;
use crate::renorm::InducedH1;
use crate::stats::{Batches, ComplexEstimate, Estimate, MatrixEstimate, Method};

/// Negative log density on ℝ^n, up to a constant.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn energy(&self, x: &[f64]) -> f64;

    /// Writes ∇U(x) into `grad` and returns U(x).
    fn energy_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub step_size: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thinning: usize,
    #[serde(default = "one")]
    pub n_chains: usize,
    #[serde(default)]
    pub seed: u64,
    /// Tune the step size toward 57% acceptance during burn-in.
    #[serde(default = "yes")]
    pub adapt: bool,
    /// Post-burn-in acceptance window outside of which the run is rejected.
    #[serde(default = "default_bounds")]
    pub acceptance_bounds: Option<[f64; 2]>,
    /// Total batch count for error bars, split evenly across chains.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_bounds() -> Option<[f64; 2]> {
    Some([0.1, 0.95])
}
fn default_batches() -> usize {
    40
}

pub const TARGET_ACCEPTANCE: f64 = 0.574;
const ADAPT_WINDOW: usize = 50;

impl ChainConfig {
    pub fn new(step_size: f64, n_steps: usize, burn_in: usize) -> Self {
        ChainConfig {
            step_size,
            n_steps,
            burn_in,
            thinning: 1,
            n_chains: 1,
            seed: 0,
            adapt: true,
            acceptance_bounds: default_bounds(),
            batches: default_batches(),
        }
    }

    /// Initial step 0.5/√(β(2d·c2 + 1)).
    pub fn default_step(p: &Potential, beta: f64, d: usize) -> f64 {
        0.5 / (beta * (2.0 * d as f64 * p.constants().c2 + 1.0)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GilError::Precondition(format!("chain config: {m}")));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if self.burn_in >= self.n_steps {
            return bad("burn_in must be below n_steps");
        }
        if self.thinning == 0 || self.n_chains == 0 {
            return bad("thinning and n_chains must be at least 1");
        }
        if let Some([lo, hi]) = self.acceptance_bounds {
            if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
                return bad("acceptance bounds must satisfy 0 <= lo <= hi <= 1");
            }
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thinning
    }

    pub fn batches_per_chain(&self) -> usize {
        self.batches.div_ceil(self.n_chains).max(1)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainReport {
    pub acceptance: f64,
    pub step_size: f64,
    pub retained: usize,
}

/// Compares the analytic gradient with central differences at `x`.
pub fn check_gradient<T: Target + ?Sized>(target: &T, x: &[f64]) -> Result<()> {
    let n = target.dim();
    let mut g = vec![0.0; n];
    target.energy_grad(x, &mut g);
    let mut y = x.to_vec();
    for k in 0..n {
        let h = 1e-5 * x[k].abs().max(1.0);
        y[k] = x[k] + h;
        let up = target.energy(&y);
        y[k] = x[k] - h;
        let down = target.energy(&y);
        y[k] = x[k];
        let fd = (up - down) / (2.0 * h);
        if (fd - g[k]).abs() > 1e-4 * (1.0 + g[k].abs()) {
            return Err(GilError::Chain(format!(
                "gradient inconsistent with energy at coordinate {k}: analytic {} vs difference {fd}",
                g[k]
            )));
        }
    }
    Ok(())
}

/// Runs one MALA chain from `start` and hands every retained state to
/// `observe`. The random stream is (cfg.seed, stream).
pub fn run_chain<T, F>(target: &T, cfg: &ChainConfig, stream: u64, start: &[f64], mut observe: F) -> Result<ChainReport>
where
    T: Target + ?Sized,
    F: FnMut(&[f64]),
{
    cfg.validate()?;
    let n = target.dim();
    if start.len() != n {
        return Err(GilError::Precondition(format!("start has {} coordinates, target {n}", start.len())));
    }
    check_gradient(target, start)?;
    let mut rng = cfg.rng(stream);
    let mut h = cfg.step_size;
    let mut x = start.to_vec();
    let mut gx = vec![0.0; n];
    let mut ux = target.energy_grad(&x, &mut gx);
    let mut y = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let (mut window_acc, mut accepted, mut retained) = (0usize, 0usize, 0usize);
    for step in 0..cfg.n_steps {
        let drift = 0.5 * h * h;
        for k in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            y[k] = x[k] - drift * gx[k] + h * xi;
        }
        let uy = target.energy_grad(&y, &mut gy);
        // log q(x | y) − log q(y | x)
        let mut fwd = 0.0;
        let mut rev = 0.0;
        for k in 0..n {
            fwd += (y[k] - x[k] + drift * gx[k]).powi(2);
            rev += (x[k] - y[k] + drift * gy[k]).powi(2);
        }
        let log_alpha = ux - uy + (fwd - rev) / (2.0 * h * h);
        let u: f64 = rng.random();
        let accept = uy.is_finite() && u.ln() < log_alpha;
        if accept {
            std::mem::swap(&mut x, &mut y);
            std::mem::swap(&mut gx, &mut gy);
            ux = uy;
        }
        if step < cfg.burn_in {
            window_acc += accept as usize;
            if cfg.adapt && (step + 1) % ADAPT_WINDOW == 0 {
                let rate = window_acc as f64 / ADAPT_WINDOW as f64;
                h *= (rate - TARGET_ACCEPTANCE).exp();
                window_acc = 0;
            }
        } else {
            accepted += accept as usize;
            if (step - cfg.burn_in + 1).is_multiple_of(cfg.thinning) {
                observe(&x);
                retained += 1;
            }
        }
    }
    let acceptance = accepted as f64 / (cfg.n_steps - cfg.burn_in) as f64;
    if let Some([lo, hi]) = cfg.acceptance_bounds {
        if acceptance < lo || acceptance > hi {
            return Err(GilError::Chain(format!("acceptance {acceptance:.3} outside [{lo}, {hi}] at step size {h:.3e}")));
        }
    }
    Ok(ChainReport { acceptance, step_size: h, retained })
}

/// Observable rows from every chain of a run.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub series: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub reports: Vec<ChainReport>,
}

impl ChainRun {
    pub fn batches(&self, cfg: &ChainConfig) -> Result<Batches> {
        Batches::from_chains(&self.series, self.n_obs, cfg.batches_per_chain())
    }
}

/// Runs `cfg.n_chains` chains in parallel from `start`, recording `n_obs`
/// values per retained state. Chain c uses stream `stream_base + c`.
pub fn sample_observables<T, F>(
    target: &T,
    cfg: &ChainConfig,
    stream_base: u64,
    start: &[f64],
    n_obs: usize,
    observe: F,
) -> Result<ChainRun>
where
    T: Target + ?Sized,
    F: Fn(&[f64], &mut Vec<f64>) + Sync,
{
    let results: Vec<Result<(Vec<f64>, ChainReport)>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rows = Vec::with_capacity(cfg.retained() * n_obs);
            let report = run_chain(target, cfg, stream_base + c as u64, start, |x| {
                let before = rows.len();
                observe(x, &mut rows);
                debug_assert_eq!(rows.len() - before, n_obs);
            })?;
            Ok((rows, report))
        })
        .collect();
    let mut series = Vec::with_capacity(cfg.n_chains);
    let mut reports = Vec::with_capacity(cfg.n_chains);
    for r in results {
        let (rows, rep) = r?;
        series.push(rows);
        reports.push(rep);
    }
    Ok(ChainRun { series, n_obs, reports })
}

/// β·H(u, φ) on the non-origin coordinates of φ.
#[derive(Debug, Clone)]
pub struct GibbsTarget {
    torus: Torus,
    tilt: Vec<f64>,
    potential: Potential,
    beta: f64,
}

impl GibbsTarget {
    pub fn new(t: &Torus, u: &Tilt, p: &Potential, beta: f64) -> Result<Self> {
        u.check(t)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(GilError::Precondition(format!("beta must be > 0, got {beta}")));
        }
        Ok(GibbsTarget { torus: t.clone(), tilt: u.0.clone(), potential: p.clone(), beta })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() + 1);
        v.push(0.0);
        v.extend_from_slice(x);
        v
    }

    /// (D_uH, diagonal of D²_uH) at the state `x`.
    pub fn tilt_derivatives(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        crate::lattice::tilt_derivatives(&self.torus, &self.tilt, &self.values(x), &self.potential)
    }
}

impl Target for GibbsTarget {
    fn dim(&self) -> usize {
        self.torus.dof()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let p = &self.potential;
        self.beta * self.torus.sum_edges(&self.tilt, &self.values(x), |_, s| p.v(s, 0))
    }

    fn energy_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = &self.potential;
        let v = self.values(x);
        let mut full = vec![0.0; v.len()];
        self.torus.grad_edges(&self.tilt, &v, |_, s| p.v(s, 1), &mut full);
        for (g, f) in grad.iter_mut().zip(&full[1..]) {
            *g = self.beta * f;
        }
        self.beta * self.torus.sum_edges(&self.tilt, &v, |_, s| p.v(s, 0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctuationHessian {
    /// D²f^β(u) = ⟨D²_uH⟩ − var(D_uH), in the original units.
    pub hessian: MatrixEstimate,
    pub mean_curvature: MatrixEstimate,
    pub variance: MatrixEstimate,
    pub min_eigenvalue: Estimate,
    pub chains: Vec<ChainReport>,
}

/// Hessian of f^β at `u` from the fluctuation formula, sampled on the
/// β = 1, c1 = 1 rescaling and mapped back: D²f^β(u) = c1·D²f̃(√(βc1)u).
pub fn fluctuation_hessian(u: &Tilt, p: &Potential, t: &Torus, beta: f64, cfg: &ChainConfig) -> Result<FluctuationHessian> {
    let (scaled, tilt_scale) = scale_to_unit(p, beta)?;
    let c1 = p.constants().c1;
    let ut = u.scaled(tilt_scale);
    let target = GibbsTarget::new(t, &ut, &scaled, 1.0)?;
    let d = t.d();
    let start = vec![0.0; t.dof()];
    // centre D_uH on its value at the start state
    let (shift, _) = target.tilt_derivatives(&start);
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let n_obs = 2 * d + pairs.len();
    let run = sample_observables(&target, cfg, 0, &start, n_obs, |x, out| {
        let (d1, d2) = target.tilt_derivatives(x);
        let c: Vec<f64> = d1.iter().zip(&shift).map(|(a, s)| a - s).collect();
        out.extend_from_slice(&c);
        out.extend_from_slice(&d2);
        out.extend(pairs.iter().map(|&(i, j)| c[i] * c[j]));
    })?;
    let batches = run.batches(cfg)?;
    let n = batches.n_rows() as f64;
    let unbiased = n / (n - 1.0);
    let pair_index = |i: usize, j: usize| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        2 * d + pairs.iter().position(|&q| q == (a, b)).expect("pair")
    };
    let cov = |m: &[f64], i: usize, j: usize| (m[pair_index(i, j)] - m[i] * m[j]) * unbiased;
    let curv = |m: &[f64], i: usize, j: usize| if i == j { m[d + i] } else { 0.0 };

    let mut hess = square(d);
    let mut hess_se = square(d);
    let mut var = square(d);
    let mut var_se = square(d);
    let mut mc = square(d);
    let mut mc_se = square(d);
    for i in 0..d {
        for j in 0..d {
            let h = batches.jackknife(Method::Chain, |m| c1 * (curv(m, i, j) - cov(m, i, j)));
            let v = batches.jackknife(Method::Chain, |m| c1 * cov(m, i, j));
            let k = batches.jackknife(Method::Chain, |m| c1 * curv(m, i, j));
            (hess[i][j], hess_se[i][j]) = (h.value, h.std_error);
            (var[i][j], var_se[i][j]) = (v.value, v.std_error);
            (mc[i][j], mc_se[i][j]) = (k.value, k.std_error);
        }
    }
    let min_eigenvalue = batches.jackknife(Method::Chain, |m| {
        let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| c1 * (curv(m, i, j) - cov(m, i, j))).collect()).collect();
        crate::stats::min_eigenvalue(&rows)
    });
    let n_eff = batches.n_effective();
    let wrap = |value, std_error| MatrixEstimate { value, std_error, n_effective: n_eff, method: Method::Chain };
    Ok(FluctuationHessian {
        hessian: wrap(hess, hess_se),
        mean_curvature: wrap(mc, mc_se),
        variance: wrap(var, var_se),
        min_eigenvalue,
        chains: run.reports,
    })
}

fn square(d: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; d]; d]
}

/// Site pair whose difference is ∇_iθ(x), in free-coordinate indices
/// (`None` for the pinned origin).
fn gradient_probe(t: &Torus, axis: usize, site: usize) -> Result<(Option<usize>, Option<usize>)> {
    if axis >= t.d() || site >= t.volume() {
        return Err(GilError::Precondition(format!("no edge ({site}, {axis}) on this torus")));
    }
    let y = t.forward(site, axis);
    let free = |s: usize| if s == 0 { None } else { Some(s - 1) };
    Ok((free(y), free(site)))
}

fn probe_value(x: &[f64], probe: (Option<usize>, Option<usize>)) -> f64 {
    let at = |k: Option<usize>| k.map_or(0.0, |k| x[k]);
    at(probe.0) - at(probe.1)
}

fn complex_from(batches: &Batches, re: usize, im: usize) -> ComplexEstimate {
    ComplexEstimate {
        re: batches.mean_of(re, Method::Chain),
        im: batches.mean_of(im, Method::Chain),
        modulus: batches.jackknife(Method::Chain, |m| m[re].hypot(m[im])),
    }
}

/// A(k) = ⟨exp(ik∇_iθ(x))⟩ under the induced measure exp(−H₁).
pub fn characteristic_a(k: f64, axis: usize, site: usize, h1: &InducedH1, cfg: &ChainConfig) -> Result<ComplexEstimate> {
    let t = h1.torus();
    let probe = gradient_probe(t, axis, site)?;
    if k == 0.0 {
        let one = Estimate::exact(1.0, Method::Chain);
        return Ok(ComplexEstimate { re: one.clone(), im: Estimate::exact(0.0, Method::Chain), modulus: one });
    }
    let start = vec![0.0; t.dof()];
    let run = sample_observables(h1, cfg, 0, &start, 2, |x, out| {
        let s = probe_value(x, probe);
        out.push((k * s).cos());
        out.push((k * s).sin());
    })?;
    Ok(complex_from(&run.batches(cfg)?, 0, 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGrid {
    /// Grid size on [−k_max, k_max]; odd so that k = 0 is a node.
    pub points: usize,
    /// Defaults to 4·(12dC̄)^{1/2}.
    #[serde(default)]
    pub k_max: Option<f64>,
}

impl Default for KGrid {
    fn default() -> Self {
        KGrid { points: 401, k_max: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopePoint {
    pub k: f64,
    pub modulus: f64,
    pub std_error: f64,
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub estimate: Estimate,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct L1NormReport {
    pub cbar: f64,
    pub k_max: f64,
    pub points: Vec<EnvelopePoint>,
    pub envelope_pass: bool,
    /// trapezoid over the grid plus 2·12dC̄/k_max for the tails
    pub integral: BoundCheck,
    /// |⟨g₀''(u_i + ∇_iψ(x) + ∇_iθ(x))⟩|
    pub curvature_average: BoundCheck,
    pub chains: Vec<ChainReport>,
    pub pass: bool,
}

/// Samples H₁ at (u, ψ, λ) once and checks the pointwise envelope
/// |A(k)| ≤ min(1, 12dC̄/k²), the bound ∫|A| ≤ 4(12dC̄)^{1/2}, and the
/// averaged curvature bound, each to 4 standard errors. The potential must
/// already be scaled to c1 = 1.
#[allow(clippy::too_many_arguments)]
pub fn verify_l1norm_bounds(
    p: &Potential,
    t: &Torus,
    u: &Tilt,
    psi: &Field,
    lambda: f64,
    axis: usize,
    site: usize,
    k_grid: &KGrid,
    cfg: &ChainConfig,
) -> Result<L1NormReport> {
    let plan = crate::renorm::DecompositionPlan::new(p, t)?.with_lambda(lambda)?;
    let h1 = InducedH1::new(&plan, u, psi)?;
    let cbar = plan.cbar;
    let scale = 12.0 * t.d() as f64 * cbar;
    let k_max = k_grid.k_max.unwrap_or(4.0 * scale.sqrt());
    if k_grid.points < 3 || k_grid.points.is_multiple_of(2) || !(k_max > 0.0) {
        return Err(GilError::Precondition("k grid needs an odd number >= 3 of points and k_max > 0".into()));
    }
    let half = k_grid.points / 2;
    let dk = k_max / half as f64;
    let ks: Vec<f64> = (0..=half).map(|j| j as f64 * dk).collect();
    let probe = gradient_probe(t, axis, site)?;
    let offset = u.0[axis] + t.diff(psi.values(), site, axis);
    let start = vec![0.0; t.dof()];
    let nk = ks.len();
    let run = sample_observables(&h1, cfg, 0, &start, 2 * nk + 1, |x, out| {
        let s = probe_value(x, probe);
        for &k in &ks {
            out.push((k * s).cos());
            out.push((k * s).sin());
        }
        out.push(p.g0(offset + s, 2));
    })?;
    let batches = run.batches(cfg)?;

    let mut points = Vec::with_capacity(k_grid.points);
    for (j, &k) in ks.iter().enumerate() {
        let est = if j == 0 { Estimate::exact(1.0, Method::Chain) } else { complex_from(&batches, 2 * j, 2 * j + 1).modulus };
        let envelope = if k == 0.0 { 1.0 } else { (scale / (k * k)).min(1.0) };
        points.push(EnvelopePoint {
            k,
            modulus: est.value,
            std_error: est.std_error,
            envelope,
            pass: est.value <= envelope + 4.0 * est.std_error,
        });
    }
    // A(−k) is the conjugate of A(k)
    let mirrored: Vec<EnvelopePoint> = points[1..].iter().rev().map(|q| EnvelopePoint { k: -q.k, ..q.clone() }).collect();
    let points: Vec<EnvelopePoint> = mirrored.into_iter().chain(points).collect();
    let envelope_pass = points.iter().all(|q| q.pass);

    let tail = 2.0 * scale / k_max;
    let integral = batches.jackknife(Method::Chain, |m| {
        let modulus = |j: usize| if j == 0 { 1.0 } else { m[2 * j].hypot(m[2 * j + 1]) };
        // symmetric trapezoid: 2·Σ_{j≥0} w_j |A(k_j)| with half weight at both ends
        let mut s = 0.0;
        for j in 0..nk {
            let w = if j == 0 || j == nk - 1 { 0.5 } else { 1.0 };
            s += w * modulus(j);
        }
        2.0 * s * dk + tail
    });
    let integral_bound = 4.0 * scale.sqrt();
    let integral =
        BoundCheck { pass: integral.value <= integral_bound + 4.0 * integral.std_error, bound: integral_bound, estimate: integral };

    let norm = p.norms(1e-10)?.l1_g0pp;
    let avg = batches.mean_of(2 * nk, Method::Chain);
    let avg_bound = 2.0 / std::f64::consts::PI * scale.sqrt() * norm;
    let curvature_average = BoundCheck { pass: avg.value.abs() <= avg_bound + 4.0 * avg.std_error, bound: avg_bound, estimate: avg };
    let pass = envelope_pass && integral.pass && curvature_average.pass;
    Ok(L1NormReport { cbar, k_max, points, envelope_pass, integral, curvature_average, chains: run.reports, pass })
}

/// An observable on the free coordinates with its gradient.
pub trait Observable: Sync {
    /// Writes ∇G(x) into `grad` and returns G(x).
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// G(x) = (v, x).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear(pub Vec<f64>);

impl Observable for Linear {
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(&self.0);
        self.0.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareReport {
    pub variance: Estimate,
    /// (1/δ)⟨|DG|²⟩
    pub bound: Estimate,
    /// variance − bound, with its own error bar
    pub excess: Estimate,
    pub delta: f64,
    pub pass: bool,
}

/// Checks var G ≤ (1/δ)⟨|DG|²⟩ under `target`, whose Hessian must be
/// bounded below by δ > 0. Passes when the excess is within 4 SE of ≤ 0.
pub fn poincare_variance_check<T, O>(target: &T, delta: f64, g: &O, cfg: &ChainConfig) -> Result<PoincareReport>
where
    T: Target + ?Sized,
    O: Observable + ?Sized,
{
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(GilError::Precondition(format!("convexity constant must be > 0, got {delta}")));
    }
    let n = target.dim();
    let start = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let g0 = g.value_grad(&start, &mut scratch);
    let run = sample_observables(target, cfg, 0, &start, 3, |x, out| {
        let mut grad = vec![0.0; n];
        let v = g.value_grad(x, &mut grad) - g0;
        out.push(v);
        out.push(v * v);
        out.push(grad.iter().map(|q| q * q).sum());
    })?;
    let batches = run.batches(cfg)?;
    let rows = batches.n_rows() as f64;
    let var = |m: &[f64]| (m[1] - m[0] * m[0]) * rows / (rows - 1.0);
    let variance = batches.jackknife(Method::Chain, var);
    let bound = batches.jackknife(Method::Chain, |m| m[2] / delta);
    let excess = batches.jackknife(Method::Chain, |m| var(m) - m[2] / delta);
    let pass = excess.value <= 4.0 * excess.std_error;
    Ok(PoincareReport { variance, bound, excess, delta, pass })
}
