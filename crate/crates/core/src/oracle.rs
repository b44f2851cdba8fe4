//! Tensor Gauss–Hermite evaluation of partition functions and Gaussian
//! convolutions on tiny tori. The Gaussian part of the integrand is taken
//! as the envelope, so the quadrature only sees the slowly varying rest.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GilError, Result};
use crate::gaussian::pinned_form;
use crate::integrate::{adaptive_pieces_rel, gauss_hermite};
use crate::lattice::{Field, Tilt, Torus};
use crate::potential::Potential;

/// Largest number of free coordinates handled.
pub const DOF_CAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Starting Gauss–Hermite order; doubled until converged.
    #[serde(default = "default_nodes")]
    pub nodes_per_dim: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    /// Multiplies the envelope precision β·c1·∇ᵀ∇.
    #[serde(default = "default_envelope")]
    pub envelope_scale: f64,
    #[serde(default = "default_max_dof")]
    pub max_dof: usize,
    /// Convergence threshold on the change of the log integral.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Tensor nodes whose weight is below this fraction of the largest are skipped.
    #[serde(default = "default_prune")]
    pub prune: f64,
    #[serde(default)]
    pub rule: Rule,
}

/// Which rule evaluates integrals over the pinned field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Edge chain on one-dimensional tori with at most [`CHAIN_MAX_M`] sites,
    /// Gauss–Hermite otherwise.
    #[default]
    Auto,
    Hermite,
    EdgeChain,
}

/// Largest ring handled by the edge chain.
pub const CHAIN_MAX_M: usize = 4;

/// Relative accuracy requested from each adaptive level of the edge chain.
const CHAIN_REL_TOL: f64 = 1e-13;

fn default_nodes() -> usize {
    8
}
fn default_max_nodes() -> usize {
    128
}
fn default_envelope() -> f64 {
    1.0
}
fn default_max_dof() -> usize {
    DOF_CAP
}
fn default_tol() -> f64 {
    1e-8
}
fn default_prune() -> f64 {
    1e-14
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_per_dim: default_nodes(),
            max_nodes: default_max_nodes(),
            envelope_scale: default_envelope(),
            max_dof: default_max_dof(),
            tol: default_tol(),
            prune: default_prune(),
            rule: Rule::Auto,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GilError::Precondition(format!("quadrature: {m}")));
        if self.nodes_per_dim < 8 {
            return bad(format!("nodes_per_dim must be >= 8, got {}", self.nodes_per_dim));
        }
        if self.max_nodes < self.nodes_per_dim {
            return bad("max_nodes below nodes_per_dim".into());
        }
        if self.max_dof == 0 || self.max_dof > DOF_CAP {
            return bad(format!("max_dof must lie in 1..={DOF_CAP}"));
        }
        if !(self.envelope_scale > 0.0 && self.envelope_scale.is_finite()) {
            return bad("envelope_scale must be positive".into());
        }
        if !(self.tol > 0.0) || !(self.prune >= 0.0 && self.prune < 1.0) {
            return bad("tol must be positive and prune in [0, 1)".into());
        }
        Ok(())
    }

    /// True when integrals on `t` go through the edge chain.
    pub fn uses_chain(&self, t: &Torus) -> bool {
        let fits = t.d() == 1 && t.m() <= CHAIN_MAX_M;
        match self.rule {
            Rule::Auto => fits,
            Rule::Hermite => false,
            Rule::EdgeChain => fits,
        }
    }

    fn check_torus(&self, t: &Torus, dims: usize) -> Result<()> {
        self.validate()?;
        if self.rule == Rule::EdgeChain && !(t.d() == 1 && t.m() <= CHAIN_MAX_M) {
            return Err(GilError::Precondition(format!("edge_chain needs d = 1 and M <= {CHAIN_MAX_M}, got d = {}, M = {}", t.d(), t.m())));
        }
        if t.dof() > self.max_dof {
            return Err(GilError::Precondition(format!("{} free coordinates exceed the quadrature cap {}", t.dof(), self.max_dof)));
        }
        let _ = dims;
        Ok(())
    }
}

/// A converged quadrature value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    pub node_order: usize,
    pub converged: bool,
}

impl OracleValue {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("oracle value serializes")
    }
}

/// Running log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    const EMPTY: Lse = Lse { max: f64::NEG_INFINITY, sum: 0.0 };

    fn push(&mut self, v: f64) {
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn merge(self, o: Lse) -> Lse {
        if o.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return o;
        }
        if o.max > self.max {
            Lse { max: o.max, sum: o.sum + self.sum * (self.max - o.max).exp() }
        } else {
            Lse { max: self.max, sum: self.sum + o.sum * (o.max - self.max).exp() }
        }
    }

    fn value(self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// log Σ_j w_j exp(f(z_j)) over the `dims`-fold tensor Gauss–Hermite rule for
/// the standard normal. Parallel over the first coordinate; the reduction
/// order is fixed.
pub fn tensor_log_sum<F>(dims: usize, order: usize, prune: f64, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let (nodes, weights) = gauss_hermite(order);
    let lw: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let lw_max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = dims as f64 * lw_max + if prune > 0.0 { prune.ln() } else { f64::NEG_INFINITY };
    let parts: Vec<Result<Lse>> = (0..order)
        .into_par_iter()
        .map(|i0| {
            let mut z = vec![0.0; dims];
            z[0] = nodes[i0];
            let mut acc = Lse::EMPTY;
            walk(1, lw[i0], &mut z, &nodes, &lw, lw_max, cut, &f, &mut acc)?;
            Ok(acc)
        })
        .collect();
    let mut total = Lse::EMPTY;
    for p in parts {
        total = total.merge(p?);
    }
    let v = total.value();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GilError::WeightUnderflow)
    }
}

#[allow(clippy::too_many_arguments)]
fn walk<F>(k: usize, partial: f64, z: &mut [f64], nodes: &[f64], lw: &[f64], lw_max: f64, cut: f64, f: &F, acc: &mut Lse) -> Result<()>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let dims = z.len();
    if partial + (dims - k) as f64 * lw_max < cut {
        return Ok(());
    }
    if k == dims {
        let v = f(z)?;
        if v.is_nan() {
            return Err(GilError::Precondition(format!("integrand is NaN at {z:?}")));
        }
        acc.push(partial + v);
        return Ok(());
    }
    for (j, &x) in nodes.iter().enumerate() {
        z[k] = x;
        walk(k + 1, partial + lw[j], z, nodes, lw, lw_max, cut, f, acc)?;
    }
    Ok(())
}

/// Doubles the order from `q.nodes_per_dim` until successive values differ by
/// less than `q.tol`.
pub fn converge<F: Fn(usize) -> Result<f64>>(q: &QuadratureSpec, f: F) -> Result<OracleValue> {
    let mut order = q.nodes_per_dim;
    let mut prev = f(order)?;
    loop {
        let next_order = order * 2;
        if next_order > q.max_nodes {
            return Err(GilError::QuadratureFailure { tol: q.tol, change: f64::NAN, order });
        }
        let v = f(next_order)?;
        let change = (v - prev).abs();
        if change < q.tol {
            return Ok(OracleValue { value: v, node_order: next_order, converged: true });
        }
        if next_order * 2 > q.max_nodes {
            return Err(GilError::QuadratureFailure { tol: q.tol, change, order: next_order });
        }
        prev = v;
        order = next_order;
    }
}

/// One factor s ↦ exp(log_weight(s)) of an edge chain. The mass sits within
/// a few `width`s of `center`; the factor is smooth between `breakpoints`.
pub struct EdgeKernel<'a> {
    pub log_weight: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    pub center: f64,
    pub width: f64,
    pub breakpoints: Vec<f64>,
}

/// Window half-width in units of the kernel width.
const CHAIN_WINDOW: f64 = 20.0;

struct Group<'k, 'a> {
    kernels: &'k [EdgeKernel<'a>],
    shifts: Vec<f64>,
    center: f64,
    width: f64,
    /// points where the group density loses smoothness
    kinks: Vec<f64>,
}

impl<'k, 'a> Group<'k, 'a> {
    fn new(kernels: &'k [EdgeKernel<'a>]) -> Self {
        let shifts = kernels.iter().map(|k| (k.log_weight)(k.center)).collect();
        let center = kernels.iter().map(|k| k.center).sum();
        let width = kernels.iter().map(|k| k.width * k.width).sum::<f64>().sqrt();
        let kinks = match kernels {
            [k] => k.breakpoints.clone(),
            [a, b] => a.breakpoints.iter().flat_map(|x| b.breakpoints.iter().map(move |y| x + y)).collect(),
            _ => unreachable!("groups hold one or two kernels"),
        };
        Group { kernels, shifts, center, width, kinks }
    }

    fn weight(&self, e: usize, s: f64) -> f64 {
        ((self.kernels[e].log_weight)(s) - self.shifts[e]).exp()
    }

    /// Density of the sum of the group's edge variables at x.
    fn density(&self, x: f64) -> Result<f64> {
        match self.kernels {
            [_] => Ok(self.weight(0, x)),
            [a, b] => {
                let lo = (a.center - CHAIN_WINDOW * a.width).max(x - b.center - CHAIN_WINDOW * b.width);
                let hi = (a.center + CHAIN_WINDOW * a.width).min(x - b.center + CHAIN_WINDOW * b.width);
                if lo >= hi {
                    return Ok(0.0);
                }
                let cuts: Vec<f64> = a.breakpoints.iter().copied().chain(b.breakpoints.iter().map(|y| x - y)).collect();
                let f = |s: f64| self.weight(0, s) * self.weight(1, x - s);
                Ok(adaptive_pieces_rel(&f, lo, hi, &cuts, CHAIN_REL_TOL)?.0)
            }
            _ => unreachable!("groups hold one or two kernels"),
        }
    }

    fn log_shift(&self) -> f64 {
        self.shifts.iter().sum()
    }
}

/// log ∫ Π_e k_e(s_e) over edge variables s₁ … s_m on the hyperplane
/// Σ s_e = 0, with respect to Lebesgue measure in s₁ … s_{m−1}. On a ring
/// of m sites these are the pinned-field increments, so the Jacobian is 1.
/// Returns (value, relative error estimate).
pub fn edge_chain_log_integral(kernels: &[EdgeKernel]) -> Result<(f64, f64)> {
    let m = kernels.len();
    if !(2..=CHAIN_MAX_M).contains(&m) {
        return Err(GilError::Precondition(format!("edge chain needs 2..=4 kernels, got {m}")));
    }
    for k in kernels {
        if !(k.width > 0.0 && k.width.is_finite() && k.center.is_finite()) {
            return Err(GilError::Precondition("edge kernel needs a finite centre and positive width".into()));
        }
    }
    let split = if m >= 3 { 2 } else { 1 };
    let left = Group::new(&kernels[..split]);
    let right = Group::new(&kernels[split..]);
    // ∫ L(x) R(−x) dx
    let lo = (left.center - CHAIN_WINDOW * left.width).max(-right.center - CHAIN_WINDOW * right.width);
    let hi = (left.center + CHAIN_WINDOW * left.width).min(-right.center + CHAIN_WINDOW * right.width);
    if lo >= hi {
        return Err(GilError::WeightUnderflow);
    }
    let cuts: Vec<f64> = left.kinks.iter().copied().chain(right.kinks.iter().map(|y| -y)).collect();
    let failure = std::sync::Mutex::new(None);
    let f = |x: f64| match left.density(x).and_then(|l| Ok(l * right.density(-x)?)) {
        Ok(v) => v,
        Err(e) => {
            failure.lock().expect("unpoisoned").get_or_insert(e);
            0.0
        }
    };
    let (value, err) = adaptive_pieces_rel(&f, lo, hi, &cuts, CHAIN_REL_TOL)?;
    if let Some(e) = failure.into_inner().expect("unpoisoned") {
        return Err(e);
    }
    if !(value > 0.0) {
        return Err(GilError::WeightUnderflow);
    }
    Ok((value.ln() + left.log_shift() + right.log_shift(), err / value))
}

/// Edge chain value as an oracle result, failing when the adaptive error
/// estimate exceeds `q.tol`.
pub fn chain_value(kernels: &[EdgeKernel], q: &QuadratureSpec) -> Result<OracleValue> {
    let (value, rel_err) = edge_chain_log_integral(kernels)?;
    if rel_err > q.tol {
        return Err(GilError::QuadratureFailure { tol: q.tol, change: rel_err, order: 0 });
    }
    Ok(OracleValue { value, node_order: 0, converged: true })
}

/// φ = T z maps standard normal z to the centred Gaussian with precision
/// `scale`·∇ᵀ∇ on the free coordinates.
#[derive(Debug, Clone)]
pub struct GaussianMap {
    transform: DMatrix<f64>,
    /// log ∫ exp(−½ φᵀPφ) dφ
    log_mass: f64,
}

impl GaussianMap {
    pub fn new(t: &Torus, precision_scale: f64) -> Result<Self> {
        if !(precision_scale > 0.0 && precision_scale.is_finite()) {
            return Err(GilError::Precondition(format!("precision scale must be > 0, got {precision_scale}")));
        }
        let eig = SymmetricEigen::new(pinned_form(t) * precision_scale);
        let n = t.dof();
        let mut transform = eig.eigenvectors.clone();
        let mut log_det = 0.0;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            log_det += lam.ln();
            let s = 1.0 / lam.sqrt();
            transform.column_mut(k).scale_mut(s);
        }
        let log_mass = 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(GaussianMap { transform, log_mass })
    }

    pub fn dim(&self) -> usize {
        self.transform.nrows()
    }

    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// Adds T z to the free part of `values` (origin untouched).
    pub fn apply_add(&self, z: &[f64], values: &mut [f64]) {
        let n = self.dim();
        for r in 0..n {
            let mut s = 0.0;
            for (c, zc) in z.iter().enumerate() {
                s += self.transform[(r, c)] * zc;
            }
            values[r + 1] += s;
        }
    }
}

/// log Z^β(u) at a fixed Gauss–Hermite order.
pub fn log_partition_at(u: &Tilt, p: &Potential, t: &Torus, beta: f64, q: &QuadratureSpec, order: usize) -> Result<f64> {
    q.check_torus(t, t.dof())?;
    u.check(t)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(GilError::Precondition(format!("beta must be > 0, got {beta}")));
    }
    let c1 = p.constants().c1;
    if q.uses_chain(t) {
        return Ok(partition_chain(u, p, t, beta * c1 * q.envelope_scale, beta, q)?.value);
    }
    let map = GaussianMap::new(t, beta * c1 * q.envelope_scale)?;
    let us = u.as_slice();
    let lse = tensor_log_sum(t.dof(), order, q.prune, |z| {
        let mut v = vec![0.0; t.volume()];
        map.apply_add(z, &mut v);
        let h = t.sum_edges(us, &v, |_, s| p.v(s, 0));
        let zz: f64 = z.iter().map(|x| x * x).sum();
        Ok(-beta * h + 0.5 * zz)
    })?;
    Ok(map.log_mass() + lse)
}

fn partition_chain(u: &Tilt, p: &Potential, t: &Torus, precision: f64, beta: f64, q: &QuadratureSpec) -> Result<OracleValue> {
    let u0 = u.0[0];
    let cuts: Vec<f64> = p.breakpoints().iter().map(|b| b - u0).collect();
    let kernels: Vec<EdgeKernel> = (0..t.m())
        .map(|_| EdgeKernel {
            log_weight: Box::new(move |s| -beta * p.v(u0 + s, 0)),
            center: -u0,
            width: 1.0 / precision.sqrt(),
            breakpoints: cuts.clone(),
        })
        .collect();
    chain_value(&kernels, q)
}

/// log Z^β(u) = log ∫ exp(−βH(u, φ)) over the pinned fields. The edge chain
/// reports `node_order` 0.
pub fn log_partition(u: &Tilt, p: &Potential, t: &Torus, beta: f64, q: &QuadratureSpec) -> Result<OracleValue> {
    if q.uses_chain(t) {
        q.check_torus(t, t.dof())?;
        u.check(t)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(GilError::Precondition(format!("beta must be > 0, got {beta}")));
        }
        return partition_chain(u, p, t, beta * p.constants().c1 * q.envelope_scale, beta, q);
    }
    converge(q, |order| log_partition_at(u, p, t, beta, q, order))
}

/// f^β(u) = −β⁻¹ log Z^β(u).
pub fn free_energy(u: &Tilt, p: &Potential, t: &Torus, beta: f64, q: &QuadratureSpec) -> Result<OracleValue> {
    let lz = log_partition(u, p, t, beta, q)?;
    Ok(OracleValue { value: -lz.value / beta, ..lz })
}

/// Central second differences on the 2d² + 1 point stencil, symmetrized.
pub fn hessian_fd<F: FnMut(&[f64]) -> f64>(mut f: F, u: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = u.len();
    let mut at = |du: &[(usize, f64)]| {
        let mut x = u.to_vec();
        for &(i, s) in du {
            x[i] += s;
        }
        f(&x)
    };
    let centre = at(&[]);
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        out[i][i] = (at(&[(i, h)]) - 2.0 * centre + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)])) / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// One Richardson step on [`hessian_fd`]: (4·H(h/2) − H(h))/3.
pub fn hessian_fd_richardson<F: FnMut(&[f64]) -> f64>(mut f: F, u: &[f64], h: f64) -> Vec<Vec<f64>> {
    let coarse = hessian_fd(&mut f, u, h);
    let fine = hessian_fd(&mut f, u, 0.5 * h);
    coarse.iter().zip(&fine).map(|(c, f)| c.iter().zip(f).map(|(a, b)| (4.0 * b - a) / 3.0).collect()).collect()
}

/// Second derivative of a scalar function of t at 0, Richardson-extrapolated.
pub fn second_derivative<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> f64 {
    let centre = f(0.0);
    let mut d = |h: f64| (f(h) - 2.0 * centre + f(-h)) / (h * h);
    let coarse = d(h);
    let fine = d(0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleHessian {
    pub value: Vec<Vec<f64>>,
    pub node_order: usize,
}

/// D²f^β(u) by finite differences of the oracle free energy, every stencil
/// point evaluated at the order that converged at `u`.
pub fn free_energy_hessian(u: &Tilt, p: &Potential, t: &Torus, beta: f64, q: &QuadratureSpec, h: f64) -> Result<OracleHessian> {
    let centre = log_partition(u, p, t, beta, q)?;
    let order = centre.node_order;
    let mut err = None;
    let value = hessian_fd_richardson(
        |x| match log_partition_at(&Tilt(x.to_vec()), p, t, beta, q, order) {
            Ok(v) => -v / beta,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        u.as_slice(),
        h,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(OracleHessian { value, node_order: order }),
    }
}

/// R f(u, a) = −log ∫ exp(−f(u, a + b)) μ(db) at a fixed order, where μ is
/// the normalized pinned Gaussian with density ∝ exp(−‖∇b‖²/(2·variance_scale)).
pub fn renorm_apply_at<F>(f: &F, variance_scale: f64, u: &[f64], a: &Field, t: &Torus, q: &QuadratureSpec, order: usize) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    q.check_torus(t, t.dof())?;
    if !(variance_scale > 0.0 && variance_scale <= 1.0) {
        return Err(GilError::Precondition(format!("variance scale must lie in (0, 1], got {variance_scale}")));
    }
    if a.len() != t.volume() {
        return Err(GilError::Precondition("field does not match the torus".into()));
    }
    let map = GaussianMap::new(t, 1.0 / variance_scale)?;
    let lse = tensor_log_sum(t.dof(), order, q.prune, |z| {
        let mut v = a.values().to_vec();
        map.apply_add(z, &mut v);
        Ok(-f(u, &v)?)
    })?;
    Ok(-lse)
}

/// [`renorm_apply_at`] with order doubling.
pub fn renorm_apply<F>(f: &F, variance_scale: f64, u: &[f64], a: &Field, t: &Torus, q: &QuadratureSpec) -> Result<OracleValue>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    converge(q, |order| renorm_apply_at(f, variance_scale, u, a, t, q, order))
}

/// −log ∫∫ exp(−f(u, ψ + θ)) μ₁(dθ) μ₂(dψ) as one tensor rule over both
/// fields, μ₁ at scale λ and μ₂ at 1 − λ.
pub fn joint_double_apply<F>(f: &F, lambda: f64, u: &[f64], t: &Torus, q: &QuadratureSpec) -> Result<OracleValue>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    q.check_torus(t, 2 * t.dof())?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(GilError::Precondition(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let inner = GaussianMap::new(t, 1.0 / lambda)?;
    let outer = GaussianMap::new(t, 1.0 / (1.0 - lambda))?;
    let n = t.dof();
    converge(q, |order| {
        let lse = tensor_log_sum(2 * n, order, q.prune, |z| {
            let mut v = vec![0.0; t.volume()];
            inner.apply_add(&z[..n], &mut v);
            outer.apply_add(&z[n..], &mut v);
            Ok(-f(u, &v)?)
        })?;
        Ok(-lse)
    })
}
