//! One-step Gaussian decomposition of the separated Hamiltonian
//! H = ½N|u|² + ½‖∇φ‖² + G(u, φ). The field is split as φ = ψ + θ with θ
//! of covariance λC and ψ of covariance (1 − λ)C; integrating θ first
//! gives R₁G, then ψ gives R₂R₁G.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::check_fcond;
use crate::error::{GilError, Result};
use crate::gaussian::{poincare_constant, sample_gff, SpectralCovariance};
use crate::lattice::{g_energy, require_scaled, separated_g, Field, Tilt, Torus};
use crate::oracle::{self, OracleValue, QuadratureSpec};
use crate::potential::Potential;
use crate::sampler::{fluctuation_hessian, ChainConfig, Target};
use crate::stats::{jackknife_neg_log_mean_exp, min_eigenvalue, Estimate, Method};

#[derive(Debug, Clone)]
pub struct DecompositionPlan {
    pub lambda: f64,
    pub cbar: f64,
    pub potential: Potential,
    pub torus: Torus,
}

impl DecompositionPlan {
    /// λ = 1/(2C̄) for a potential already scaled to c1 = 1.
    pub fn new(p: &Potential, t: &Torus) -> Result<Self> {
        require_scaled(p)?;
        let cbar = p.cbar()?;
        if !(cbar >= 1.0) {
            return Err(GilError::InvalidConstants(format!("cbar must be >= 1, got {cbar}")));
        }
        Ok(DecompositionPlan { lambda: 0.5 / cbar, cbar, potential: p.clone(), torus: t.clone() })
    }

    /// Overrides λ. λ = 1 is accepted for probing H₁ alone; it leaves no
    /// second scale, so anything that integrates ψ rejects it.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(GilError::Precondition(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// G(u, φ) on full site arrays.
    pub fn g(&self, u: &[f64], values: &[f64]) -> f64 {
        g_energy(&self.torus, u, values, &self.potential)
    }

    fn g_fn(&self) -> impl Fn(&[f64], &[f64]) -> Result<f64> + Sync + '_ {
        move |u, v| Ok(self.g(u, v))
    }

    fn check_split(&self) -> Result<()> {
        if self.lambda >= 1.0 {
            return Err(GilError::Precondition("lambda = 1 leaves no second scale".into()));
        }
        Ok(())
    }
}

/// H₁(θ) = G(u, ψ + θ) + ‖∇θ‖²/(2λ) on the free coordinates of θ.
#[derive(Debug, Clone)]
pub struct InducedH1 {
    torus: Torus,
    potential: Potential,
    lambda: f64,
    /// u_i + ∇_iψ(x), edge (x, i) at i·N + x
    offsets: Vec<f64>,
}

impl InducedH1 {
    pub fn new(plan: &DecompositionPlan, u: &Tilt, psi: &Field) -> Result<Self> {
        let t = &plan.torus;
        u.check(t)?;
        psi.check(t)?;
        let n = t.volume();
        let mut offsets = vec![0.0; t.d() * n];
        for i in 0..t.d() {
            for x in 0..n {
                offsets[i * n + x] = u.0[i] + t.diff(psi.values(), x, i);
            }
        }
        Ok(InducedH1 { torus: t.clone(), potential: plan.potential.clone(), lambda: plan.lambda, offsets })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn site(x: &[f64], s: usize) -> f64 {
        if s == 0 {
            0.0
        } else {
            x[s - 1]
        }
    }

    fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.torus.volume();
        (0..self.torus.d()).flat_map(move |i| (0..n).map(move |x| (x, self.torus.forward(x, i), self.offsets[i * n + x])))
    }

    /// θ̇ᵀ D²H₁(θ) θ̇.
    pub fn hessian_form(&self, x: &[f64], dir: &[f64]) -> f64 {
        self.edges()
            .map(|(a, b, o)| {
                let s = Self::site(x, b) - Self::site(x, a);
                let ds = Self::site(dir, b) - Self::site(dir, a);
                (separated_g(&self.potential, o + s, 2) + 1.0 / self.lambda) * ds * ds
            })
            .sum()
    }
}

impl Target for InducedH1 {
    fn dim(&self) -> usize {
        self.torus.dof()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let inv = 0.5 / self.lambda;
        self.edges()
            .map(|(a, b, o)| {
                let s = Self::site(x, b) - Self::site(x, a);
                separated_g(&self.potential, o + s, 0) + inv * s * s
            })
            .sum()
    }

    fn energy_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let inv = 0.5 / self.lambda;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut e = 0.0;
        for (a, b, o) in self.edges() {
            let s = Self::site(x, b) - Self::site(x, a);
            e += separated_g(&self.potential, o + s, 0) + inv * s * s;
            let w = separated_g(&self.potential, o + s, 1) + s / self.lambda;
            if b > 0 {
                grad[b - 1] += w;
            }
            if a > 0 {
                grad[a - 1] -= w;
            }
        }
        e
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityCertificate {
    pub probes: usize,
    /// min over probes of θ̇ᵀD²H₁θ̇ − C̄‖∇θ̇‖²
    pub min_gradient_margin: f64,
    /// min over probes of θ̇ᵀD²H₁θ̇ − C̄δ_M‖θ̇‖², with ‖θ̇‖ = 1
    pub min_poincare_margin: f64,
    pub delta_m: f64,
}

pub const CERTIFY_TOL: f64 = 1e-8;

/// Random probes (θ, θ̇) of D²H₁ ≥ C̄∇ᵀ∇ ≥ C̄δ_M. Fails with the first
/// violating pair.
pub fn certify_h1_convexity(plan: &DecompositionPlan, u: &Tilt, psi: &Field, n_probes: usize, seed: u64) -> Result<ConvexityCertificate> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let h1 = InducedH1::new(plan, u, psi)?;
    let t = &plan.torus;
    let delta_m = poincare_constant(t)?.delta_m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t.dof();
    let scales = [0.05, 0.2, 1.0, 3.0];
    let mut min_gradient_margin = f64::INFINITY;
    let mut min_poincare_margin = f64::INFINITY;
    for probe in 0..n_probes {
        let sigma = scales[probe % scales.len()];
        let theta: Vec<f64> = (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let form = h1.hessian_form(&theta, &dir);
        let dirichlet = t.dirichlet(Field::from_free(t, &dir)?.values());
        let gm = form - plan.cbar * dirichlet;
        let pm = form - plan.cbar * delta_m;
        if gm < -CERTIFY_TOL || pm < -CERTIFY_TOL {
            return Err(GilError::Certification(format!(
                "probe {probe}: margins {gm:.3e} / {pm:.3e} at theta = {theta:?}, direction = {dir:?}"
            )));
        }
        min_gradient_margin = min_gradient_margin.min(gm);
        min_poincare_margin = min_poincare_margin.min(pm);
    }
    Ok(ConvexityCertificate { probes: n_probes, min_gradient_margin, min_poincare_margin, delta_m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum R1gMethod {
    Oracle { quadrature: QuadratureSpec },
    Mc { samples: usize, batches: usize, seed: u64 },
}

/// −log ∫ exp(−G(u, ψ + θ)) over θ with density ∝ exp(−‖∇θ‖²/(2·variance)),
/// as an edge chain on a ring.
fn renorm_g_chain(plan: &DecompositionPlan, u: &[f64], psi: &[f64], variance: f64, q: &QuadratureSpec) -> Result<OracleValue> {
    let t = &plan.torus;
    let p = &plan.potential;
    let log_mass = oracle::GaussianMap::new(t, 1.0 / variance)?.log_mass();
    let cuts = p.breakpoints();
    let kernels: Vec<oracle::EdgeKernel> = (0..t.m())
        .map(|e| {
            let o = u[0] + t.diff(psi, e, 0);
            oracle::EdgeKernel {
                log_weight: Box::new(move |s| -separated_g(p, o + s, 0) - s * s / (2.0 * variance)),
                center: 0.0,
                width: variance.sqrt(),
                breakpoints: cuts.iter().map(|b| b - o).collect(),
            }
        })
        .collect();
    let v = oracle::chain_value(&kernels, q)?;
    Ok(OracleValue { value: log_mass - v.value, ..v })
}

/// R₁G(u, ψ) by quadrature.
pub fn r1g(plan: &DecompositionPlan, u: &[f64], psi: &Field, q: &QuadratureSpec) -> Result<OracleValue> {
    let t = &plan.torus;
    if q.uses_chain(t) {
        q.validate()?;
        psi.check(t)?;
        return renorm_g_chain(plan, u, psi.values(), plan.lambda, q);
    }
    oracle::renorm_apply(&plan.g_fn(), plan.lambda, u, psi, t, q)
}

/// R₁G(u, ψ) = −log ∫ exp(−G(u, ψ + θ)) μ₁(dθ).
pub fn estimate_r1g(plan: &DecompositionPlan, u: &Tilt, psi: &Field, method: &R1gMethod) -> Result<Estimate> {
    let t = &plan.torus;
    u.check(t)?;
    psi.check(t)?;
    match method {
        R1gMethod::Oracle { quadrature } => Ok(Estimate::exact(r1g(plan, u.as_slice(), psi, quadrature)?.value, Method::Oracle)),
        R1gMethod::Mc { samples, batches, seed } => {
            let sc = SpectralCovariance::new(t);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut xs = Vec::with_capacity(*samples);
            for _ in 0..*samples {
                let theta = sample_gff(&sc, plan.lambda, &mut rng)?;
                xs.push(plan.g(u.as_slice(), psi.axpy(1.0, &theta).values()));
            }
            jackknife_neg_log_mean_exp(&xs, *batches, Method::Chain)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureCheck {
    pub second_derivative: f64,
    pub bound: f64,
    pub pass: bool,
}

/// FD step for the second-derivative checks.
pub const FD_STEP: f64 = 1e-3;
pub const CURVATURE_TOL: f64 = 1e-6;

/// D²R₁G(u, ψ)(u̇, ψ̇)² ≥ −½(N|u̇|² + ‖∇ψ̇‖²) along each joint direction.
pub fn verify_c6(
    plan: &DecompositionPlan,
    u: &Tilt,
    psi: &Field,
    directions: &[(Tilt, Field)],
    q: &QuadratureSpec,
) -> Result<Vec<CurvatureCheck>> {
    let t = &plan.torus;
    let g = plan.g_fn();
    let chain = q.uses_chain(t);
    let order = r1g(plan, u.as_slice(), psi, q)?.node_order;
    let value = |us: &[f64], field: &Field| -> Result<f64> {
        if chain {
            Ok(r1g(plan, us, field, q)?.value)
        } else {
            oracle::renorm_apply_at(&g, plan.lambda, us, field, t, q, order)
        }
    };
    directions
        .iter()
        .map(|(du, dpsi)| {
            du.check(t)?;
            dpsi.check(t)?;
            let mut err = None;
            let second = oracle::second_derivative(
                |s| {
                    let us: Vec<f64> = u.0.iter().zip(&du.0).map(|(a, b)| a + s * b).collect();
                    value(&us, &psi.axpy(s, dpsi)).unwrap_or_else(|e| {
                        err.get_or_insert(e);
                        f64::NAN
                    })
                },
                FD_STEP,
            );
            if let Some(e) = err {
                return Err(e);
            }
            let bound = -0.5 * (t.volume() as f64 * du.norm_sq() + t.dirichlet(dpsi.values()));
            Ok(CurvatureCheck { second_derivative: second, bound, pass: second >= bound - CURVATURE_TOL })
        })
        .collect()
}

/// R₂R₁G(u, 0) as a single integral over (θ, ψ). On rings handled by the
/// edge chain the ψ direction is integrated exactly.
pub fn r2r1g_joint(plan: &DecompositionPlan, u: &Tilt, q: &QuadratureSpec) -> Result<OracleValue> {
    plan.check_split()?;
    let t = &plan.torus;
    u.check(t)?;
    if q.uses_chain(t) {
        q.validate()?;
        // θ + ψ is centred Gaussian with density ∝ exp(−‖∇φ‖²/2); the ψ
        // integral at fixed θ + ψ is done in closed form.
        return renorm_g_chain(plan, u.as_slice(), &vec![0.0; t.volume()], 1.0, q);
    }
    oracle::joint_double_apply(&plan.g_fn(), plan.lambda, u.as_slice(), t, q)
}

/// R₂R₁G(u, 0) by applying the one-field map twice.
pub fn r2r1g_iterated(plan: &DecompositionPlan, u: &Tilt, q: &QuadratureSpec) -> Result<OracleValue> {
    plan.check_split()?;
    let t = &plan.torus;
    u.check(t)?;
    let inner = |uu: &[f64], v: &[f64]| -> Result<f64> {
        let psi = Field::from_values(v.to_vec())?;
        Ok(r1g(plan, uu, &psi, q)?.value)
    };
    oracle::renorm_apply(&inner, 1.0 - plan.lambda, u.as_slice(), &Field::zeros(t), t, q)
}

/// D²_u R₂R₁G(u, 0)(u̇, u̇) ≥ −½N|u̇|².
pub fn verify_c7(plan: &DecompositionPlan, u: &Tilt, du: &Tilt, q: &QuadratureSpec) -> Result<CurvatureCheck> {
    let t = &plan.torus;
    du.check(t)?;
    let order = r2r1g_joint(plan, u, q)?.node_order;
    let chain = q.uses_chain(t);
    let joint_at = |uu: &[f64]| -> Result<f64> {
        if chain {
            return Ok(r2r1g_joint(plan, &Tilt(uu.to_vec()), q)?.value);
        }
        let inner = oracle::GaussianMap::new(t, 1.0 / plan.lambda)?;
        let outer = oracle::GaussianMap::new(t, 1.0 / (1.0 - plan.lambda))?;
        let n = t.dof();
        let lse = oracle::tensor_log_sum(2 * n, order, q.prune, |z| {
            let mut v = vec![0.0; t.volume()];
            inner.apply_add(&z[..n], &mut v);
            outer.apply_add(&z[n..], &mut v);
            Ok(-plan.g(uu, &v))
        })?;
        Ok(-lse)
    };
    let mut err = None;
    let second = oracle::second_derivative(
        |s| {
            let us: Vec<f64> = u.0.iter().zip(&du.0).map(|(a, b)| a + s * b).collect();
            joint_at(&us).unwrap_or_else(|e| {
                err.get_or_insert(e);
                f64::NAN
            })
        },
        FD_STEP,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let bound = -0.5 * t.volume() as f64 * du.norm_sq();
    Ok(CurvatureCheck { second_derivative: second, bound, pass: second >= bound - CURVATURE_TOL })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecompositionCheck {
    /// f(u) − f(0) from the partition function
    pub free_energy_diff: f64,
    /// ½N|u|² + R₂R₁G(u, 0) − R₂R₁G(0, 0)
    pub decomposition_diff: f64,
}

/// Both sides of f(u) − f(0) = ½N|u|² + R₂R₁G(u, 0) − R₂R₁G(0, 0) at β = 1.
pub fn decomposition_identity(plan: &DecompositionPlan, u: &Tilt, q: &QuadratureSpec) -> Result<DecompositionCheck> {
    let t = &plan.torus;
    let zero = Tilt::zero(t.d());
    let p = &plan.potential;
    let f_u = oracle::free_energy(u, p, t, 1.0, q)?.value;
    let f_0 = oracle::free_energy(&zero, p, t, 1.0, q)?.value;
    let r_u = r2r1g_joint(plan, u, q)?.value;
    let r_0 = r2r1g_joint(plan, &zero, q)?.value;
    Ok(DecompositionCheck { free_energy_diff: f_u - f_0, decomposition_diff: 0.5 * t.volume() as f64 * u.norm_sq() + r_u - r_0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianMethod {
    /// Oracle when the torus fits the quadrature cap, chain otherwise.
    Auto,
    Oracle,
    Chain,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremRow {
    pub u: Vec<f64>,
    pub hessian_min_eig: f64,
    pub bound: f64,
    pub margin: f64,
    pub method: Method,
    pub std_error: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    OutOfHypothesisPass,
    OutOfHypothesisFail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::OutOfHypothesisPass => "out_of_hypothesis_pass",
            Verdict::OutOfHypothesisFail => "out_of_hypothesis_fail",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub in_hypothesis: bool,
    pub lhs_fcond: f64,
    pub rows: Vec<TheoremRow>,
}

/// Absolute slack on the eigenvalue bound.
pub const THEOREM_TOL: f64 = 1e-4;

impl TheoremReport {
    /// True unless an in-hypothesis row failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn to_csv(&self, d: usize) -> String {
        let mut out = String::new();
        for i in 1..=d {
            out.push_str(&format!("u_{i},"));
        }
        out.push_str("hessian_min_eig,bound,margin,method,std_error,verdict\n");
        for r in &self.rows {
            for x in &r.u {
                out.push_str(&format!("{},", fmt17(*x)));
            }
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(r.hessian_min_eig),
                fmt17(r.bound),
                fmt17(r.margin),
                r.method.as_str(),
                fmt17(r.std_error),
                r.verdict.as_str()
            ));
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Checks D²f^β(u) ≥ (c1/2)·N at every grid point. Rows outside the
/// smallness condition are computed and labelled, never failed.
pub fn verify_theorem(
    p: &Potential,
    beta: f64,
    t: &Torus,
    u_grid: &[Tilt],
    method: HessianMethod,
    q: &QuadratureSpec,
    cfg: &ChainConfig,
) -> Result<TheoremReport> {
    let norms = p.norms(1e-10)?;
    let cond = check_fcond(beta, t.d(), p, &norms)?;
    let in_hypothesis = cond.satisfied.fcond;
    let bound = 0.5 * p.constants().c1 * t.volume() as f64;
    let use_oracle = match method {
        HessianMethod::Oracle => true,
        HessianMethod::Chain => false,
        HessianMethod::Auto => t.dof() <= q.max_dof,
    };
    let rows: Vec<Result<TheoremRow>> = u_grid
        .par_iter()
        .enumerate()
        .map(|(k, u)| {
            u.check(t)?;
            let (eig, se, m) = if use_oracle {
                let h = oracle::free_energy_hessian(u, p, t, beta, q, FD_STEP)?;
                (min_eigenvalue(&h.value), 0.0, Method::Oracle)
            } else {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(k as u64);
                let fh = fluctuation_hessian(u, p, t, beta, &c)?;
                (fh.min_eigenvalue.value, fh.min_eigenvalue.std_error, Method::Chain)
            };
            let margin = eig - bound;
            let ok = margin >= -(THEOREM_TOL + 3.0 * se);
            let verdict = match (in_hypothesis, ok) {
                (true, true) => Verdict::Pass,
                (true, false) => Verdict::Fail,
                (false, true) => Verdict::OutOfHypothesisPass,
                (false, false) => Verdict::OutOfHypothesisFail,
            };
            Ok(TheoremRow { u: u.0.clone(), hessian_min_eig: eig, bound, margin, method: m, std_error: se, verdict })
        })
        .collect();
    Ok(TheoremReport { in_hypothesis, lhs_fcond: cond.lhs_fcond, rows: rows.into_iter().collect::<Result<_>>()? })
}

/// Joint directions for sweeps: random (u̇, ψ̇) with ψ̇ pinned.
pub fn random_directions(t: &Torus, count: usize, seed: u64) -> Vec<(Tilt, Field)> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let du = Tilt((0..t.d()).map(|_| rng.sample(StandardNormal)).collect());
            let free: Vec<f64> = (0..t.dof()).map(|_| rng.sample(StandardNormal)).collect();
            (du, Field::from_free(t, &free).expect("sized"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::scale_to_unit;
    use crate::sampler::check_gradient;
    use approx::assert_relative_eq;

    fn scaled_b(fraction: f64) -> (Potential, f64) {
        let p = Potential::example_b(0.5).unwrap();
        let beta_max = check_fcond(1.0, 1, &p, &p.norms(1e-10).unwrap()).unwrap().beta_max_fcond;
        let beta = fraction * beta_max;
        (scale_to_unit(&p, beta).unwrap().0, beta)
    }

    #[test]
    fn plan_defaults() {
        let t = Torus::new(1, 3).unwrap();
        let plan = DecompositionPlan::new(&Potential::gaussian(), &t).unwrap();
        assert_eq!(plan.lambda, 0.5);
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        assert_relative_eq!(plan.cbar, 1.5, epsilon = 1e-12);
        assert_relative_eq!(plan.lambda, 1.0 / 3.0, epsilon = 1e-12);
        assert!(DecompositionPlan::new(&Potential::example_a(0.5).unwrap(), &t).is_err());
        assert!(plan.clone().with_lambda(0.0).is_err());
        assert!(plan.with_lambda(1.5).is_err());
    }

    #[test]
    fn h1_gaussian_and_origin() {
        let t = Torus::new(2, 3).unwrap();
        let plan = DecompositionPlan::new(&Potential::gaussian(), &t).unwrap();
        let h1 = InducedH1::new(&plan, &Tilt(vec![0.3, 0.1]), &Field::zeros(&t)).unwrap();
        let x: Vec<f64> = (0..8).map(|k| (k as f64 * 0.37).sin()).collect();
        let f = Field::from_free(&t, &x).unwrap();
        assert_relative_eq!(h1.energy(&x), t.dirichlet(f.values()) / (2.0 * plan.lambda), epsilon = 1e-12);

        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        let u = Tilt(vec![0.05, -0.02]);
        let psi = Field::from_free(&t, &x).unwrap();
        let h1 = InducedH1::new(&plan, &u, &psi).unwrap();
        assert_relative_eq!(h1.energy(&[0.0; 8]), plan.g(u.as_slice(), psi.values()), epsilon = 1e-14);
    }

    #[test]
    fn h1_gradient_matches_differences() {
        let t = Torus::new(1, 5).unwrap();
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        let psi = Field::from_free(&t, &[0.05, -0.1, 0.02, 0.08]).unwrap();
        let h1 = InducedH1::new(&plan, &Tilt(vec![0.04]), &psi).unwrap();
        for seed in 0..20u64 {
            let x: Vec<f64> = (0..4).map(|k| 0.2 * ((seed * 7 + k) as f64).sin()).collect();
            check_gradient(&h1, &x).unwrap();
            let mut g = vec![0.0; 4];
            h1.energy_grad(&x, &mut g);
            for k in 0..4 {
                let h = 1e-6;
                let mut a = x.clone();
                a[k] += h;
                let mut b = x.clone();
                b[k] -= h;
                let fd = (h1.energy(&a) - h1.energy(&b)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn gaussian_certificate_margin() {
        let t = Torus::new(1, 4).unwrap();
        let plan = DecompositionPlan::new(&Potential::gaussian(), &t).unwrap();
        let cert = certify_h1_convexity(&plan, &Tilt::zero(1), &Field::zeros(&t), 200, 1).unwrap();
        // form = 2‖∇θ̇‖², margin ‖∇θ̇‖² ≥ δ_M for unit θ̇
        assert!(cert.min_gradient_margin >= cert.delta_m - 1e-12);
    }

    #[test]
    fn example_b_certificate_and_adversarial_lambda() {
        let t = Torus::new(1, 4).unwrap();
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        assert!(certify_h1_convexity(&plan, &Tilt(vec![0.02]), &Field::zeros(&t), 1000, 2).is_ok());
        let bad = plan.with_lambda(1.0).unwrap();
        assert!(matches!(certify_h1_convexity(&bad, &Tilt(vec![0.02]), &Field::zeros(&t), 1000, 2), Err(GilError::Certification(_))));
    }

    #[test]
    fn r1g_trivial_cases() {
        let t = Torus::new(1, 3).unwrap();
        let plan = DecompositionPlan::new(&Potential::gaussian(), &t).unwrap();
        let q = QuadratureSpec::default();
        let oracle = estimate_r1g(&plan, &Tilt(vec![0.3]), &Field::zeros(&t), &R1gMethod::Oracle { quadrature: q }).unwrap();
        assert!(oracle.value.abs() < 1e-12, "{}", oracle.value);
        let hermite = QuadratureSpec { rule: oracle::Rule::Hermite, ..q };
        let gh = estimate_r1g(&plan, &Tilt(vec![0.3]), &Field::zeros(&t), &R1gMethod::Oracle { quadrature: hermite }).unwrap();
        assert!(gh.value.abs() < 1e-12);
        let mc = estimate_r1g(&plan, &Tilt(vec![0.3]), &Field::zeros(&t), &R1gMethod::Mc { samples: 1000, batches: 20, seed: 1 }).unwrap();
        assert_eq!(mc.value, 0.0);
    }

    #[test]
    fn r1g_shift_invariant() {
        let t = Torus::new(1, 3).unwrap();
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        let q = R1gMethod::Oracle { quadrature: QuadratureSpec::default() };
        let psi = Field::from_free(&t, &[0.05, -0.03]).unwrap();
        let a = estimate_r1g(&plan, &Tilt(vec![0.02]), &psi, &q).unwrap().value;
        // adding a constant then re-pinning leaves every gradient unchanged
        let shifted = Field::pinned(psi.values().iter().map(|v| v + 0.7).collect());
        let b = estimate_r1g(&plan, &Tilt(vec![0.02]), &shifted, &q).unwrap().value;
        assert_relative_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn c6_gaussian_and_pure_tilt() {
        let t = Torus::new(1, 3).unwrap();
        let plan = DecompositionPlan::new(&Potential::gaussian(), &t).unwrap();
        let q = QuadratureSpec::default();
        let dirs = vec![(Tilt(vec![1.0]), Field::zeros(&t)), (Tilt(vec![0.5]), Field::from_free(&t, &[1.0, -1.0]).unwrap())];
        let checks = verify_c6(&plan, &Tilt(vec![0.2]), &Field::zeros(&t), &dirs, &q).unwrap();
        assert_eq!(checks[0].bound, -1.5);
        for c in &checks {
            assert!(c.second_derivative.abs() < 1e-6);
            assert!(c.pass);
        }
    }

    #[test]
    fn theorem_csv_header() {
        let report = TheoremReport { in_hypothesis: true, lhs_fcond: 0.0, rows: vec![] };
        assert_eq!(report.to_csv(2), "u_1,u_2,hessian_min_eig,bound,margin,method,std_error,verdict\n");
    }

    #[test]
    fn gaussian_theorem_margin() {
        let t = Torus::new(1, 3).unwrap();
        let grid = vec![Tilt(vec![0.0]), Tilt(vec![0.7])];
        let r = verify_theorem(
            &Potential::gaussian(),
            1.0,
            &t,
            &grid,
            HessianMethod::Oracle,
            &QuadratureSpec::default(),
            &ChainConfig::new(0.5, 100, 10),
        )
        .unwrap();
        assert!(r.in_hypothesis);
        for row in &r.rows {
            assert!((row.margin - 1.5).abs() < 1e-6, "{row:?}");
            assert_eq!(row.verdict, Verdict::Pass);
        }
        assert!(r.to_csv(1).lines().nth(1).unwrap().ends_with(",oracle,0.0000000000000000e0,pass"));
    }

    fn scaled_c() -> Potential {
        scale_to_unit(&Potential::example_c(0.05, 2.0, 1.0).unwrap(), 1.0).unwrap().0
    }

    #[test]
    fn chain_maps_agree_with_hermite_on_smooth_potential() {
        let t = Torus::new(1, 3).unwrap();
        let plan = DecompositionPlan::new(&scaled_c(), &t).unwrap();
        let q = QuadratureSpec::default();
        let hermite = QuadratureSpec { rule: oracle::Rule::Hermite, ..q };
        let psi = Field::from_free(&t, &[0.3, -0.2]).unwrap();
        let a = r1g(&plan, &[0.4], &psi, &q).unwrap();
        let b = r1g(&plan, &[0.4], &psi, &hermite).unwrap();
        assert!((a.value - b.value).abs() < 1e-8, "{} vs {}", a.value, b.value);
        let a = r2r1g_joint(&plan, &Tilt(vec![0.4]), &q).unwrap();
        let b = r2r1g_joint(&plan, &Tilt(vec![0.4]), &hermite).unwrap();
        assert!((a.value - b.value).abs() < 1e-7, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn example_b_decomposition() {
        let t = Torus::new(1, 3).unwrap();
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        let q = QuadratureSpec::default();
        for u in [0.0, 0.1, 0.25] {
            let u = Tilt(vec![u]);
            let joint = r2r1g_joint(&plan, &u, &q).unwrap().value;
            let iterated = r2r1g_iterated(&plan, &u, &q).unwrap().value;
            assert!((joint - iterated).abs() <= 1e-6 * joint.abs().max(1e-300), "{joint} vs {iterated}");
            let id = decomposition_identity(&plan, &u, &q).unwrap();
            assert!((id.free_energy_diff - id.decomposition_diff).abs() < 1e-6, "{id:?}");
        }
    }

    #[test]
    fn example_b_mc_matches_oracle() {
        let t = Torus::new(1, 3).unwrap();
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        let u = Tilt(vec![0.05]);
        let psi = Field::from_free(&t, &[0.04, -0.03]).unwrap();
        let exact = estimate_r1g(&plan, &u, &psi, &R1gMethod::Oracle { quadrature: QuadratureSpec::default() }).unwrap();
        let mc = estimate_r1g(&plan, &u, &psi, &R1gMethod::Mc { samples: 40_000, batches: 40, seed: 3 }).unwrap();
        assert!(mc.std_error > 0.0);
        assert!((mc.value - exact.value).abs() <= 3.0 * mc.std_error, "{mc:?} vs {exact:?}");
    }

    #[test]
    fn example_b_induced_curvature_bounds() {
        let t = Torus::new(1, 3).unwrap();
        let (pb, _) = scaled_b(0.5);
        let plan = DecompositionPlan::new(&pb, &t).unwrap();
        let q = QuadratureSpec::default();
        let psi = Field::from_free(&t, &[0.02, -0.05]).unwrap();
        let checks = verify_c6(&plan, &Tilt(vec![0.03]), &psi, &random_directions(&t, 20, 9), &q).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        for u in [0.0, 0.1] {
            let c = verify_c7(&plan, &Tilt(vec![u]), &Tilt(vec![1.0]), &q).unwrap();
            assert!(c.pass, "{c:?}");
        }
    }
}
