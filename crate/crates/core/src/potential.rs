//! Pair potentials V = V₀ + g₀ acting on nearest-neighbour gradients.
//!
//! Every built-in family is split so that V₀ carries the convex part with
//! `c1 ≤ V₀'' ≤ c2` and g₀ carries the non-convex remainder with
//! `−c0 ≤ g₀'' ≤ 0`. Where the natural split of a family leaves positive
//! curvature in g₀, the excess is moved into V₀ (g₀'' = min(V'' − c1, 0)).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GilError, Result};
use crate::integrate;

/// Curvature constants of a split potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Constants {
    pub fn cbar(&self) -> Result<f64> {
        crate::conditions::cbar(self.c0, self.c1, self.c2)
    }
}

/// Configuration form of a potential, e.g. `{"family":"example_a","a":0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    // braces make serde reject stray keys next to the tag
    Gaussian {},
    ExampleA { a: f64 },
    ExampleB { delta: f64 },
    ExampleC { p: f64, k1: f64, k2: f64 },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        match *self {
            PotentialSpec::Gaussian {} => Ok(Potential::gaussian()),
            PotentialSpec::ExampleA { a } => Potential::example_a(a),
            PotentialSpec::ExampleB { delta } => Potential::example_b(delta),
            PotentialSpec::ExampleC { p, k1, k2 } => Potential::example_c(p, k1, k2),
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user potential given as closed-over callbacks. The three entries of
/// each array are the function and its first two derivatives.
#[derive(Clone)]
pub struct CustomPotential {
    pub v0: [ScalarFn; 3],
    pub g0: [ScalarFn; 3],
    /// Declared constants, grid-verified at construction. When absent the
    /// sampled bounds are used.
    pub declared: Option<Constants>,
    pub breakpoints: Vec<f64>,
}

impl CustomPotential {
    pub fn new<A, B, C, D, E, F>(v0: (A, B, C), g0: (D, E, F)) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        CustomPotential {
            v0: [Arc::new(v0.0), Arc::new(v0.1), Arc::new(v0.2)],
            g0: [Arc::new(g0.0), Arc::new(g0.1), Arc::new(g0.2)],
            declared: None,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_constants(mut self, c: Constants) -> Self {
        self.declared = Some(c);
        self
    }
}

#[derive(Clone)]
pub enum Family {
    Gaussian,
    ExampleA { a: f64 },
    ExampleB { delta: f64 },
    ExampleC { p: f64, k1: f64, k2: f64 },
    Custom(Arc<CustomPotential>, Constants),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Gaussian,
    ExampleA,
    ExampleB,
    ExampleC,
    Custom,
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => write!(f, "Gaussian"),
            Family::ExampleA { a } => write!(f, "ExampleA(a={a})"),
            Family::ExampleB { delta } => write!(f, "ExampleB(delta={delta})"),
            Family::ExampleC { p, k1, k2 } => write!(f, "ExampleC(p={p}, k1={k1}, k2={k2})"),
            Family::Custom(_, c) => write!(f, "Custom({c:?})"),
        }
    }
}

/// Sampling grid for curvature and growth checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { lo: -50.0, hi: 50.0, points: 10_000 }
    }
}

impl Grid {
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points.max(2);
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n).map(move |k| self.lo + step * k as f64)
    }
}

/// A potential V(s) = amplitude · V_base(arg_scale · s).
///
/// Unscaled potentials have amplitude = arg_scale = 1; [`crate::conditions::scale_to_unit`]
/// produces the rescaled copy used by the β = 1, c1 = 1 reduction.
#[derive(Clone, Debug)]
pub struct Potential {
    family: Family,
    amplitude: f64,
    arg_scale: f64,
}

// Example (b) curvature sign changes at t = (5 ∓ √5)/10.
const B_T1: f64 = 0.276_393_202_250_021;
const B_T2: f64 = 0.723_606_797_749_979;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Potential {
    pub fn gaussian() -> Self {
        Potential { family: Family::Gaussian, amplitude: 1.0, arg_scale: 1.0 }
    }

    pub fn example_a(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(GilError::InvalidPotential(format!("example_a needs 0 < a < 1, got {a}")));
        }
        Ok(Self::unscaled(Family::ExampleA { a }))
    }

    pub fn example_b(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(GilError::InvalidPotential(format!("example_b needs 0 < delta < 1, got {delta}")));
        }
        Ok(Self::unscaled(Family::ExampleB { delta }))
    }

    pub fn example_c(p: f64, k1: f64, k2: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0 && k2 > 0.0 && k1 > k2 && k1.is_finite()) {
            return Err(GilError::InvalidPotential(format!("example_c needs 0 < p < 1 and 0 < k2 < k1, got p={p}, k1={k1}, k2={k2}")));
        }
        Ok(Self::unscaled(Family::ExampleC { p, k1, k2 }))
    }

    /// Builds a custom potential, certifying its curvature bounds on the
    /// default grid.
    pub fn custom(c: CustomPotential) -> Result<Self> {
        let constants = certify_custom(&c, &Grid::default())?;
        Ok(Self::unscaled(Family::Custom(Arc::new(c), constants)))
    }

    fn unscaled(family: Family) -> Self {
        Potential { family, amplitude: 1.0, arg_scale: 1.0 }
    }

    /// Returns s ↦ amplitude · V(arg_scale · s) applied on top of the
    /// current scaling.
    pub fn rescaled(&self, amplitude: f64, arg_scale: f64) -> Self {
        Potential { family: self.family.clone(), amplitude: self.amplitude * amplitude, arg_scale: self.arg_scale * arg_scale }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn tag(&self) -> FamilyTag {
        match self.family {
            Family::Gaussian => FamilyTag::Gaussian,
            Family::ExampleA { .. } => FamilyTag::ExampleA,
            Family::ExampleB { .. } => FamilyTag::ExampleB,
            Family::ExampleC { .. } => FamilyTag::ExampleC,
            Family::Custom(..) => FamilyTag::Custom,
        }
    }

    pub fn is_scaled(&self) -> bool {
        self.amplitude != 1.0 || self.arg_scale != 1.0
    }

    #[inline]
    fn order_factor(&self, order: u8) -> f64 {
        self.amplitude * self.arg_scale.powi(order as i32)
    }

    /// V, V' or V'' of the full potential. Infallible fast path used in the
    /// lattice loops.
    #[inline]
    pub fn v(&self, s: f64, order: u8) -> f64 {
        self.order_factor(order) * self.base_v(self.arg_scale * s, order)
    }

    /// Checked evaluation of V and its first two derivatives.
    pub fn eval(&self, s: f64, order: u8) -> Result<f64> {
        if order > 2 {
            return Err(GilError::Precondition(format!("derivative order must be 0, 1 or 2, got {order}")));
        }
        let val = self.v(s, order);
        if val.is_finite() {
            Ok(val)
        } else {
            Err(GilError::Domain { s, what: "non-finite potential value" })
        }
    }

    /// Derivatives of the convex part V₀.
    pub fn v0(&self, s: f64, order: u8) -> f64 {
        self.order_factor(order) * self.base_v0(self.arg_scale * s, order)
    }

    /// Derivatives of the non-convex part g₀.
    pub fn g0(&self, s: f64, order: u8) -> f64 {
        self.order_factor(order) * self.base_g0(self.arg_scale * s, order)
    }

    /// Points where g₀'' fails to be smooth, in this potential's variable.
    pub fn breakpoints(&self) -> Vec<f64> {
        let base = match &self.family {
            Family::Gaussian | Family::ExampleC { .. } => Vec::new(),
            Family::ExampleA { a } => vec![-a.sqrt(), a.sqrt()],
            Family::ExampleB { delta } => vec![0.0, B_T1 * delta, B_T2 * delta, *delta],
            Family::Custom(c, _) => c.breakpoints.clone(),
        };
        base.into_iter().map(|b| b / self.arg_scale).collect()
    }

    /// Curvature constants (c0, c1, c2): closed forms for the built-in
    /// families, grid-certified values for custom potentials.
    pub fn constants(&self) -> Constants {
        let base = match &self.family {
            Family::Gaussian => Constants { c0: 0.0, c1: 1.0, c2: 1.0 },
            Family::ExampleA { a } => Constants { c0: 2.0 / a, c1: 2.0, c2: 2.0 + 0.25 / a },
            Family::ExampleB { .. } => Constants { c0: 1.2, c1: 1.0, c2: 2.5 },
            Family::ExampleC { p, k1, k2 } => Constants { c0: p * (k1 - k2) / (1.0 - p), c1: *k2, c2: p * k1 + (1.0 - p) * k2 },
            Family::Custom(_, c) => *c,
        };
        let f = self.order_factor(2);
        Constants { c0: f * base.c0, c1: f * base.c1, c2: f * base.c2 }
    }

    pub fn cbar(&self) -> Result<f64> {
        self.constants().cbar()
    }

    /// Integral norms of g₀ entering the smallness conditions. Fails when
    /// ‖g₀''‖_{L¹} itself diverges; lower-order norms that diverge are
    /// reported as `None`.
    pub fn norms(&self, tol: f64) -> Result<NormReport> {
        if !(tol > 0.0) {
            return Err(GilError::Precondition(format!("tol must be > 0, got {tol}")));
        }
        let bp = self.breakpoints();
        let max_extent = 65_536.0 / self.arg_scale.min(1.0);
        let pp =
            integrate::whole_line(&|s| self.g0(s, 2).abs(), &bp, tol, max_extent).map_err(|_| GilError::DivergentNorm("||g0''||_L1"))?;
        let p = integrate::whole_line(&|s| self.g0(s, 1).powi(2), &bp, tol, max_extent).ok();
        let z = integrate::whole_line(&|s| self.g0(s, 0).abs(), &bp, tol, max_extent).ok();
        let mut err = pp.error;
        if let Some(r) = p {
            err = err.max(r.error);
        }
        if let Some(r) = z {
            err = err.max(r.error);
        }
        Ok(NormReport { l1_g0pp: pp.value, l2_g0p: p.map(|r| r.value.max(0.0).sqrt()), l1_g0: z.map(|r| r.value), quadrature_error: err })
    }

    /// True iff V(η) ≥ a_coef·η² − b_coef at every grid point.
    pub fn validate_growth(&self, a_coef: f64, b_coef: f64, grid: &Grid) -> bool {
        grid.iter().all(|eta| self.v(eta, 0) >= a_coef * eta * eta - b_coef)
    }

    /// Checks c1 ≤ V₀'' ≤ c2 and −c0 ≤ g₀'' ≤ 0 on the grid, with a relative
    /// slack for rounding.
    pub fn check_curvature(&self, grid: &Grid) -> Result<()> {
        let c = self.constants();
        let slack = 1e-9 * c.c2.max(c.c0).max(1.0);
        for s in grid.iter() {
            let v0 = self.v0(s, 2);
            let g0 = self.g0(s, 2);
            if v0 < c.c1 - slack || v0 > c.c2 + slack {
                return Err(GilError::InvalidPotential(format!("V0''({s}) = {v0} outside [{}, {}]", c.c1, c.c2)));
            }
            if g0 < -c.c0 - slack || g0 > slack {
                return Err(GilError::InvalidPotential(format!("g0''({s}) = {g0} outside [{}, 0]", -c.c0)));
            }
        }
        Ok(())
    }

    fn base_v(&self, s: f64, order: u8) -> f64 {
        match &self.family {
            Family::Gaussian => match order {
                0 => 0.5 * s * s,
                1 => s,
                _ => 1.0,
            },
            Family::ExampleA { a } => {
                let q = s * s + a;
                match order {
                    0 => q - q.ln(),
                    1 => 2.0 * s - 2.0 * s / q,
                    _ => 2.0 - 2.0 * (a - s * s) / (q * q),
                }
            }
            Family::ExampleB { delta } => {
                let quad = match order {
                    0 => 0.5 * s * s,
                    1 => s,
                    _ => 1.0,
                };
                quad + bump(*delta, s, order)
            }
            Family::ExampleC { p, k1, k2 } => {
                let dk = k1 - k2;
                let w1 = mixture_weight(*p, dk, s);
                match order {
                    0 => {
                        let c = (p / (1.0 - p)).ln();
                        0.5 * k2 * s * s - (1.0 - p).ln() - softplus(c - 0.5 * dk * s * s)
                    }
                    1 => s * (k2 + dk * w1),
                    _ => k2 + dk * w1 - s * s * dk * dk * w1 * (1.0 - w1),
                }
            }
            Family::Custom(c, _) => c.v0[order as usize](s) + c.g0[order as usize](s),
        }
    }

    fn base_g0(&self, s: f64, order: u8) -> f64 {
        match &self.family {
            Family::Gaussian => 0.0,
            Family::ExampleA { a } => example_a_g0(*a, s, order),
            Family::ExampleB { delta } => example_b_g0(*delta, s, order),
            Family::ExampleC { p, k1, k2 } => {
                let dk = k1 - k2;
                let w1 = mixture_weight(*p, dk, s);
                match order {
                    0 => {
                        let c = (p / (1.0 - p)).ln();
                        2.0 * (softplus(c) - softplus(c - 0.5 * dk * s * s)) - dk * s * mixture_weight_integral(*p, dk, s)
                    }
                    1 => dk * (s * w1 - mixture_weight_integral(*p, dk, s)),
                    _ => -dk * dk * s * s * w1 * (1.0 - w1),
                }
            }
            Family::Custom(c, _) => c.g0[order as usize](s),
        }
    }

    fn base_v0(&self, s: f64, order: u8) -> f64 {
        match &self.family {
            Family::Custom(c, _) => c.v0[order as usize](s),
            _ => self.base_v(s, order) - self.base_g0(s, order),
        }
    }
}

/// The cubic bump −(4/δ⁴)x³(δ−x)³ on [0, δ] and its derivatives.
fn bump(delta: f64, x: f64, order: u8) -> f64 {
    if !(0.0..=delta).contains(&x) {
        return 0.0;
    }
    let t = x / delta;
    let q = t * (1.0 - t);
    match order {
        0 => -4.0 * delta * delta * q * q * q,
        1 => -12.0 * delta * q * q * (1.0 - 2.0 * t),
        _ => -24.0 * q * (1.0 - 5.0 * q),
    }
}

fn example_a_g0(a: f64, s: f64, order: u8) -> f64 {
    let r = a.sqrt();
    let q = s * s + a;
    if s.abs() < r {
        match order {
            0 => a - q.ln(),
            1 => -2.0 * s / q,
            _ => -2.0 * (a - s * s) / (q * q),
        }
    } else {
        match order {
            0 => a - (2.0 * a).ln() - (s.abs() - r) / r,
            1 => -s.signum() / r,
            _ => 0.0,
        }
    }
}

fn example_b_g0(delta: f64, x: f64, order: u8) -> f64 {
    let x1 = B_T1 * delta;
    let x2 = B_T2 * delta;
    // g0' on the flat middle section
    let c = -12.0 * delta / (25.0 * 5f64.sqrt());
    if x <= 0.0 {
        return 0.0;
    }
    if x <= x1 {
        return bump(delta, x, order);
    }
    if x <= x2 {
        return match order {
            0 => bump(delta, x1, 0) + c * (x - x1),
            1 => c,
            _ => 0.0,
        };
    }
    let at_x2 = bump(delta, x1, 0) + c * (x2 - x1);
    if x <= delta {
        return match order {
            0 => at_x2 + bump(delta, x, 0) - bump(delta, x2, 0) + 2.0 * c * (x - x2),
            1 => bump(delta, x, 1) + 2.0 * c,
            _ => bump(delta, x, 2),
        };
    }
    let at_delta = at_x2 - bump(delta, x2, 0) + 2.0 * c * (delta - x2);
    match order {
        0 => at_delta + 2.0 * c * (x - delta),
        1 => 2.0 * c,
        _ => 0.0,
    }
}

/// Posterior weight of the k1 component: p e^{-k1 s²/2} / (p e^{-k1 s²/2} + (1-p) e^{-k2 s²/2}).
fn mixture_weight(p: f64, dk: f64, s: f64) -> f64 {
    let z = (p / (1.0 - p)).ln() - 0.5 * dk * s * s;
    1.0 / (1.0 + (-z).exp())
}

/// ∫₀^s of the mixture weight.
fn mixture_weight_integral(p: f64, dk: f64, s: f64) -> f64 {
    let (v, _) = integrate::adaptive(&|t| mixture_weight(p, dk, t), 0.0, s.abs(), 1e-14).unwrap_or((f64::NAN, 0.0));
    v * s.signum()
}

fn certify_custom(c: &CustomPotential, grid: &Grid) -> Result<Constants> {
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for s in grid.iter() {
        let v = (c.v0[2])(s);
        let g = (c.g0[2])(s);
        if !v.is_finite() || !g.is_finite() {
            return Err(GilError::InvalidPotential(format!("non-finite curvature at s = {s}")));
        }
        v_min = v_min.min(v);
        v_max = v_max.max(v);
        g_min = g_min.min(g);
        g_max = g_max.max(g);
    }
    let slack = 1e-9 * v_max.abs().max(g_min.abs()).max(1.0);
    if v_min <= 0.0 {
        return Err(GilError::InvalidPotential(format!("V0'' must be bounded below by a positive constant, sampled min {v_min}")));
    }
    if g_max > slack {
        return Err(GilError::InvalidPotential(format!("g0'' must be <= 0, sampled max {g_max}")));
    }
    match c.declared {
        Some(d) => {
            if d.c1 > v_min + slack || d.c2 < v_max - slack || -d.c0 > g_min + slack {
                return Err(GilError::InvalidPotential(format!(
                    "declared constants {d:?} do not bound sampled curvature \
                     (V0'' in [{v_min}, {v_max}], g0'' >= {g_min})"
                )));
            }
            Ok(d)
        }
        None => Ok(Constants { c0: (-g_min).max(0.0) + slack, c1: v_min - slack, c2: v_max + slack }),
    }
}

/// Integral norms of the non-convex part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// ∫|g₀''|
    pub l1_g0pp: f64,
    /// (∫(g₀')²)^{1/2}, `None` when divergent.
    pub l2_g0p: Option<f64>,
    /// ∫|g₀|, `None` when divergent.
    pub l1_g0: Option<f64>,
    pub quadrature_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn families() -> Vec<Potential> {
        vec![
            Potential::gaussian(),
            Potential::example_a(0.25).unwrap(),
            Potential::example_a(0.5).unwrap(),
            Potential::example_b(0.5).unwrap(),
            Potential::example_b(0.9).unwrap(),
            Potential::example_c(0.05, 2.0, 1.0).unwrap(),
            Potential::example_c(0.3, 5.0, 0.5).unwrap(),
        ]
    }

    #[test]
    fn gaussian_curvature_is_one() {
        assert_eq!(Potential::gaussian().eval(3.7, 2).unwrap(), 1.0);
    }

    #[test]
    fn example_a_value_at_origin() {
        // mpmath: a - log a at a = 1/2
        let v = Potential::example_a(0.5).unwrap().eval(0.0, 0).unwrap();
        assert_relative_eq!(v, 1.193_147_180_559_945_3, max_relative = 1e-15);
    }

    #[test]
    fn example_a_curvature_tends_to_two() {
        let p = Potential::example_a(0.5).unwrap();
        assert_relative_eq!(p.eval(1e4, 2).unwrap(), 2.0, epsilon = 1e-7);
        let s = 0.3;
        assert_relative_eq!(p.v(s, 2), p.v0(s, 2) + p.g0(s, 2), epsilon = 1e-14);
    }

    #[test]
    fn family_constants() {
        let a = Potential::example_a(0.5).unwrap().constants();
        assert_eq!((a.c0, a.c1), (4.0, 2.0));
        assert_eq!(a.c2, 2.5);
        let g = Potential::gaussian().constants();
        assert_eq!((g.c0, g.c1, g.c2), (0.0, 1.0, 1.0));
        let c = Potential::example_c(0.05, 2.0, 1.0).unwrap().constants();
        assert_relative_eq!(c.c1, 1.0);
        assert_relative_eq!(c.c2, 0.05 * 2.0 + 0.95);
        assert_relative_eq!(c.c0, 0.05 / 0.95);
    }

    #[test]
    fn curvature_bounds_hold_on_grid() {
        for p in families() {
            p.check_curvature(&Grid::default()).unwrap_or_else(|e| panic!("{p:?}: {e}"));
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-4;
        for p in families() {
            let bp = p.breakpoints();
            for k in 0..40 {
                let s = -3.0 + 0.1537 * k as f64;
                if bp.iter().any(|b| (b - s).abs() < 4.0 * h) {
                    continue;
                }
                for (f, name) in
                    [(&(|s, o| p.v(s, o)) as &dyn Fn(f64, u8) -> f64, "V"), (&|s, o| p.g0(s, o), "g0"), (&|s, o| p.v0(s, o), "V0")]
                {
                    let d1 = (f(s + h, 0) - f(s - h, 0)) / (2.0 * h);
                    let d2 = (f(s + h, 1) - f(s - h, 1)) / (2.0 * h);
                    let scale1 = f(s, 1).abs().max(1.0);
                    let scale2 = f(s, 2).abs().max(1.0);
                    assert!((d1 - f(s, 1)).abs() / scale1 < 1e-6, "{p:?} {name}' at {s}: {d1} vs {}", f(s, 1));
                    assert!((d2 - f(s, 2)).abs() / scale2 < 1e-6, "{p:?} {name}'' at {s}: {d2} vs {}", f(s, 2));
                }
            }
        }
    }

    #[test]
    fn example_a_l1_norm() {
        for a in [0.25, 0.5, 0.75] {
            let n = Potential::example_a(a).unwrap().norms(1e-10).unwrap();
            assert_relative_eq!(n.l1_g0pp, 2.0 / f64::sqrt(a), max_relative = 1e-6);
            assert!(n.l2_g0p.is_none() && n.l1_g0.is_none());
        }
    }

    #[test]
    fn example_b_l1_norm() {
        // mpmath: 24·δ/(25√5) at δ = 1/2
        let n = Potential::example_b(0.5).unwrap().norms(1e-10).unwrap();
        assert_relative_eq!(n.l1_g0pp, 0.214_662_525_839_979_8, max_relative = 1e-8);
    }

    #[test]
    fn example_c_l1_norm_below_stated_bound() {
        let (p, k1, k2) = (0.05, 2.0, 1.0);
        let pot = Potential::example_c(p, k1, k2).unwrap();
        let n = pot.norms(1e-9).unwrap();
        let bound = 2.0 * p / (1.0 - p) * ((k1 - k2) * std::f64::consts::PI).sqrt();
        assert!(n.l1_g0pp <= bound, "{} > {bound}", n.l1_g0pp);
        // g0'' <= 0 so the norm is the jump of g0' between ±∞
        let jump = 2.0 * (k1 - k2) * mixture_weight_integral(p, k1 - k2, 60.0);
        assert_relative_eq!(n.l1_g0pp, jump, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_norms_vanish() {
        let n = Potential::gaussian().norms(1e-8).unwrap();
        assert_eq!(n.l1_g0pp, 0.0);
        assert_eq!(n.l2_g0p, Some(0.0));
        assert_eq!(n.l1_g0, Some(0.0));
    }

    #[test]
    fn custom_rejects_positive_g0_curvature() {
        let bump = CustomPotential::new(
            (|s: f64| 0.5 * s * s, |s: f64| s, |_| 1.0),
            (|s: f64| -0.3 * (-s * s).exp(), |s: f64| 0.6 * s * (-s * s).exp(), |s: f64| 0.6 * (1.0 - 2.0 * s * s) * (-s * s).exp()),
        );
        assert!(Potential::custom(bump).is_err());
    }

    #[test]
    fn custom_potential_declared_constants() {
        // V = s²/2 + Gaussian-mixture perturbation already concave
        let c = CustomPotential::new(
            (|s: f64| s * s, |s: f64| 2.0 * s, |_| 2.0),
            (|s: f64| -(1.0 + s * s).sqrt(), |s: f64| -s / (1.0 + s * s).sqrt(), |s: f64| -(1.0 + s * s).powf(-1.5)),
        )
        .with_constants(Constants { c0: 1.0, c1: 2.0, c2: 2.0 });
        let p = Potential::custom(c.clone()).unwrap();
        assert_eq!(p.constants().c0, 1.0);
        let bad = c.with_constants(Constants { c0: 0.5, c1: 2.0, c2: 2.0 });
        assert!(Potential::custom(bad).is_err());
    }

    #[test]
    fn l2_bound_by_c0_times_l1() {
        for p in families() {
            let n = p.norms(1e-9).unwrap();
            if let (Some(l2), Some(l1)) = (n.l2_g0p, n.l1_g0) {
                assert!(l2 * l2 <= p.constants().c0 * l1 + 1e-9, "{p:?}");
            }
        }
    }

    #[test]
    fn growth_checks() {
        let g = Grid::default();
        assert!(Potential::gaussian().validate_growth(0.5, 0.0, &g));
        assert!(Potential::example_a(0.5).unwrap().validate_growth(0.5, 1.0, &g));
        for p in families() {
            let c2 = p.constants().c2;
            assert!(!p.validate_growth(0.5 * c2 + 0.1, 10.0, &g), "{p:?}");
        }
    }

    #[test]
    fn eval_rejects_bad_order() {
        assert!(Potential::gaussian().eval(0.0, 3).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s: PotentialSpec = serde_json::from_str(r#"{"family":"example_a","a":0.5}"#).unwrap();
        assert_eq!(s, PotentialSpec::ExampleA { a: 0.5 });
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"family":"example_a","a":0.5,"x":1}"#).is_err());
    }
}
