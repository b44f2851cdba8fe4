//! Periodic lattice geometry, pinned fields and the gradient Hamiltonian.
//!
//! Sites are indexed row-major over (x₁, …, x_d) with the last coordinate
//! fastest; the origin is site 0 and is pinned to zero.

use serde::{Deserialize, Serialize};

use crate::error::{GilError, Result};
use crate::potential::Potential;

/// Largest number of sites a torus may have.
pub const MAX_VOLUME: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Torus {
    d: usize,
    m: usize,
    volume: usize,
    /// forward[i * volume + x] = x + e_i
    forward: Vec<usize>,
    backward: Vec<usize>,
}

impl Torus {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m < 2 {
            return Err(GilError::Precondition(format!("torus needs d >= 1 and m >= 2, got d={d}, m={m}")));
        }
        let volume = u32::try_from(d)
            .ok()
            .and_then(|d| m.checked_pow(d))
            .filter(|&v| v <= MAX_VOLUME)
            .ok_or_else(|| GilError::Precondition(format!("torus {m}^{d} too large")))?;
        let mut forward = vec![0; d * volume];
        let mut backward = vec![0; d * volume];
        for i in 0..d {
            // stride of axis i in row-major order
            let stride = m.pow((d - 1 - i) as u32);
            for x in 0..volume {
                let c = (x / stride) % m;
                let up = if c + 1 == m { x - c * stride } else { x + stride };
                let down = if c == 0 { x + (m - 1) * stride } else { x - stride };
                forward[i * volume + x] = up;
                backward[i * volume + x] = down;
            }
        }
        Ok(Torus { d, m, volume, forward, backward })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    /// Degrees of freedom of a pinned field.
    pub fn dof(&self) -> usize {
        self.volume - 1
    }

    #[inline]
    pub fn forward(&self, x: usize, i: usize) -> usize {
        self.forward[i * self.volume + x]
    }

    #[inline]
    pub fn backward(&self, x: usize, i: usize) -> usize {
        self.backward[i * self.volume + x]
    }

    pub fn coords(&self, mut x: usize) -> Vec<usize> {
        let mut c = vec![0; self.d];
        for k in (0..self.d).rev() {
            c[k] = x % self.m;
            x /= self.m;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.m + (c % self.m))
    }

    /// ∇_i φ(x) = φ(x + e_i) − φ(x) on a raw site array.
    #[inline]
    pub fn diff(&self, values: &[f64], x: usize, i: usize) -> f64 {
        values[self.forward(x, i)] - values[x]
    }

    /// Σ_x Σ_i f_i(u_i + ∇_i φ(x)).
    pub fn sum_edges<F: Fn(usize, f64) -> f64>(&self, u: &[f64], values: &[f64], f: F) -> f64 {
        let mut total = 0.0;
        for i in 0..self.d {
            for x in 0..self.volume {
                total += f(i, u[i] + self.diff(values, x, i));
            }
        }
        total
    }

    /// out(x) = Σ_i [f'(u_i + ∇_iφ(x − e_i)) − f'(u_i + ∇_iφ(x))], the
    /// φ-gradient of Σ f(u + ∇φ), written for every site including the origin.
    pub fn grad_edges<F: Fn(usize, f64) -> f64>(&self, u: &[f64], values: &[f64], fprime: F, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.d {
            for x in 0..self.volume {
                let y = self.forward(x, i);
                let w = fprime(i, u[i] + values[y] - values[x]);
                out[y] += w;
                out[x] -= w;
            }
        }
    }

    /// ‖∇φ‖² = Σ_x Σ_i (∇_i φ(x))².
    pub fn dirichlet(&self, values: &[f64]) -> f64 {
        self.sum_edges(&vec![0.0; self.d], values, |_, s| s * s)
    }

    /// (∇ᵀ∇ φ)(x) for every site, the unpinned lattice Laplacian (negative sign
    /// convention: positive semidefinite).
    pub fn laplacian(&self, values: &[f64], out: &mut [f64]) {
        self.grad_edges(&vec![0.0; self.d], values, |_, s| s, out);
    }
}

/// A real configuration on the torus with φ(origin) = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(t: &Torus) -> Self {
        Field { values: vec![0.0; t.volume()] }
    }

    /// Field whose non-origin values are `free` in site order.
    pub fn from_free(t: &Torus, free: &[f64]) -> Result<Self> {
        if free.len() != t.dof() {
            return Err(GilError::Precondition(format!("expected {} free values, got {}", t.dof(), free.len())));
        }
        let mut values = Vec::with_capacity(t.volume());
        values.push(0.0);
        values.extend_from_slice(free);
        Ok(Field { values })
    }

    /// Pins an arbitrary site array by subtracting its origin value.
    pub fn pinned(mut values: Vec<f64>) -> Self {
        let o = values.first().copied().unwrap_or(0.0);
        values.iter_mut().for_each(|v| *v -= o);
        if let Some(v) = values.first_mut() {
            *v = 0.0;
        }
        Field { values }
    }

    /// Wraps a site array that must already satisfy φ(origin) = 0.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            Some(&0.0) => Ok(Field { values }),
            Some(&v) => Err(GilError::Precondition(format!("field must vanish at the origin, got {v}"))),
            None => Err(GilError::Precondition("empty field".into())),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn free(&self) -> &[f64] {
        &self.values[1..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[must_use]
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        Field { values: self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect() }
    }

    pub(crate) fn check(&self, t: &Torus) -> Result<()> {
        if self.values.len() != t.volume() {
            return Err(GilError::Precondition(format!("field has {} sites, torus has {}", self.values.len(), t.volume())));
        }
        Ok(())
    }
}

/// Tilt vector u ∈ ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tilt(pub Vec<f64>);

impl Tilt {
    pub fn zero(d: usize) -> Self {
        Tilt(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn scaled(&self, k: f64) -> Tilt {
        Tilt(self.0.iter().map(|x| k * x).collect())
    }

    pub(crate) fn check(&self, t: &Torus) -> Result<()> {
        if self.0.len() != t.d() || self.0.iter().any(|x| !x.is_finite()) {
            return Err(GilError::Precondition(format!("tilt must have {} finite entries, got {:?}", t.d(), self.0)));
        }
        Ok(())
    }
}

/// ∇_i φ(x).
pub fn grad(t: &Torus, phi: &Field, x: usize, i: usize) -> f64 {
    t.diff(phi.values(), x, i)
}

/// H(u, φ) = Σ_x Σ_i V(∇_i φ(x) + u_i). β is not included.
pub fn hamiltonian(t: &Torus, u: &Tilt, phi: &Field, p: &Potential) -> Result<f64> {
    u.check(t)?;
    phi.check(t)?;
    let h = t.sum_edges(u.as_slice(), phi.values(), |_, s| p.v(s, 0));
    if h.is_finite() {
        Ok(h)
    } else {
        Err(GilError::Domain { s: f64::NAN, what: "non-finite Hamiltonian" })
    }
}

/// ∂H/∂φ(x) for every site; the origin entry is zero since it is not a
/// degree of freedom.
pub fn grad_h(t: &Torus, u: &Tilt, phi: &Field, p: &Potential) -> Result<Field> {
    u.check(t)?;
    phi.check(t)?;
    let mut out = vec![0.0; t.volume()];
    t.grad_edges(u.as_slice(), phi.values(), |_, s| p.v(s, 1), &mut out);
    out[0] = 0.0;
    Ok(Field { values: out })
}

/// D²H(φ)·dir restricted to the pinned subspace.
pub fn hess_h_apply(t: &Torus, u: &Tilt, phi: &Field, p: &Potential, dir: &Field) -> Result<Field> {
    u.check(t)?;
    phi.check(t)?;
    dir.check(t)?;
    if dir.values[0] != 0.0 {
        return Err(GilError::Precondition("direction must be pinned at the origin".into()));
    }
    let mut out = vec![0.0; t.volume()];
    let (vals, dv) = (phi.values(), dir.values());
    for i in 0..t.d() {
        for x in 0..t.volume() {
            let y = t.forward(x, i);
            let w = p.v(u.0[i] + vals[y] - vals[x], 2) * (dv[y] - dv[x]);
            out[y] += w;
            out[x] -= w;
        }
    }
    out[0] = 0.0;
    Ok(Field { values: out })
}

/// Σ_{x,i} V''(∇_iφ(x) + u_i)(∇_i dir(x))².
pub fn hess_h_form(t: &Torus, u: &Tilt, phi: &Field, p: &Potential, dir: &Field) -> Result<f64> {
    u.check(t)?;
    phi.check(t)?;
    dir.check(t)?;
    let (vals, dv) = (phi.values(), dir.values());
    let mut q = 0.0;
    for i in 0..t.d() {
        for x in 0..t.volume() {
            let y = t.forward(x, i);
            q += p.v(u.0[i] + vals[y] - vals[x], 2) * (dv[y] - dv[x]).powi(2);
        }
    }
    Ok(q)
}

/// The perturbation g = V − s²/2 of a potential with unit lower curvature.
#[inline]
pub fn separated_g(p: &Potential, s: f64, order: u8) -> f64 {
    let quad = match order {
        0 => 0.5 * s * s,
        1 => s,
        _ => 1.0,
    };
    p.v(s, order) - quad
}

fn require_unit_c1(p: &Potential) -> Result<()> {
    let c1 = p.constants().c1;
    if (c1 - 1.0).abs() > 1e-12 {
        return Err(GilError::Precondition(format!("potential must be scaled to c1 = 1 (got {c1}); call scale_to_unit first")));
    }
    Ok(())
}

/// G(u, φ) = Σ_{x,i} g(u_i + ∇_iφ(x)).
pub fn g_energy(t: &Torus, u: &[f64], values: &[f64], p: &Potential) -> f64 {
    t.sum_edges(u, values, |_, s| separated_g(p, s, 0))
}

/// Splits H into its Gaussian part ½|T||u|² + ½‖∇φ‖² and G(u, φ).
pub fn separate(t: &Torus, u: &Tilt, phi: &Field, p: &Potential) -> Result<(f64, f64)> {
    require_unit_c1(p)?;
    u.check(t)?;
    phi.check(t)?;
    let gauss = 0.5 * t.volume() as f64 * u.norm_sq() + 0.5 * t.dirichlet(phi.values());
    Ok((gauss, g_energy(t, u.as_slice(), phi.values(), p)))
}

/// (D_uH_i, D²_uH_ii): Σ_x V'(u_i + ∇_iφ(x)) and Σ_x V''(u_i + ∇_iφ(x)).
pub fn tilt_derivatives(t: &Torus, u: &[f64], values: &[f64], p: &Potential) -> (Vec<f64>, Vec<f64>) {
    let mut d1 = vec![0.0; t.d()];
    let mut d2 = vec![0.0; t.d()];
    for i in 0..t.d() {
        for x in 0..t.volume() {
            let s = u[i] + t.diff(values, x, i);
            d1[i] += p.v(s, 1);
            d2[i] += p.v(s, 2);
        }
    }
    (d1, d2)
}

pub(crate) fn require_scaled(p: &Potential) -> Result<()> {
    require_unit_c1(p)
}
