//! One-dimensional quadrature rules: adaptive Gauss–Kronrod for norms,
//! Gauss–Hermite nodes for the lattice oracle, Gauss–Legendre for path
//! integrals.

use crate::error::{GilError, Result};

const GK_XK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel on [a, b]: (estimate, |K15 - G7|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let dx = h * GK_XK[j];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[j] * s;
        if j % 2 == 1 {
            gauss += GK_WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

type Panel = (f64, f64, (f64, f64));

/// Bisects the worst panel until `done(value, error)` holds or the panel
/// budget runs out.
fn refine<F: Fn(f64) -> f64>(f: &F, mut panels: Vec<Panel>, done: impl Fn(f64, f64) -> bool) -> Result<(f64, f64)> {
    let sum = |panels: &[Panel]| panels.iter().fold((0.0, 0.0), |(v, e), p| (v + p.2 .0, e + p.2 .1));
    for _ in 0..4000 {
        let (value, err) = sum(&panels);
        if done(value, err) {
            break;
        }
        let Some((worst, _)) = panels.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)) else {
            break;
        };
        let (lo, hi, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        panels.push((lo, mid, gk15(f, lo, mid)));
        panels.push((mid, hi, gk15(f, mid, hi)));
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (value, err) = sum(&panels);
    if !value.is_finite() {
        return Err(GilError::QuadratureFailure { tol: f64::NAN, change: f64::NAN, order: panels.len() });
    }
    Ok((value, err))
}

/// Adaptive Gauss–Kronrod on a finite interval. Returns (value, error bound).
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    refine(f, vec![(a, b, gk15(f, a, b))], |_, err| err <= tol).map_err(|e| match e {
        GilError::QuadratureFailure { change, order, .. } => GilError::QuadratureFailure { tol, change, order },
        e => e,
    })
}

/// Adaptive Gauss–Kronrod over [a, b] split at the interior breakpoints,
/// stopping once the error is below `rel` times the running value.
pub fn adaptive_pieces_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breakpoints: &[f64], rel: f64) -> Result<(f64, f64)> {
    let mut cuts: Vec<f64> =
        std::iter::once(a).chain(breakpoints.iter().copied().filter(|&x| x > a && x < b)).chain(std::iter::once(b)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let panels = cuts.windows(2).map(|w| (w[0], w[1], gk15(f, w[0], w[1]))).collect();
    refine(f, panels, |value, err| err <= rel * value.abs())
}

/// Integrates over [a, b] splitting at the given interior breakpoints.
pub fn adaptive_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breakpoints: &[f64], tol: f64) -> Result<(f64, f64)> {
    let mut cuts: Vec<f64> =
        std::iter::once(a).chain(breakpoints.iter().copied().filter(|&x| x > a && x < b)).chain(std::iter::once(b)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let share = tol / (cuts.len().max(2) - 1) as f64;
    let mut value = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let (v, e) = adaptive(f, w[0], w[1], share)?;
        value += v;
        err += e;
    }
    Ok((value, err))
}

/// Result of an integral over the whole real line by tail doubling.
#[derive(Debug, Clone, Copy)]
pub struct LineIntegral {
    pub value: f64,
    pub error: f64,
    pub extent: f64,
}

/// Integrates `f` over ℝ on [−T, T], doubling T until the added shell
/// contributes less than tol/2. Fails when T exceeds `max_extent`.
pub fn whole_line<F: Fn(f64) -> f64>(f: &F, breakpoints: &[f64], tol: f64, max_extent: f64) -> Result<LineIntegral> {
    let mut t = 1.0_f64;
    for &b in breakpoints {
        while t < b.abs() {
            t *= 2.0;
        }
    }
    let inner_tol = tol / 8.0;
    let (mut value, mut err) = adaptive_pieces(f, -t, t, breakpoints, inner_tol)?;
    loop {
        let next = 2.0 * t;
        let (left, el) = adaptive_pieces(f, -next, -t, breakpoints, inner_tol)?;
        let (right, er) = adaptive_pieces(f, t, next, breakpoints, inner_tol)?;
        let shell = left + right;
        value += shell;
        err += el + er;
        t = next;
        if shell.abs() < tol / 2.0 {
            return Ok(LineIntegral { value, error: err + shell.abs(), extent: t });
        }
        if t > max_extent || !value.is_finite() {
            return Err(GilError::QuadratureFailure { tol, change: shell.abs(), order: t as usize });
        }
    }
}

/// Gauss–Hermite rule for the standard normal weight, normalized so the
/// weights sum to one. Nodes are in increasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let norm = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&xi, &wi)| (xi * std::f64::consts::SQRT_2, wi / norm)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
