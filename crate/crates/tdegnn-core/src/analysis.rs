//! Interpretability toolkit for learned temporal stencils: characteristic
//! roots and the multistep root condition, decomposition onto the
//! finite-difference basis, and stencil consistency against a test function.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Convergence target for the polynomial residual `|p(root)|`.
pub const ROOT_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// How far a root's modulus may exceed 1 while still counting as on the unit
/// circle. Published stencils are rounded to 2-3 decimals, which perturbs
/// roots by up to about 1e-2, so the verdict tolerance must absorb that.
pub const UNIT_CIRCLE_TOLERANCE: f64 = 2e-2;

/// Tolerance on `sum(c) = 1` accepted by the analysis entry points.
pub const COEFFICIENT_SUM_TOLERANCE: f64 = 1e-6;

/// Largest supported stencil order.
pub const MAX_ORDER: usize = 32;

const MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RootEntry {
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

/// Root-condition verdict for one coefficient vector.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub roots: Vec<RootEntry>,
    pub max_abs_root: f64,
    pub stable: bool,
    pub weakly_stable_warning: bool,
}

/// Stencil-consistency fit against the second derivative of the test function.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub grid_step: f64,
    pub beta: f64,
    pub r2: f64,
    pub inferred_order: Option<u32>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

fn validate_coefficients(coeffs: &[f64]) -> Result<()> {
    if coeffs.is_empty() || coeffs.len() > MAX_ORDER {
        return Err(Error::config(
            "order",
            format!("supported stencil order is 1..={MAX_ORDER}, got {}", coeffs.len()),
        ));
    }
    let sum: f64 = coeffs.iter().sum();
    if (sum - 1.0).abs() > COEFFICIENT_SUM_TOLERANCE {
        return Err(Error::state(format!(
            "coefficients sum to {sum}, expected 1 within {COEFFICIENT_SUM_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn horner(poly: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut value = Complex64::new(poly[0], 0.0);
    let mut derivative = Complex64::new(0.0, 0.0);
    for &coeff in &poly[1..] {
        derivative = derivative * z + value;
        value = value * z + coeff;
    }
    (value, derivative)
}

/// Roots of the characteristic polynomial
/// `p(x) = x^o - c_1 x^(o-1) - ... - c_o`
/// by Aberth-Ehrlich simultaneous iteration from a perturbed circle of
/// guesses. `1` is a root whenever the coefficients sum to one; the
/// approximation nearest to 1 is snapped onto it.
pub fn characteristic_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    validate_coefficients(coeffs)?;
    let order = coeffs.len();

    // Monic descending coefficients [1, -c1, ..., -co].
    let mut poly = Vec::with_capacity(order + 1);
    poly.push(1.0);
    poly.extend(coeffs.iter().map(|c| -c));

    // Initial guesses on a perturbed circle of radius max(1, 2 max |c_p|^(1/p)).
    let radius = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.abs().powf(1.0 / (i + 1) as f64))
        .fold(0.5_f64, f64::max)
        * 2.0;
    let radius = radius.max(1.0);
    let mut roots: Vec<Complex64> = (0..order)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / order as f64 + 0.4;
            let r = radius * (1.0 + 0.05 * k as f64 / order as f64);
            Complex64::new(r * angle.cos(), r * angle.sin())
        })
        .collect();

    for _sweep in 0..MAX_SWEEPS {
        let mut max_move = 0.0_f64;
        for i in 0..order {
            let z = roots[i];
            let (value, derivative) = horner(&poly, z);
            if value.norm() == 0.0 {
                continue;
            }
            let newton = if derivative.norm() == 0.0 {
                Complex64::new(1e-12, 1e-12)
            } else {
                value / derivative
            };
            let repulsion: Complex64 = (0..order)
                .filter(|&j| j != i)
                .map(|j| (z - roots[j]).inv())
                .sum();
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let delta = if denom.norm() < 1e-300 {
                newton
            } else {
                newton / denom
            };
            roots[i] = z - delta;
            if !roots[i].re.is_finite() || !roots[i].im.is_finite() {
                return Err(Error::numerical(format!(
                    "root iteration diverged for coefficients {coeffs:?}"
                )));
            }
            max_move = max_move.max(delta.norm() / (1.0 + roots[i].norm()));
        }
        if max_move < 1e-15 {
            break;
        }
    }

    let residuals: Vec<f64> = roots.iter().map(|z| horner(&poly, *z).0.norm()).collect();
    if residuals.iter().any(|r| *r > ROOT_RESIDUAL_TOLERANCE) {
        return Err(Error::numerical(format!(
            "root iteration did not reach residual {ROOT_RESIDUAL_TOLERANCE:e} \
             after {MAX_SWEEPS} sweeps; residuals: {residuals:?}"
        )));
    }

    // sum(c) = 1 forces p(1) = 0 exactly; report that root exactly.
    let sum: f64 = coeffs.iter().sum();
    if (sum - 1.0).abs() <= 1e-12 {
        if let Some((idx, _)) = roots
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - Complex64::new(1.0, 0.0)).norm()))
            .filter(|(_, d)| *d <= 1e-4)
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            roots[idx] = Complex64::new(1.0, 0.0);
        }
    }
    for z in &mut roots {
        if z.im.abs() < 1e-10 {
            z.im = 0.0;
        }
    }
    roots.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    Ok(roots)
}

/// Evaluate the multistep root condition. `stable` means every root lies in
/// the closed unit disk (up to [`UNIT_CIRCLE_TOLERANCE`]); the warning flags
/// repeated roots on the circle, where classical multistep theory predicts
/// linear growth even though the plain criterion is met.
pub fn root_condition(coeffs: &[f64]) -> Result<StabilityReport> {
    let roots = characteristic_roots(coeffs)?;
    let max_abs_root = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let stable = max_abs_root <= 1.0 + UNIT_CIRCLE_TOLERANCE;

    let mut weakly_stable_warning = false;
    for i in 0..roots.len() {
        if (roots[i].norm() - 1.0).abs() > 1e-6 {
            continue;
        }
        for j in (i + 1)..roots.len() {
            if (roots[i] - roots[j]).norm() < 1e-5 {
                weakly_stable_warning = true;
            }
        }
    }

    Ok(StabilityReport {
        order: coeffs.len(),
        coefficients: coeffs.to_vec(),
        roots: roots
            .iter()
            .map(|z| RootEntry {
                re: z.re,
                im: z.im,
                abs: z.norm(),
            })
            .collect(),
        max_abs_root,
        stable,
        weakly_stable_warning,
    })
}

/// Express a length-3 stencil in the finite-difference basis
/// `[1,0,0]` (first order), `[2,-1,0]` (second), `[2,-2,1]` (third);
/// the weights also sum to one.
pub fn basis_decomposition(coeffs: &[f64]) -> Result<[f64; 3]> {
    if coeffs.len() != 3 {
        return Err(Error::Shape {
            op: "basis_decomposition",
            lhs: vec![coeffs.len()],
            rhs: vec![3],
        });
    }
    validate_coefficients(coeffs)?;
    let alpha3 = coeffs[2];
    let alpha2 = -coeffs[1] - 2.0 * coeffs[2];
    let alpha1 = 1.0 - alpha2 - alpha3;
    let alpha = [alpha1, alpha2, alpha3];
    let sum: f64 = alpha.iter().sum();
    debug_assert!((sum - 1.0).abs() < 1e-12, "basis weights sum to {sum}");
    Ok(alpha)
}

/// Rebuild the stencil from its basis weights.
pub fn basis_recompose(alpha: &[f64; 3]) -> [f64; 3] {
    [
        alpha[0] + 2.0 * alpha[1] + 2.0 * alpha[2],
        -alpha[1] - 2.0 * alpha[2],
        alpha[2],
    ]
}

/// Test functions for the consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    /// `y(t) = sin(2 pi t)` with `y''(t) = -4 pi^2 sin(2 pi t)`.
    Sin2Pi,
}

impl TestFunction {
    fn value(&self, t: f64) -> f64 {
        match self {
            TestFunction::Sin2Pi => (2.0 * std::f64::consts::PI * t).sin(),
        }
    }

    fn second_derivative(&self, t: f64) -> f64 {
        match self {
            TestFunction::Sin2Pi => {
                let w = 2.0 * std::f64::consts::PI;
                -w * w * (w * t).sin()
            }
        }
    }
}

/// Apply the stencil to a sampled test function and least-squares fit the
/// residual sequence `r_l = y_(l+1) - sum_p c_p y_(l-p+1)` against the
/// analytic second derivative. `inferred_order` is 2 iff `R^2 >= 0.99`.
pub fn consistency_check(
    coeffs: &[f64],
    function: TestFunction,
    start: f64,
    stop: f64,
    grid_step: f64,
) -> Result<ConsistencyReport> {
    validate_coefficients(coeffs)?;
    if grid_step <= 0.0 || stop <= start {
        return Err(Error::config(
            "grid",
            format!("need stop > start and step > 0, got {start}:{stop}:{grid_step}"),
        ));
    }
    let order = coeffs.len();
    let intervals = ((stop - start) / grid_step).round() as usize;
    let points = intervals + 1;
    if points < order + 2 {
        return Err(Error::config(
            "grid",
            format!("degenerate grid: {points} points cannot carry an order-{order} stencil"),
        ));
    }

    let times: Vec<f64> = (0..points).map(|l| start + l as f64 * grid_step).collect();
    let samples: Vec<f64> = times.iter().map(|t| function.value(*t)).collect();

    let mut residuals = Vec::with_capacity(points - order);
    let mut targets = Vec::with_capacity(points - order);
    for l in (order - 1)..(points - 1) {
        let mut r = samples[l + 1];
        for (p, c) in coeffs.iter().enumerate() {
            r -= c * samples[l - p];
        }
        residuals.push(r);
        targets.push(function.second_derivative(times[l]));
    }

    let dot: f64 = residuals.iter().zip(&targets).map(|(r, g)| r * g).sum();
    let gg: f64 = targets.iter().map(|g| g * g).sum();
    let beta = dot / gg;
    let mean_r: f64 = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let ss_res: f64 = residuals
        .iter()
        .zip(&targets)
        .map(|(r, g)| (r - beta * g) * (r - beta * g))
        .sum();
    let ss_tot: f64 = residuals.iter().map(|r| (r - mean_r) * (r - mean_r)).sum();
    let r2 = 1.0 - ss_res / ss_tot;

    Ok(ConsistencyReport {
        grid_step,
        beta,
        r2,
        inferred_order: if r2 >= 0.99 { Some(2) } else { None },
        residuals,
    })
}
