//! Intrinsic differential operators on a patch and the Simons-type identity
//! for the traceless AR operator, with the estimates derived from it.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientParams;
use crate::arpair::{ar_forms_at, ar_from_local, ArContext};
use crate::defaults::{EPS_S, GRAD_IDENTITY_MIN_GRAD, GRAD_IDENTITY_MIN_S};
use crate::error::{GeomError, Result};
use crate::surface::{gamma_matrix, SurfacePatch};

/// Values of a scalar on the patch grid, row-major in `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: (usize, usize),
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: (usize, usize)) -> Self {
        Self { grid, values: vec![0.0; grid.0 * grid.1] }
    }

    /// Sample `f` at every node of `patch`.
    pub fn sample(patch: &SurfacePatch, f: impl Fn(f64, f64) -> Result<f64>) -> Result<Self> {
        let (nu, nv) = patch.grid;
        let mut values = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let (u, v) = patch.node(i, j);
                values.push(f(u, v)?);
            }
        }
        Ok(Self { grid: patch.grid, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.1 + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.values[i * self.grid.1 + j] = x;
    }
}

/// Nine-point stencil values `f[a][b]` at offsets `(a - 1, b - 1)` in grid steps.
type Stencil = [[f64; 3]; 3];

fn stencil_of(f: impl Fn(f64, f64) -> Result<f64>, u: f64, v: f64, hu: f64, hv: f64) -> Result<Stencil> {
    let mut s = [[0.0; 3]; 3];
    for (a, row) in s.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = f(u + (a as f64 - 1.0) * hu, v + (b as f64 - 1.0) * hv)?;
        }
    }
    Ok(s)
}

/// `Delta f = g^{ij} (d_ij f - Gamma^k_ij d_k f)` from a nine-point stencil.
fn laplacian_from(patch: &SurfacePatch, u: f64, v: f64, s: &Stencil) -> Result<f64> {
    let (hu, hv) = patch.steps();
    let inv = patch
        .first_form(u, v)?
        .try_inverse()
        .ok_or(GeomError::DegenerateImmersion { u, v })?;
    let gamma = patch.intrinsic_christoffels(u, v)?;
    let grad = Vector2::new((s[2][1] - s[0][1]) / (2.0 * hu), (s[1][2] - s[1][0]) / (2.0 * hv));
    let fuu = (s[2][1] - 2.0 * s[1][1] + s[0][1]) / (hu * hu);
    let fvv = (s[1][2] - 2.0 * s[1][1] + s[1][0]) / (hv * hv);
    let fuv = (s[2][2] - s[2][0] - s[0][2] + s[0][0]) / (4.0 * hu * hv);
    let hess = Matrix2::new(fuu, fuv, fuv, fvv);
    let mut lap = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let corr = gamma[0][i][j] * grad[0] + gamma[1][i][j] * grad[1];
            lap += inv[(i, j)] * (hess[(i, j)] - corr);
        }
    }
    Ok(lap)
}

/// Laplace-Beltrami of `f` at `(u, v)`, using the grid-step stencil.
pub fn laplace_beltrami_fn(
    patch: &SurfacePatch,
    f: impl Fn(f64, f64) -> Result<f64>,
    u: f64,
    v: f64,
) -> Result<f64> {
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let s = stencil_of(f, u, v, hu, hv)?;
    laplacian_from(patch, u, v, &s)
}

/// Laplace-Beltrami of a sampled field at node `(i, j)`.
pub fn laplace_beltrami(patch: &SurfacePatch, field: &ScalarField, i: usize, j: usize) -> Result<f64> {
    let (u, v) = patch.node(i, j);
    let (nu, nv) = patch.grid;
    if i < 2 || j < 2 || i + 2 >= nu || j + 2 >= nv {
        return Err(GeomError::InsufficientStencil { u, v });
    }
    let mut s = [[0.0; 3]; 3];
    for (a, row) in s.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = field.get(i + a - 1, j + b - 1);
        }
    }
    laplacian_from(patch, u, v, &s)
}

/// `|grad f|^2_I` from central differences.
pub fn gradient_norm_sq(
    patch: &SurfacePatch,
    f: impl Fn(f64, f64) -> Result<f64>,
    u: f64,
    v: f64,
) -> Result<f64> {
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let inv = patch.first_form(u, v)?.try_inverse().ok_or(GeomError::DegenerateImmersion { u, v })?;
    let d = Vector2::new((f(u + hu, v)? - f(u - hu, v)?) / (2.0 * hu), (f(u, v + hv)? - f(u, v - hv)?) / (2.0 * hv));
    Ok(d.dot(&(inv * d)))
}

/// Covariant derivative of the traceless AR operator.
#[derive(Debug, Clone, Copy)]
pub struct CovariantGradient {
    /// `(nabla_{d_u} S, nabla_{d_v} S)` as mixed tensors.
    pub components: [Matrix2<f64>; 2],
    /// `|nabla S|^2`.
    pub norm_sq: f64,
}

pub fn covariant_gradient_s(
    patch: &SurfacePatch,
    ctx: &ArContext,
    u: f64,
    v: f64,
) -> Result<CovariantGradient> {
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let center = patch.local_geometry(u, v)?;
    let s = ar_from_local(center, ctx.consts).traceless;
    let s_at = |a: f64, b: f64| -> Result<Matrix2<f64>> { Ok(ar_forms_at(patch, ctx, a, b)?.traceless) };
    let ds = [(s_at(u + hu, v)? - s_at(u - hu, v)?) / (2.0 * hu), (s_at(u, v + hv)? - s_at(u, v - hv)?) / (2.0 * hv)];
    let gamma = patch.intrinsic_christoffels(u, v)?;
    let mut comps = [Matrix2::zeros(); 2];
    for k in 0..2 {
        let g = gamma_matrix(&gamma, k);
        comps[k] = ds[k] + g * s - s * g;
    }
    let inv = center.first_inv;
    let mut norm_sq = 0.0;
    for k in 0..2 {
        for l in 0..2 {
            let adj = center.first_inv * comps[l].transpose() * center.first;
            norm_sq += inv[(k, l)] * (comps[k] * adj).trace();
        }
    }
    Ok(CovariantGradient { components: comps, norm_sq })
}

/// The terms of `1/2 Delta |S|^2 = |nabla S|^2 + 2 K |S|^2` and the
/// companion identities at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimonsTerms {
    pub half_laplacian: f64,
    pub grad_sq: f64,
    pub curvature_term: f64,
    /// `|1/2 Delta|S|^2 - |nabla S|^2 - 2K|S|^2|`.
    pub residual: f64,
    /// `| |S| Delta|S| - 2K|S|^2 - |nabla |S||^2 |` where `|S| > EPS_S`.
    pub second_form: Option<f64>,
    /// `| |nabla S|^2 - 2 |nabla |S||^2 | / |nabla S|^2` where `|S| > 0.1` and
    /// `|nabla S|^2` is above rounding.
    pub gradient_identity: Option<f64>,
    pub norm_s: f64,
}

pub fn simons_terms(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<SimonsTerms> {
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let norm_at = |a: f64, b: f64| -> Result<f64> { Ok(ar_forms_at(patch, ctx, a, b)?.norm_s) };
    let s = stencil_of(norm_at, u, v, hu, hv)?;
    let mut sq = s;
    for row in sq.iter_mut() {
        for x in row.iter_mut() {
            *x *= *x;
        }
    }
    let norm_s = s[1][1];
    let half_laplacian = 0.5 * laplacian_from(patch, u, v, &sq)?;
    let grad = covariant_gradient_s(patch, ctx, u, v)?;
    let k = patch.gaussian_curvature(u, v)?;
    let curvature_term = 2.0 * k * norm_s * norm_s;
    let residual = (half_laplacian - grad.norm_sq - curvature_term).abs();
    let inv = patch.first_form(u, v)?.try_inverse().ok_or(GeomError::DegenerateImmersion { u, v })?;
    let d = Vector2::new((s[2][1] - s[0][1]) / (2.0 * hu), (s[1][2] - s[1][0]) / (2.0 * hv));
    let grad_norm_sq = d.dot(&(inv * d));
    let second_form = if norm_s > EPS_S {
        let lap = laplacian_from(patch, u, v, &s)?;
        Some((norm_s * lap - curvature_term - grad_norm_sq).abs())
    } else {
        None
    };
    let gradient_identity = (norm_s > GRAD_IDENTITY_MIN_S && grad.norm_sq > GRAD_IDENTITY_MIN_GRAD)
        .then(|| (grad.norm_sq - 2.0 * grad_norm_sq).abs() / grad.norm_sq);
    Ok(SimonsTerms {
        half_laplacian,
        grad_sq: grad.norm_sq,
        curvature_term,
        residual,
        second_form,
        gradient_identity,
        norm_s,
    })
}

pub fn simons_residual(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<f64> {
    Ok(simons_terms(patch, ctx, u, v)?.residual)
}

/// Constants `(a, b)` of `-Delta u <= a u^3 + b u` for `u = |S|`.
pub fn delta_u_constants(h: f64, params: AmbientParams, alpha: f64) -> (f64, f64) {
    let d = params.bundle_defect();
    let s2 = std::f64::consts::SQRT_2;
    let a = 1.0 + alpha.abs() / s2;
    let b = -2.0 * d.min(0.0) - 2.0 * params.tau * params.tau - 2.0 * h * h
        + 0.5 * alpha * alpha
        + alpha.abs() / s2;
    (a, b)
}

/// Signed margin `a u^3 + b u + Delta u`, nonnegative when the inequality holds.
pub fn delta_u_inequality(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<f64> {
    let norm_at = |a: f64, b: f64| -> Result<f64> { Ok(ar_forms_at(patch, ctx, a, b)?.norm_s) };
    let lap = laplace_beltrami_fn(patch, norm_at, u, v)?;
    let x = norm_at(u, v)?;
    let (a, b) = delta_u_constants(ctx.consts.h, ctx.consts.params, ctx.consts.alpha);
    Ok(a * x * x * x + b * x + lap)
}

/// Pointwise lower bound for `K` in terms of `|S|`:
/// `(H^2+tau^2) - alpha^2/4 - |S|^2/2 - |alpha||S|/sqrt 2`, plus
/// `(kappa - 4tau^2) + (H^2 + tau^2)` more when `kappa - 4 tau^2 < 0`.
pub fn curvature_lower_bound(h: f64, params: AmbientParams, norm_s: f64) -> Result<f64> {
    let r2 = h * h + params.tau * params.tau;
    if r2 <= 0.0 {
        return Err(GeomError::ArUndefined);
    }
    let d = params.bundle_defect();
    let alpha = d / (2.0 * r2.sqrt());
    let base = r2 - 0.25 * alpha * alpha - 0.5 * norm_s * norm_s
        - alpha.abs() * norm_s / std::f64::consts::SQRT_2;
    Ok(if d < 0.0 { base + d + r2 } else { base })
}

/// `kappa - 4 tau^2 > 0` and `H^2 + tau^2 > (kappa - 4 tau^2)/4`.
pub fn compactness_criterion(h: f64, params: AmbientParams) -> bool {
    let d = params.bundle_defect();
    d > 0.0 && h * h + params.tau * params.tau > 0.25 * d
}
