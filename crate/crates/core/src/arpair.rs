//! The Abresch-Rosenberg fundamental form, its shape operator and traceless
//! part, the Abresch-Rosenberg differential, and the identities they satisfy.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientParams;
use crate::defaults::{CMC_GATE, EPS_S};
use crate::error::{GeomError, Result};
use crate::surface::{
    gamma_matrix, mean_curvature_constancy, wirtinger, LocalGeometry, Neighbours, SurfacePatch,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArConstants {
    pub alpha: f64,
    /// Canonical branch in `[0, pi)`.
    pub theta: f64,
    pub h: f64,
    pub params: AmbientParams,
}

/// `alpha = (kappa - 4 tau^2) / (2 sqrt(H^2 + tau^2))`, `e^{2 i theta} = (H - i tau)/sqrt(H^2 + tau^2)`.
pub fn ar_constants(h: f64, params: AmbientParams) -> Result<ArConstants> {
    let r2 = h * h + params.tau * params.tau;
    if r2 <= 0.0 || !r2.is_finite() {
        return Err(GeomError::ArUndefined);
    }
    let alpha = params.bundle_defect() / (2.0 * r2.sqrt());
    let theta = (0.5 * Complex64::new(h, -params.tau).arg()).rem_euclid(PI);
    let theta = if theta >= PI { theta - PI } else { theta };
    Ok(ArConstants { alpha, theta, h, params })
}

impl ArConstants {
    /// The other branch `theta + pi`, for invariance checks.
    pub fn other_branch(&self) -> Self {
        Self { theta: self.theta + PI, ..*self }
    }
}

/// AR constants bound to a patch with the mean curvature they were built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArContext {
    pub consts: ArConstants,
    pub h_bar: f64,
    pub defect: f64,
}

impl ArContext {
    /// Constants from the patch's mean `H`, failing if `H` is not constant.
    pub fn gated(patch: &SurfacePatch) -> Result<Self> {
        let ctx = Self::ungated(patch)?;
        let gate = CMC_GATE * ctx.h_bar.abs().max(1.0);
        if !(ctx.defect <= gate) {
            return Err(GeomError::CmcGate { defect: ctx.defect, gate });
        }
        Ok(ctx)
    }

    /// Constants from the patch's mean `H` without the constancy gate.
    pub fn ungated(patch: &SurfacePatch) -> Result<Self> {
        let (h_bar, defect) = mean_curvature_constancy(patch)?;
        let consts = ar_constants(h_bar, patch.chart.params)?;
        Ok(Self { consts, h_bar, defect })
    }

    pub fn from_h(h: f64, params: AmbientParams) -> Result<Self> {
        Ok(Self { consts: ar_constants(h, params)?, h_bar: h, defect: 0.0 })
    }

    pub fn with_consts(&self, consts: ArConstants) -> Self {
        Self { consts, ..*self }
    }
}

/// Per-sample AR data.
#[derive(Debug, Clone, Copy)]
pub struct ArGeometry {
    pub consts: ArConstants,
    pub local: LocalGeometry,
    pub t_theta: Vector2<f64>,
    /// `II_AR` as a bilinear form in `(f_u, f_v)`.
    pub second_ar: Matrix2<f64>,
    /// `S_AR = I^{-1} II_AR`.
    pub shape_ar: Matrix2<f64>,
    /// Traceless part `S = S_AR - H id`.
    pub traceless: Matrix2<f64>,
    pub norm_s: f64,
    pub q_ar: f64,
}

impl ArGeometry {
    /// `Q_AR = II_AR(d_z, d_z)`; meaningful in a conformal parameter.
    pub fn q_ar_complex(&self) -> Complex64 {
        let s = &self.second_ar;
        Complex64::new(0.25 * (s[(0, 0)] - s[(1, 1)]), -0.5 * s[(0, 1)])
    }

    /// `2 (H + i tau) Q_AR`, the unscaled differential.
    pub fn q_ar_unscaled(&self) -> Complex64 {
        Complex64::new(2.0 * self.consts.h, 2.0 * self.consts.params.tau) * self.q_ar_complex()
    }

    /// `q_AR` from the differential, `|Q_AR|^2 / lambda^2`.
    pub fn q_ar_from_differential(&self) -> f64 {
        let lam = self.local.conformal_lambda();
        self.q_ar_complex().norm_sqr() / (lam * lam)
    }
}

/// `T_theta = cos(theta) T - sin(theta) J T`, the rotation making
/// `<T_theta, d_z> = e^{i theta} <T, d_z>` under the ambient orientation.
pub fn rotated_t(local: &LocalGeometry, theta: f64) -> Vector2<f64> {
    local.t * theta.cos() - local.jmat * local.t * theta.sin()
}

pub fn ar_from_local(local: LocalGeometry, consts: ArConstants) -> ArGeometry {
    let alpha = consts.alpha;
    let t_theta = rotated_t(&local, consts.theta);
    let flat = local.first * t_theta;
    let second_ar = local.second - flat * flat.transpose() * alpha
        + local.first * (0.5 * alpha * local.norm_t_sq());
    let shape_ar = local.first_inv * second_ar;
    let traceless = shape_ar - Matrix2::identity() * local.h;
    let norm_sq = local.operator_norm_sq(&traceless).max(0.0);
    ArGeometry {
        consts,
        local,
        t_theta,
        second_ar,
        shape_ar,
        traceless,
        norm_s: norm_sq.sqrt(),
        q_ar: 0.5 * norm_sq,
    }
}

pub fn ar_forms_at(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<ArGeometry> {
    Ok(ar_from_local(patch.local_geometry(u, v)?, ctx.consts))
}

/// The `tau = 0` operator `2H A - kappa <., T> T + (kappa/2)|T|^2 - 2H^2`.
pub fn product_space_operator(patch: &SurfacePatch, u: f64, v: f64) -> Result<Matrix2<f64>> {
    let p = patch.chart.params;
    if p.tau != 0.0 {
        return Err(GeomError::NotProductSpace(p.tau));
    }
    let g = patch.local_geometry(u, v)?;
    Ok(product_operator_from(&g, p.kappa))
}

pub(crate) fn product_operator_from(g: &LocalGeometry, kappa: f64) -> Matrix2<f64> {
    let h = g.h;
    let flat = g.first * g.t;
    g.shape * (2.0 * h) - g.t * flat.transpose() * kappa
        + Matrix2::identity() * (0.5 * kappa * g.norm_t_sq() - 2.0 * h * h)
}

/// Codazzi residual of an operator field `B`:
/// `sup |nabla_u (B d_v) - nabla_v (B d_u)|_I`.
pub(crate) fn operator_codazzi(
    patch: &SurfacePatch,
    u: f64,
    v: f64,
    center: &LocalGeometry,
    field: impl Fn(f64, f64) -> Result<Matrix2<f64>>,
) -> Result<f64> {
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let b = field(u, v)?;
    let nb = Neighbours::eval(patch, u, v, &field)?;
    let gamma = patch.intrinsic_christoffels(u, v)?;
    let (gu, gv) = (gamma_matrix(&gamma, 0), gamma_matrix(&gamma, 1));
    let db_u = nb.du(hu);
    let db_v = nb.dv(hv);
    let r = (db_u.column(1) + gu * b.column(1)) - (db_v.column(0) + gv * b.column(0));
    Ok(center.norm(&r))
}

/// Codazzi residual of `(I, II_AR)`.
pub fn ar_codazzi_residual(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<f64> {
    let center = patch.local_geometry(u, v)?;
    operator_codazzi(patch, u, v, &center, |a, b| Ok(ar_forms_at(patch, ctx, a, b)?.shape_ar))
}

/// Codazzi residual of the traceless operator `S = S_AR - H(p) id`.
pub fn traceless_codazzi_residual(
    patch: &SurfacePatch,
    ctx: &ArContext,
    u: f64,
    v: f64,
) -> Result<f64> {
    let center = patch.local_geometry(u, v)?;
    operator_codazzi(patch, u, v, &center, |a, b| Ok(ar_forms_at(patch, ctx, a, b)?.traceless))
}

/// `Q_AR` at a sample of a conformal patch.
pub fn hopf_differential(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<Complex64> {
    patch.require_conformal(u, v)?;
    Ok(ar_forms_at(patch, ctx, u, v)?.q_ar_complex())
}

/// `|d_zbar Q_AR|` by central differences.
pub fn holomorphicity_residual(patch: &SurfacePatch, ctx: &ArContext, u: f64, v: f64) -> Result<f64> {
    patch.require_conformal(u, v)?;
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let nb = Neighbours::eval(patch, u, v, |a, b| Ok(ar_forms_at(patch, ctx, a, b)?.q_ar_complex()))?;
    Ok(wirtinger(&nb, hu, hv).1.norm())
}

/// Residuals of the pointwise algebraic identities relating `(I, II)` and `(I, II_AR)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairResiduals {
    /// `K_e(I, II_AR) = K_e + alpha <S T_theta, T_theta> + alpha^2 |T|^4 / 4`.
    pub extrinsic: f64,
    /// `|A|^2 = |S|^2 + 2 alpha <S T_theta, T_theta> + alpha^2 |T|^4 / 2 + 2 H^2`.
    pub traceless: f64,
    /// `|T|^4/2 - <S T_theta,T_theta>^2/|S|^2 = <S T_theta, J T_theta>^2/|S|^2`;
    /// `None` where `|S| <= EPS_S`.
    pub part11: Option<f64>,
    /// `<S T_theta, T_theta> = -<S J T_theta, J T_theta>`.
    pub antisymmetry: f64,
}

impl PairResiduals {
    pub fn max(&self) -> f64 {
        self.extrinsic.max(self.traceless).max(self.antisymmetry).max(self.part11.unwrap_or(0.0))
    }

    pub fn sup(&self, o: &Self) -> Self {
        let part11 = match (self.part11, o.part11) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        Self {
            extrinsic: self.extrinsic.max(o.extrinsic),
            traceless: self.traceless.max(o.traceless),
            part11,
            antisymmetry: self.antisymmetry.max(o.antisymmetry),
        }
    }
}

pub fn pair_residuals_from(ar: &ArGeometry) -> PairResiduals {
    let g = &ar.local;
    let alpha = ar.consts.alpha;
    let s = &ar.traceless;
    let tt = &ar.t_theta;
    let jt = g.jmat * tt;
    let t2 = g.norm_t_sq();
    let t4 = t2 * t2;
    let stt = g.inner(&(s * tt), tt);
    let stjt = g.inner(&(s * tt), &jt);
    let sjj = g.inner(&(s * jt), &jt);
    let norm_s2 = ar.norm_s * ar.norm_s;
    let a2 = g.operator_norm_sq(&g.shape);
    let extrinsic =
        (ar.shape_ar.determinant() - (g.ke + alpha * stt + 0.25 * alpha * alpha * t4)).abs();
    let traceless =
        (a2 - (norm_s2 + 2.0 * alpha * stt + 0.5 * alpha * alpha * t4 + 2.0 * g.h * g.h)).abs();
    let part11 = (ar.norm_s > EPS_S)
        .then(|| (0.5 * t4 - stt * stt / norm_s2 - stjt * stjt / norm_s2).abs());
    PairResiduals { extrinsic, traceless, part11, antisymmetry: (stt + sjj).abs() }
}

pub fn pair_identity_residuals(
    patch: &SurfacePatch,
    ctx: &ArContext,
    u: f64,
    v: f64,
) -> Result<PairResiduals> {
    Ok(pair_residuals_from(&ar_forms_at(patch, ctx, u, v)?))
}
