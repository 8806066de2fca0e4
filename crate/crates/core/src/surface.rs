//! Extrinsic and intrinsic geometry of parametrized surface patches in
//! E(kappa, tau), and residuals of the fundamental equations.
//!
//! Tangent vectors are stored by their components in the coordinate frame
//! `(f_u, f_v)`; 2x2 operators act on those components. Intrinsic
//! quantities (Christoffels of `I`, the Gaussian curvature) are computed
//! from the first fundamental form alone by central differences with the
//! grid step, so the Gauss equation is a genuine check.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientChart;
use crate::defaults::{CONFORMAL_TOL, NOISE_FLOOR, SURFACE_FD_STEP};
use crate::error::{GeomError, Result};

/// Position and derivatives up to second order of an immersion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub p: Vector3<f64>,
    pub fu: Vector3<f64>,
    pub fv: Vector3<f64>,
    pub fuu: Vector3<f64>,
    pub fuv: Vector3<f64>,
    pub fvv: Vector3<f64>,
}

/// A map from the parameter rectangle into chart coordinates.
pub trait Immersion: Send + Sync {
    fn position(&self, u: f64, v: f64) -> Vector3<f64>;

    /// Closed-form jet, when available.
    fn jet(&self, _u: f64, _v: f64) -> Option<Jet> {
        None
    }

    fn as_any(&self) -> Option<&dyn std::any::Any> {
        None
    }
}

/// Second-order jet by central differences of `position`.
pub fn fd_jet(imm: &dyn Immersion, u: f64, v: f64, h: f64) -> Jet {
    let f = |a: f64, b: f64| imm.position(a, b);
    let p = f(u, v);
    let (pu, mu) = (f(u + h, v), f(u - h, v));
    let (pv, mv) = (f(u, v + h), f(u, v - h));
    Jet {
        p,
        fu: (pu - mu) / (2.0 * h),
        fv: (pv - mv) / (2.0 * h),
        fuu: (pu - 2.0 * p + mu) / (h * h),
        fvv: (pv - 2.0 * p + mv) / (h * h),
        fuv: (f(u + h, v + h) - f(u + h, v - h) - f(u - h, v + h) + f(u - h, v - h))
            / (4.0 * h * h),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Derivatives {
    Analytic,
    FiniteDifference { step: f64 },
}

/// Which unit normal is used. `Positive` makes `(f_u, f_v, N)` positively
/// oriented in the ambient orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Rect {
    pub fn new(u0: f64, u1: f64, v0: f64, v1: f64) -> Self {
        Self { u0, u1, v0, v1 }
    }
}

/// A parametrized immersion sampled on a structured grid.
#[derive(Clone)]
pub struct SurfacePatch {
    pub name: String,
    pub chart: AmbientChart,
    pub immersion: Arc<dyn Immersion>,
    pub rect: Rect,
    /// Grid nodes `(n_u, n_v)`, including the boundary.
    pub grid: (usize, usize),
    pub is_conformal: bool,
    pub target_h: Option<f64>,
    pub orientation: Orientation,
    pub derivatives: Derivatives,
}

impl fmt::Debug for SurfacePatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfacePatch")
            .field("name", &self.name)
            .field("chart", &self.chart)
            .field("rect", &self.rect)
            .field("grid", &self.grid)
            .field("is_conformal", &self.is_conformal)
            .field("target_h", &self.target_h)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl SurfacePatch {
    pub fn new(
        name: impl Into<String>,
        chart: AmbientChart,
        immersion: Arc<dyn Immersion>,
        rect: Rect,
        grid: usize,
    ) -> Self {
        Self {
            name: name.into(),
            chart,
            immersion,
            rect,
            grid: (grid, grid),
            is_conformal: false,
            target_h: None,
            orientation: Orientation::Positive,
            derivatives: Derivatives::Analytic,
        }
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid = (n, n);
        self
    }

    pub fn with_conformal(mut self, conformal: bool) -> Self {
        self.is_conformal = conformal;
        self
    }

    pub fn with_target_h(mut self, h: f64) -> Self {
        self.target_h = Some(h);
        self
    }

    pub fn with_derivatives(mut self, d: Derivatives) -> Self {
        self.derivatives = d;
        self
    }

    /// The same surface with the opposite unit normal.
    pub fn flipped(&self) -> Self {
        let mut p = self.clone();
        p.orientation = self.orientation.flipped();
        p
    }

    /// Grid steps `(h_u, h_v)`.
    pub fn steps(&self) -> (f64, f64) {
        let r = &self.rect;
        (
            (r.u1 - r.u0) / (self.grid.0 - 1) as f64,
            (r.v1 - r.v0) / (self.grid.1 - 1) as f64,
        )
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let (hu, hv) = self.steps();
        (self.rect.u0 + i as f64 * hu, self.rect.v0 + j as f64 * hv)
    }

    /// Grid indices at distance at least `ring` from the boundary.
    pub fn interior_nodes(&self, ring: usize) -> Vec<(usize, usize)> {
        let (nu, nv) = self.grid;
        let mut out = Vec::new();
        if nu <= 2 * ring || nv <= 2 * ring {
            return out;
        }
        for i in ring..nu - ring {
            for j in ring..nv - ring {
                out.push((i, j));
            }
        }
        out
    }

    pub fn jet(&self, u: f64, v: f64) -> Jet {
        match self.derivatives {
            Derivatives::Analytic => self
                .immersion
                .jet(u, v)
                .unwrap_or_else(|| fd_jet(self.immersion.as_ref(), u, v, SURFACE_FD_STEP)),
            Derivatives::FiniteDifference { step } => fd_jet(self.immersion.as_ref(), u, v, step),
        }
    }

    /// Errors unless the two-step stencil around `(u, v)` lies in the rectangle.
    pub fn check_stencil(&self, u: f64, v: f64) -> Result<()> {
        let (hu, hv) = self.steps();
        let (hu, hv) = (2.0 * hu, 2.0 * hv);
        let r = &self.rect;
        let slack_u = 1e-9 * hu;
        let slack_v = 1e-9 * hv;
        if u - hu < r.u0 - slack_u
            || u + hu > r.u1 + slack_u
            || v - hv < r.v0 - slack_v
            || v + hv > r.v1 + slack_v
        {
            return Err(GeomError::InsufficientStencil { u, v });
        }
        Ok(())
    }

    /// First fundamental form at `(u, v)`.
    pub fn first_form(&self, u: f64, v: f64) -> Result<Matrix2<f64>> {
        let jet = self.jet(u, v);
        self.chart.check_domain(&jet.p)?;
        Ok(first_form_from(&self.chart, &jet))
    }

    /// Pointwise extrinsic geometry (everything except the intrinsic `K`).
    pub fn local_geometry(&self, u: f64, v: f64) -> Result<LocalGeometry> {
        let jet = self.jet(u, v);
        let chart = &self.chart;
        chart.check_domain(&jet.p)?;
        let p = jet.p;
        let g = chart.metric_at(&p);
        let first = first_form_from(chart, &jet);
        let det = first.determinant();
        if !(det > 1e-14 * first[(0, 0)] * first[(1, 1)]) || !det.is_finite() {
            return Err(GeomError::DegenerateImmersion { u, v });
        }
        let first_inv = first.try_inverse().ok_or(GeomError::DegenerateImmersion { u, v })?;
        let sign = self.orientation.sign();
        let cross = chart.cross(&p, &jet.fu, &jet.fv);
        let normal = cross / chart.norm(&p, &cross) * sign;
        let gamma = chart.christoffels_at(&p)?;
        let gn = g * normal;
        let second_entry = |a: &Vector3<f64>, b: &Vector3<f64>, ab: &Vector3<f64>| {
            (ab + gamma.contract(a, b)).dot(&gn)
        };
        let e = second_entry(&jet.fu, &jet.fu, &jet.fuu);
        let f = second_entry(&jet.fu, &jet.fv, &jet.fuv);
        let gg = second_entry(&jet.fv, &jet.fv, &jet.fvv);
        let second = Matrix2::new(e, f, f, gg);
        let shape = first_inv * second;
        let xi = chart.killing_at(&p);
        let nu = gn.dot(&xi);
        let gxi = g * xi;
        let t = first_inv * Vector2::new(jet.fu.dot(&gxi), jet.fv.dot(&gxi));
        let rot = Matrix2::new(0.0, -1.0, 1.0, 0.0) * (det.sqrt() * sign);
        let jmat = first_inv * rot;
        Ok(LocalGeometry {
            u,
            v,
            jet,
            first,
            first_inv,
            second,
            shape,
            normal,
            nu,
            t,
            jmat,
            h: 0.5 * shape.trace(),
            ke: shape.determinant(),
        })
    }

    /// Christoffel symbols of `I` at `(u, v)`: `gamma[k][i][j]`, index 0 = u, 1 = v.
    pub fn intrinsic_christoffels(&self, u: f64, v: f64) -> Result<[[[f64; 2]; 2]; 2]> {
        let (hu, hv) = self.steps();
        let i0 = self.first_form(u, v)?;
        let nb = Neighbours::eval(self, u, v, |a, b| self.first_form(a, b))?;
        Ok(christoffels_from(&i0, &[nb.du(hu), nb.dv(hv)]))
    }

    /// Gaussian curvature of `I` by the Brioschi formula, derivatives of
    /// `E, F, G` by fourth-order central differences with the grid step.
    pub fn gaussian_curvature(&self, u: f64, v: f64) -> Result<f64> {
        let (hu, hv) = self.steps();
        let i = |a: f64, b: f64| self.first_form(a, b);
        let c = i(u, v)?;
        let (e, f, g) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
        let nb = Neighbours::eval(self, u, v, i)?;
        let d_u = nb.du(hu);
        let d_v = nb.dv(hv);
        let (eu, fu, gu) = (d_u[(0, 0)], d_u[(0, 1)], d_u[(1, 1)]);
        let (ev, fv, gv) = (d_v[(0, 0)], d_v[(0, 1)], d_v[(1, 1)]);
        let evv = (-nb.vm2[(0, 0)] + 16.0 * nb.vm[(0, 0)] - 30.0 * e + 16.0 * nb.vp[(0, 0)] - nb.vp2[(0, 0)])
            / (12.0 * hv * hv);
        let guu = (-nb.um2[(1, 1)] + 16.0 * nb.um[(1, 1)] - 30.0 * g + 16.0 * nb.up[(1, 1)] - nb.up2[(1, 1)])
            / (12.0 * hu * hu);
        let fv_at = |a: f64| -> Result<f64> { Ok(Neighbours::eval(self, a, v, i)?.dv(hv)[(0, 1)]) };
        let fuv = central4(fv_at(u - 2.0 * hu)?, fv_at(u - hu)?, fv_at(u + hu)?, fv_at(u + 2.0 * hu)?, hu);
        let m1 = nalgebra::Matrix3::new(
            -0.5 * evv + fuv - 0.5 * guu,
            0.5 * eu,
            fu - 0.5 * ev,
            fv - 0.5 * gu,
            e,
            f,
            0.5 * gv,
            f,
            g,
        );
        let m2 = nalgebra::Matrix3::new(0.0, 0.5 * ev, 0.5 * gu, 0.5 * ev, e, f, 0.5 * gu, f, g);
        let det = e * g - f * f;
        Ok((m1.determinant() - m2.determinant()) / (det * det))
    }

    /// Full per-sample geometry, including the intrinsic Gaussian curvature.
    pub fn geometry_at(&self, u: f64, v: f64) -> Result<PointGeometry> {
        let local = self.local_geometry(u, v)?;
        let k = self.gaussian_curvature(u, v)?;
        Ok(PointGeometry { local, k })
    }

    /// Conformality defect `|E - G|/E + |F|/E` at `(u, v)`.
    pub fn conformal_defect(&self, u: f64, v: f64) -> Result<f64> {
        let i = self.first_form(u, v)?;
        Ok(((i[(0, 0)] - i[(1, 1)]).abs() + i[(0, 1)].abs()) / i[(0, 0)])
    }

    pub fn require_conformal(&self, u: f64, v: f64) -> Result<()> {
        if !self.is_conformal {
            return Err(GeomError::NotConformal(format!("patch '{}' not flagged conformal", self.name)));
        }
        let d = self.conformal_defect(u, v)?;
        if d >= CONFORMAL_TOL {
            return Err(GeomError::NotConformal(format!("defect {d:e} at ({u}, {v})")));
        }
        Ok(())
    }

    /// Evaluate `f` at every node with ring distance `ring`, in parallel,
    /// returning results in row-major node order.
    pub fn sweep<T, F>(&self, ring: usize, f: F) -> Result<Vec<((usize, usize), T)>>
    where
        T: Send,
        F: Fn(f64, f64) -> Result<T> + Sync,
    {
        self.interior_nodes(ring)
            .into_par_iter()
            .map(|(i, j)| {
                let (u, v) = self.node(i, j);
                f(u, v).map(|r| ((i, j), r))
            })
            .collect()
    }
}

pub(crate) fn first_form_from(chart: &AmbientChart, jet: &Jet) -> Matrix2<f64> {
    let g = chart.metric_at(&jet.p);
    let (gu, gv) = (g * jet.fu, g * jet.fv);
    let e = jet.fu.dot(&gu);
    let f = jet.fu.dot(&gv);
    let gg = jet.fv.dot(&gv);
    Matrix2::new(e, f, f, gg)
}

/// Christoffels of a 2-d metric from its value and coordinate derivatives.
pub(crate) fn christoffels_from(i0: &Matrix2<f64>, d: &[Matrix2<f64>; 2]) -> [[[f64; 2]; 2]; 2] {
    let inv = i0.try_inverse().expect("first form is positive definite");
    let mut gamma = [[[0.0; 2]; 2]; 2];
    for (k, gk) in gamma.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    s += inv[(k, l)] * (d[i][(j, l)] + d[j][(i, l)] - d[l][(i, j)]);
                }
                gk[i][j] = 0.5 * s;
            }
        }
    }
    gamma
}

/// `Gamma^k_{i m}` as a matrix indexed `(k, m)` for fixed direction `i`.
pub(crate) fn gamma_matrix(gamma: &[[[f64; 2]; 2]; 2], i: usize) -> Matrix2<f64> {
    Matrix2::new(gamma[0][i][0], gamma[0][i][1], gamma[1][i][0], gamma[1][i][1])
}

/// Pointwise extrinsic data at one sample.
#[derive(Debug, Clone, Copy)]
pub struct LocalGeometry {
    pub u: f64,
    pub v: f64,
    pub jet: Jet,
    /// First fundamental form `I`.
    pub first: Matrix2<f64>,
    pub first_inv: Matrix2<f64>,
    /// Second fundamental form `II(X, Y) = <AX, Y>`.
    pub second: Matrix2<f64>,
    /// Shape operator `A = I^{-1} II` (mixed components).
    pub shape: Matrix2<f64>,
    /// Unit normal in chart components.
    pub normal: Vector3<f64>,
    /// Angle function `<N, xi>`.
    pub nu: f64,
    /// Components of `T = xi - nu N` in `(f_u, f_v)`.
    pub t: Vector2<f64>,
    /// Rotation `J X = N ^ X`.
    pub jmat: Matrix2<f64>,
    pub h: f64,
    pub ke: f64,
}

impl LocalGeometry {
    pub fn inner(&self, x: &Vector2<f64>, y: &Vector2<f64>) -> f64 {
        (self.first * y).dot(x)
    }

    pub fn norm(&self, x: &Vector2<f64>) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn norm_t_sq(&self) -> f64 {
        self.inner(&self.t, &self.t)
    }

    /// `|B|^2 = tr(B B)` for an I-self-adjoint operator, in general `tr(B B*)`.
    pub fn operator_norm_sq(&self, b: &Matrix2<f64>) -> f64 {
        let adj = self.first_inv * b.transpose() * self.first;
        (b * adj).trace()
    }

    pub fn area_element(&self) -> f64 {
        self.first.determinant().sqrt()
    }

    /// Conformal factor `lambda` with `I = 2 lambda |dz|^2`.
    pub fn conformal_lambda(&self) -> f64 {
        0.25 * (self.first[(0, 0)] + self.first[(1, 1)])
    }

    /// Hopf coefficient `Q = II(d_z, d_z)`.
    pub fn hopf_q(&self) -> Complex64 {
        let s = &self.second;
        Complex64::new(0.25 * (s[(0, 0)] - s[(1, 1)]), -0.5 * s[(0, 1)])
    }

    /// `I(d_z, d_z)`, zero on conformal patches.
    pub fn first_zz(&self) -> Complex64 {
        let s = &self.first;
        Complex64::new(0.25 * (s[(0, 0)] - s[(1, 1)]), -0.5 * s[(0, 1)])
    }

    /// `t = <T, d_z>`.
    pub fn t_z(&self) -> Complex64 {
        let it = self.first * self.t;
        Complex64::new(0.5 * it[0], -0.5 * it[1])
    }

    /// Max deviation of the pointwise invariants: `|T|^2 + nu^2 = 1`,
    /// self-adjointness of `A`, `J^2 = -1`.
    pub fn invariant_defects(&self) -> (f64, f64, f64) {
        let norm = (self.norm_t_sq() + self.nu * self.nu - 1.0).abs();
        let ia = self.first * self.shape;
        let sym = (ia[(0, 1)] - ia[(1, 0)]).abs();
        let j2 = (self.jmat * self.jmat + Matrix2::identity()).abs().max();
        (norm, sym, j2)
    }
}

/// Per-sample geometry including the intrinsic Gaussian curvature `K`.
#[derive(Debug, Clone, Copy)]
pub struct PointGeometry {
    pub local: LocalGeometry,
    pub k: f64,
}

impl std::ops::Deref for PointGeometry {
    type Target = LocalGeometry;
    fn deref(&self) -> &LocalGeometry {
        &self.local
    }
}

/// Residuals of the fundamental equations at one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FundamentalResiduals {
    pub gauss: f64,
    pub codazzi: f64,
    pub nabla_t: f64,
    pub dnu: f64,
    pub norm: f64,
}

impl FundamentalResiduals {
    pub fn max(&self) -> f64 {
        self.gauss.max(self.codazzi).max(self.nabla_t).max(self.dnu).max(self.norm)
    }

    pub fn sup(&self, o: &Self) -> Self {
        Self {
            gauss: self.gauss.max(o.gauss),
            codazzi: self.codazzi.max(o.codazzi),
            nabla_t: self.nabla_t.max(o.nabla_t),
            dnu: self.dnu.max(o.dnu),
            norm: self.norm.max(o.norm),
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("gauss", self.gauss),
            ("codazzi", self.codazzi),
            ("nabla_t", self.nabla_t),
            ("dnu", self.dnu),
            ("norm", self.norm),
        ]
    }
}

/// The four neighbours `(u +- h_u, v)`, `(u, v +- h_v)` of a sample.
pub(crate) struct Neighbours<T> {
    pub up: T,
    pub um: T,
    pub vp: T,
    pub vm: T,
    pub up2: T,
    pub um2: T,
    pub vp2: T,
    pub vm2: T,
}

/// Fourth-order central difference from samples at `-2h, -h, h, 2h`.
pub(crate) fn central4<T>(m2: T, m1: T, p1: T, p2: T, h: f64) -> T
where
    T: std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    ((m2 - p2) + (p1 - m1) * 8.0) * (1.0 / (12.0 * h))
}

impl<T> Neighbours<T> {
    pub fn eval(patch: &SurfacePatch, u: f64, v: f64, f: impl Fn(f64, f64) -> Result<T>) -> Result<Self> {
        let (hu, hv) = patch.steps();
        Ok(Self {
            up: f(u + hu, v)?,
            um: f(u - hu, v)?,
            vp: f(u, v + hv)?,
            vm: f(u, v - hv)?,
            up2: f(u + 2.0 * hu, v)?,
            um2: f(u - 2.0 * hu, v)?,
            vp2: f(u, v + 2.0 * hv)?,
            vm2: f(u, v - 2.0 * hv)?,
        })
    }

    pub fn map<S>(&self, f: impl Fn(&T) -> S) -> Neighbours<S> {
        Neighbours {
            up: f(&self.up),
            um: f(&self.um),
            vp: f(&self.vp),
            vm: f(&self.vm),
            up2: f(&self.up2),
            um2: f(&self.um2),
            vp2: f(&self.vp2),
            vm2: f(&self.vm2),
        }
    }
}

impl<T> Neighbours<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    pub fn du(&self, hu: f64) -> T {
        central4(self.um2, self.um, self.up, self.up2, hu)
    }

    pub fn dv(&self, hv: f64) -> T {
        central4(self.vm2, self.vm, self.vp, self.vp2, hv)
    }
}

/// Residuals of the Gauss, Codazzi, `nabla T`, `d nu` and `|T|^2 + nu^2 = 1`
/// equations, each the sup over coordinate directions.
pub fn fundamental_residuals(patch: &SurfacePatch, u: f64, v: f64) -> Result<FundamentalResiduals> {
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let p = patch.chart.params;
    let d = p.bundle_defect();
    let g0 = patch.geometry_at(u, v)?;
    let nb = Neighbours::eval(patch, u, v, |a, b| patch.local_geometry(a, b))?;
    let gamma = patch.intrinsic_christoffels(u, v)?;
    let (gu, gv) = (gamma_matrix(&gamma, 0), gamma_matrix(&gamma, 1));

    let gauss = (g0.k - (g0.ke + p.tau * p.tau + d * g0.nu * g0.nu)).abs();

    let da_u = nb.map(|g| g.shape).du(hu);
    let da_v = nb.map(|g| g.shape).dv(hv);
    let a = &g0.shape;
    let ts = (da_u.column(1) + gu * a.column(1)) - (da_v.column(0) + gv * a.column(0));
    let it = g0.first * g0.t;
    let rhs = Vector2::new(it[1], -it[0]) * (d * g0.nu);
    let codazzi = g0.norm(&(ts - rhs));

    let tn = nb.map(|g| g.t);
    let dt = [tn.du(hu), tn.dv(hv)];
    let gm = [gu, gv];
    let nun = nb.map(|g| g.nu);
    let dnu = [nun.du(hu), nun.dv(hv)];
    let mut nabla_t: f64 = 0.0;
    let mut dnu_res: f64 = 0.0;
    for i in 0..2 {
        let x = Vector2::from_fn(|k, _| if k == i { 1.0 } else { 0.0 });
        let ax = a * x;
        let jx = g0.jmat * x;
        let cov = dt[i] + gm[i] * g0.t;
        nabla_t = nabla_t.max(g0.norm(&(cov - (ax - jx * p.tau) * g0.nu)));
        let expected = g0.inner(&(jx * p.tau - ax), &g0.t);
        dnu_res = dnu_res.max((dnu[i] - expected).abs());
    }
    let norm = (g0.norm_t_sq() + g0.nu * g0.nu - 1.0).abs();
    Ok(FundamentalResiduals { gauss, codazzi, nabla_t, dnu: dnu_res, norm })
}

/// Residuals of the fundamental equations in a conformal parameter, complex
/// equations measured in modulus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConformalResiduals {
    pub codazzi_z: f64,
    pub nabla_t_z: f64,
    pub nabla_t_zbar: f64,
    pub dnu_z: f64,
    pub norm_z: f64,
}

impl ConformalResiduals {
    pub fn max(&self) -> f64 {
        self.codazzi_z.max(self.nabla_t_z).max(self.nabla_t_zbar).max(self.dnu_z).max(self.norm_z)
    }

    pub fn sup(&self, o: &Self) -> Self {
        Self {
            codazzi_z: self.codazzi_z.max(o.codazzi_z),
            nabla_t_z: self.nabla_t_z.max(o.nabla_t_z),
            nabla_t_zbar: self.nabla_t_zbar.max(o.nabla_t_zbar),
            dnu_z: self.dnu_z.max(o.dnu_z),
            norm_z: self.norm_z.max(o.norm_z),
        }
    }
}

/// `(d_z f, d_zbar f)` from central differences of neighbour values.
pub(crate) fn wirtinger(nb: &Neighbours<Complex64>, hu: f64, hv: f64) -> (Complex64, Complex64) {
    let fu = nb.du(hu);
    let fv = nb.dv(hv);
    let i = Complex64::i();
    ((fu - i * fv) * 0.5, (fu + i * fv) * 0.5)
}

pub fn conformal_residuals(patch: &SurfacePatch, u: f64, v: f64) -> Result<ConformalResiduals> {
    patch.require_conformal(u, v)?;
    patch.check_stencil(u, v)?;
    let (hu, hv) = patch.steps();
    let p = patch.chart.params;
    let d = p.bundle_defect();
    let g0 = patch.local_geometry(u, v)?;
    let nb = Neighbours::eval(patch, u, v, |a, b| patch.local_geometry(a, b))?;
    let field = |f: &dyn Fn(&LocalGeometry) -> Complex64| nb.map(f);
    let (_, q_zbar) = wirtinger(&field(&|g| g.hopf_q()), hu, hv);
    let (t_z, t_zbar) = wirtinger(&field(&|g| g.t_z()), hu, hv);
    let (nu_z, _) = wirtinger(&field(&|g| Complex64::new(g.nu, 0.0)), hu, hv);
    let (lam_z, _) = wirtinger(&field(&|g| Complex64::new(g.conformal_lambda(), 0.0)), hu, hv);

    let lam = g0.conformal_lambda();
    let q = g0.hopf_q();
    let t = g0.t_z();
    let nu = g0.nu;
    // J d_z = i d_z only when (u, v) is positively oriented against N.
    let h = Complex64::new(g0.h, patch.orientation.sign() * p.tau);
    let hc = h.conj();
    Ok(ConformalResiduals {
        codazzi_z: (q_zbar - t * (lam * d * nu)).norm(),
        nabla_t_z: (t_z - t * lam_z / lam - q * nu).norm(),
        nabla_t_zbar: (t_zbar - h * (lam * nu)).norm(),
        dnu_z: (nu_z + hc * t + q / lam * t.conj()).norm(),
        norm_z: (t.norm_sqr() - 0.5 * lam * (1.0 - nu * nu)).abs(),
    })
}

/// Area-weighted mean of `H` over the grid and the sup deviation from it.
pub fn mean_curvature_constancy(patch: &SurfacePatch) -> Result<(f64, f64)> {
    let samples = patch.sweep(0, |u, v| {
        let g = patch.local_geometry(u, v)?;
        Ok((g.h, g.area_element()))
    })?;
    let (nu, nv) = patch.grid;
    let weight = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let (mut num, mut den) = (0.0, 0.0);
    for &((i, j), (h, area)) in &samples {
        let w = weight(i, nu) * weight(j, nv) * area;
        num += w * h;
        den += w;
    }
    let mean = num / den;
    let defect = samples.iter().map(|(_, (h, _))| (h - mean).abs()).fold(0.0, f64::max);
    Ok((mean, defect))
}

/// Sup of the fundamental residuals over nodes at ring distance `ring`.
pub fn fundamental_sup(patch: &SurfacePatch, ring: usize) -> Result<FundamentalResiduals> {
    let rs = patch.sweep(ring, |u, v| fundamental_residuals(patch, u, v))?;
    Ok(rs.iter().fold(FundamentalResiduals::default(), |acc, (_, r)| acc.sup(r)))
}

pub fn conformal_sup(patch: &SurfacePatch, ring: usize) -> Result<ConformalResiduals> {
    let rs = patch.sweep(ring, |u, v| conformal_residuals(patch, u, v))?;
    Ok(rs.iter().fold(ConformalResiduals::default(), |acc, (_, r)| acc.sup(r)))
}

/// Observed order `log2(coarse / fine)` under grid halving, or `None` when
/// the coarse residual is already at the rounding floor.
pub fn refinement_order(coarse: f64, fine: f64) -> Option<f64> {
    if coarse < NOISE_FLOOR {
        return None;
    }
    Some((coarse / fine.max(f64::MIN_POSITIVE)).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientParams;
    use crate::catalog::{
        euclidean_plane, euclidean_sphere, hopf_cylinder, nil3_umbrella, HopfCylinderSpec,
    };
    use approx::assert_abs_diff_eq;

    fn hopf(h: f64) -> SurfacePatch {
        hopf_cylinder(&HopfCylinderSpec::new(AmbientParams::space_form(1.0, 0.5).unwrap(), h), 64).unwrap()
    }

    #[test]
    fn plane_is_trivial() {
        let p = euclidean_plane(32);
        let g = p.geometry_at(0.1, -0.2).unwrap();
        assert_eq!(g.h, 0.0);
        assert_eq!(g.k, 0.0);
        assert_eq!(g.shape, Matrix2::zeros());
        assert_eq!(fundamental_sup(&p, 2).unwrap().max(), 0.0);
    }

    #[test]
    fn hopf_cylinder_is_vertical_and_flat() {
        for h in [0.0, 0.3] {
            let p = hopf(h);
            for ((_, _), g) in p.sweep(2, |u, v| p.geometry_at(u, v)).unwrap() {
                assert!(g.nu.abs() < 1e-12);
                assert_abs_diff_eq!(g.norm_t_sq(), 1.0, epsilon = 1e-12);
                assert!(g.k.abs() < 1e-8);
                assert_abs_diff_eq!(g.h, h, epsilon = 1e-12);
                assert_abs_diff_eq!(g.operator_norm_sq(&g.shape), 0.5 + 4.0 * h * h, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn umbrella_is_minimal_with_vertical_normal_at_origin() {
        let p = nil3_umbrella(128);
        let g = p.local_geometry(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(g.nu, 1.0, epsilon = 1e-15);
        assert!(g.t.norm() < 1e-15);
        let sup = p.sweep(0, |u, v| Ok(p.local_geometry(u, v)?.h.abs())).unwrap();
        assert!(sup.iter().all(|(_, h)| *h < 1e-6));
        let nu = p.local_geometry(0.9, 0.7).unwrap().nu;
        assert!(nu < 0.99);
    }

    #[test]
    fn sphere_has_unit_curvature() {
        let p = euclidean_sphere(64);
        let g = p.geometry_at(0.2, 0.1).unwrap();
        assert_abs_diff_eq!(g.k, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g.h, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flipping_orientation() {
        let p = nil3_umbrella(32);
        let q = p.flipped();
        let (a, b) = (p.local_geometry(0.3, -0.4).unwrap(), q.local_geometry(0.3, -0.4).unwrap());
        assert_abs_diff_eq!(a.nu, -b.nu, epsilon = 1e-15);
        assert_abs_diff_eq!(a.h, -b.h, epsilon = 1e-15);
        assert_eq!(a.t, b.t);
        assert!((a.jmat + b.jmat).abs().max() < 1e-15);
        assert!((a.shape + b.shape).abs().max() < 1e-15);
    }

    #[test]
    fn pointwise_invariants() {
        let p = nil3_umbrella(32);
        let g = p.local_geometry(0.5, 0.8).unwrap();
        let (n, s, j) = g.invariant_defects();
        assert!(n < 1e-12 && s < 1e-12 && j < 1e-12);
    }

    #[test]
    fn hopf_coefficient_matches_traceless_norm() {
        // On a conformal patch |A|^2 - 2H^2 = 2|Q|^2 / lambda^2.
        let p = hopf(0.3);
        let g = p.local_geometry(0.1, 0.2).unwrap();
        let lam = g.conformal_lambda();
        let lhs = g.operator_norm_sq(&g.shape) - 2.0 * g.h * g.h;
        assert_abs_diff_eq!(lhs, 2.0 * g.hopf_q().norm_sqr() / (lam * lam), epsilon = 1e-12);
        assert!(g.first_zz().norm() < 1e-14);
    }

    #[test]
    fn boundary_points_rejected() {
        let p = nil3_umbrella(32);
        let (u, v) = p.node(1, 10);
        assert!(matches!(fundamental_residuals(&p, u, v), Err(GeomError::InsufficientStencil { .. })));
        let (u, v) = p.node(2, 10);
        assert!(fundamental_residuals(&p, u, v).is_ok());
        assert!(conformal_residuals(&p, 0.0, 0.0).is_err());
    }

    #[test]
    fn fourth_order_difference() {
        let h = 0.1;
        let f = |x: f64| x.sin();
        let d = central4(f(-2.0 * h), f(-h), f(h), f(2.0 * h), h);
        assert!((d - 1.0).abs() < 1e-5);
    }

    #[test]
    fn refinement_order_examples() {
        assert_eq!(refinement_order(1e-12, 1e-13), None);
        assert_abs_diff_eq!(refinement_order(4e-6, 1e-6).unwrap(), 2.0, epsilon = 1e-12);
    }
}
