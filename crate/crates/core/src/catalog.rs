//! Test surfaces with known structure: Hopf cylinders, minimal examples in
//! Nil_3, product-space slices, Euclidean models, rotational CMC surfaces in
//! `M^2(kappa) x R`, and compactly supported normal perturbations.

use std::any::Any;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::ambient::{make_chart, AmbientParams};
use crate::defaults::{DEFAULT_GRID, SURFACE_FD_STEP};
use crate::error::{GeomError, Result};
use crate::surface::{fd_jet, Immersion, Jet, Orientation, Rect, SurfacePatch};

/// Chart radius `rho` of a geodesic circle of radius `r` in `M^2(kappa)`.
pub fn chart_radius(kappa: f64, r: f64) -> f64 {
    if kappa > 0.0 {
        let c = kappa.sqrt();
        2.0 / c * (0.5 * c * r).tan()
    } else if kappa < 0.0 {
        let c = (-kappa).sqrt();
        2.0 / c * (0.5 * c * r).tanh()
    } else {
        r
    }
}

/// Geodesic curvature of the geodesic circle of radius `r` in `M^2(kappa)`.
pub fn circle_curvature(kappa: f64, r: f64) -> f64 {
    if kappa > 0.0 {
        let c = kappa.sqrt();
        c / (c * r).tan()
    } else if kappa < 0.0 {
        let c = (-kappa).sqrt();
        c / (c * r).tanh()
    } else {
        1.0 / r
    }
}

/// Geodesic radius of the circle with geodesic curvature `k > 0`.
pub fn circle_radius(kappa: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(GeomError::Catalog(format!("geodesic curvature {k} must be positive")));
    }
    if kappa > 0.0 {
        let c = kappa.sqrt();
        Ok((c / k).atan() / c)
    } else if kappa < 0.0 {
        let c = (-kappa).sqrt();
        if k <= c {
            return Err(GeomError::Catalog(format!(
                "no circle of geodesic curvature {k} in M^2({kappa}); need 4H^2 + kappa > 0"
            )));
        }
        Ok((c / k).atanh() / c)
    } else {
        Ok(1.0 / k)
    }
}

#[derive(Debug, Clone, Copy)]
enum BaseCurve {
    /// Circle of chart radius `rho0` about the origin, arclength frequency `omega`.
    Circle { rho0: f64, omega: f64 },
    /// The geodesic through the origin along the x-axis.
    Line,
}

#[derive(Debug, Clone, Copy)]
struct HopfImmersion {
    kappa: f64,
    tau: f64,
    base: BaseCurve,
}

impl Immersion for HopfImmersion {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        self.jet(u, v).map(|j| j.p).unwrap_or_default()
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        let z = Vector3::zeros();
        Some(match self.base {
            BaseCurve::Circle { rho0, omega } => {
                let (s, c) = (omega * u).sin_cos();
                let lift = self.tau * rho0;
                Jet {
                    p: Vector3::new(rho0 * c, rho0 * s, lift * u + v),
                    fu: Vector3::new(-rho0 * omega * s, rho0 * omega * c, lift),
                    fv: Vector3::z(),
                    fuu: Vector3::new(-rho0 * omega * omega * c, -rho0 * omega * omega * s, 0.0),
                    fuv: z,
                    fvv: z,
                }
            }
            BaseCurve::Line => {
                let rho = chart_radius(self.kappa, u);
                let d1 = 1.0 + 0.25 * self.kappa * rho * rho;
                let d2 = 0.5 * self.kappa * rho * d1;
                Jet {
                    p: Vector3::new(rho, 0.0, v),
                    fu: Vector3::new(d1, 0.0, 0.0),
                    fv: Vector3::z(),
                    fuu: Vector3::new(d2, 0.0, 0.0),
                    fuv: z,
                    fvv: z,
                }
            }
        })
    }
}

/// `(u, v) -> (u, v, 0)`.
#[derive(Debug, Clone, Copy)]
struct HorizontalPlane;

impl Immersion for HorizontalPlane {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(u, v, 0.0)
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        let z = Vector3::zeros();
        Some(Jet { p: self.position(u, v), fu: Vector3::x(), fv: Vector3::y(), fuu: z, fuv: z, fvv: z })
    }
}

/// `(u, v) -> (u, 0, v)`.
#[derive(Debug, Clone, Copy)]
struct VerticalPlane;

impl Immersion for VerticalPlane {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(u, 0.0, v)
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        let z = Vector3::zeros();
        Some(Jet { p: self.position(u, v), fu: Vector3::x(), fv: Vector3::z(), fuu: z, fuv: z, fvv: z })
    }
}

/// Round cylinder of radius `r` about the z-axis, arclength parameters.
#[derive(Debug, Clone, Copy)]
struct FlatCylinder {
    r: f64,
}

impl Immersion for FlatCylinder {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        let (s, c) = (u / self.r).sin_cos();
        Vector3::new(self.r * c, self.r * s, v)
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        let (s, c) = (u / self.r).sin_cos();
        let z = Vector3::zeros();
        Some(Jet {
            p: self.position(u, v),
            fu: Vector3::new(-s, c, 0.0),
            fv: Vector3::z(),
            fuu: Vector3::new(-c / self.r, -s / self.r, 0.0),
            fuv: z,
            fvv: z,
        })
    }
}

/// Unit sphere in longitude `u` and latitude `v`.
#[derive(Debug, Clone, Copy)]
struct UnitSphere;

impl Immersion for UnitSphere {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        let (su, cu) = u.sin_cos();
        let (sv, cv) = v.sin_cos();
        Vector3::new(cv * cu, cv * su, sv)
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        let (su, cu) = u.sin_cos();
        let (sv, cv) = v.sin_cos();
        Some(Jet {
            p: Vector3::new(cv * cu, cv * su, sv),
            fu: Vector3::new(-cv * su, cv * cu, 0.0),
            fv: Vector3::new(-sv * cu, -sv * su, cv),
            fuu: Vector3::new(-cv * cu, -cv * su, 0.0),
            fuv: Vector3::new(sv * su, -sv * cu, 0.0),
            fvv: Vector3::new(-cv * cu, -cv * su, -sv),
        })
    }
}

/// Choose the orientation making the central mean curvature match the sign of `h`.
fn orient_to(mut patch: SurfacePatch, h: f64) -> Result<SurfacePatch> {
    if h != 0.0 {
        let r = patch.rect;
        let g = patch.local_geometry(0.5 * (r.u0 + r.u1), 0.5 * (r.v0 + r.v1))?;
        if g.h * h < 0.0 {
            patch.orientation = Orientation::Negative;
        }
    }
    Ok(patch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfCylinderSpec {
    pub params: AmbientParams,
    pub h: f64,
    /// Arclength half-range of the base curve.
    pub u_half: f64,
    /// Fiber half-range.
    pub v_half: f64,
}

impl HopfCylinderSpec {
    pub fn new(params: AmbientParams, h: f64) -> Self {
        Self { params, h, u_half: 0.5, v_half: 0.5 }
    }
}

/// `pi^{-1}(gamma)` for a curve `gamma` of geodesic curvature `2H`: a circle
/// about the origin, or the geodesic through the origin when `H = 0`. The
/// parameters are base arclength `u` and fiber length `v`, so `I = du^2 + dv^2`.
pub fn hopf_cylinder(spec: &HopfCylinderSpec, grid: usize) -> Result<SurfacePatch> {
    let AmbientParams { kappa, tau } = spec.params;
    let base = if spec.h == 0.0 {
        BaseCurve::Line
    } else {
        let r0 = circle_radius(kappa, 2.0 * spec.h.abs())?;
        let rho0 = chart_radius(kappa, r0);
        let lam = 1.0 / (1.0 + 0.25 * kappa * rho0 * rho0);
        BaseCurve::Circle { rho0, omega: 1.0 / (lam * rho0) }
    };
    if let BaseCurve::Line = base {
        if kappa > 0.0 && spec.u_half * kappa.sqrt() >= std::f64::consts::PI {
            return Err(GeomError::Catalog("base geodesic leaves the chart".into()));
        }
    }
    let imm = HopfImmersion { kappa, tau, base };
    let rect = Rect::new(-spec.u_half, spec.u_half, -spec.v_half, spec.v_half);
    let patch = SurfacePatch::new("hopf-cylinder", make_chart(spec.params), Arc::new(imm), rect, grid)
        .with_conformal(true)
        .with_target_h(spec.h);
    orient_to(patch, spec.h)
}

/// The minimal umbrella `z = 0` in Nil_3 (`kappa = 0`, `tau = 0.5`) over `[-1, 1]^2`.
pub fn nil3_umbrella(grid: usize) -> SurfacePatch {
    let params = AmbientParams::new(0.0, 0.5).expect("valid Nil_3 parameters");
    SurfacePatch::new(
        "nil3-umbrella",
        make_chart(params),
        Arc::new(HorizontalPlane),
        Rect::new(-1.0, 1.0, -1.0, 1.0),
        grid,
    )
    .with_target_h(0.0)
}

/// The vertical plane `y = 0` in Nil_3, the preimage of a base geodesic.
pub fn nil3_vertical_plane(grid: usize) -> SurfacePatch {
    let params = AmbientParams::new(0.0, 0.5).expect("valid Nil_3 parameters");
    SurfacePatch::new(
        "nil3-vertical-plane",
        make_chart(params),
        Arc::new(VerticalPlane),
        Rect::new(-1.0, 1.0, -1.0, 1.0),
        grid,
    )
    .with_conformal(true)
    .with_target_h(0.0)
}

/// The totally geodesic slice `M^2(kappa) x {0}` of the product space.
pub fn product_slice(kappa: f64, grid: usize) -> Result<SurfacePatch> {
    let params = AmbientParams::space_form(kappa, 0.0)?;
    let half = if kappa < 0.0 { 0.8 / (-kappa).sqrt() } else { 0.8 };
    Ok(SurfacePatch::new(
        "product-slice",
        make_chart(params),
        Arc::new(HorizontalPlane),
        Rect::new(-half, half, -half, half),
        grid,
    )
    .with_conformal(true)
    .with_target_h(0.0))
}

/// Vertical cylinder over the circle of radius `pi/4` in `S^2 x R` (`H = 1/2`).
pub fn vertical_cylinder_s2xr(grid: usize) -> Result<SurfacePatch> {
    let params = AmbientParams::new(1.0, 0.0)?;
    let mut p = hopf_cylinder(&HopfCylinderSpec::new(params, 0.5), grid)?;
    p.name = "vertical-cylinder".into();
    Ok(p)
}

pub fn euclidean_plane(grid: usize) -> SurfacePatch {
    SurfacePatch::new(
        "euclidean-plane",
        make_chart(AmbientParams::euclidean()),
        Arc::new(HorizontalPlane),
        Rect::new(-1.0, 1.0, -1.0, 1.0),
        grid,
    )
    .with_conformal(true)
    .with_target_h(0.0)
}

/// Euclidean square `[0, side]^2` in the plane `z = 0`.
pub fn flat_square(side: f64, grid: usize) -> Result<SurfacePatch> {
    if !(side > 0.0) {
        return Err(GeomError::Catalog(format!("square side {side} must be positive")));
    }
    let rect = Rect::new(0.0, side, 0.0, side);
    Ok(SurfacePatch::new("flat-square", make_chart(AmbientParams::euclidean()), Arc::new(HorizontalPlane), rect, grid)
        .with_conformal(true)
        .with_target_h(0.0))
}

/// Unit-radius round cylinder in `R^3`, `I = du^2 + dv^2`.
pub fn flat_cylinder(grid: usize) -> SurfacePatch {
    let patch = SurfacePatch::new(
        "flat-cylinder",
        make_chart(AmbientParams::euclidean()),
        Arc::new(FlatCylinder { r: 1.0 }),
        Rect::new(-1.0, 1.0, -1.0, 1.0),
        grid,
    )
    .with_conformal(true)
    .with_target_h(0.5);
    orient_to(patch, 0.5).expect("cylinder is regular")
}

/// Unit sphere in `R^3`, longitude/latitude chart away from the poles.
pub fn euclidean_sphere(grid: usize) -> SurfacePatch {
    let patch = SurfacePatch::new(
        "euclidean-sphere",
        make_chart(AmbientParams::euclidean()),
        Arc::new(UnitSphere),
        Rect::new(-0.6, 0.6, -0.6, 0.6),
        grid,
    )
    .with_target_h(1.0);
    orient_to(patch, 1.0).expect("sphere is regular")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationalSpec {
    pub kappa: f64,
    pub h: f64,
    /// Chart radius of the profile at `s = 0`.
    pub rho0: f64,
    /// Profile angle at `s = 0` measured from the radial direction.
    pub phi0: f64,
    pub s_half: f64,
    pub v_half: f64,
}

impl Default for RotationalSpec {
    fn default() -> Self {
        Self {
            kappa: -1.0,
            h: 0.7,
            rho0: 2.0 * 0.5f64.tanh(),
            phi0: std::f64::consts::FRAC_PI_2,
            s_half: 0.25,
            v_half: 0.25,
        }
    }
}

/// Profile state `(rho, z, phi, w)`: chart radius, height, angle, isothermal coordinate.
type State = [f64; 4];

/// Profile curve of a rotational CMC surface in `M^2(kappa) x R`, in
/// arclength `s`:
///
/// ```text
/// rho' = (1 + kappa rho^2/4) cos(phi),  z' = sin(phi),
/// phi' = 2H - (R_r/R) sin(phi),         w' = 1/R,
/// ```
///
/// with `R = rho / (1 + kappa rho^2/4)` the parallel radius and
/// `R_r/R = (1 - kappa rho^2/4) / rho`.
#[derive(Debug, Clone)]
pub struct RotationalProfile {
    pub spec: RotationalSpec,
    s_start: f64,
    step: f64,
    nodes: Vec<State>,
}

const PROFILE_STEP: f64 = 1.0 / 4096.0;
const PROFILE_MARGIN: f64 = 0.125;

impl RotationalProfile {
    pub fn new(spec: RotationalSpec) -> Result<Self> {
        if spec.h == 0.0 {
            return Err(GeomError::Catalog("rotational CMC generator needs H != 0".into()));
        }
        if !(spec.rho0 > 0.0) || (spec.kappa < 0.0 && spec.rho0 * spec.rho0 >= -4.0 / spec.kappa) {
            return Err(GeomError::Catalog(format!("initial radius {} outside the base chart", spec.rho0)));
        }
        let reach = spec.s_half + PROFILE_MARGIN;
        let n = (reach / PROFILE_STEP).ceil() as usize;
        let start: State = [spec.rho0, 0.0, spec.phi0, 0.0];
        let mut fwd = vec![start];
        let mut bwd = vec![start];
        let probe = Self { spec, s_start: 0.0, step: PROFILE_STEP, nodes: Vec::new() };
        for _ in 0..n {
            let next = probe.rk4(fwd.last().expect("non-empty"), PROFILE_STEP);
            probe.check_state(&next)?;
            fwd.push(next);
            let prev = probe.rk4(bwd.last().expect("non-empty"), -PROFILE_STEP);
            probe.check_state(&prev)?;
            bwd.push(prev);
        }
        bwd.reverse();
        bwd.pop();
        bwd.extend(fwd);
        Ok(Self { spec, s_start: -(n as f64) * PROFILE_STEP, step: PROFILE_STEP, nodes: bwd })
    }

    fn check_state(&self, s: &State) -> Result<()> {
        let k = self.spec.kappa;
        if !(s[0] > 1e-3) || (k < 0.0 && s[0] * s[0] >= -4.0 / k) || !s.iter().all(|x| x.is_finite()) {
            return Err(GeomError::Catalog(format!("profile reaches the axis or the chart boundary (rho = {})", s[0])));
        }
        Ok(())
    }

    fn parallel(&self, rho: f64) -> (f64, f64) {
        let q = 0.25 * self.spec.kappa * rho * rho;
        (rho / (1.0 + q), (1.0 - q) / rho)
    }

    fn rhs(&self, s: &State) -> State {
        let (rho, _, phi, _) = (s[0], s[1], s[2], s[3]);
        let (r, log_d) = self.parallel(rho);
        let (sp, cp) = phi.sin_cos();
        [
            (1.0 + 0.25 * self.spec.kappa * rho * rho) * cp,
            sp,
            2.0 * self.spec.h - log_d * sp,
            1.0 / r,
        ]
    }

    fn rk4(&self, y: &State, h: f64) -> State {
        let add = |a: &State, b: &State, c: f64| -> State {
            [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
        };
        let k1 = self.rhs(y);
        let k2 = self.rhs(&add(y, &k1, 0.5 * h));
        let k3 = self.rhs(&add(y, &k2, 0.5 * h));
        let k4 = self.rhs(&add(y, &k3, h));
        let mut out = *y;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Profile state at arclength `s`.
    pub fn state(&self, s: f64) -> State {
        let idx = ((s - self.s_start) / self.step).round();
        let idx = idx.clamp(0.0, (self.nodes.len() - 1) as f64) as usize;
        let s_node = self.s_start + idx as f64 * self.step;
        let ds = s - s_node;
        if ds == 0.0 {
            self.nodes[idx]
        } else {
            self.rk4(&self.nodes[idx], ds)
        }
    }

    /// Isothermal coordinate `w(s) = int_0^s ds / R`.
    pub fn w_of_s(&self, s: f64) -> f64 {
        self.state(s)[3]
    }

    /// Inverse of `w(s)` by Newton iteration.
    pub fn s_of_w(&self, w: f64) -> f64 {
        let mut s = w * self.parallel(self.spec.rho0).0;
        for _ in 0..50 {
            let st = self.state(s);
            let ds = (st[3] - w) * self.parallel(st[0]).0;
            s -= ds;
            if ds.abs() <= 1e-16 * s.abs().max(1.0) {
                break;
            }
        }
        s
    }

    /// Jet of `(s, v) -> (rho(s) cos v, rho(s) sin v, z(s))`.
    pub fn arclength_jet(&self, s: f64, v: f64) -> Jet {
        let st = self.state(s);
        let (rho, z, phi) = (st[0], st[1], st[2]);
        let k = self.spec.kappa;
        let d1 = 1.0 + 0.25 * k * rho * rho;
        let d2 = 0.5 * k * rho * d1;
        let (sp, cp) = phi.sin_cos();
        let dphi = self.rhs(&st)[2];
        let ps = d1 * cp;
        let pss = d2 * cp * cp - d1 * sp * dphi;
        let (sv, cv) = v.sin_cos();
        Jet {
            p: Vector3::new(rho * cv, rho * sv, z),
            fu: Vector3::new(ps * cv, ps * sv, sp),
            fv: Vector3::new(-rho * sv, rho * cv, 0.0),
            fuu: Vector3::new(pss * cv, pss * sv, cp * dphi),
            fuv: Vector3::new(-ps * sv, ps * cv, 0.0),
            fvv: Vector3::new(-rho * cv, -rho * sv, 0.0),
        }
    }

    /// Jet in the isothermal parameters `(w, v)`.
    pub fn conformal_jet(&self, w: f64, v: f64) -> Jet {
        let s = self.s_of_w(w);
        let j = self.arclength_jet(s, v);
        let st = self.state(s);
        let (r, log_d) = self.parallel(st[0]);
        let rs = r * log_d * st[2].cos();
        Jet {
            p: j.p,
            fu: j.fu * r,
            fv: j.fv,
            fuu: j.fuu * (r * r) + j.fu * (r * rs),
            fuv: j.fuv * r,
            fvv: j.fvv,
        }
    }
}

struct RotationalImmersion {
    profile: Arc<RotationalProfile>,
    conformal: bool,
}

impl Immersion for RotationalImmersion {
    fn as_any(&self) -> Option<&dyn Any> {
        Some(self)
    }

    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        self.jet(u, v).map(|j| j.p).unwrap_or_default()
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        Some(if self.conformal {
            self.profile.conformal_jet(u, v)
        } else {
            self.profile.arclength_jet(u, v)
        })
    }
}

/// Rotational CMC patch in arclength/angle parameters.
pub fn rotational_cmc(spec: &RotationalSpec, grid: usize) -> Result<SurfacePatch> {
    let params = AmbientParams::space_form(spec.kappa, 0.0)?;
    let profile = Arc::new(RotationalProfile::new(*spec)?);
    let imm = RotationalImmersion { profile, conformal: false };
    let rect = Rect::new(-spec.s_half, spec.s_half, -spec.v_half, spec.v_half);
    let patch = SurfacePatch::new("rotational-cmc", make_chart(params), Arc::new(imm), rect, grid)
        .with_target_h(spec.h);
    orient_to(patch, spec.h)
}

/// Reparametrize a rotational patch by the isothermal coordinate
/// `w = int ds / R`, giving `I = R^2 (dw^2 + dv^2)`. Patches that are
/// already conformal are returned unchanged.
pub fn conformalize_rotational(patch: &SurfacePatch) -> Result<SurfacePatch> {
    if patch.is_conformal {
        return Ok(patch.clone());
    }
    let rot = patch
        .immersion
        .as_any()
        .and_then(|a| a.downcast_ref::<RotationalImmersion>())
        .ok_or_else(|| GeomError::Catalog(format!("'{}' is not a rotational patch", patch.name)))?;
    let profile = rot.profile.clone();
    let (w0, w1) = (profile.w_of_s(patch.rect.u0), profile.w_of_s(patch.rect.u1));
    if !(w1 > w0) {
        return Err(GeomError::Catalog("isothermal quadrature failed".into()));
    }
    let imm = RotationalImmersion { profile, conformal: true };
    let rect = Rect::new(w0, w1, patch.rect.v0, patch.rect.v1);
    let mut out = patch.clone();
    out.name = format!("{}-conformal", patch.name);
    out.immersion = Arc::new(imm);
    out.rect = rect;
    out.is_conformal = true;
    Ok(out)
}

/// Bump `(1 - r^2)^8` on an ellipse: `C^7`, with derivatives the grid resolves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub uc: f64,
    pub vc: f64,
    pub au: f64,
    pub av: f64,
}

impl Bump {
    /// Centered bump reaching `fraction` of each half-width of the rectangle.
    pub fn centered(rect: &Rect, fraction: f64) -> Self {
        Self {
            uc: 0.5 * (rect.u0 + rect.u1),
            vc: 0.5 * (rect.v0 + rect.v1),
            au: 0.5 * fraction * (rect.u1 - rect.u0),
            av: 0.5 * fraction * (rect.v1 - rect.v0),
        }
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        let x = (u - self.uc) / self.au;
        let y = (v - self.vc) / self.av;
        let r2 = x * x + y * y;
        if r2 >= 1.0 {
            0.0
        } else {
            (1.0 - r2).powi(8)
        }
    }

    pub fn inside(&self, rect: &Rect) -> bool {
        self.au > 0.0
            && self.av > 0.0
            && self.uc - self.au >= rect.u0
            && self.uc + self.au <= rect.u1
            && self.vc - self.av >= rect.v0
            && self.vc + self.av <= rect.v1
    }
}

struct Perturbed {
    base: SurfacePatch,
    eps: f64,
    bump: Bump,
}

impl Perturbed {
    fn offset(&self, u: f64, v: f64) -> Vector3<f64> {
        let b = self.bump.value(u, v);
        if b == 0.0 {
            return Vector3::zeros();
        }
        match self.base.local_geometry(u, v) {
            Ok(g) => g.normal * (self.eps * b),
            Err(_) => Vector3::zeros(),
        }
    }
}

struct OffsetField<'a>(&'a Perturbed);

impl Immersion for OffsetField<'_> {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        self.0.offset(u, v)
    }
}

impl Immersion for Perturbed {
    fn position(&self, u: f64, v: f64) -> Vector3<f64> {
        self.base.jet(u, v).p + self.offset(u, v)
    }

    fn jet(&self, u: f64, v: f64) -> Option<Jet> {
        let j = self.base.jet(u, v);
        let d = fd_jet(&OffsetField(self), u, v, SURFACE_FD_STEP);
        Some(Jet {
            p: j.p + d.p,
            fu: j.fu + d.fu,
            fv: j.fv + d.fv,
            fuu: j.fuu + d.fuu,
            fuv: j.fuv + d.fuv,
            fvv: j.fvv + d.fvv,
        })
    }
}

/// Normal perturbation `f + eps * bump * N`. Drops the conformal flag.
pub fn perturb(patch: &SurfacePatch, eps: f64, bump: Bump) -> Result<SurfacePatch> {
    if !bump.inside(&patch.rect) {
        return Err(GeomError::Catalog("bump support leaves the patch".into()));
    }
    if eps == 0.0 {
        return Ok(patch.clone());
    }
    let imm = Perturbed { base: patch.clone(), eps, bump };
    let mut out = patch.clone();
    out.name = format!("{}-perturbed", patch.name);
    out.immersion = Arc::new(imm);
    out.is_conformal = false;
    out.target_h = None;
    Ok(out)
}

/// Named catalog entries with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSpec {
    HopfCylinder {
        kappa: f64,
        tau: f64,
        #[serde(rename = "H")]
        h: f64,
    },
    Nil3Umbrella {},
    Nil3VerticalPlane {},
    ProductSlice {
        kappa: f64,
    },
    VerticalCylinder {},
    EuclideanPlane {},
    FlatCylinder {},
    EuclideanSphere {},
    FlatSquare {
        #[serde(default = "default_side")]
        side: f64,
    },
    RotationalCmc {
        #[serde(default = "default_rot_kappa")]
        kappa: f64,
        #[serde(rename = "H", default = "default_rot_h")]
        h: f64,
        #[serde(default)]
        conformal: bool,
    },
}

fn default_side() -> f64 {
    std::f64::consts::PI
}

fn default_rot_kappa() -> f64 {
    RotationalSpec::default().kappa
}

fn default_rot_h() -> f64 {
    RotationalSpec::default().h
}

impl SurfaceSpec {
    pub fn build(&self, grid: usize) -> Result<SurfacePatch> {
        match *self {
            SurfaceSpec::HopfCylinder { kappa, tau, h } => {
                hopf_cylinder(&HopfCylinderSpec::new(AmbientParams::space_form(kappa, tau)?, h), grid)
            }
            SurfaceSpec::Nil3Umbrella {} => Ok(nil3_umbrella(grid)),
            SurfaceSpec::Nil3VerticalPlane {} => Ok(nil3_vertical_plane(grid)),
            SurfaceSpec::ProductSlice { kappa } => product_slice(kappa, grid),
            SurfaceSpec::VerticalCylinder {} => vertical_cylinder_s2xr(grid),
            SurfaceSpec::EuclideanPlane {} => Ok(euclidean_plane(grid)),
            SurfaceSpec::FlatCylinder {} => Ok(flat_cylinder(grid)),
            SurfaceSpec::EuclideanSphere {} => Ok(euclidean_sphere(grid)),
            SurfaceSpec::FlatSquare { side } => flat_square(side, grid),
            SurfaceSpec::RotationalCmc { kappa, h, conformal } => {
                let spec = RotationalSpec { kappa, h, ..RotationalSpec::default() };
                let patch = rotational_cmc(&spec, grid)?;
                if conformal {
                    conformalize_rotational(&patch)
                } else {
                    Ok(patch)
                }
            }
        }
    }

    /// Every catalog entry with default parameters.
    pub fn all() -> Vec<SurfaceSpec> {
        vec![
            SurfaceSpec::HopfCylinder { kappa: 1.0, tau: 0.5, h: 0.0 },
            SurfaceSpec::HopfCylinder { kappa: 1.0, tau: 0.5, h: 0.3 },
            SurfaceSpec::HopfCylinder { kappa: -1.0, tau: 0.5, h: 0.7 },
            SurfaceSpec::Nil3Umbrella {},
            SurfaceSpec::Nil3VerticalPlane {},
            SurfaceSpec::ProductSlice { kappa: -1.0 },
            SurfaceSpec::VerticalCylinder {},
            SurfaceSpec::EuclideanPlane {},
            SurfaceSpec::FlatCylinder {},
            SurfaceSpec::EuclideanSphere {},
            SurfaceSpec::FlatSquare { side: std::f64::consts::PI },
            SurfaceSpec::RotationalCmc { kappa: -1.0, h: 0.7, conformal: false },
            SurfaceSpec::RotationalCmc { kappa: -1.0, h: 0.7, conformal: true },
        ]
    }
}

pub fn default_grid() -> usize {
    DEFAULT_GRID
}
