//! Coordinate model of the homogeneous spaces E(kappa, tau).
//!
//! The chart is `R^3` (a disk of radius `2/sqrt(-kappa)` in the base when
//! `kappa < 0`) with metric
//!
//! ```text
//! ds^2 = lambda^2 (dx^2 + dy^2) + (tau * lambda * (y dx - x dy) + dz)^2,
//! lambda = 1 / (1 + kappa/4 (x^2 + y^2)),
//! ```
//!
//! and unit Killing field `xi = d/dz`. For `kappa > 0` this covers the Berger
//! sphere minus one fiber. The ambient orientation is `dx ^ dy ^ dz`; the
//! cross product `X ^ Y` and everything downstream (normals, `J`, signs of
//! tau-terms) use it. With this orientation `nabla_X xi = tau X ^ xi`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::defaults::AMBIENT_FD_STEP;
use crate::error::{GeomError, Result};

/// Base curvature `kappa` and bundle curvature `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientParams {
    pub kappa: f64,
    pub tau: f64,
}

impl AmbientParams {
    /// Parameters of a genuine E(kappa, tau): `kappa - 4 tau^2 != 0`.
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        let p = Self::space_form(kappa, tau)?;
        if p.bundle_defect() == 0.0 {
            return Err(GeomError::InvalidAmbient(format!(
                "kappa - 4 tau^2 = 0 (kappa = {kappa}, tau = {tau})"
            )));
        }
        Ok(p)
    }

    /// Like [`AmbientParams::new`] but also admits the space forms
    /// `kappa = 4 tau^2` (Euclidean space, round 3-spheres). The chart model is
    /// valid there; the AR corrections vanish (`alpha = 0`). Pinching and
    /// compactness predicates still reject these.
    pub fn space_form(kappa: f64, tau: f64) -> Result<Self> {
        if !kappa.is_finite() || !tau.is_finite() {
            return Err(GeomError::InvalidAmbient("non-finite parameter".into()));
        }
        Ok(Self { kappa, tau })
    }

    /// Euclidean `R^3` (`kappa = tau = 0`).
    pub fn euclidean() -> Self {
        Self { kappa: 0.0, tau: 0.0 }
    }

    /// `kappa - 4 tau^2`.
    pub fn bundle_defect(&self) -> f64 {
        self.kappa - 4.0 * self.tau * self.tau
    }

    pub fn is_space_form(&self) -> bool {
        self.bundle_defect() == 0.0
    }

    /// Errors unless `kappa - 4 tau^2 != 0`.
    pub fn require_bundle(&self) -> Result<()> {
        if self.is_space_form() {
            Err(GeomError::InvalidAmbient(format!(
                "kappa - 4 tau^2 = 0 (kappa = {}, tau = {})",
                self.kappa, self.tau
            )))
        } else {
            Ok(())
        }
    }
}

/// How Christoffel symbols are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChristoffelMode {
    /// Closed-form metric derivatives.
    Analytic,
    /// Central differences of the metric with step `step * max(1, |p|)`.
    FiniteDifference { step: f64 },
}

/// `gamma[k][i][j] = Gamma^k_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffels(pub [[[f64; 3]; 3]; 3]);

impl Christoffels {
    /// `Gamma^k_ij X^i Y^j`.
    pub fn contract(&self, x: &Vector3<f64>, y: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|k, _| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += self.0[k][i][j] * x[i] * y[j];
                }
            }
            s
        })
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    m = m.max((self.0[k][i][j] - self.0[k][j][i]).abs());
                }
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Christoffels) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    m = m.max((self.0[k][i][j] - other.0[k][i][j]).abs());
                }
            }
        }
        m
    }
}

/// A coordinate model of E(kappa, tau).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientChart {
    pub params: AmbientParams,
    pub christoffel_mode: ChristoffelMode,
}

/// Build the chart for `params` with analytic Christoffels.
pub fn make_chart(params: AmbientParams) -> AmbientChart {
    AmbientChart { params, christoffel_mode: ChristoffelMode::Analytic }
}

impl AmbientChart {
    pub fn with_mode(mut self, mode: ChristoffelMode) -> Self {
        self.christoffel_mode = mode;
        self
    }

    /// For `kappa < 0` the base disk is `x^2 + y^2 < -4/kappa`.
    pub fn in_domain(&self, p: &Vector3<f64>) -> bool {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return false;
        }
        let k = self.params.kappa;
        k >= 0.0 || p.x * p.x + p.y * p.y < -4.0 / k
    }

    pub fn check_domain(&self, p: &Vector3<f64>) -> Result<()> {
        if self.in_domain(p) {
            Ok(())
        } else {
            Err(GeomError::OutsideDomain { x: p.x, y: p.y, z: p.z })
        }
    }

    /// Base conformal factor `lambda_b(x, y)`.
    pub fn conformal_factor(&self, x: f64, y: f64) -> f64 {
        1.0 / (1.0 + 0.25 * self.params.kappa * (x * x + y * y))
    }

    /// Metric matrix `g_ij` at `p`.
    pub fn metric_at(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        let (x, y) = (p.x, p.y);
        let tau = self.params.tau;
        let l = self.conformal_factor(x, y);
        let a = tau * l * y;
        let b = -tau * l * x;
        Matrix3::new(
            l * l + a * a,
            a * b,
            a,
            a * b,
            l * l + b * b,
            b,
            a,
            b,
            1.0,
        )
    }

    /// `[d_x g, d_y g, d_z g]` in closed form.
    fn metric_derivatives(&self, p: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        let (x, y) = (p.x, p.y);
        let tau = self.params.tau;
        let s = 0.25 * self.params.kappa;
        let l = self.conformal_factor(x, y);
        let lx = -2.0 * s * x * l * l;
        let ly = -2.0 * s * y * l * l;
        let a = tau * l * y;
        let b = -tau * l * x;
        let ax = tau * y * lx;
        let ay = tau * (l + y * ly);
        let bx = -tau * (l + x * lx);
        let by = -tau * x * ly;
        let build = |ld: f64, ad: f64, bd: f64| {
            Matrix3::new(
                2.0 * l * ld + 2.0 * a * ad,
                ad * b + a * bd,
                ad,
                ad * b + a * bd,
                2.0 * l * ld + 2.0 * b * bd,
                bd,
                ad,
                bd,
                0.0,
            )
        };
        [build(lx, ax, bx), build(ly, ay, by), Matrix3::zeros()]
    }

    fn fd_step(&self, p: &Vector3<f64>, scale: f64) -> f64 {
        scale * p.norm().max(1.0)
    }

    fn metric_derivatives_fd(&self, p: &Vector3<f64>, step: f64) -> Result<[Matrix3<f64>; 3]> {
        let h = self.fd_step(p, step);
        let mut out = [Matrix3::zeros(); 3];
        for (i, d) in out.iter_mut().enumerate() {
            let mut e = Vector3::zeros();
            e[i] = h;
            let (pp, pm) = (p + e, p - e);
            self.check_domain(&pp)?;
            self.check_domain(&pm)?;
            *d = (self.metric_at(&pp) - self.metric_at(&pm)) / (2.0 * h);
        }
        Ok(out)
    }

    /// Unit Killing field `xi = d/dz` in coordinates.
    pub fn killing_at(&self, _p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, 1.0)
    }

    pub fn inner(&self, p: &Vector3<f64>, x: &Vector3<f64>, y: &Vector3<f64>) -> f64 {
        (self.metric_at(p) * y).dot(x)
    }

    pub fn norm(&self, p: &Vector3<f64>, x: &Vector3<f64>) -> f64 {
        self.inner(p, x, x).max(0.0).sqrt()
    }

    /// Riemannian cross product `X ^ Y`, defined by `<X ^ Y, W> = vol(X, Y, W)`.
    pub fn cross(&self, p: &Vector3<f64>, x: &Vector3<f64>, y: &Vector3<f64>) -> Vector3<f64> {
        let g = self.metric_at(p);
        let vol = g.determinant().sqrt();
        let covector = x.cross(y) * vol;
        g.try_inverse().expect("metric is positive definite") * covector
    }

    /// Christoffel symbols at `p` in the chart's mode.
    pub fn christoffels_at(&self, p: &Vector3<f64>) -> Result<Christoffels> {
        self.check_domain(p)?;
        let dg = match self.christoffel_mode {
            ChristoffelMode::Analytic => self.metric_derivatives(p),
            ChristoffelMode::FiniteDifference { step } => self.metric_derivatives_fd(p, step)?,
        };
        let ginv = self
            .metric_at(p)
            .try_inverse()
            .ok_or(GeomError::OutsideDomain { x: p.x, y: p.y, z: p.z })?;
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for (k, gk) in gamma.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    gk[i][j] = 0.5 * s;
                }
            }
        }
        Ok(Christoffels(gamma))
    }

    /// `|| nabla_X xi - tau X ^ xi ||_g`.
    pub fn killing_residual(&self, p: &Vector3<f64>, x: &Vector3<f64>) -> Result<f64> {
        let gamma = self.christoffels_at(p)?;
        let xi = self.killing_at(p);
        // xi has constant components, so nabla_X xi = Gamma(X, xi).
        let nabla = gamma.contract(x, &xi);
        let expected = self.cross(p, x, &xi) * self.params.tau;
        Ok(self.norm(p, &(nabla - expected)))
    }

    /// `<R(X,Y)Z, W>` computed from Christoffel symbols by central differences,
    /// with the sign convention in which `<R(X,Y)X, Y>` is the sectional
    /// curvature of the plane spanned by orthonormal `X, Y`.
    pub fn curvature(
        &self,
        p: &Vector3<f64>,
        x: &Vector3<f64>,
        y: &Vector3<f64>,
        z: &Vector3<f64>,
        w: &Vector3<f64>,
    ) -> Result<f64> {
        let gamma = self.christoffels_at(p)?;
        let h = self.fd_step(p, AMBIENT_FD_STEP);
        let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3]; // dgamma[m][k][i][j] = d_m Gamma^k_ij
        for m in 0..3 {
            let mut e = Vector3::zeros();
            e[m] = h;
            let gp = self.christoffels_at(&(p + e))?;
            let gm = self.christoffels_at(&(p - e))?;
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        dgamma[m][k][i][j] = (gp.0[k][i][j] - gm.0[k][i][j]) / (2.0 * h);
                    }
                }
            }
        }
        let g = &gamma.0;
        let gw = self.metric_at(p) * w;
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..3 {
                    let xyz = xy * z[k];
                    if xyz == 0.0 {
                        continue;
                    }
                    for l in 0..3 {
                        // R^l_{kij} for R(d_i, d_j) d_k = nabla_i nabla_j d_k - nabla_j nabla_i d_k
                        let mut r = dgamma[i][l][j][k] - dgamma[j][l][i][k];
                        for m in 0..3 {
                            r += g[l][i][m] * g[m][j][k] - g[l][j][m] * g[m][i][k];
                        }
                        total -= xyz * gw[l] * r;
                    }
                }
            }
        }
        Ok(total)
    }

    /// Closed form of `<R(X,Y)Z, W>` for E(kappa, tau).
    pub fn curvature_formula(
        &self,
        p: &Vector3<f64>,
        x: &Vector3<f64>,
        y: &Vector3<f64>,
        z: &Vector3<f64>,
        w: &Vector3<f64>,
    ) -> f64 {
        let AmbientParams { kappa, tau } = self.params;
        let d = self.params.bundle_defect();
        let xi = self.killing_at(p);
        let ip = |a: &Vector3<f64>, b: &Vector3<f64>| self.inner(p, a, b);
        let (xz, yz, zy) = (ip(x, z), ip(y, z), ip(z, y));
        let (xix, xiy, xiz) = (ip(&xi, x), ip(&xi, y), ip(&xi, z));
        let (xw, yw, xiw) = (ip(x, w), ip(y, w), ip(&xi, w));
        (kappa - 3.0 * tau * tau) * (xz * yw - yz * xw)
            + d * (xiy * xiz * xw - xix * xiz * yw)
            + d * (zy * xix - xz * xiy) * xiw
    }

    /// `| <R(X,Y)Z,W>_numeric - <R(X,Y)Z,W>_formula |`.
    pub fn riemann_residual(
        &self,
        p: &Vector3<f64>,
        x: &Vector3<f64>,
        y: &Vector3<f64>,
        z: &Vector3<f64>,
        w: &Vector3<f64>,
    ) -> Result<f64> {
        let numeric = self.curvature(p, x, y, z, w)?;
        Ok((numeric - self.curvature_formula(p, x, y, z, w)).abs())
    }

    /// Sectional curvature of the plane spanned by `X, Y` (numeric route).
    pub fn sectional_curvature(
        &self,
        p: &Vector3<f64>,
        x: &Vector3<f64>,
        y: &Vector3<f64>,
    ) -> Result<f64> {
        let area2 = self.inner(p, x, x) * self.inner(p, y, y) - self.inner(p, x, y).powi(2);
        Ok(self.curvature(p, x, y, x, y)? / area2)
    }

    /// Horizontal orthonormal frame `(E1, E2)` at `p`.
    pub fn horizontal_frame(&self, p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let l = self.conformal_factor(p.x, p.y);
        let tau = self.params.tau;
        (
            Vector3::new(1.0 / l, 0.0, -tau * p.y),
            Vector3::new(0.0, 1.0 / l, tau * p.x),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chart(k: f64, t: f64) -> AmbientChart {
        make_chart(AmbientParams::space_form(k, t).unwrap())
    }

    #[test]
    fn rejects_space_form_in_strict_constructor() {
        assert!(AmbientParams::new(1.0, 0.5).is_err());
        assert!(AmbientParams::new(0.0, 0.0).is_err());
        assert!(AmbientParams::new(-1.0, 0.5).is_ok());
        assert!(AmbientParams::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn metric_examples() {
        let c = chart(0.0, 0.5);
        assert_abs_diff_eq!(c.metric_at(&Vector3::zeros()), Matrix3::identity(), epsilon = 1e-15);
        let g = c.metric_at(&Vector3::new(1.0, 0.0, 0.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.25, -0.5, 0.0, -0.5, 1.0);
        assert_abs_diff_eq!(g, expected, epsilon = 1e-15);
        let c = chart(-1.0, 0.0);
        assert_abs_diff_eq!(
            c.metric_at(&Vector3::new(0.0, 0.0, 7.0)),
            Matrix3::identity(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn domain_restriction_for_negative_kappa() {
        let c = chart(-1.0, 0.5);
        assert!(c.in_domain(&Vector3::new(1.9, 0.0, 3.0)));
        assert!(!c.in_domain(&Vector3::new(2.0, 0.0, 0.0)));
        assert!(c.christoffels_at(&Vector3::new(0.0, 2.5, 0.0)).is_err());
    }

    #[test]
    fn euclidean_christoffels_vanish() {
        let c = chart(0.0, 0.0);
        let g = c.christoffels_at(&Vector3::new(0.3, -1.2, 4.0)).unwrap();
        assert_eq!(g.max_abs_diff(&Christoffels([[[0.0; 3]; 3]; 3])), 0.0);
    }

    #[test]
    fn fd_mode_matches_analytic() {
        let c = chart(0.0, 0.5);
        let p = Vector3::zeros();
        let a = c.christoffels_at(&p).unwrap();
        let f = c
            .with_mode(ChristoffelMode::FiniteDifference { step: 1e-4 })
            .christoffels_at(&p)
            .unwrap();
        assert!(a.max_abs_diff(&f) < 1e-6);
        assert!(a.max_asymmetry() < 1e-15);
    }

    #[test]
    fn killing_field_along_itself() {
        let c = chart(1.0, 0.5);
        let p = Vector3::new(0.4, -0.2, 1.0);
        assert!(c.killing_residual(&p, &c.killing_at(&p)).unwrap() < 1e-12);
        assert_abs_diff_eq!(c.norm(&p, &c.killing_at(&p)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_sectional_curvature() {
        let c = chart(-1.0, 0.0);
        let p = Vector3::new(0.3, 0.1, 0.0);
        let (e1, e2) = c.horizontal_frame(&p);
        assert_abs_diff_eq!(c.sectional_curvature(&p, &e1, &e2).unwrap(), -1.0, epsilon = 1e-7);
        let c = chart(0.0, 0.5);
        let (e1, e2) = c.horizontal_frame(&p);
        assert_abs_diff_eq!(c.sectional_curvature(&p, &e1, &e2).unwrap(), -0.75, epsilon = 1e-7);
        let xi = c.killing_at(&p);
        assert_abs_diff_eq!(c.sectional_curvature(&p, &e1, &xi).unwrap(), 0.25, epsilon = 1e-7);
    }

    #[test]
    fn curvature_formula_is_antisymmetric() {
        let c = chart(2.0, 0.4);
        let p = Vector3::new(0.1, 0.7, -0.3);
        let x = Vector3::new(0.3, -1.0, 0.2);
        let y = Vector3::new(1.1, 0.4, -0.8);
        let z = Vector3::new(-0.5, 0.2, 0.9);
        let w = Vector3::new(0.6, 0.6, 0.1);
        let r1 = c.curvature_formula(&p, &x, &y, &z, &w);
        let r2 = c.curvature_formula(&p, &y, &x, &z, &w);
        let r3 = c.curvature_formula(&p, &z, &w, &x, &y);
        assert_abs_diff_eq!(r1, -r2, epsilon = 1e-12);
        assert_abs_diff_eq!(r1, r3, epsilon = 1e-12);
        assert_abs_diff_eq!(c.curvature_formula(&p, &x, &x, &z, &w), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn riemann_residual_small_for_bundle() {
        let c = chart(0.0, 0.5);
        let p = Vector3::new(0.2, -0.1, 0.3);
        let (e1, _) = c.horizontal_frame(&p);
        let xi = c.killing_at(&p);
        assert!(c.riemann_residual(&p, &e1, &xi, &e1, &xi).unwrap() < 1e-6);
    }
}
