//! Dirichlet eigenvalue problems for Schrodinger operators `L = Delta + V`
//! on rectangular subdomains of a patch grid, the stability potential, and
//! the eigenvalue estimates built on them.
//!
//! The operator is assembled in divergence form with metric weights
//! `a^{ij} = sqrt(det I) I^{ij}` (edge midpoints for `a^{uu}, a^{vv}`, nodes
//! for the mixed term) and symmetrized with the area weights `w = sqrt(det I)`,
//! so the stored matrix is `B = W^{-1/2} K W^{-1/2} - V` and its eigenvalues
//! are those of `-Delta - V`.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientParams;
use crate::arpair::{ar_forms_at, ArContext};
use crate::defaults::{EIGEN_ACCEPT, EIGEN_MAX_ITER, EIGEN_TOL, FUNTES_COLLAR, MIN_SPECTRAL_INTERIOR};
use crate::error::{GeomError, Result};
use crate::simons::{laplace_beltrami, ScalarField};
use crate::surface::{LocalGeometry, SurfacePatch};

/// `Ric(N) = (kappa - 4 tau^2)|T|^2 + 2 tau^2`.
pub fn ricci_normal(g: &LocalGeometry, params: AmbientParams) -> f64 {
    params.bundle_defect() * g.norm_t_sq() + 2.0 * params.tau * params.tau
}

/// Stability potential `V = |A|^2 + Ric(N)`.
pub fn stability_potential(g: &LocalGeometry, params: AmbientParams) -> f64 {
    g.operator_norm_sq(&g.shape) + ricci_normal(g, params)
}

/// `|V + 2K - (4H^2 + kappa + (kappa - 4tau^2) nu^2)|`.
pub fn v_plus_2k_residual(patch: &SurfacePatch, u: f64, v: f64) -> Result<f64> {
    patch.check_stencil(u, v)?;
    let p = patch.chart.params;
    let g = patch.geometry_at(u, v)?;
    let lhs = stability_potential(&g, p) + 2.0 * g.k;
    let rhs = 4.0 * g.h * g.h + p.kappa + p.bundle_defect() * g.nu * g.nu;
    Ok((lhs - rhs).abs())
}

/// Closed box of grid nodes `[i0, i1] x [j0, j1]`; its boundary nodes carry
/// the Dirichlet condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Omega {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Omega {
    /// Box centred in the grid with `half` cells on each side of the centre node.
    pub fn centered(grid: (usize, usize), half: usize) -> Self {
        let (ci, cj) = ((grid.0 - 1) / 2, (grid.1 - 1) / 2);
        Self {
            i0: ci.saturating_sub(half),
            i1: (ci + half).min(grid.0 - 1),
            j0: cj.saturating_sub(half),
            j1: (cj + half).min(grid.1 - 1),
        }
    }

    pub fn interior_dims(&self) -> (usize, usize) {
        (self.i1.saturating_sub(self.i0 + 1), self.j1.saturating_sub(self.j0 + 1))
    }

    pub fn contains_interior(&self, i: usize, j: usize) -> bool {
        i > self.i0 && i < self.i1 && j > self.j0 && j < self.j1
    }

    pub fn contains(&self, other: &Omega) -> bool {
        self.i0 <= other.i0 && other.i1 <= self.i1 && self.j0 <= other.j0 && other.j1 <= self.j1
    }
}

/// Sparse symmetric operator with its Dirichlet eigenpair once computed.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    pub patch: SurfacePatch,
    pub omega: Omega,
    /// Potential at the interior nodes, lexicographic order.
    pub potential: Vec<f64>,
    /// Area weights `sqrt(det I) h_u h_v` at the interior nodes.
    pub weights: Vec<f64>,
    /// Rows of `B` as `(column, value)`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub lambda1: Option<f64>,
    pub eigenfunction: Option<ScalarField>,
    pub eigen_residual: Option<f64>,
    pub iterations: Option<usize>,
}

fn metric_weights(first: &Matrix2<f64>) -> Matrix2<f64> {
    let det = first.determinant();
    let inv = first.try_inverse().unwrap_or_else(Matrix2::zeros);
    inv * det.sqrt()
}

/// Assemble `-Delta - V` on `omega` with Dirichlet boundary.
pub fn assemble(patch: &SurfacePatch, omega: Omega, potential: &ScalarField) -> Result<SpectralProblem> {
    let (nu, nv) = patch.grid;
    if omega.i1 >= nu || omega.j1 >= nv || omega.i0 >= omega.i1 || omega.j0 >= omega.j1 {
        return Err(GeomError::Spectral(format!("omega {omega:?} exceeds the {nu}x{nv} grid")));
    }
    let (mi, mj) = omega.interior_dims();
    if mi < MIN_SPECTRAL_INTERIOR || mj < MIN_SPECTRAL_INTERIOR {
        return Err(GeomError::Spectral(format!(
            "omega has {mi}x{mj} interior nodes, need at least {MIN_SPECTRAL_INTERIOR}"
        )));
    }
    if potential.grid != patch.grid {
        return Err(GeomError::Spectral("potential grid does not match the patch".into()));
    }
    let (hu, hv) = patch.steps();
    let r = patch.rect;
    let at = |a: f64, b: f64| -> Result<Matrix2<f64>> { Ok(metric_weights(&patch.first_form(a, b)?)) };
    let node_u = |i: f64| r.u0 + i * hu;
    let node_v = |j: f64| r.v0 + j * hv;

    let index = |i: usize, j: usize| (i - omega.i0 - 1) * mj + (j - omega.j0 - 1);
    let interior: Vec<(usize, usize)> = (omega.i0 + 1..omega.i1)
        .flat_map(|i| (omega.j0 + 1..omega.j1).map(move |j| (i, j)))
        .collect();
    let weights: Vec<f64> = interior
        .par_iter()
        .map(|&(i, j)| Ok(patch.first_form(node_u(i as f64), node_v(j as f64))?.determinant().sqrt()))
        .collect::<Result<_>>()?;
    let cell = hu * hv;

    let rows: Vec<Vec<(usize, f64)>> = interior
        .par_iter()
        .enumerate()
        .map(|(row, &(i, j))| -> Result<Vec<(usize, f64)>> {
            let (fi, fj) = (i as f64, j as f64);
            let au_p = at(node_u(fi + 0.5), node_v(fj))?[(0, 0)] / (hu * hu);
            let au_m = at(node_u(fi - 0.5), node_v(fj))?[(0, 0)] / (hu * hu);
            let av_p = at(node_u(fi), node_v(fj + 0.5))?[(1, 1)] / (hv * hv);
            let av_m = at(node_u(fi), node_v(fj - 0.5))?[(1, 1)] / (hv * hv);
            let c = 1.0 / (4.0 * hu * hv);
            let x = |di: f64, dj: f64| -> Result<f64> { Ok(at(node_u(fi + di), node_v(fj + dj))?[(0, 1)]) };
            let (x_ip, x_im, x_jp, x_jm) = (x(1.0, 0.0)?, x(-1.0, 0.0)?, x(0.0, 1.0)?, x(0.0, -1.0)?);
            let mut entries: Vec<((usize, usize), f64)> = vec![
                ((i, j), au_p + au_m + av_p + av_m),
                ((i + 1, j), -au_p),
                ((i - 1, j), -au_m),
                ((i, j + 1), -av_p),
                ((i, j - 1), -av_m),
                ((i + 1, j + 1), -c * (x_ip + x_jp)),
                ((i - 1, j - 1), -c * (x_im + x_jm)),
                ((i + 1, j - 1), c * (x_ip + x_jm)),
                ((i - 1, j + 1), c * (x_im + x_jp)),
            ];
            entries.retain(|((a, b), _)| omega.contains_interior(*a, *b));
            let wi = weights[row];
            let mut out: Vec<(usize, f64)> = entries
                .into_iter()
                .map(|((a, b), k)| {
                    let col = index(a, b);
                    let val = k / (wi * weights[col]).sqrt();
                    (col, if col == row { val - potential.get(i, j) } else { val })
                })
                .collect();
            out.sort_by_key(|e| e.0);
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let pot = interior.iter().map(|&(i, j)| potential.get(i, j)).collect();
    Ok(SpectralProblem {
        patch: patch.clone(),
        omega,
        potential: pot,
        weights: weights.iter().map(|w| w * cell).collect(),
        rows,
        lambda1: None,
        eigenfunction: None,
        eigen_residual: None,
        iterations: None,
    })
}

/// Symmetric positive-definite band matrix and its Cholesky factor.
struct Band {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Band {
    fn from_rows(rows: &[Vec<(usize, f64)>], bw: usize, shift: f64) -> Self {
        let n = rows.len();
        let mut data = vec![0.0; n * (bw + 1)];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                if j <= i {
                    let val = if i == j { v - shift } else { v };
                    data[i * (bw + 1) + (j + bw - i)] = val;
                }
            }
        }
        Self { n, bw, data }
    }

    /// In-place Cholesky; `false` if the matrix is not positive definite.
    fn factor(&mut self) -> bool {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(self.bw));
                let ri = i * w + self.bw - i;
                let rj = j * w + self.bw - j;
                let mut s = self.data[ri + j];
                for k in klo..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return false;
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        true
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let ri = i * w + self.bw - i;
            let mut s = y[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.data[ri + k] * y[k];
            }
            y[i] = s / self.data[ri + i];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.data[k * w + self.bw - k + i] * y[k];
            }
            y[i] = s / self.data[i * w + self.bw - i + i];
        }
        y
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl SpectralProblem {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `max |B_ij - B_ji|`.
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                let t = self.rows[j].iter().find(|e| e.0 == i).map(|e| e.1).unwrap_or(0.0);
                worst = worst.max((v - t).abs());
            }
        }
        worst
    }

    /// The same operator with `V + c` in place of `V`.
    pub fn shifted(&self, c: f64) -> SpectralProblem {
        let mut out = self.clone();
        for (i, row) in out.rows.iter_mut().enumerate() {
            for e in row.iter_mut() {
                if e.0 == i {
                    e.1 -= c;
                }
            }
        }
        out.potential.iter_mut().for_each(|v| *v += c);
        out.lambda1 = None;
        out.eigenfunction = None;
        out.eigen_residual = None;
        out.iterations = None;
        out
    }

    /// Dense copy of `B`, for small problems.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    fn bandwidth(&self) -> usize {
        self.rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |e| i.abs_diff(e.0))).max().unwrap_or(0)
    }

    /// First Dirichlet eigenpair of `-Delta - V` by shifted inverse iteration.
    pub fn lambda1(&mut self) -> Result<(f64, ScalarField)> {
        let n = self.dim();
        let bw = self.bandwidth();
        let gersh = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, v)| if j == i { v } else { -v.abs() }).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let mut shift = gersh - 1e-3 * gersh.abs().max(1.0);
        let mut band = Band::from_rows(&self.rows, bw, shift);
        if !band.factor() {
            return Err(GeomError::Spectral("Gershgorin shift failed to factor".into()));
        }
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        let mut rq = f64::NAN;
        let mut res = f64::INFINITY;
        let mut iterations = 0;
        let (mut best, mut best_it) = (f64::INFINITY, 0);
        for it in 1..=EIGEN_MAX_ITER {
            iterations = it;
            let y = band.solve(&x);
            let ny = norm(&y);
            x = y.iter().map(|v| v / ny).collect();
            let bx = self.apply(&x);
            rq = bx.iter().zip(&x).map(|(a, b)| a * b).sum();
            let r: Vec<f64> = bx.iter().zip(&x).map(|(a, b)| a - rq * b).collect();
            res = norm(&r);
            if res < EIGEN_TOL {
                break;
            }
            if res < 0.9 * best {
                (best, best_it) = (res, it);
            } else if res < EIGEN_ACCEPT && it - best_it >= 10 {
                // Rounding floor of the residual reached.
                break;
            }
            let candidate = rq - 2.0 * res;
            if candidate > shift && rq - candidate < 0.5 * (rq - shift) {
                let mut trial = Band::from_rows(&self.rows, bw, candidate);
                if trial.factor() {
                    band = trial;
                    shift = candidate;
                }
            }
        }
        if !(res < EIGEN_ACCEPT) {
            return Err(GeomError::NoConvergence { iterations, residual: res });
        }
        if x.iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        let mut field = ScalarField::zeros(self.patch.grid);
        let mj = self.omega.interior_dims().1;
        for (k, (&xi, &w)) in x.iter().zip(&self.weights).enumerate() {
            let (i, j) = (self.omega.i0 + 1 + k / mj, self.omega.j0 + 1 + k % mj);
            field.set(i, j, xi / w.sqrt());
        }
        self.lambda1 = Some(rq);
        self.eigenfunction = Some(field.clone());
        self.eigen_residual = Some(res);
        self.iterations = Some(iterations);
        Ok((rq, field))
    }

    /// `sum w rho^2` over the interior nodes.
    pub fn weighted_norm_sq(&self, f: &ScalarField) -> f64 {
        let mj = self.omega.interior_dims().1;
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let v = f.get(self.omega.i0 + 1 + k / mj, self.omega.j0 + 1 + k % mj);
                w * v * v
            })
            .sum()
    }

    /// Smallest eigenfunction value over the interior nodes.
    pub fn eigenfunction_min(&self) -> Option<f64> {
        let f = self.eigenfunction.as_ref()?;
        let mj = self.omega.interior_dims().1;
        Some(
            (0..self.dim())
                .map(|k| f.get(self.omega.i0 + 1 + k / mj, self.omega.j0 + 1 + k % mj))
                .fold(f64::INFINITY, f64::min),
        )
    }
}

/// Stability potential sampled on the patch grid (zero on the boundary ring).
pub fn stability_field(patch: &SurfacePatch) -> Result<ScalarField> {
    let p = patch.chart.params;
    ScalarField::sample(patch, |u, v| Ok(stability_potential(&patch.local_geometry(u, v)?, p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionStep {
    /// Half-width of `Omega` in cells.
    pub radius: usize,
    pub lambda1: f64,
    /// `-inf_Omega (V + 2K)`.
    pub bound: f64,
    pub crossed: bool,
}

/// `lambda_1(L, Omega_r)` for centred boxes of the given half-widths, against
/// the bound `-inf (V + 2K)` over each box.
pub fn estimate_check(patch: &SurfacePatch, radii: &[usize]) -> Result<Vec<ExhaustionStep>> {
    estimate_check_with(patch, &stability_field(patch)?, radii)
}

/// As [`estimate_check`] with an explicit potential `V`.
pub fn estimate_check_with(patch: &SurfacePatch, v: &ScalarField, radii: &[usize]) -> Result<Vec<ExhaustionStep>> {
    let mut steps = Vec::with_capacity(radii.len());
    for &r in radii {
        let omega = Omega::centered(patch.grid, r);
        if omega.i0 < 1 || omega.j0 < 1 || omega.i1 + 2 > patch.grid.0 || omega.j1 + 2 > patch.grid.1 {
            return Err(GeomError::Spectral(format!("radius {r} leaves no curvature stencil inside the patch")));
        }
        let mut prob = assemble(patch, omega, v)?;
        let (l1, _) = prob.lambda1()?;
        let nodes: Vec<(usize, usize)> = (omega.i0 + 1..omega.i1)
            .flat_map(|i| (omega.j0 + 1..omega.j1).map(move |j| (i, j)))
            .collect();
        let inf = nodes
            .par_iter()
            .map(|&(i, j)| {
                let (u, w) = patch.node(i, j);
                Ok(v.get(i, j) + 2.0 * patch.gaussian_curvature(u, w)?)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let bound = -inf;
        steps.push(ExhaustionStep { radius: r, lambda1: l1, bound, crossed: l1 < bound });
    }
    Ok(steps)
}

/// `int |S|^2 |grad phi|^2 - int phi^2 |S| C_Omega` with
/// `C_Omega = |S| (V + lambda_1) + Delta |S|`; nonnegative when the
/// test-function inequality holds.
pub fn funtes_check(problem: &SpectralProblem, ctx: &ArContext, phi: &ScalarField) -> Result<f64> {
    let l1 = problem.lambda1.ok_or_else(|| GeomError::Spectral("eigenpair not computed".into()))?;
    let patch = &problem.patch;
    let om = problem.omega;
    let (nu, nv) = patch.grid;
    let c = FUNTES_COLLAR;
    for i in 0..nu {
        for j in 0..nv {
            let inner = i > om.i0 + c && i + c < om.i1 && j > om.j0 + c && j + c < om.j1;
            if !inner && phi.get(i, j) != 0.0 {
                return Err(GeomError::Spectral(format!("test function nonzero at node ({i}, {j}) outside the support box")));
            }
        }
    }
    let norm_s = ScalarField::sample(patch, |u, v| {
        if patch.check_stencil(u, v).is_err() {
            return Ok(0.0);
        }
        Ok(ar_forms_at(patch, ctx, u, v)?.norm_s)
    })?;
    let (hu, hv) = patch.steps();
    let mj = om.interior_dims().1;
    let terms: Vec<f64> = (0..problem.dim())
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let (i, j) = (om.i0 + 1 + k / mj, om.j0 + 1 + k % mj);
            let (u, v) = patch.node(i, j);
            let f = phi.get(i, j);
            let d = nalgebra::Vector2::new(
                (phi.get(i + 1, j) - phi.get(i - 1, j)) / (2.0 * hu),
                (phi.get(i, j + 1) - phi.get(i, j - 1)) / (2.0 * hv),
            );
            if f == 0.0 && d == nalgebra::Vector2::zeros() {
                return Ok(0.0);
            }
            let inv = patch.first_form(u, v)?.try_inverse().ok_or(GeomError::DegenerateImmersion { u, v })?;
            let s = norm_s.get(i, j);
            let grad_sq = d.dot(&(inv * d));
            let lap = laplace_beltrami(patch, &norm_s, i, j)?;
            let c_omega = s * (problem.potential[k] + l1) + lap;
            Ok(problem.weights[k] * (s * s * grad_sq - f * f * s * c_omega))
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{make_chart, AmbientParams};
    use crate::surface::{Immersion, Jet, Rect};
    use nalgebra::Vector3;
    use std::sync::Arc;

    struct Flat;
    impl Immersion for Flat {
        fn position(&self, u: f64, v: f64) -> Vector3<f64> {
            Vector3::new(u, v, 0.0)
        }
        fn jet(&self, u: f64, v: f64) -> Option<Jet> {
            let z = Vector3::zeros();
            Some(Jet { p: self.position(u, v), fu: Vector3::x(), fv: Vector3::y(), fuu: z, fuv: z, fvv: z })
        }
    }

    fn square(n: usize, side: f64) -> SurfacePatch {
        SurfacePatch::new("square", make_chart(AmbientParams::euclidean()), Arc::new(Flat), Rect::new(0.0, side, 0.0, side), n)
    }

    #[test]
    fn banded_cholesky_solves() {
        let rows = vec![
            vec![(0, 4.0), (1, -1.0)],
            vec![(0, -1.0), (1, 4.0), (2, -1.0)],
            vec![(1, -1.0), (2, 4.0)],
        ];
        let mut b = Band::from_rows(&rows, 1, 0.0);
        assert!(b.factor());
        let x = b.solve(&[3.0, 2.0, 3.0]);
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-14);
        }
        let mut b = Band::from_rows(&rows, 1, 10.0);
        assert!(!b.factor());
    }

    #[test]
    fn flat_stencil_is_five_point() {
        let p = square(20, 19.0);
        let v = ScalarField::zeros(p.grid);
        let prob = assemble(&p, Omega { i0: 0, i1: 19, j0: 0, j1: 19 }, &v).unwrap();
        let row: Vec<_> = prob.rows[40].iter().filter(|e| e.1 != 0.0).cloned().collect();
        assert_eq!(row.len(), 5);
        for &(j, val) in &row {
            let expected = if j == 40 { 4.0 } else { -1.0 };
            assert!((val - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn small_problem_matches_dense_eigensolver() {
        let p = square(20, std::f64::consts::PI);
        let v = ScalarField::sample(&p, |u, w| Ok(0.3 * (u * w).sin())).unwrap();
        let mut prob = assemble(&p, Omega { i0: 0, i1: 19, j0: 0, j1: 19 }, &v).unwrap();
        let (l1, _) = prob.lambda1().unwrap();
        let dense = nalgebra::SymmetricEigen::new(prob.dense());
        let min = dense.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((l1 - min).abs() < 1e-9, "{l1} vs {min}");
    }

    #[test]
    fn too_small_domain_rejected() {
        let p = square(20, 1.0);
        let v = ScalarField::zeros(p.grid);
        assert!(assemble(&p, Omega { i0: 2, i1: 17, j0: 0, j1: 19 }, &v).is_err());
        assert!(assemble(&p, Omega { i0: 0, i1: 20, j0: 0, j1: 19 }, &v).is_err());
    }

    #[test]
    fn zero_test_function_gives_zero_margin() {
        let p = square(24, 1.0);
        let v = ScalarField::zeros(p.grid);
        let mut prob = assemble(&p, Omega { i0: 0, i1: 23, j0: 0, j1: 23 }, &v).unwrap();
        prob.lambda1().unwrap();
        let ctx = ArContext::from_h(0.5, AmbientParams::euclidean()).unwrap();
        let m = funtes_check(&prob, &ctx, &ScalarField::zeros(p.grid)).unwrap();
        assert_eq!(m, 0.0);
        let mut bad = ScalarField::zeros(p.grid);
        bad.set(1, 5, 1.0);
        assert!(funtes_check(&prob, &ctx, &bad).is_err());
    }

    #[test]
    fn flat_square_first_eigenvalue() {
        let p = square(128, std::f64::consts::PI);
        let v = ScalarField::zeros(p.grid);
        let mut prob = assemble(&p, Omega { i0: 0, i1: 127, j0: 0, j1: 127 }, &v).unwrap();
        let (l1, rho) = prob.lambda1().unwrap();
        assert!((l1 - 2.0).abs() < 0.04, "{l1}");
        assert!(prob.eigenfunction_min().unwrap() > 0.0);
        assert!((prob.weighted_norm_sq(&rho) - 1.0).abs() < 1e-12);
        assert_eq!(prob.symmetry_residual(), 0.0);
    }

    #[test]
    fn constant_shift_is_exact() {
        let p = square(32, 2.0);
        let v = ScalarField::sample(&p, |u, w| Ok(u * w)).unwrap();
        let mut a = assemble(&p, Omega { i0: 0, i1: 31, j0: 0, j1: 31 }, &v).unwrap();
        let mut b = a.shifted(1.5);
        let (la, _) = a.lambda1().unwrap();
        let (lb, _) = b.lambda1().unwrap();
        assert!((la - 1.5 - lb).abs() < 1e-9);
    }

    #[test]
    fn nested_domains_are_ordered() {
        let p = square(48, 2.0);
        let v = ScalarField::sample(&p, |u, w| Ok((u - w).cos())).unwrap();
        let outer = Omega { i0: 0, i1: 47, j0: 0, j1: 47 };
        let inner = Omega { i0: 5, i1: 40, j0: 3, j1: 44 };
        assert!(outer.contains(&inner));
        let lo = assemble(&p, outer, &v).unwrap().lambda1().unwrap().0;
        let li = assemble(&p, inner, &v).unwrap().lambda1().unwrap().0;
        assert!(li >= lo);
    }

    #[test]
    fn exhaustion_radius_guard() {
        let p = square(40, 2.0);
        assert!(estimate_check(&p, &[19]).is_err());
        let st = estimate_check(&p, &[10, 18]).unwrap();
        assert!(st[0].lambda1 > st[1].lambda1);
        assert_eq!(st[0].bound, 0.0);
    }
}
