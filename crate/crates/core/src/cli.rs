//! Command-line front end. `verify` runs the residual suites on a catalog
//! surface, `thresholds` evaluates the pinching thresholds, `spectrum` runs a
//! stability exhaustion and `catalog` lists the named surfaces. Reports are
//! JSON; exit codes are 0 (pass), 1 (tolerance failure), 2 (usage error).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientParams;
use crate::arpair::{
    ar_codazzi_residual, ar_forms_at, holomorphicity_residual, pair_identity_residuals, ArContext,
};
use crate::catalog::{perturb, Bump, SurfaceSpec};
use crate::defaults as d;
use crate::error::GeomError;
use crate::pinching::{threshold, threshold_oracle, Case};
use crate::simons::{curvature_lower_bound, delta_u_inequality, simons_terms, ScalarField};
use crate::spectral::{assemble, estimate_check_with, stability_field, v_plus_2k_residual, ExhaustionStep, Omega};
use crate::surface::{
    conformal_sup, fundamental_sup, mean_curvature_constancy, refinement_order, SurfacePatch,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "arshape", version, about = "Abresch-Rosenberg pair verification on CMC surfaces in E(kappa, tau)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the residual suites on a catalog surface.
    Verify(VerifyArgs),
    /// Pinching thresholds for one parameter triple or a CSV sweep.
    Thresholds(ThresholdArgs),
    /// First Dirichlet eigenvalues of the stability operator on growing boxes.
    Spectrum(SpectrumArgs),
    /// List the catalog surfaces with their default parameters.
    Catalog(CatalogArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid size (nodes per side).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Multiplier applied to every residual tolerance.
    #[arg(long = "tol-scale")]
    pub tol_scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Catalog name or JSON spec, e.g. '{"name":"hopf-cylinder","kappa":1,"tau":0.5,"H":0}'.
    #[arg(long)]
    pub surface: Option<String>,
    /// Normal perturbation amplitude.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Skip the refinement study on the halved grid step.
    #[arg(long)]
    pub no_refine: bool,
    /// Per-node CSV dump.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long = "H", allow_hyphen_values = true)]
    pub h: Option<f64>,
    /// CSV with columns kappa,tau,H; one JSON line per row.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    #[default]
    Stability,
    Zero,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub surface: Option<String>,
    /// Box half-widths in cells, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub potential: Option<Potential>,
}

#[derive(Args, Debug)]
pub struct CatalogArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub eps: f64,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
}

fn default_fraction() -> f64 {
    d::BUMP_FRACTION
}

/// Residual tolerances; every entry must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub riemann: f64,
    pub killing: f64,
    pub fundamental: f64,
    pub conformal: f64,
    pub pointwise: f64,
    pub cmc_gate: f64,
    pub ar_codazzi: f64,
    pub holomorphic: f64,
    pub pair_identity: f64,
    pub q_route: f64,
    pub hopf_exact: f64,
    pub q_spread: f64,
    pub gradient_identity: f64,
    pub delta_u_slack: f64,
    pub curvature_bound_slack: f64,
    pub v_plus_2k: f64,
    pub oracle: f64,
    pub min_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            riemann: d::RIEMANN_TOL,
            killing: d::KILLING_TOL_ANALYTIC,
            fundamental: d::FUNDAMENTAL_TOL,
            conformal: d::CONFORMAL_RESIDUAL_TOL,
            pointwise: d::POINTWISE_TOL,
            cmc_gate: d::CMC_GATE,
            ar_codazzi: d::AR_CODAZZI_TOL,
            holomorphic: d::HOLOMORPHIC_TOL,
            pair_identity: d::PAIR_IDENTITY_TOL,
            q_route: d::Q_ROUTE_TOL,
            hopf_exact: d::HOPF_EXACT_TOL,
            q_spread: d::Q_SPREAD_TOL,
            gradient_identity: d::GRAD_IDENTITY_TOL,
            delta_u_slack: d::DELTA_U_SLACK,
            curvature_bound_slack: d::CURVATURE_BOUND_SLACK,
            v_plus_2k: d::V_PLUS_2K_TOL,
            oracle: d::ORACLE_TOL,
            min_order: d::MIN_REFINEMENT_ORDER,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 18] {
        [
            ("riemann", self.riemann),
            ("killing", self.killing),
            ("fundamental", self.fundamental),
            ("conformal", self.conformal),
            ("pointwise", self.pointwise),
            ("cmc_gate", self.cmc_gate),
            ("ar_codazzi", self.ar_codazzi),
            ("holomorphic", self.holomorphic),
            ("pair_identity", self.pair_identity),
            ("q_route", self.q_route),
            ("hopf_exact", self.hopf_exact),
            ("q_spread", self.q_spread),
            ("gradient_identity", self.gradient_identity),
            ("delta_u_slack", self.delta_u_slack),
            ("curvature_bound_slack", self.curvature_bound_slack),
            ("v_plus_2k", self.v_plus_2k),
            ("oracle", self.oracle),
            ("min_order", self.min_order),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in self.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("tolerance '{name}' must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Every residual tolerance times `s`; the order threshold is unchanged.
    pub fn scaled(&self, s: f64) -> Self {
        let mut t = *self;
        for x in [
            &mut t.riemann,
            &mut t.killing,
            &mut t.fundamental,
            &mut t.conformal,
            &mut t.pointwise,
            &mut t.cmc_gate,
            &mut t.ar_codazzi,
            &mut t.holomorphic,
            &mut t.pair_identity,
            &mut t.q_route,
            &mut t.hopf_exact,
            &mut t.q_spread,
            &mut t.gradient_identity,
            &mut t.delta_u_slack,
            &mut t.curvature_bound_slack,
            &mut t.v_plus_2k,
            &mut t.oracle,
        ] {
            *x *= s;
        }
        t
    }
}

/// JSON run configuration. Command-line flags override its entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: Option<SurfaceSpec>,
    pub grid: Option<usize>,
    pub refine: Option<bool>,
    pub perturb: Option<PerturbConfig>,
    pub tolerances: Option<Tolerances>,
    pub tol_scale: Option<f64>,
    pub kappa: Option<f64>,
    pub tau: Option<f64>,
    #[serde(rename = "H")]
    pub h: Option<f64>,
    pub sweep: Option<PathBuf>,
    pub radii: Option<Vec<usize>>,
    pub potential: Option<Potential>,
    pub out: Option<PathBuf>,
    pub dump: Option<PathBuf>,
}

/// A usage or configuration error (exit 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl From<GeomError> for Usage {
    fn from(e: GeomError) -> Self {
        Usage(e.to_string())
    }
}

type CmdResult = Result<i32, Usage>;

fn load_config(path: Option<&Path>) -> Result<RunConfig, Usage> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("invalid config {}: {e}", path.display())))
}

fn parse_surface(s: &str) -> Result<SurfaceSpec, Usage> {
    let json = if s.trim_start().starts_with('{') { s.to_string() } else { format!("{{\"name\":\"{s}\"}}") };
    serde_json::from_str(&json).map_err(|e| Usage(format!("invalid surface '{s}': {e}")))
}

struct Resolved {
    cfg: RunConfig,
    grid: usize,
    tolerances: Tolerances,
    tol_scale: f64,
    out: Option<PathBuf>,
}

fn resolve(common: &CommonArgs) -> Result<Resolved, Usage> {
    let cfg = load_config(common.config.as_deref())?;
    let grid = common.grid.or(cfg.grid).unwrap_or(d::DEFAULT_GRID);
    if grid < d::MIN_GRID {
        return Err(Usage(format!("grid too small: {grid} < {}", d::MIN_GRID)));
    }
    let tol_scale = common.tol_scale.or(cfg.tol_scale).unwrap_or(1.0);
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        return Err(Usage(format!("tol-scale must be strictly positive, got {tol_scale}")));
    }
    let base = cfg.tolerances.unwrap_or_default();
    base.validate().map_err(Usage)?;
    let out = common.out.clone().or_else(|| cfg.out.clone());
    Ok(Resolved { tolerances: base.scaled(tol_scale), cfg, grid, tol_scale, out })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Usage> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes()).and_then(|_| o.flush()).map_err(|e| Usage(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub ambient_seed: u64,
}

fn provenance() -> Provenance {
    Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        ambient_seed: d::AMBIENT_SEED,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `value <= tolerance`.
    Le,
    /// `value >= tolerance`.
    Ge,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub relation: Relation,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl Check {
    fn le(suite: &str, name: &str, value: f64, tol: f64) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            value: Some(value),
            tolerance: Some(tol),
            relation: Relation::Le,
            pass: value <= tol,
            note: None,
        }
    }

    fn ge(suite: &str, name: &str, value: f64, tol: f64) -> Self {
        Self { relation: Relation::Ge, pass: value >= tol, ..Self::le(suite, name, value, tol) }
    }

    fn info(suite: &str, name: &str, value: f64) -> Self {
        Self { tolerance: None, relation: Relation::Info, pass: true, ..Self::le(suite, name, value, 0.0) }
    }

    fn order(name: &str, coarse: f64, fine: f64, min: f64) -> Self {
        match refinement_order(coarse, fine) {
            Some(o) => Self::ge("refinement", name, o, min),
            None => Self {
                value: None,
                tolerance: Some(min),
                relation: Relation::Ge,
                pass: true,
                note: Some(format!("coarse residual {coarse:e} at noise floor")),
                ..Self::le("refinement", name, 0.0, 0.0)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub suite: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub command: String,
    pub surface: SurfaceSpec,
    pub perturbation: Option<PerturbConfig>,
    pub grid: usize,
    pub fine_grid: Option<usize>,
    pub tol_scale: f64,
    pub tolerances: Tolerances,
    pub h_bar: f64,
    pub checks: Vec<Check>,
    pub skipped: Vec<Skip>,
    pub pass: bool,
    pub provenance: Provenance,
}

fn sup_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

/// Sups of every residual family on one patch.
#[derive(Debug, Default, Clone)]
struct SuiteValues {
    fundamental: [(&'static str, f64); 5],
    conformal: Option<f64>,
    pointwise: f64,
    v_plus_2k: f64,
    h_bar: f64,
    defect: f64,
    ar: Option<ArValues>,
}

#[derive(Debug, Default, Clone)]
struct ArValues {
    codazzi: f64,
    pair: f64,
    holomorphic: Option<f64>,
    q_route: Option<f64>,
    simons: f64,
    simons_terms: f64,
    gradient_identity: f64,
    delta_u_min: f64,
    curvature_margin_min: Option<f64>,
    sup_s: f64,
    sup_s_flipped: f64,
    q_spread: f64,
}

fn suite_values(patch: &SurfacePatch) -> Result<(SuiteValues, Option<String>), GeomError> {
    let ring = d::BOUNDARY_RING;
    let f = fundamental_sup(patch, ring)?;
    let conformal = if patch.is_conformal { Some(conformal_sup(patch, ring)?.max()) } else { None };
    let pointwise = sup_of(patch.sweep(ring, |u, v| {
        let (a, b, c) = patch.local_geometry(u, v)?.invariant_defects();
        Ok(a.max(b).max(c))
    })?.into_iter().map(|x| x.1));
    let v_plus_2k = sup_of(patch.sweep(ring, |u, v| v_plus_2k_residual(patch, u, v))?.into_iter().map(|x| x.1));
    let (h_bar, defect) = mean_curvature_constancy(patch)?;
    let mut out = SuiteValues { fundamental: f.named(), conformal, pointwise, v_plus_2k, h_bar, defect, ar: None };
    let ctx = match ArContext::ungated(patch) {
        Ok(c) => c,
        Err(GeomError::ArUndefined) => return Ok((out, Some("AR constants undefined for H = tau = 0".into()))),
        Err(e) => return Err(e),
    };
    let params = patch.chart.params;
    let flipped = patch.flipped();
    let flip_ctx = ArContext::ungated(&flipped)?;
    let rows = patch.sweep(ring, |u, v| {
        let g = ar_forms_at(patch, &ctx, u, v)?;
        let t = simons_terms(patch, &ctx, u, v)?;
        let hol = if patch.is_conformal { Some(holomorphicity_residual(patch, &ctx, u, v)?) } else { None };
        let qr = patch.is_conformal.then(|| (g.q_ar - g.q_ar_from_differential()).abs());
        let margin = if params.is_space_form() {
            None
        } else {
            let k = patch.gaussian_curvature(u, v)?;
            Some(k - curvature_lower_bound(ctx.h_bar, params, g.norm_s)?)
        };
        Ok((
            ar_codazzi_residual(patch, &ctx, u, v)?,
            pair_identity_residuals(patch, &ctx, u, v)?.max(),
            hol,
            qr,
            t,
            delta_u_inequality(patch, &ctx, u, v)?,
            margin,
            g.q_ar,
            ar_forms_at(&flipped, &flip_ctx, u, v)?.norm_s,
        ))
    })?;
    let r = || rows.iter().map(|x| &x.1);
    let q_max = r().map(|x| x.7).fold(f64::NEG_INFINITY, f64::max);
    let q_min = r().map(|x| x.7).fold(f64::INFINITY, f64::min);
    out.ar = Some(ArValues {
        codazzi: sup_of(r().map(|x| x.0)),
        pair: sup_of(r().map(|x| x.1)),
        holomorphic: patch.is_conformal.then(|| sup_of(r().filter_map(|x| x.2))),
        q_route: patch.is_conformal.then(|| sup_of(r().filter_map(|x| x.3))),
        simons: sup_of(r().map(|x| x.4.residual)),
        simons_terms: sup_of(r().map(|x| x.4.half_laplacian.abs().max(x.4.grad_sq).max(x.4.curvature_term.abs()))),
        gradient_identity: sup_of(r().filter_map(|x| x.4.gradient_identity)),
        delta_u_min: r().map(|x| x.5).fold(f64::INFINITY, f64::min),
        curvature_margin_min: (!params.is_space_form()).then(|| r().filter_map(|x| x.6).fold(f64::INFINITY, f64::min)),
        sup_s: sup_of(r().map(|x| x.4.norm_s)),
        sup_s_flipped: sup_of(r().map(|x| x.8)),
        q_spread: q_max - q_min,
    });
    Ok((out, None))
}

fn ambient_checks(patch: &SurfacePatch, tol: &Tolerances) -> Result<Vec<Check>, GeomError> {
    let chart = patch.chart;
    let mut rng = ChaCha8Rng::seed_from_u64(d::AMBIENT_SEED);
    let (mut riem, mut kill): (f64, f64) = (0.0, 0.0);
    let (nu, nv) = patch.grid;
    for _ in 0..d::AMBIENT_SAMPLES {
        let (u, v) = patch.node(rng.gen_range(0..nu), rng.gen_range(0..nv));
        let p = patch.jet(u, v).p;
        let mut vec3 = || nalgebra::Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (x, y, z, w) = (vec3(), vec3(), vec3(), vec3());
        riem = riem.max(chart.riemann_residual(&p, &x, &y, &z, &w)?);
        kill = kill.max(chart.killing_residual(&p, &x)?);
    }
    Ok(vec![Check::le("ambient", "riemann", riem, tol.riemann), Check::le("ambient", "killing", kill, tol.killing)])
}

fn push_suite_checks(checks: &mut Vec<Check>, s: &SuiteValues, spec: &SurfaceSpec, tol: &Tolerances) {
    for (name, v) in s.fundamental {
        checks.push(Check::le("surface", name, v, tol.fundamental));
    }
    if let Some(c) = s.conformal {
        checks.push(Check::le("surface", "conformal", c, tol.conformal));
    }
    checks.push(Check::le("surface", "pointwise_invariants", s.pointwise, tol.pointwise));
    let gate = tol.cmc_gate * s.h_bar.abs().max(1.0);
    checks.push(Check::le("surface", "cmc_defect", s.defect, gate));
    checks.push(Check::le("spectral", "v_plus_2k", s.v_plus_2k, tol.v_plus_2k));
    let Some(a) = &s.ar else { return };
    checks.push(Check::le("arpair", "ar_codazzi", a.codazzi, tol.ar_codazzi));
    checks.push(Check::le("arpair", "pair_identities", a.pair, tol.pair_identity));
    if let Some(h) = a.holomorphic {
        checks.push(Check::le("arpair", "holomorphicity", h, tol.holomorphic));
    }
    if let Some(q) = a.q_route {
        checks.push(Check::le("arpair", "q_ar_routes", q, tol.q_route));
    }
    checks.push(Check::info("arpair", "sup_norm_s", a.sup_s));
    checks.push(Check::info("arpair", "sup_norm_s_flipped", a.sup_s_flipped));
    checks.push(Check::info("simons", "residual", a.simons));
    checks.push(Check::le("simons", "gradient_identity", a.gradient_identity, tol.gradient_identity));
    checks.push(Check::ge("simons", "delta_u_margin", a.delta_u_min, -tol.delta_u_slack));
    if let Some(m) = a.curvature_margin_min {
        checks.push(Check::ge("simons", "curvature_bound_margin", m, -tol.curvature_bound_slack));
    }
    if matches!(spec, SurfaceSpec::HopfCylinder { .. }) {
        checks.push(Check::le("hopf", "simons_terms", a.simons_terms, tol.hopf_exact));
        checks.push(Check::le("hopf", "q_ar_spread", a.q_spread, tol.q_spread));
    }
}

fn push_orders(checks: &mut Vec<Check>, c: &SuiteValues, f: &SuiteValues, min: f64) {
    for ((name, a), (_, b)) in c.fundamental.iter().zip(f.fundamental.iter()) {
        checks.push(Check::order(name, *a, *b, min));
    }
    if let (Some(a), Some(b)) = (c.conformal, f.conformal) {
        checks.push(Check::order("conformal", a, b, min));
    }
    if let (Some(a), Some(b)) = (&c.ar, &f.ar) {
        checks.push(Check::order("ar_codazzi", a.codazzi, b.codazzi, min));
        if let (Some(x), Some(y)) = (a.holomorphic, b.holomorphic) {
            checks.push(Check::order("holomorphicity", x, y, min));
        }
        checks.push(Check::order("simons", a.simons, b.simons, min));
    }
}

fn build_patch(spec: &SurfaceSpec, grid: usize, pert: Option<PerturbConfig>) -> Result<SurfacePatch, Usage> {
    let patch = spec.build(grid)?;
    match pert {
        Some(p) => {
            if !p.eps.is_finite() {
                return Err(Usage(format!("perturbation amplitude {} is not finite", p.eps)));
            }
            Ok(perturb(&patch, p.eps, Bump::centered(&patch.rect, p.fraction))?)
        }
        None => Ok(patch),
    }
}

fn write_dump(path: &Path, patch: &SurfacePatch) -> Result<(), Usage> {
    let ctx = ArContext::ungated(patch).ok();
    let rows = patch
        .sweep(d::BOUNDARY_RING, |u, v| {
            let g = patch.geometry_at(u, v)?;
            let (s, r, c) = match &ctx {
                Some(ctx) => {
                    let t = simons_terms(patch, ctx, u, v)?;
                    (t.norm_s, t.residual, ar_codazzi_residual(patch, ctx, u, v)?)
                }
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            Ok([u, v, s, r, g.h, g.k, g.nu, c])
        })
        .map_err(Usage::from)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Usage(format!("cannot write {}: {e}", path.display())))?;
    let io = |e: csv::Error| Usage(e.to_string());
    w.write_record(["i", "j", "u", "v", "norm_s", "simons_residual", "H", "K", "nu", "ar_codazzi"]).map_err(io)?;
    for ((i, j), r) in rows {
        let mut rec = vec![i.to_string(), j.to_string()];
        rec.extend(r.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Usage(e.to_string()))
}

pub fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    let r = resolve(&args.common)?;
    let spec = match &args.surface {
        Some(s) => parse_surface(s)?,
        None => r.cfg.surface.clone().ok_or_else(|| Usage("no surface given (--surface or config)".into()))?,
    };
    let pert = match args.eps {
        Some(eps) => Some(PerturbConfig { eps, fraction: d::BUMP_FRACTION }),
        None => r.cfg.perturb,
    };
    let refine = !args.no_refine && r.cfg.refine.unwrap_or(true);
    let tol = r.tolerances;
    let patch = build_patch(&spec, r.grid, pert)?;
    let mut checks = ambient_checks(&patch, &tol)?;
    let mut skipped = Vec::new();
    let (coarse, skip) = suite_values(&patch)?;
    if let Some(reason) = skip {
        skipped.push(Skip { suite: "arpair".into(), reason: reason.clone() });
        skipped.push(Skip { suite: "simons".into(), reason });
    }
    push_suite_checks(&mut checks, &coarse, &spec, &tol);
    let fine_grid = refine.then(|| 2 * r.grid - 1);
    if let Some(m) = fine_grid {
        let fine_patch = build_patch(&spec, m, pert)?;
        let (fine, _) = suite_values(&fine_patch)?;
        push_orders(&mut checks, &coarse, &fine, tol.min_order);
    }
    if let Some(path) = args.dump.as_ref().or(r.cfg.dump.as_ref()) {
        write_dump(path, &patch)?;
    }
    let pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        command: "verify".into(),
        surface: spec,
        perturbation: pert,
        grid: r.grid,
        fine_grid,
        tol_scale: r.tol_scale,
        tolerances: tol,
        h_bar: coarse.h_bar,
        checks,
        skipped,
        pass,
        provenance: provenance(),
    };
    emit(r.out.as_deref(), &to_json(&report))?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub kappa: f64,
    pub tau: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "G0")]
    pub g0: f64,
    #[serde(rename = "G1")]
    pub g1: f64,
    pub threshold: f64,
    pub oracle_min: f64,
    pub oracle_agrees: bool,
    pub case: Case,
    pub case_condition: bool,
    pub hypotheses_ok: bool,
    pub case_claim_consistent: bool,
}

fn threshold_row(kappa: f64, tau: f64, h: f64, tol: &Tolerances) -> Result<ThresholdRow, Usage> {
    let params = AmbientParams::new(kappa, tau)?;
    let th = threshold(h, params)?;
    // The oracle needs a real root at every sample; report NaN otherwise.
    let oracle = threshold_oracle(h, params, d::ORACLE_GRID).unwrap_or(f64::NAN);
    Ok(ThresholdRow {
        kappa,
        tau,
        h,
        g0: th.g0,
        g1: th.g1,
        threshold: th.value,
        oracle_min: oracle,
        oracle_agrees: (oracle - th.value).abs() <= tol.oracle,
        case: th.case,
        case_condition: th.case_condition,
        hypotheses_ok: th.hypotheses_ok,
        case_claim_consistent: th.case_claim_consistent,
    })
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    kappa: f64,
    tau: f64,
    #[serde(rename = "H")]
    h: f64,
}

/// A row fails only when the hypotheses hold and the oracle disagrees.
fn row_fails(r: &ThresholdRow) -> bool {
    r.hypotheses_ok && !r.oracle_agrees
}

pub fn cmd_thresholds(args: &ThresholdArgs) -> CmdResult {
    let r = resolve(&args.common)?;
    let tol = r.tolerances;
    if let Some(path) = args.sweep.as_ref().or(r.cfg.sweep.as_ref()) {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Usage(format!("cannot read sweep {}: {e}", path.display())))?;
        let mut text = String::new();
        let mut fail = false;
        for (k, row) in rd.deserialize::<SweepRow>().enumerate() {
            let row = row.map_err(|e| Usage(format!("sweep row {}: {e}", k + 1)))?;
            let out = threshold_row(row.kappa, row.tau, row.h, &tol).map_err(|u| Usage(format!("sweep row {}: {}", k + 1, u.0)))?;
            fail |= row_fails(&out);
            text.push_str(&serde_json::to_string(&out).expect("row serializes"));
            text.push('\n');
        }
        emit(r.out.as_deref(), &text)?;
        return Ok(if fail { EXIT_FAIL } else { EXIT_PASS });
    }
    let need = |a: Option<f64>, b: Option<f64>, name: &str| {
        a.or(b).ok_or_else(|| Usage(format!("missing --{name} (or config entry)")))
    };
    let kappa = need(args.kappa, r.cfg.kappa, "kappa")?;
    let tau = need(args.tau, r.cfg.tau, "tau")?;
    let h = need(args.h, r.cfg.h, "H")?;
    let row = threshold_row(kappa, tau, h, &tol)?;
    emit(r.out.as_deref(), &to_json(&row))?;
    Ok(if row_fails(&row) { EXIT_FAIL } else { EXIT_PASS })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullDomain {
    pub lambda1: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub command: String,
    pub surface: SurfaceSpec,
    pub grid: usize,
    pub potential: Potential,
    /// Whole grid box with Dirichlet data on the patch boundary.
    pub full_domain: FullDomain,
    pub steps: Vec<ExhaustionStep>,
    /// `lambda_1` nonincreasing as the boxes grow.
    pub monotone: bool,
    pub crossed: bool,
    pub pass: bool,
    pub provenance: Provenance,
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> CmdResult {
    let r = resolve(&args.common)?;
    let spec = match &args.surface {
        Some(s) => parse_surface(s)?,
        None => r.cfg.surface.clone().ok_or_else(|| Usage("no surface given (--surface or config)".into()))?,
    };
    let potential = args.potential.or(r.cfg.potential).unwrap_or_default();
    let patch = spec.build(r.grid)?;
    let c = (r.grid - 1) / 2;
    let mut radii = args.radii.clone().or_else(|| r.cfg.radii.clone()).unwrap_or_else(|| {
        let mut v: Vec<usize> = [c / 4, c / 2, 3 * c / 4, c - 1].into_iter().filter(|&x| 2 * x > d::MIN_SPECTRAL_INTERIOR).collect();
        v.dedup();
        v
    });
    radii.sort_unstable();
    let v = match potential {
        Potential::Stability => stability_field(&patch)?,
        Potential::Zero => ScalarField::zeros(patch.grid),
    };
    let full = Omega { i0: 0, i1: patch.grid.0 - 1, j0: 0, j1: patch.grid.1 - 1 };
    let mut prob = assemble(&patch, full, &v)?;
    let (l_full, _) = match prob.lambda1() {
        Ok(x) => x,
        Err(e @ GeomError::NoConvergence { .. }) => {
            eprintln!("arshape: {e}");
            return Ok(EXIT_FAIL);
        }
        Err(e) => return Err(e.into()),
    };
    let steps = estimate_check_with(&patch, &v, &radii)?;
    let monotone = steps.windows(2).all(|w| w[1].lambda1 <= w[0].lambda1);
    let report = SpectrumReport {
        command: "spectrum".into(),
        surface: spec,
        grid: r.grid,
        potential,
        full_domain: FullDomain {
            lambda1: l_full,
            iterations: prob.iterations.unwrap_or(0),
            residual: prob.eigen_residual.unwrap_or(f64::NAN),
        },
        crossed: steps.iter().any(|s| s.crossed),
        monotone,
        steps,
        pass: monotone,
        provenance: provenance(),
    };
    emit(r.out.as_deref(), &to_json(&report))?;
    Ok(if monotone { EXIT_PASS } else { EXIT_FAIL })
}

pub fn cmd_catalog(args: &CatalogArgs) -> CmdResult {
    emit(args.out.as_deref(), &to_json(&SurfaceSpec::all()))?;
    Ok(EXIT_PASS)
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Thresholds(a) => cmd_thresholds(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Catalog(a) => cmd_catalog(a),
    };
    match res {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("arshape: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"grid": 32, "gird": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"tolerances": {"fundamentl": 1}}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"surface": {"name": "nil3-umbrella"}, "grid": 32}"#).unwrap();
        assert_eq!(c.grid, Some(32));
    }

    #[test]
    fn tolerances_must_be_positive() {
        assert!(Tolerances::default().validate().is_ok());
        let t = Tolerances { fundamental: 0.0, ..Tolerances::default() };
        assert!(t.validate().is_err());
        let t = Tolerances { riemann: f64::NAN, ..Tolerances::default() };
        assert!(t.validate().is_err());
        let s = Tolerances::default().scaled(10.0);
        assert_eq!(s.fundamental, 10.0 * d::FUNDAMENTAL_TOL);
        assert_eq!(s.min_order, d::MIN_REFINEMENT_ORDER);
    }

    #[test]
    fn surface_names_and_json() {
        assert_eq!(parse_surface("nil3-umbrella").unwrap(), SurfaceSpec::Nil3Umbrella {});
        assert!(parse_surface("moebius").is_err());
        let s = parse_surface(r#"{"name":"hopf-cylinder","kappa":2,"tau":0.5,"H":0.3}"#).unwrap();
        assert_eq!(s, SurfaceSpec::HopfCylinder { kappa: 2.0, tau: 0.5, h: 0.3 });
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["arshape", "verify", "--surface", "nil3-umbrella", "--grid", "4"]), EXIT_USAGE);
        assert_eq!(run(["arshape", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["arshape", "thresholds", "--kappa", "1", "--tau", "0.5", "--H", "1"]), EXIT_USAGE);
        assert_eq!(run(["arshape", "verify", "--surface", "nil3-umbrella", "--tol-scale", "0"]), EXIT_USAGE);
    }

    #[test]
    fn order_check_at_noise_floor() {
        let c = Check::order("x", 1e-12, 1e-12, 1.8);
        assert!(c.pass && c.value.is_none());
        assert!(!Check::order("x", 1e-6, 1e-6, 1.8).pass);
    }
}
