//! Every default grid size, step and tolerance used by the engine and the
//! CLI. Reports record the values actually used so a run can be reproduced.

/// Ambient finite-difference step scale; the step at `p` is `AMBIENT_FD_STEP * max(1, |p|)`.
pub const AMBIENT_FD_STEP: f64 = 1e-4;
/// Killing residual tolerance with analytic Christoffels.
pub const KILLING_TOL_ANALYTIC: f64 = 1e-8;
/// Killing residual tolerance with finite-difference Christoffels.
pub const KILLING_TOL_FD: f64 = 1e-4;
/// Curvature-formula residual tolerance with analytic Christoffels.
pub const RIEMANN_TOL: f64 = 1e-6;
/// Christoffel modes must agree to this tolerance.
pub const CHRISTOFFEL_MODE_AGREEMENT: f64 = 1e-6;
/// Unit length of the Killing field.
pub const KILLING_UNIT_TOL: f64 = 1e-12;

/// Step of the finite-difference derivative provider for immersions.
pub const SURFACE_FD_STEP: f64 = 1e-4;
/// Relative conformality tolerance `|E-G|/E + |F|/E`.
pub const CONFORMAL_TOL: f64 = 1e-8;
/// Pointwise algebraic identities (`|T|^2 + nu^2 = 1`, self-adjointness, `J^2 = -1`).
pub const POINTWISE_TOL: f64 = 1e-10;
/// Fundamental (Gauss, Codazzi, ...) residual tolerance at grid >= 128.
pub const FUNDAMENTAL_TOL: f64 = 1e-5;
/// Conformal residual tolerance.
pub const CONFORMAL_RESIDUAL_TOL: f64 = 1e-4;
/// Minimum observed order under grid halving.
pub const MIN_REFINEMENT_ORDER: f64 = 1.8;
/// Residual sups below this are treated as round-off; no order is measured.
pub const NOISE_FLOOR: f64 = 1e-9;
/// Width of the boundary ring excluded from residual sups.
pub const BOUNDARY_RING: usize = 2;
/// Smallest grid accepted by the CLI.
pub const MIN_GRID: usize = 16;
/// Default grid for verification runs.
pub const DEFAULT_GRID: usize = 128;

/// CMC gate: `defect <= CMC_GATE * max(1, |H|)`.
pub const CMC_GATE: f64 = 1e-4;
/// Guard for identities dividing by `|S|^2`.
pub const EPS_S: f64 = 1e-6;
/// AR Codazzi residual tolerance.
pub const AR_CODAZZI_TOL: f64 = 1e-5;
/// Holomorphicity residual tolerance.
pub const HOLOMORPHIC_TOL: f64 = 1e-4;
/// Pair identity tolerance (purely algebraic, no differentiation).
pub const PAIR_IDENTITY_TOL: f64 = 1e-8;
/// Two-route `q_AR` agreement.
pub const Q_ROUTE_TOL: f64 = 1e-6;
/// Hopf-cylinder "exact" checks (constant fields).
pub const HOPF_EXACT_TOL: f64 = 1e-8;
/// Power threshold: a perturbed patch must push the AR Codazzi sup above this.
pub const POWER_THRESHOLD: f64 = 1e-2;

/// Relative tolerance of `|grad S|^2 = 2 |grad |S||^2` where `|S| > GRAD_IDENTITY_MIN_S`.
pub const GRAD_IDENTITY_TOL: f64 = 1e-3;
pub const GRAD_IDENTITY_MIN_S: f64 = 0.1;
/// The relative gradient identity is undefined where `|nabla S|^2` is below this.
pub const GRAD_IDENTITY_MIN_GRAD: f64 = 1e-8;
/// Allowed negative slack in the `-Delta u <= a u^3 + b u` margin.
pub const DELTA_U_SLACK: f64 = 1e-4;
/// Allowed slack in `K >= bound`.
pub const CURVATURE_BOUND_SLACK: f64 = 1e-6;

/// Boundary-verdict tolerance for the pinching classifier.
pub const BOUNDARY_VERDICT_TOL: f64 = 1e-12;
/// Grid for the hypothesis check of `a(t) > 0, h(t) > 0`.
pub const HYPOTHESIS_GRID: usize = 1000;
/// Brute-force grid for the endpoint-minimum oracle.
pub const ORACLE_GRID: usize = 100_000;
/// Oracle agreement.
pub const ORACLE_TOL: f64 = 1e-6;

/// Eigen solver: maximum outer iterations.
pub const EIGEN_MAX_ITER: usize = 500;
/// Eigen solver: weighted residual target.
pub const EIGEN_TOL: f64 = 1e-10;
/// Eigenpair residual that must be met on return.
pub const EIGEN_ACCEPT: f64 = 1e-8;
/// Smallest Dirichlet box (interior nodes per side).
pub const MIN_SPECTRAL_INTERIOR: usize = 16;
/// Operator symmetry tolerance.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// `V + 2K` identity tolerance.
pub const V_PLUS_2K_TOL: f64 = 1e-5;
/// Relative slack in the test-function inequality.
pub const FUNTES_SLACK: f64 = 1e-6;
/// Support collar (cells) for test functions.
pub const FUNTES_COLLAR: usize = 2;
/// Spatial spread `sup - inf` of `q_AR` on Hopf cylinders.
pub const Q_SPREAD_TOL: f64 = 1e-10;
/// Random point/vector tuples per ambient check.
pub const AMBIENT_SAMPLES: usize = 100;
/// Seed of the ambient sampler.
pub const AMBIENT_SEED: u64 = 20240601;
/// Default perturbation bump size as a fraction of the patch half-widths.
pub const BUMP_FRACTION: f64 = 0.8;
