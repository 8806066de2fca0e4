//! Acceptance run: one PASS/FAIL line per criterion. Criteria listed in
//! `KNOWN_UNATTAINABLE` may print FAIL without failing the run; each has an
//! analysis in the decisions ledger.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use arshape::ambient::{make_chart, AmbientParams};
use arshape::arpair::{
    ar_codazzi_residual, ar_forms_at, holomorphicity_residual, pair_identity_residuals, product_space_operator,
    ArContext,
};
use arshape::catalog::{
    conformalize_rotational, hopf_cylinder, perturb, rotational_cmc, Bump, HopfCylinderSpec, RotationalSpec,
    SurfaceSpec,
};
use arshape::pinching::{threshold, threshold_oracle};
use arshape::simons::{simons_terms, ScalarField};
use arshape::spectral::{assemble, estimate_check, funtes_check, stability_field, v_plus_2k_residual, Omega};
use arshape::surface::{fundamental_sup, mean_curvature_constancy, refinement_order, SurfacePatch};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RING: usize = 2;
const GRID: usize = 128;
const FINE: usize = 2 * GRID - 1;
const MIN_ORDER: f64 = 1.8;
const NOISE_FLOOR: f64 = 1e-9;

/// Power check on the Hopf cylinders with kappa = 4 tau^2: there II_AR = II,
/// so every immersed surface satisfies the AR Codazzi equation.
const KNOWN_UNATTAINABLE: &[&str] = &["3-power-hopf"];

struct Outcome {
    id: &'static str,
    pass: bool,
}

fn report(out: &mut Vec<Outcome>, id: &'static str, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, pass });
}

fn sup(patch: &SurfacePatch, f: impl Fn(f64, f64) -> arshape::error::Result<f64> + Sync) -> f64 {
    patch.sweep(RING, |u, v| f(u, v)).unwrap().into_iter().fold(0.0, |m, (_, x)| m.max(x))
}

fn order_ok(coarse: f64, fine: f64) -> (bool, String) {
    match refinement_order(coarse, fine) {
        Some(o) => (o >= MIN_ORDER, format!("{o:.2}")),
        None => (true, format!("floor({coarse:.1e})")),
    }
}

fn hopf(kappa: f64, tau: f64, h: f64, grid: usize) -> SurfacePatch {
    hopf_cylinder(&HopfCylinderSpec::new(AmbientParams::space_form(kappa, tau).unwrap(), h), grid).unwrap()
}

fn rotational(grid: usize) -> SurfacePatch {
    rotational_cmc(&RotationalSpec::default(), grid).unwrap()
}

fn criterion_1(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut riem, mut kill): (f64, f64) = (0.0, 0.0);
    for (k, t) in [(1.0, 0.5), (-1.0, 0.5), (0.0, 0.5), (-1.0, 0.0)] {
        let chart = make_chart(AmbientParams::space_form(k, t).unwrap());
        for _ in 0..100 {
            let mut v3 = || Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let p = v3();
            assert!(chart.in_domain(&p));
            let (x, y, z, w) = (v3(), v3(), v3(), v3());
            riem = riem.max(chart.riemann_residual(&p, &x, &y, &z, &w).unwrap());
            kill = kill.max(chart.killing_residual(&p, &x).unwrap());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    report(
        out,
        "1",
        riem < 1e-6 && kill < 1e-8 && secs < 10.0,
        format!("riemann {riem:.2e} < 1e-6, killing {kill:.2e} < 1e-8, {secs:.2}s < 10s"),
    );
}

fn criterion_2(out: &mut Vec<Outcome>) {
    let mut ok = true;
    let mut worst = (0.0f64, String::new());
    let mut orders = Vec::new();
    for spec in SurfaceSpec::all() {
        let c = fundamental_sup(&spec.build(GRID).unwrap(), RING).unwrap();
        let f = fundamental_sup(&spec.build(FINE).unwrap(), RING).unwrap();
        if c.max() > worst.0 {
            worst = (c.max(), format!("{spec:?}"));
        }
        ok &= c.max() < 1e-5;
        for ((name, a), (_, b)) in c.named().iter().zip(f.named().iter()) {
            let (pass, o) = order_ok(*a, *b);
            if !pass {
                println!("    order {name} on {spec:?}: {o}");
            }
            ok &= pass;
            if *a >= NOISE_FLOOR {
                orders.push(refinement_order(*a, *b).unwrap());
            }
        }
    }
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        out,
        "2",
        ok,
        format!(
            "max residual {:.2e} < 1e-5 ({}), min order {min_order:.2} >= 1.8 over {} resolved studies",
            worst.0,
            worst.1,
            orders.len()
        ),
    );
}

fn ar_sup(p: &SurfacePatch) -> f64 {
    let ctx = ArContext::ungated(p).unwrap();
    sup(p, |u, v| ar_codazzi_residual(p, &ctx, u, v))
}

fn criterion_3(out: &mut Vec<Outcome>) {
    let cases: [(&str, SurfacePatch); 3] =
        [("hopf(1,.5,0)", hopf(1.0, 0.5, 0.0, GRID)), ("hopf(1,.5,.3)", hopf(1.0, 0.5, 0.3, GRID)), ("rotational", rotational(GRID))];
    let sups: Vec<f64> = cases.iter().map(|(_, p)| ar_sup(p)).collect();
    let detail = cases.iter().zip(&sups).map(|((n, _), s)| format!("{n} {s:.1e}")).collect::<Vec<_>>().join(", ");
    report(out, "3", sups.iter().all(|&s| s < 1e-5), format!("AR Codazzi sup < 1e-5: {detail}"));

    let pert = |p: &SurfacePatch| perturb(p, 1e-2, Bump::centered(&p.rect, 0.8)).unwrap();
    let hopf_power: Vec<f64> = cases[..2].iter().map(|(_, p)| ar_sup(&pert(p))).collect();
    report(
        out,
        "3-power-hopf",
        hopf_power.iter().all(|&s| s > 1e-2),
        format!("eps 1e-2 on hopf(1,.5,{{0,.3}}) sup > 1e-2: {:.1e}, {:.1e}", hopf_power[0], hopf_power[1]),
    );
    let rot_power = ar_sup(&pert(&cases[2].1));
    report(out, "3-power-rotational", rot_power > 1e-2, format!("eps 1e-2 on rotational sup {rot_power:.2e} > 1e-2"));
    for (name, k, t, h) in [("berger(2,.5,.3)", 2.0, 0.5, 0.3), ("hopf(-1,.5,.7)", -1.0, 0.5, 0.7)] {
        let s = ar_sup(&pert(&hopf(k, t, h, GRID)));
        println!("    info: power check on {name}: sup {s:.2e}");
    }
}

fn criterion_4(out: &mut Vec<Outcome>) {
    let hol = |n: usize| {
        let p = conformalize_rotational(&rotational(n)).unwrap();
        let ctx = ArContext::gated(&p).unwrap();
        sup(&p, |u, v| holomorphicity_residual(&p, &ctx, u, v))
    };
    let c = hol(256);
    let (a, d) = (hol(GRID), hol(FINE));
    let (ok, o) = order_ok(a, d);
    report(
        out,
        "4",
        c < 1e-4 && ok,
        format!("sup |dbar Q| at 256 = {c:.2e} < 1e-4, order 128->255 grid halving {o} >= 1.8 ({a:.1e} -> {d:.1e})"),
    );
}

fn simons_sup(p: &SurfacePatch) -> f64 {
    let ctx = ArContext::ungated(p).unwrap();
    sup(p, |u, v| Ok(simons_terms(p, &ctx, u, v)?.residual))
}

fn criterion_5(out: &mut Vec<Outcome>) {
    let mut hopf_terms: f64 = 0.0;
    for h in [0.0, 0.3] {
        let p = hopf(1.0, 0.5, h, GRID);
        let ctx = ArContext::ungated(&p).unwrap();
        hopf_terms = hopf_terms.max(sup(&p, |u, v| {
            let t = simons_terms(&p, &ctx, u, v)?;
            Ok(t.half_laplacian.abs().max(t.grad_sq).max(t.curvature_term.abs()))
        }));
    }
    let (a, b) = (simons_sup(&rotational(GRID)), simons_sup(&rotational(FINE)));
    let (order_pass, o) = order_ok(a, b);
    let base = rotational(GRID);
    let ratios: Vec<f64> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&eps| {
            let p = perturb(&base, eps, Bump::centered(&base.rect, 0.8)).unwrap();
            let (_, defect) = mean_curvature_constancy(&p).unwrap();
            simons_sup(&p) / defect
        })
        .collect();
    // Residual at least linear in the defect: the ratio stays above 1 over
    // three decades of eps.
    let bounded = ratios.iter().all(|&r| r >= 1.0);
    let mut grad: f64 = 0.0;
    for p in [&base, &hopf(1.0, 0.5, 0.3, GRID), &hopf(-1.0, 0.5, 0.7, GRID)] {
        let ctx = ArContext::ungated(p).unwrap();
        grad = grad.max(sup(p, |u, v| Ok(simons_terms(p, &ctx, u, v)?.gradient_identity.unwrap_or(0.0))));
    }
    let pass = hopf_terms < 1e-8 && order_pass && bounded && grad < 1e-3;
    report(
        out,
        "5",
        pass,
        format!(
            "hopf terms {hopf_terms:.1e} < 1e-8, rotational order {o} >= 1.8, residual/defect at eps 1e-3, 1e-2, 1e-1 = \
             {:.0}, {:.0}, {:.0} (all >= 1), gradient identity {grad:.1e} < 1e-3",
            ratios[0], ratios[1], ratios[2]
        ),
    );
}

fn cmc_catalog(grid: usize) -> Vec<(SurfaceSpec, SurfacePatch)> {
    SurfaceSpec::all().into_iter().map(|s| (s.clone(), s.build(grid).unwrap())).collect()
}

fn criterion_6(out: &mut Vec<Outcome>, catalog: &[(SurfaceSpec, SurfacePatch)]) {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (_, p) in catalog {
        let Ok(ctx) = ArContext::ungated(p) else { continue };
        worst = worst.max(sup(p, |u, v| Ok(pair_identity_residuals(p, &ctx, u, v)?.max())));
        n += 1;
    }
    report(out, "6", worst < 1e-8, format!("pair identities {worst:.1e} < 1e-8 on {n} surfaces"));
}

fn criterion_7(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut n, mut tries) = (0.0f64, 0, 0);
    while n < 50 && tries < 10_000 {
        tries += 1;
        let (k, t, h) = (rng.gen_range(-3.0..5.0), rng.gen_range(0.0..1.0), rng.gen_range(0.05..2.0));
        let Ok(params) = AmbientParams::new(k, t) else { continue };
        let Ok(th) = threshold(h, params) else { continue };
        if !th.hypotheses_ok {
            continue;
        }
        let o = threshold_oracle(h, params, 100_000).unwrap();
        worst = worst.max((o - th.value).abs());
        n += 1;
    }
    let w = threshold(1.0, AmbientParams::new(4.0, 0.5).unwrap()).unwrap();
    let g0_ok = (w.g0 - 8.5f64.sqrt()).abs() < 1e-12 && (w.g0 - 2.91548).abs() < 5e-6;
    let g1_ok = (w.g1 - 0.50227).abs() < 5e-6;
    report(
        out,
        "7",
        n == 50 && worst <= 1e-6 && g0_ok && g1_ok && !w.case_claim_consistent,
        format!(
            "oracle gap {worst:.1e} <= 1e-6 over {n} points; G(0) = {:.6}, G(1) = {:.6}; single-entry claim flagged inconsistent: {}",
            w.g0, w.g1, !w.case_claim_consistent
        ),
    );
}

fn random_bump(rng: &mut ChaCha8Rng, p: &SurfacePatch, om: Omega) -> ScalarField {
    let c = 3;
    let (i0, i1, j0, j1) = (om.i0 + c, om.i1 - c, om.j0 + c, om.j1 - c);
    let ci = rng.gen_range(i0 + 4..i1 - 3) as f64;
    let cj = rng.gen_range(j0 + 4..j1 - 3) as f64;
    let ri = rng.gen_range(2.0..(ci - i0 as f64).min(i1 as f64 - ci));
    let rj = rng.gen_range(2.0..(cj - j0 as f64).min(j1 as f64 - cj));
    let amp = rng.gen_range(0.5..2.0);
    let mut f = ScalarField::zeros(p.grid);
    for i in i0..=i1 {
        for j in j0..=j1 {
            let r2 = ((i as f64 - ci) / ri).powi(2) + ((j as f64 - cj) / rj).powi(2);
            if r2 < 1.0 {
                f.set(i, j, amp * (1.0 - r2).powi(3));
            }
        }
    }
    f
}

fn criterion_8(out: &mut Vec<Outcome>, catalog: &[(SurfaceSpec, SurfacePatch)]) {
    let sq = SurfaceSpec::FlatSquare { side: PI }.build(GRID).unwrap();
    let zero = ScalarField::zeros(sq.grid);
    let full = Omega { i0: 0, i1: GRID - 1, j0: 0, j1: GRID - 1 };
    let mut a = assemble(&sq, full, &zero).unwrap();
    let l_sq = a.lambda1().unwrap().0;
    let square_ok = (l_sq - 2.0).abs() <= 0.02 * 2.0;

    let rot = rotational(GRID);
    let v = stability_field(&rot).unwrap();
    let mut base = assemble(&rot, full, &v).unwrap();
    let l_rot = base.lambda1().unwrap().0;
    let l_shift = base.shifted(0.75).lambda1().unwrap().0;
    let shift_gap = (l_rot - 0.75 - l_shift).abs();
    let inner = Omega { i0: 10, i1: 100, j0: 20, j1: 120 };
    let l_inner = assemble(&rot, inner, &v).unwrap().lambda1().unwrap().0;
    let nested_ok = l_inner >= l_rot;

    let v2k = catalog.iter().map(|(_, p)| sup(p, |u, w| v_plus_2k_residual(p, u, w))).fold(0.0, f64::max);

    let ctx = ArContext::gated(&rot).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let slack = 1e-6 * l_rot.abs().max(1.0);
    let margins: Vec<f64> = (0..20).map(|_| funtes_check(&base, &ctx, &random_bump(&mut rng, &rot, full)).unwrap()).collect();
    let m_min = margins.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut exhaustion_ok = true;
    let mut ex = Vec::new();
    for h in [0.0, 0.3] {
        let spec = HopfCylinderSpec { u_half: 2.5, v_half: 2.5, ..HopfCylinderSpec::new(AmbientParams::space_form(1.0, 0.5).unwrap(), h) };
        let p = hopf_cylinder(&spec, GRID).unwrap();
        let target = -(4.0 * h * h + 1.0);
        let steps = estimate_check(&p, &[16, 32, 48, 62]).unwrap();
        let ls: Vec<f64> = steps.iter().map(|s| s.lambda1).collect();
        exhaustion_ok &= ls.windows(2).all(|w| w[1] < w[0]) && ls.iter().all(|&l| l > target);
        ex.push(format!("H={h}: {:.3} -> {:.3} (target {target})", ls[0], ls[ls.len() - 1]));
    }

    let pass = square_ok && shift_gap < 1e-9 && nested_ok && v2k < 1e-5 && m_min >= -slack && exhaustion_ok;
    report(
        out,
        "8",
        pass,
        format!(
            "flat square lambda1 {l_sq:.4} within 2% of 2, shift gap {shift_gap:.1e}, nested {l_inner:.3} >= {l_rot:.3}, \
             v+2K {v2k:.1e} < 1e-5, funtes min margin {m_min:.3} >= -{slack:.1e}, exhaustion {}",
            ex.join("; ")
        ),
    );
}

fn criterion_9(out: &mut Vec<Outcome>) {
    let mut worst: f64 = 0.0;
    let patches = [rotational(GRID), hopf(-1.0, 0.0, 0.7, GRID), SurfaceSpec::VerticalCylinder {}.build(GRID).unwrap()];
    for p in &patches {
        let ctx = ArContext::gated(p).unwrap();
        let h = ctx.h_bar;
        worst = worst.max(sup(p, |u, v| {
            let s = ar_forms_at(p, &ctx, u, v)?.traceless;
            Ok((product_space_operator(p, u, v)? - s * (2.0 * h)).abs().max())
        }));
    }
    report(out, "9", worst < 1e-10, format!("product operator vs 2H S entrywise {worst:.1e} < 1e-10 on {} patches", patches.len()));
}

fn run(bin: &str, args: &[&str]) -> (i32, Vec<u8>) {
    let o = Command::new(bin).args(args).output().expect("binary runs");
    (o.status.code().unwrap_or(-1), o.stdout)
}

fn criterion_10(out: &mut Vec<Outcome>) {
    let bin = env!("CARGO_BIN_EXE_arshape");
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let (a, b) = (path("a.json"), path("b.json"));
    let args = |o: &str| vec!["verify", "--surface", "nil3-umbrella", "--grid", "64", "--out", o].into_iter().map(String::from).collect::<Vec<_>>();
    let st = |o: &str| Command::new(bin).args(args(o)).status().unwrap().code();
    let codes = (st(&a), st(&b));
    let stable = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    std::fs::write(path("bad.json"), r#"{"grid": 32, "unknown_key": 1}"#).unwrap();
    std::fs::write(path("sweep.csv"), "kappa,tau,H\n4,0.5,1\n-1,0.5,0.7\n").unwrap();
    let bad = path("bad.json");
    let sweep = path("sweep.csv");
    let matrix: Vec<(&str, Vec<&str>, i32)> = vec![
        ("verify pass", vec!["verify", "--surface", "euclidean-sphere", "--grid", "64", "--no-refine"], 0),
        ("verify tolerance fail", vec!["verify", "--surface", "euclidean-sphere", "--grid", "64", "--no-refine", "--tol-scale", "1e-9"], 1),
        ("verify grid too small", vec!["verify", "--surface", "euclidean-sphere", "--grid", "8"], 2),
        ("verify unknown surface", vec!["verify", "--surface", "klein-bottle"], 2),
        ("verify unknown config key", vec!["verify", "--config", &bad], 2),
        ("thresholds pass", vec!["thresholds", "--kappa", "4", "--tau", "0.5", "--H", "1"], 0),
        ("thresholds kappa = 4 tau^2", vec!["thresholds", "--kappa", "1", "--tau", "0.5", "--H", "1"], 2),
        ("thresholds sweep", vec!["thresholds", "--sweep", &sweep], 0),
        ("spectrum flat square", vec!["spectrum", "--surface", "flat-square", "--grid", "48", "--potential", "zero"], 0),
        ("unknown subcommand", vec!["frobnicate"], 2),
        ("catalog", vec!["catalog"], 0),
    ];
    let mut ok = codes == (Some(0), Some(0)) && stable;
    for (name, args, want) in &matrix {
        let (got, _) = run(bin, args);
        if got != *want {
            println!("    {name}: exit {got}, expected {want}");
            ok = false;
        }
    }
    assert!(Path::new(&a).exists());
    report(out, "10", ok, format!("byte-stable verify report {stable}, exit-code matrix of {} cases", matrix.len()));
}

fn main() {
    let start = Instant::now();
    let mut out = Vec::new();
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_5(&mut out);
    let catalog = cmc_catalog(GRID);
    criterion_6(&mut out, &catalog);
    criterion_7(&mut out);
    criterion_8(&mut out, &catalog);
    criterion_9(&mut out);
    criterion_10(&mut out);
    let unexpected: Vec<&str> = out.iter().filter(|o| !o.pass && !KNOWN_UNATTAINABLE.contains(&o.id)).map(|o| o.id).collect();
    let known: Vec<&str> = out.iter().filter(|o| !o.pass && KNOWN_UNATTAINABLE.contains(&o.id)).map(|o| o.id).collect();
    println!(
        "acceptance: {} passed, {} known unattainable {:?}, {} unexpected failures {:?} ({:.0}s)",
        out.iter().filter(|o| o.pass).count(),
        known.len(),
        known,
        unexpected.len(),
        unexpected,
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
