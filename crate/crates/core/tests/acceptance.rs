//! Acceptance suite: one test per criterion. Each test prints a single
//! `criterion NN: PASS/FAIL` line with the measured quantities, then
//! asserts. Exact statements run on rationals; rate statements run on
//! floats with the stated tolerances.

use fractal_calc::calculus::green::{a_spline, level1};
use fractal_calc::calculus::{
    harmonic_extend, solve_poisson, PiecewiseHarmonic, SolveMethod,
};
use fractal_calc::derivatives::{derivative_sequence, exact_harmonic_derivative};
use fractal_calc::experiments::{self, rate_fit, Report, ScenarioConfig};
use fractal_calc::linalg::{dot, Mat};
use fractal_calc::structure::{bilateral_family, prop23_status, validate, Context};
use fractal_calc::topology::{Side, SpecDoc, VertexId, Word};
use fractal_calc::{Error, Rational, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

fn verdict(n: usize, passed: bool, detail: &str) {
    println!(
        "criterion {:02}: {} - {}",
        n,
        if passed { "PASS" } else { "FAIL" },
        detail
    );
    assert!(passed, "criterion {n:02} failed: {detail}");
}

fn join(parts: &[String]) -> String {
    parts.join("; ")
}

fn check_of<'r>(rep: &'r Report, name: &str) -> &'r experiments::Check {
    rep.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("{} has no check named {}", rep.id, name))
}

fn series_of<'r>(rep: &'r Report, label: &str) -> &'r [(usize, f64)] {
    &rep.series
        .iter()
        .find(|s| s.label == label)
        .unwrap_or_else(|| panic!("{} has no series labelled {}", rep.id, label))
        .points
}

fn ls_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x as f64 - xm;
        num += dx * (y.ln() - ym);
        den += dx * dx;
    }
    num / den
}

#[test]
fn criterion_01_figure_values_exact() {
    let ctx = Context::<Rational>::preset("sg").unwrap();
    let grid = harmonic_extend(&ctx, &[q(0, 1), q(1, 1), q(1, 1)], 2);
    let pins = [
        ("1:2", q(3, 5)),
        ("1:3", q(3, 5)),
        ("2:3", q(4, 5)),
        ("11:2", q(9, 25)),
        ("11:3", q(9, 25)),
        ("12:3", q(12, 25)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (addr, want) in &pins {
        let v = ctx.spec.parse_vertex(addr).unwrap();
        let got = grid.value(&v).unwrap();
        ok &= got == *want;
        parts.push(format!("h({addr}) = {got}"));
    }
    verdict(1, ok, &format!("exact rational extension: {}", join(&parts)));
}

#[test]
fn criterion_02_derivative_constants() {
    let ctx = Context::<Rational>::preset("sg").unwrap();
    let h = PiecewiseHarmonic::harmonic(&[q(0, 1), q(1, 1), q(1, 1)]);
    let top = Side {
        cell: Word::empty(),
        corner: 0,
    };
    let mut parts = Vec::new();

    let d12 = exact_harmonic_derivative(&ctx, &h, &top, 2).unwrap();
    let ok12 = d12 == q(-2, 1);
    parts.push(format!("normal at the corner = {d12}"));

    let mut ok32 = true;
    for m in 0..=6usize {
        let mut cell = vec![0u8; m];
        cell.push(1);
        let side = Side {
            cell: Word(cell),
            corner: 2,
        };
        ok32 &= exact_harmonic_derivative(&ctx, &h, &side, 2).unwrap().is_zero();
    }
    parts.push("transverse normals vanish for m = 0..=6".to_string());

    let d13 = exact_harmonic_derivative(&ctx, &h, &top, 3).unwrap();
    let ok13 = d13.is_zero();
    parts.push(format!("skew mode at the corner = {d13}"));

    let mut ok13m = true;
    for m in 1..=6usize {
        let mut cell = vec![0u8; m - 1];
        cell.push(1);
        let side = Side {
            cell: Word(cell),
            corner: 0,
        };
        ok13m &= exact_harmonic_derivative(&ctx, &h, &side, 3).unwrap() == q(1, 3);
    }
    parts.push("skew mode along the chain = 1/3 for m = 1..=6".to_string());

    verdict(2, ok12 && ok32 && ok13 && ok13m, &join(&parts));
}

#[test]
fn criterion_03_spectral_constants() {
    let mut parts = Vec::new();

    let sg = Context::<Rational>::preset("sg").unwrap();
    let eig = sg.eig().unwrap();
    let want = [q(1, 1), q(3, 5), q(1, 5)];
    let mut ok_sg = true;
    for j in 0..3 {
        for (k, w) in want.iter().enumerate() {
            ok_sg &= eig.lambda(j, k + 1) == w;
        }
    }
    parts.push("sg spectrum = (1, 3/5, 1/5) exactly".to_string());

    let hexa = Context::<f64>::preset("hexagasket").unwrap();
    let he = hexa.eig().unwrap();
    let mut ok_hex = true;
    for j in 0..3 {
        ok_hex &= (he.lambda(j, 3) - 1.0 / 7.0).abs() <= 1e-8;
    }
    parts.push(format!("hexagasket lambda_3 = {:.12}", he.lambda(0, 3)));

    let sg3 = Context::<f64>::preset("sg3").unwrap();
    let se = sg3.eig().unwrap();
    let mut ok_sg3 = true;
    for j in 0..3 {
        ok_sg3 &= (se.lambda(j, 3) - 1.0 / 15.0).abs() <= 1e-8;
    }
    parts.push(format!("sg3 lambda_3 = {:.12}", se.lambda(0, 3)));

    let vq = Context::<Rational>::preset("vicsek").unwrap();
    let refused = matches!(vq.eig(), Err(Error::DegenerateStructure(_)));
    let m = vq.m_mat(0).clone();
    let id = Mat::<Rational>::identity(4);
    let annihilator = m
        .mat_mul(&m.sub(&id))
        .mat_mul(&m.scale(&q(3, 1)).sub(&id));
    let kernel = m.nullspace(0.0);
    let ok_vicsek = refused
        && m.trace() == q(4, 3)
        && annihilator.max_abs() == 0.0
        && kernel.len() == 2;
    parts.push(format!(
        "vicsek refused with trace 4/3, cubic certificate exact, kernel dimension {} (spectrum 1, 1/3, 0, 0)",
        kernel.len()
    ));

    verdict(3, ok_sg && ok_hex && ok_sg3 && ok_vicsek, &join(&parts));
}

#[test]
fn criterion_04_proposition_suite() {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for preset in ["sg", "sg3", "hexagasket", "bilateral-sg"] {
        let ctx = Context::<f64>::preset(preset).unwrap();
        let rep = validate(&ctx);
        for c in &rep.checks {
            ok &= c.passed && c.residual < 1e-10;
            worst = worst.max(c.residual);
        }
        let eig = ctx.eig().unwrap();
        for j in 0..ctx.n0() {
            let st = prop23_status(&ctx.ext, eig, j).unwrap();
            let flags = [st.rows_vanish, st.alpha_constant, st.column_pattern];
            ok &= flags.iter().all(|&f| f == flags[0]);
        }
    }
    parts.push(format!("structural residuals below 1e-10 on all presets (worst {worst:.3e})"));
    parts.push("the three corner-symmetry statements agree at every corner".to_string());

    let doc = SpecDoc::preset("sg").unwrap();
    let fam = bilateral_family(1.1).unwrap();
    let ctx = Context::new(doc.spec, fam.structure).unwrap();
    let eig = ctx.eig().unwrap();
    for j in 0..3 {
        let st = prop23_status(&ctx.ext, eig, j).unwrap();
        let flags = [st.rows_vanish, st.alpha_constant, st.column_pattern];
        let want = j == 0;
        ok &= flags.iter().all(|&f| f == want);
    }
    parts.push("bilateral c = 1.1: all true at the symmetric corner, all false at the others".to_string());
    verdict(4, ok, &join(&parts));
}

#[test]
fn criterion_05_bilateral_family() {
    let mut parts = Vec::new();
    let fam = bilateral_family(1.0).unwrap();
    let ok_s = (fam.s - 1.0).abs() < 1e-12;
    parts.push(format!("c = 1 gives s = {:.12}", fam.s));

    let doc = SpecDoc::preset("sg").unwrap();
    let ctx1 = Context::new(doc.spec.clone(), fam.structure).unwrap();
    let standard = Context::<f64>::preset("sg").unwrap();
    let mut diff: f64 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            diff = diff.max((ctx1.m_mat(1)[(a, b)] - standard.m_mat(1)[(a, b)]).abs());
        }
    }
    let ok_m = diff < 1e-12;
    parts.push(format!("M_2 matches the standard gasket within {diff:.3e}"));

    let mut worst: f64 = 0.0;
    for c in [0.5, 1.0, 1.1, 2.0] {
        let ctx = Context::new(doc.spec.clone(), bilateral_family(c).unwrap().structure).unwrap();
        let rep = validate(&ctx);
        let r = check_of_validation(&rep, "renormalization-fixed-point");
        worst = worst.max(r);
    }
    let ok_r = worst < 1e-10;
    parts.push(format!(
        "renormalization residual over c in (0.5, 1, 1.1, 2) at most {worst:.3e}"
    ));
    verdict(5, ok_s && ok_m && ok_r, &join(&parts));
}

fn check_of_validation(rep: &fractal_calc::structure::ValidationReport, name: &str) -> f64 {
    rep.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("no validation check named {name}"))
        .residual
}

#[test]
fn criterion_06_chain_identity() {
    let ctx = Context::<Rational>::preset("sg").unwrap();
    let l1 = level1(&ctx).unwrap();
    let a12 = a_spline(&ctx, &l1, 0, 2).unwrap();
    let h1 = PiecewiseHarmonic::harmonic(&[q(1, 1), q(0, 1), q(0, 1)]);
    let v1 = VertexId {
        word: Word::empty(),
        corner: 0,
    };
    let mut ok = true;
    let mut count = 0usize;
    for x in ctx.spec.vertex_set(6) {
        let mut sum = Rational::from_ratio(0, 1);
        for n in 0..=7usize {
            match ctx.spec.descend(&x, &Word(vec![0u8; n])) {
                Some((rw, rc)) => {
                    sum += a12.value(&ctx, &VertexId { word: rw, corner: rc });
                }
                None => break,
            }
        }
        let want = if x == v1 {
            Rational::from_ratio(0, 1)
        } else {
            -h1.value(&ctx, &x)
        };
        ok &= sum == want;
        count += 1;
    }
    verdict(
        6,
        ok,
        &format!("spline chain sums equal the negated corner basis function at all {count} vertices of V_6, exactly"),
    );
}

#[test]
fn criterion_07_derivative_localization() {
    let ctx = Context::<f64>::preset("sg").unwrap();
    let eig = ctx.eig().unwrap();
    let l1 = level1(&ctx).unwrap();
    let one = PiecewiseHarmonic::constant(&ctx, &1.0);
    let u = solve_poisson(&ctx, 8, &[0.0; 3], &one, SolveMethod::Auto).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..3usize {
        for k in 2..=3usize {
            let mode = eig.mode(i, k);
            let mass = a_spline(&ctx, &l1, i, k).unwrap().integral(&ctx);
            let base: Vec<f64> = (0..3)
                .map(|t| u.value(&ctx.spec.canonical_vertex(&[], t as u8).unwrap()).unwrap())
                .collect();
            let u0 = dot(&mode.beta, &base);
            for m in 0..=4usize {
                let cell = vec![i as u8; m];
                let trace: Vec<f64> = (0..3)
                    .map(|t| u.value(&ctx.spec.canonical_vertex(&cell, t as u8).unwrap()).unwrap())
                    .collect();
                let lhs = mode.lambda.powi(-(m as i32)) * dot(&mode.beta, &trace);
                let mut tail = 0.0;
                for n in 0..m {
                    tail += (ctx.hs.r[i] * ctx.hs.mu[i] / mode.lambda).powi(n as i32) * mass;
                }
                worst = worst.max((lhs - u0 + tail).abs());
            }
        }
    }
    verdict(
        7,
        worst < 1e-3,
        &format!("localization identity residual at level 8: max {worst:.3e} over all corners, modes, m <= 4"),
    );
}

#[test]
fn criterion_08_gauss_green_measure() {
    let sg = experiments::run(
        "gauss-green",
        &ScenarioConfig {
            preset: "sg".into(),
            m_max: 4,
            ..ScenarioConfig::default()
        },
    )
    .unwrap();
    let c_sg = check_of(&sg, "flux-sums-match-cell-measure");
    let sg3 = experiments::run(
        "gauss-green",
        &ScenarioConfig {
            preset: "sg3".into(),
            m_max: 2,
            ..ScenarioConfig::default()
        },
    )
    .unwrap();
    let c_sg3 = check_of(&sg3, "flux-sums-match-cell-measure");
    verdict(
        8,
        c_sg.passed && c_sg3.passed,
        &format!("sg: {}; sg3: {}", c_sg.detail, c_sg3.detail),
    );
}

fn decay_fit(preset: &str) -> fractal_calc::experiments::RateFit {
    let rep = experiments::run(
        "thm1.4",
        &ScenarioConfig {
            preset: preset.into(),
            m_max: 8,
            ..ScenarioConfig::default()
        },
    )
    .unwrap();
    let window: Vec<(usize, f64)> = series_of(&rep, "sup-normal-derivative")
        .iter()
        .filter(|(m, _)| *m >= 2)
        .copied()
        .collect();
    rate_fit(&window).unwrap()
}

#[test]
fn criterion_09_decay_trichotomy() {
    let ln3 = (1.0f64 / 3.0).ln();
    let ln6 = (1.0f64 / 6.0).ln();
    let mut parts = Vec::new();

    let sg = decay_fit("sg");
    let ok_sg = (sg.corrected_slope - ln3).abs() <= 0.05;
    parts.push(format!(
        "sg corrected slope {:.4} vs log(1/3) = {:.4}",
        sg.corrected_slope, ln3
    ));

    let hexa = decay_fit("hexagasket");
    let ok_hex = (hexa.slope - ln3).abs() <= 0.05;
    parts.push(format!("hexagasket slope {:.4} vs log(1/3) = {:.4}", hexa.slope, ln3));

    let sg3 = decay_fit("sg3");
    let ok_sg3 = (sg3.slope - ln6).abs() <= 0.05;
    parts.push(format!("sg3 slope {:.4} vs log(1/6) = {:.4}", sg3.slope, ln6));

    let t16 = experiments::run(
        "thm1.6",
        &ScenarioConfig {
            m_max: 8,
            ..ScenarioConfig::default()
        },
    )
    .unwrap();
    let window: Vec<(usize, f64)> = series_of(&t16, "sup-gradient-skew-mode")
        .iter()
        .filter(|(m, _)| *m >= 2)
        .copied()
        .collect();
    let fit = rate_fit(&window).unwrap();
    let ok_16 = (fit.slope - ln3).abs() <= 0.01;
    parts.push(format!("harmonic gradient slope {:.4} vs log(1/3) = {:.4}", fit.slope, ln3));

    verdict(9, ok_sg && ok_hex && ok_sg3 && ok_16, &join(&parts));
}

#[test]
fn criterion_10_counterexample_suite() {
    let mut parts = Vec::new();
    let mut ok = true;

    let rep = experiments::run("ex3.6", &ScenarioConfig::default()).unwrap();
    let c = check_of(&rep, "growth-tracks-schedule-sums");
    ok &= c.passed;
    parts.push(format!("ring schedule: {}", c.detail));

    let rep = experiments::run("ex4.2", &ScenarioConfig::default()).unwrap();
    let trend = check_of(&rep, "composite-geometric-trend");
    let linear = check_of(&rep, "linear-proportionality");
    ok &= trend.passed && linear.passed;
    parts.push(format!("nested chains trend: {}", trend.detail));
    parts.push(format!("(l+1)-proportionality: {}", linear.detail));

    let rep = experiments::run("ex5.1", &ScenarioConfig::default()).unwrap();
    let blow = check_of(&rep, "skew-derivative-blow-up");
    let tangent = check_of(&rep, "first-order-tangent-vanishes");
    ok &= blow.passed && tangent.passed;
    parts.push(format!("shell blow-up: {}", blow.detail));

    let rep = experiments::run("ex5.4", &ScenarioConfig::default()).unwrap();
    let ratio = check_of(&rep, "shifted-ratio");
    let fit = check_of(&rep, "no-second-order-fit");
    ok &= ratio.passed && fit.passed;
    parts.push(format!("paired sums: {}", ratio.detail));
    parts.push(format!("2-harmonic fit: {}", fit.detail));

    verdict(10, ok, &join(&parts));
}

#[test]
fn criterion_11_boundedness() {
    let ctx = Context::<f64>::preset("sg").unwrap();
    let one = PiecewiseHarmonic::constant(&ctx, &1.0);
    let mut poisson_sup = Vec::new();
    for level in 4..=6usize {
        let u = solve_poisson(&ctx, level, &[0.0; 3], &one, SolveMethod::Auto).unwrap();
        let mut sup: f64 = 0.0;
        for x in ctx.spec.vertex_set(level) {
            for side in ctx.spec.sides(&x) {
                let est =
                    derivative_sequence(&ctx, &u, &side, 2, level - side.cell.len()).unwrap();
                sup = sup.max(est.approximants.last().unwrap().abs());
            }
        }
        poisson_sup.push((level, sup));
    }
    let slope_p = ls_slope(&poisson_sup);
    let ok_p = slope_p <= 0.02;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut slope_h: f64 = f64::MIN;
    for _ in 0..5 {
        let boundary: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = PiecewiseHarmonic::harmonic(&boundary);
        let mut sups = Vec::new();
        for m in 4..=6usize {
            let mut sup: f64 = 0.0;
            for x in ctx.spec.vertex_set(m) {
                for side in ctx.spec.sides(&x) {
                    for k in 2..=3usize {
                        let d = exact_harmonic_derivative(&ctx, &h, &side, k).unwrap();
                        sup = sup.max(d.abs());
                    }
                }
            }
            sups.push((m, sup));
        }
        slope_h = slope_h.max(ls_slope(&sups));
    }
    let ok_h = slope_h <= 0.02;
    verdict(
        11,
        ok_p && ok_h,
        &format!(
            "unit-load normal derivatives: log-slope {slope_p:.4} over levels 4..6; random harmonic derivatives: worst log-slope {slope_h:.4}"
        ),
    );
}
