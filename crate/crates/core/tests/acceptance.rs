//! Acceptance suite: eight end-to-end criteria, each printed as one
//! PASS/FAIL line with its runtime against a budget.
//!
//! Runs as a plain binary (`harness = false`) so the summary is always
//! visible: `cargo test -p nablavar --test acceptance`.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nablavar::expr::{self, Env, Var};
use nablavar::fundamental::{self, CaseTag};
use nablavar::nabla::{self, GridFunction};
use nablavar::solver::{self, SolveOptions};
use nablavar::timescale::{GapKind, TimeScale};
use nablavar::variational::{self, Problem, ResidualReport, Sense, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(1.0)
}

// ---------------------------------------------------------------- 1

fn random_scattered_scale(rng: &mut ChaCha8Rng) -> Arc<TimeScale> {
    let n = rng.gen_range(3..=64);
    let mut t = rng.gen_range(-3.0..0.0);
    let mut points = vec![t];
    for _ in 1..n {
        t += rng.gen_range(0.05..0.5);
        points.push(t);
    }
    Arc::new(TimeScale::from_points(points, vec![GapKind::Scattered; n - 1]).unwrap())
}

/// Random polynomial of degree up to 3 or a shifted exponential.
fn random_function(rng: &mut ChaCha8Rng) -> Box<dyn Fn(f64) -> f64> {
    if rng.gen_bool(0.5) {
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Box::new(move |t| c[0] + t * (c[1] + t * (c[2] + t * c[3])))
    } else {
        let (a, k, b) = (rng.gen_range(0.5..2.0), rng.gen_range(-0.8..0.8), rng.gen_range(-1.0..1.0));
        Box::new(move |t| a * (k * t).exp() + b)
    }
}

fn calculus_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tol = 1e-10;
    let mut worst = 0.0f64;
    let mut record = |name: &str, lhs: f64, rhs: f64, scale: f64| -> Result<(), String> {
        let r = (lhs - rhs).abs() / scale.max(1.0);
        worst = worst.max(r);
        if r <= tol {
            Ok(())
        } else {
            Err(format!("{name}: {lhs} vs {rhs}"))
        }
    };
    for _ in 0..50 {
        let ts = random_scattered_scale(&mut rng);
        let (f_fn, g_fn) = (random_function(&mut rng), random_function(&mut rng));
        // keep g away from zero for the quotient rule
        let g_fn: Box<dyn Fn(f64) -> f64> = {
            let shift = 1.0 + (0..ts.len()).map(|i| g_fn(ts.point(i)).abs()).fold(0.0, f64::max);
            Box::new(move |t| g_fn(t) + shift)
        };
        let alpha = rng.gen_range(-3.0..3.0);
        let f = GridFunction::scalar(Arc::clone(&ts), &f_fn);
        let g = GridFunction::scalar(Arc::clone(&ts), &g_fn);
        let df = nabla::derivative(&f);
        let dg = nabla::derivative(&g);
        let sum = nabla::derivative(&f.add(&g).unwrap());
        let scaled = nabla::derivative(&f.scale(alpha));
        let prod = nabla::derivative(&f.mul(&g).unwrap());
        let quot = nabla::derivative(&f.zip_with(&g, |a, b| a / b).unwrap());
        for i in 1..ts.len() {
            let (t, tr) = (ts.point(i), ts.point(i - 1));
            let nu = t - tr;
            // independent difference quotients from the closed forms
            let (fi, fr, gi, gr) = (f_fn(t), f_fn(tr), g_fn(t), g_fn(tr));
            let dfi = (fi - fr) / nu;
            let dgi = (gi - gr) / nu;
            let mag = (fi.abs() + fr.abs() + gi.abs() + gr.abs()) / nu;
            let at = |h: &GridFunction| h.get(i, 0);
            let check = (|| {
                record("derivative", at(&df), dfi, mag)?;
                record("derivative", at(&dg), dgi, mag)?;
                record("sum rule", at(&sum), at(&df) + at(&dg), mag)?;
                record("scalar rule", at(&scaled), alpha * at(&df), alpha.abs() * mag)?;
                let pmag = mag * (fi.abs() + fr.abs() + gi.abs() + gr.abs());
                record("product rule (rho on f)", at(&prod), at(&df) * gi + fr * at(&dg), pmag)?;
                record("product rule (rho on g)", at(&prod), fi * at(&dg) + at(&df) * gr, pmag)?;
                let q = (at(&df) * gi - fi * at(&dg)) / (gi * gr);
                record("quotient rule", at(&quot), q, pmag / (gi * gr).abs())?;
                let local = nabla::local_rho_integral(&f, t).map_err(|e| e.to_string())?[0];
                let over = nabla::integral(&f, tr, t).map_err(|e| e.to_string())?[0];
                if local.to_bits() != (nu * fi).to_bits() || local != over {
                    return Err(format!("local integral at {t}: {local} vs {over}"));
                }
                Ok(())
            })();
            if let Err(e) = check {
                return outcome(false, e);
            }
        }
        let (a, b) = (ts.min(), ts.max());
        let ftc = nabla::integral(&df, a, b).unwrap()[0];
        let ftc_scale: f64 = (1..ts.len()).map(|i| ts.step_at(i) * df.get(i, 0).abs()).sum();
        if let Err(e) = record("fundamental theorem", ftc, f_fn(b) - f_fn(a), ftc_scale) {
            return outcome(false, e);
        }
        let ibp = nabla::integration_by_parts_residual(&f, &g, a, b).unwrap();
        let ibp_scale: f64 = (1..ts.len())
            .map(|i| {
                ts.step_at(i)
                    * (f.get(i, 0) * dg.get(i, 0)).abs().max((df.get(i, 0) * g.get(i - 1, 0)).abs())
            })
            .sum::<f64>()
            + (f.get(ts.len() - 1, 0) * g.get(ts.len() - 1, 0)).abs();
        if let Err(e) = record("integration by parts", ibp, 0.0, ibp_scale) {
            return outcome(false, e);
        }
    }
    outcome(true, format!("worst relative error {worst:.2e} (tol {tol:.0e})"))
}

// ---------------------------------------------------------------- 2

fn classical_limit() -> Outcome {
    let residual = |n: usize| -> Result<f64, String> {
        let ts = Arc::new(TimeScale::sampled_interval(0.0, 1.0, n + 1).map_err(|e| e.to_string())?);
        let p = Problem::parse(ts, 1, "-(v1^2)", "0", vec![0.0], Sense::Max).map_err(|e| e.to_string())?;
        let sol = solver::direct_solve(&p, &SolveOptions::new(1.0).pinned(vec![1.0])).map_err(|e| e.to_string())?;
        let report = ResidualReport::build(&p, &sol.trajectory, &[1.0]).map_err(|e| e.to_string())?;
        Ok(report.max_pointwise())
    };
    match (residual(64), residual(128)) {
        (Ok(coarse), Ok(fine)) => {
            let ratio = coarse / fine;
            outcome(
                ratio >= 1.8,
                format!("max residual {coarse:.3e} at h=1/64, {fine:.3e} at h=1/128, ratio {ratio:.3} (need >= 1.8)"),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

// ---------------------------------------------------------------- 3

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ts = Arc::new(TimeScale::integers(0, 5).unwrap());
    let mut worst_gap = 0.0f64;
    let mut worst_res = 0.0f64;
    for inst in 0..10 {
        // optimum x(t) = s t sits on the value grid {0, s/2, ..., 5s}
        let s = [0.25, 0.5, 0.75, 1.0, 1.25][rng.gen_range(0..5)] * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let w = rng.gen_range(0.2..2.0);
        let q = rng.gen_range(0.0..0.5);
        let c = rng.gen_range(0.0..0.3);
        let l = format!(
            "-(1 + {c}*t)*(v1 - ({s}))^2 - {w}*(x1 - ({s})*(t - 1))^2 - {q}*(v1 - ({s}))^4"
        );
        let p = Problem::parse(Arc::clone(&ts), 1, &l, "0", vec![0.0], Sense::Max).unwrap();
        let opts = SolveOptions::new(5.0).pinned(vec![5.0 * s]);
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * s / 2.0).collect();
        let bf = match solver::brute_force(&p, &opts, &grid) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("instance {inst}: {e}")),
        };
        let ds = match solver::direct_solve(&p, &opts) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("instance {inst}: {e}")),
        };
        // resolution: objective change from moving each free coordinate by half a grid step
        let half = s.abs() / 4.0;
        let mut resolution = 0.0;
        for j in 1..5 {
            let mut v = bf.trajectory.values().to_vec();
            v[j] += half;
            let moved = Trajectory::from_values(&p, v).unwrap();
            let jm = variational::evaluate_functional_partial(&p, &moved, 5.0).unwrap();
            resolution += (jm - bf.objective).abs();
        }
        let gap = (bf.objective - ds.objective).abs();
        worst_gap = worst_gap.max(gap / resolution);
        if gap > resolution {
            return outcome(
                false,
                format!("instance {inst}: brute force {} vs direct {} (resolution {resolution:.3e})", bf.objective, ds.objective),
            );
        }
        for t in 2..=5 {
            let r = variational::finite_horizon_el_residual(&p, &bf.trajectory, 5.0, t as f64).unwrap()[0].abs();
            worst_res = worst_res.max(r);
            if r > 1e-4 {
                return outcome(false, format!("instance {inst}: EL residual {r:.3e} at t={t}"));
            }
        }
    }
    outcome(
        true,
        format!("worst objective gap {worst_gap:.2e} of resolution, worst EL residual {worst_res:.2e} (tol 1e-4)"),
    )
}

// ---------------------------------------------------------------- 4

fn z_coupled() -> Outcome {
    let ts = Arc::new(TimeScale::integers(0, 8).unwrap());
    let p = Problem::parse(Arc::clone(&ts), 1, "-(v1^2)-z", "x1^2", vec![1.0], Sense::Max).unwrap();
    let sol = match solver::direct_solve(&p, &SolveOptions::new(8.0)) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let x = &sol.trajectory;
    let report = ResidualReport::build(&p, x, &[8.0]).unwrap();
    let (pw, spread) = (report.max_pointwise(), report.max_spread());
    let mut worst_equiv = 0.0f64;
    for i in 2..=8 {
        let t = i as f64;
        let r = variational::el_residual_pointwise(&p, x, t, 8.0).unwrap()[0];
        let e = variational::el_residual_integral(&p, x, t, 8.0).unwrap()[0];
        let e_prev = variational::el_residual_integral(&p, x, t - 1.0, 8.0).unwrap()[0];
        worst_equiv = worst_equiv.max(((e - e_prev) / ts.nu_at(i) + r).abs());
    }
    outcome(
        pw <= 1e-4 && spread <= 1e-4 && worst_equiv <= 1e-8,
        format!("max pointwise {pw:.2e}, spread {spread:.2e} (tol 1e-4), derivative equivalence {worst_equiv:.2e} (tol 1e-8)"),
    )
}

// ---------------------------------------------------------------- 5

fn transversality_trend() -> Outcome {
    let ts = Arc::new(TimeScale::integers(0, 30).unwrap());
    let p = Problem::parse(ts, 1, "exp(-t)*(-(v1^2)-x1^2)", "0", vec![1.0], Sense::Max).unwrap();
    let rows = match solver::horizon_study(&p, &[10.0, 20.0, 30.0], &SolveOptions::new(30.0)) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let t1: Vec<f64> = rows.iter().map(|r| r.trans_t1.abs()).collect();
    let t2: Vec<f64> = rows.iter().map(|r| r.trans_t2.abs()).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing(&t1) && decreasing(&t2) && t1[2] <= 1e-3 && t2[2] <= 1e-3;
    let show = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" > ");
    outcome(pass, format!("|T1|: {}, |T2|: {} (final tol 1e-3)", show(&t1), show(&t2)))
}

// ---------------------------------------------------------------- 6

fn random_lemma_scale(rng: &mut ChaCha8Rng) -> Arc<TimeScale> {
    let kind = rng.gen_range(0..3);
    let ts = match kind {
        0 => {
            let n = rng.gen_range(3..30);
            let mut t = 0.0;
            let mut points = vec![t];
            for _ in 1..n {
                t += rng.gen_range(0.1..1.5);
                points.push(t);
            }
            TimeScale::from_points(points, vec![GapKind::Scattered; n - 1]).unwrap()
        }
        1 => TimeScale::sampled_interval(0.0, rng.gen_range(0.5..3.0), rng.gen_range(20..120)).unwrap(),
        _ => {
            let mut b = TimeScale::builder();
            let mut t = 0.0;
            for _ in 0..rng.gen_range(2..5) {
                if rng.gen_bool(0.5) {
                    b = b.isolated(t);
                    t += rng.gen_range(0.2..1.0);
                } else {
                    let len = rng.gen_range(0.3..1.5);
                    b = b.sampled(t, t + len, rng.gen_range(5..40)).unwrap();
                    t += len + rng.gen_range(0.2..1.0);
                }
            }
            b.build().unwrap()
        }
    };
    Arc::new(ts)
}

fn lemma_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut spikes = 0;
    let mut min_witness = f64::INFINITY;
    for case in 0..200 {
        // a scale needs a testable point (i >= 1, and not t_1 behind a scattered a)
        let ts = loop {
            let ts = random_lemma_scale(&mut rng);
            if ts.len() > 2 || !ts.kappa_excludes_minimum() {
                break ts;
            }
        };
        let n = ts.len();
        let is_testable = |i: usize| i >= 1 && !(i == 1 && ts.kappa_excludes_minimum());
        // a handful of smooth bumps or isolated nonzero values, otherwise zero
        let mut vals = vec![0.0; n];
        match rng.gen_range(0..3) {
            0 => {
                let (c, w, amp) = (rng.gen_range(ts.min()..ts.max()), rng.gen_range(0.1..1.0), rng.gen_range(-3.0..3.0));
                for (i, v) in vals.iter_mut().enumerate() {
                    *v = amp * (-((ts.point(i) - c) / w).powi(2)).exp();
                }
            }
            1 => {
                for _ in 0..rng.gen_range(1..4) {
                    let i = rng.gen_range(1..n);
                    vals[i] = rng.gen_range(-5.0..5.0);
                }
            }
            _ => {
                let k = rng.gen_range(1.0..8.0);
                for (i, v) in vals.iter_mut().enumerate() {
                    *v = (k * ts.point(i)).sin();
                }
            }
        }
        let peak = (0..n).filter(|&i| is_testable(i)).map(|i| vals[i].abs()).fold(0.0, f64::max);
        if peak < 1e-3 {
            vals[n - 1] = 1.0;
        }
        let g = GridFunction::from_values(Arc::clone(&ts), 1, vals).unwrap();
        let Some(var) = fundamental::construct_violating_variation(&g, &ts) else {
            return outcome(
                false,
                format!("case {case}: no variation for a nonzero function on {:?} / {:?}: {:?}", ts.points(), ts.gap_kinds(), g.values()),
            );
        };
        let w = fundamental::witness_value(&g, &var.eta, &ts, ts.min());
        if !(w > 0.0) {
            return outcome(false, format!("case {case}: witness {w} with {}", var.case_tag));
        }
        min_witness = min_witness.min(w);
        if var.case_tag == CaseTag::ScatteredSpike {
            spikes += 1;
            let i = ts.index_of(var.t0).unwrap();
            let g0 = g.get(i, 0);
            let exact = g0 * g0 * ts.nu_at(i);
            if w.to_bits() != exact.to_bits() {
                return outcome(false, format!("case {case}: spike witness {w} vs {exact}"));
            }
        }
    }
    outcome(true, format!("200 variations, min witness {min_witness:.2e}, {spikes} exact spikes"))
}

// ---------------------------------------------------------------- 7

fn weak_max_margin() -> Outcome {
    let ts = Arc::new(TimeScale::integers(0, 10).unwrap());
    let p = Problem::parse(Arc::clone(&ts), 1, "-(v1^2)-x1^2", "0", vec![0.0], Sense::Max).unwrap();
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let bf = match solver::brute_force(&p, &SolveOptions::new(10.0), &grid) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let star = bf.trajectory;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = f64::NEG_INFINITY;
    let mut bumped = None;
    for _ in 0..100 {
        let mut v = star.values().to_vec();
        for x in v.iter_mut().skip(1) {
            *x += rng.gen_range(-0.5..0.5);
        }
        let cand = Trajectory::from_values(&p, v).unwrap();
        let m = variational::weak_max_compare(&p, &cand, &star).unwrap();
        worst = worst.max(m);
        bumped.get_or_insert(cand);
    }
    let bumped = bumped.unwrap();
    let improved = variational::weak_max_compare(&p, &star, &bumped).unwrap();

    let dir = tempfile::TempDir::new().unwrap();
    let cfg = dir.path().join("w.toml");
    std::fs::write(
        &cfg,
        "[timescale]\nfamily = \"integers\"\na = 0\nb = 10\n[problem]\nL = \"-(v1^2)-x1^2\"\nx_a = 0\n",
    )
    .unwrap();
    let (cand_csv, star_csv) = (dir.path().join("cand.csv"), dir.path().join("star.csv"));
    let to_csv = |x: &Trajectory| -> String {
        let mut s = String::from("t,x1\n");
        for (i, v) in x.values().iter().enumerate() {
            s += &format!("{},{v}\n", ts.point(i));
        }
        s
    };
    std::fs::write(&cand_csv, to_csv(&star)).unwrap();
    std::fs::write(&star_csv, to_csv(&bumped)).unwrap();
    let code = Command::new(env!("CARGO_BIN_EXE_nablavar"))
        .arg("compare")
        .arg(&cfg)
        .arg("--candidate")
        .arg(&cand_csv)
        .arg("--star")
        .arg(&star_csv)
        .output()
        .map(|o| o.status.code())
        .unwrap_or(None);

    outcome(
        worst <= 1e-9 && improved > 0.0 && code == Some(1),
        format!("worst margin {worst:.3e} (tol 1e-9), improved margin {improved:.3e}, compare exit {code:?}"),
    )
}

// ---------------------------------------------------------------- 8

/// Random expression source over a domain-safe grammar.
fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let leaves = ["t", "x1", "x2", "v1", "v2", "z"];
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            leaves[rng.gen_range(0..leaves.len())].to_string()
        } else {
            format!("{:.2}", rng.gen_range(-3.0..3.0))
        };
    }
    let a = random_expr(rng, depth - 1);
    let b = random_expr(rng, depth - 1);
    match rng.gen_range(0..11) {
        0 => format!("({a}) + ({b})"),
        1 => format!("({a}) - ({b})"),
        2 => format!("({a}) * ({b})"),
        3 => format!("({a}) / (1 + ({b})^2)"),
        4 => format!("({a})^{}", rng.gen_range(0..4)),
        5 => format!("(1 + ({a})^2)^(0.3*({b}))"),
        6 => format!("-({a})"),
        7 => format!("exp(sin({a}))"),
        8 => format!("sin({a}) + cos({b})"),
        9 => format!("log(1 + ({a})^2)"),
        _ => format!("sqrt(1 + ({a})^2)"),
    }
}

fn symbolic_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let vars = [Var::T, Var::X(0), Var::X(1), Var::V(0), Var::V(1), Var::Z];
    let mut compared = 0;
    let mut worst = 0.0f64;
    for case in 0..200 {
        let src = random_expr(&mut rng, 4);
        let e = match expr::parse(&src) {
            Ok(e) => e,
            Err(err) => return outcome(false, format!("case {case}: {src}: {err}")),
        };
        let p: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let at = |q: &[f64], f: &expr::Expr| f.eval(&Env::new(q[0], &q[1..3], &q[3..5], q[5]));
        for (k, &var) in vars.iter().enumerate() {
            let d = e.differentiate(var);
            let h = 1e-6;
            let (mut lo, mut hi) = (p.clone(), p.clone());
            lo[k] -= h;
            hi[k] += h;
            let (Ok(exact), Ok(fl), Ok(fh)) = (at(&p, &d), at(&lo, &e), at(&hi, &e)) else {
                continue;
            };
            let fd = (fh - fl) / (2.0 * h);
            if !exact.is_finite() || !fd.is_finite() {
                continue;
            }
            compared += 1;
            let scale = exact.abs().max(fd.abs());
            worst = worst.max((exact - fd).abs() / scale.max(1.0));
            if !rel_close(exact, fd, scale, 1e-5) {
                return outcome(false, format!("{src}: d/d{var} = {exact}, central difference {fd}"));
            }
        }
    }
    outcome(true, format!("{compared} partials compared, worst relative gap {worst:.2e} (tol 1e-5)"))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 8] = [
        ("calculus exactness", calculus_exactness, 5),
        ("classical-limit EL convergence", classical_limit, 30),
        ("brute-force oracle equivalence", oracle_equivalence, 60),
        ("z-coupled EL residuals", z_coupled, 60),
        ("transversality trend", transversality_trend, 120),
        ("fundamental-lemma soundness", lemma_soundness, 10),
        ("weak-maximizer margin", weak_max_margin, 30),
        ("symbolic derivative oracle", symbolic_oracle, 5),
    ];
    let mut failed = Vec::new();
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let pass = out.pass && in_time;
        println!(
            "criterion {} {name}: {} [{:.2}s of {budget}s{}] {}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
            out.detail
        );
        if !pass {
            failed.push(k + 1);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
