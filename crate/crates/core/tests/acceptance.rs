//! Acceptance run: one line per criterion, `PASS` or `FAIL`, with the measured
//! numbers and the pinned tolerance. Run with
//! `cargo test -p hypermix --test acceptance`.
//!
//! The process exits nonzero when a criterion fails that is not listed in
//! `KNOWN_GAPS`.

use std::f64::consts::PI;
use std::time::Instant;

use hypermix::complexity::{
    advance_generation, complexity_horizon, final_generation_stats, generation_stats_exhaustive,
    leaf_sample_estimate, Evaluation, Generation, USegment,
};
use hypermix::dynamics::{apply_t, apply_t1, apply_t2, verify_hyperbolicity, KickSequence};
use hypermix::geometry::{rat, LengthRule};
use hypermix::grid::{sample_field, t_permutation};
use hypermix::markov::{bins_for_viscosity, density_curve, onset_fit};
use hypermix::mixing::{
    area_quadrature, correlation_floor, correlation_series, grid_floor, intersection_sum, intersection_threshold,
    jacobian_summary, mixing_scale_series, overlap_exact, overlap_mc, IntersectionMode, Pullback,
};
use hypermix::spectral::{
    compare_pulsed_continuous, continuous_solve, fit_rate, heat_only_crossing, initial_field, pulsed_evolve,
    transport_step, SpectralField,
};
use hypermix::stats::linear_fit;
use hypermix::torus::{DyadicSquare, MapParams, TorusPoint};

/// Criteria that are expected to fail, with the reason recorded alongside the
/// measured numbers in the project notes.
const KNOWN_GAPS: &[usize] = &[9];

const CONFIDENCE: f64 = 0.99;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> Result<Outcome, String>;

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn hyperbolicity() -> Result<Outcome, String> {
    let t = Instant::now();
    let cert = verify_hyperbolicity(&MapParams::with_alpha(16).map_err(e)?);
    let elapsed = t.elapsed().as_secs_f64();
    let dets = cert.checks.iter().all(|c| c.det == 1);
    let eig = cert.checks.iter().map(|c| c.unstable_eigenvalue.abs()).fold(f64::INFINITY, f64::min);
    let weak = verify_hyperbolicity(&MapParams::with_alpha(2).map_err(e)?);
    let weak_fails = weak.checks.iter().any(|c| !c.expansion_ok) && !weak.passed;
    let pass = cert.checks.len() == 4
        && dets
        && eig >= 64.0
        && cert.cone_invariance
        && cert.min_expansion >= 128.0
        && cert.passed
        && weak_fails
        && elapsed < 1.0;
    Ok(outcome(
        pass,
        format!(
            "det=1:{dets} min|λu|={eig:.3} (>=64) min_expansion={:.3} (>=128) cones={} α=2 rejected:{weak_fails} {elapsed:.3}s (<1s)",
            cert.min_expansion, cert.cone_invariance
        ),
    ))
}

fn exactness() -> Result<Outcome, String> {
    let t = Instant::now();
    let level = 10u32;
    let m = 1usize << level;
    let shift = 64 - level;
    let p = MapParams::with_alpha(16).map_err(e)?;
    let mut hit = vec![false; m * m];
    let mut on_lattice = true;
    for i in 0..m as u64 {
        for j in 0..m as u64 {
            let z = apply_t(TorusPoint::new(i << shift, j << shift), &p);
            let mask = (1u64 << shift) - 1;
            on_lattice &= z.x & mask == 0 && z.y & mask == 0;
            hit[((z.x >> shift) as usize) * m + (z.y >> shift) as usize] = true;
        }
    }
    let bijective = on_lattice && hit.iter().all(|&h| h);
    let f = initial_field("sin_x_plus_cos_y", level).map_err(e)?;
    let perm = t_permutation(level, &p).map_err(e)?;
    let g = transport_step(&f, &perm);
    let mut a: Vec<u64> = f.values.iter().map(|v| v.to_bits()).collect();
    let mut b: Vec<u64> = g.values.iter().map(|v| v.to_bits()).collect();
    a.sort_unstable();
    b.sort_unstable();
    let multiset = a == b;
    let elapsed = t.elapsed().as_secs_f64();
    Ok(outcome(
        bijective && multiset && elapsed < 10.0,
        format!("bijection on 1024² lattice:{bijective} sorted multiset bit-exact:{multiset} {elapsed:.2}s (<10s)"),
    ))
}

fn complexity() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let xi = KickSequence::unkicked();
    let seg = USegment::horizontal(&p, [rat(1, 7), rat(2, 9)], rat(1, 128)).map_err(e)?;

    // exhaustive tree against leaf sampling, with the last step cut at 5/4
    let terminal = LengthRule::terminal();
    let mut agree = true;
    let mut cmp = Vec::new();
    for n in 1..=3 {
        let ex = generation_stats_exhaustive(&seg, &p, &xi, n, Some(&terminal), 1 << 24).map_err(e)?;
        let sa = leaf_sample_estimate(&seg, &p, &xi, n, Some(&terminal), 10_000, 100 + n as u64, CONFIDENCE).map_err(e)?;
        let inside = (sa.ci_lo..=sa.ci_hi).contains(&ex.long_fraction);
        agree &= inside;
        cmp.push(format!("n={n} {:.4}∈[{:.4},{:.4}]", ex.long_fraction, sa.ci_lo, sa.ci_hi));
    }

    let rule = LengthRule::standard(&p);
    let mut g = Generation::initial(&seg);
    let mut conserved = true;
    for _ in 0..2 {
        g = advance_generation(&g, &p, &[rat(0, 1), rat(0, 1)], &rule, 1 << 22).map_err(e)?;
        conserved &= g.mass() == g.extent;
    }

    let mut longs = Vec::new();
    for alpha in [16u32, 64, 256] {
        let p = MapParams::with_alpha(alpha).map_err(e)?;
        let seg = USegment::horizontal(&p, [rat(1, 7), rat(2, 9)], rat(1, 8 * alpha as i64)).map_err(e)?;
        let n = complexity_horizon(seg.length(), alpha);
        let eval = Evaluation::Sampled { samples: 10_000, seed: alpha as u64, confidence: CONFIDENCE };
        let s = final_generation_stats(&seg, &p, &xi, n, eval).map_err(e)?;
        longs.push((alpha, n, s.long_fraction, s.ci_lo));
    }
    let monotone = longs.windows(2).all(|w| w[1].2 >= w[0].2);
    let floor = (1.0 - 1.0 / 256.0) * (1.0 - 60.0 / (0.5 * 256.0));
    let (_, _, top, top_lo) = longs[2];
    let pass = agree && conserved && monotone && top_lo >= floor;
    let curve: Vec<String> = longs.iter().map(|(a, n, l, _)| format!("α={a} n={n} long={l:.4}")).collect();
    Ok(outcome(
        pass,
        format!(
            "tree vs leaves [{}] mass exact:{conserved} {} monotone:{monotone} α=256 lower={top_lo:.4} long={top:.4} (>= {floor:.4})",
            cmp.join(" "),
            curve.join(" ")
        ),
    ))
}

fn geometric_mixing() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let n = 16;
    let mut rng_state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        rng_state >> 33
    };
    let pairs: Vec<(DyadicSquare, DyadicSquare)> = (0..50)
        .map(|_| {
            let r = DyadicSquare::new(3, next() % 8, next() % 8).unwrap();
            let q = DyadicSquare::new(3, next() % 8, next() % 8).unwrap();
            (r, q)
        })
        .collect();
    let mut kicks = vec![KickSequence::unkicked()];
    for s in 0..5 {
        kicks.push(KickSequence::for_viscosity(n, 1e-2, 500 + s, 0));
    }
    let mut worst = f64::INFINITY;
    let mut task = 0;
    for xi in &kicks {
        for &(r, q) in &pairs {
            let est = overlap_mc(r, q, n, xi, &p, 1_000_000, 7_000 + task, CONFIDENCE).map_err(e)?;
            task += 1;
            worst = worst.min(est.ratio_ci().0);
        }
    }

    // exact polygons against Monte Carlo at level 2
    let mut oracle_ok = true;
    let mut worst_z = 0.0f64;
    for (alpha, n_top) in [(4u32, 4usize), (16, 2)] {
        let p = MapParams::with_alpha(alpha).map_err(e)?;
        for n in 1..=n_top {
            for (i, (r, q)) in [((0, 1), (3, 2)), ((2, 2), (1, 0))].into_iter().enumerate() {
                let r = DyadicSquare::new(2, r.0, r.1).map_err(e)?;
                let q = DyadicSquare::new(2, q.0, q.1).map_err(e)?;
                let xi = KickSequence::unkicked();
                let ex = overlap_exact(r, q, n, &xi, &p, 1 << 22).map_err(e)?;
                let mc = overlap_mc(r, q, n, &xi, &p, 1_000_000, 40 + i as u64, CONFIDENCE).map_err(e)?;
                oracle_ok &= (mc.ci.0..=mc.ci.1).contains(&ex.value);
                let half = (mc.ci.1 - mc.ci.0).max(1e-12) / 2.0;
                worst_z = worst_z.max((ex.value - mc.value).abs() / half);
            }
        }
    }
    Ok(outcome(
        worst >= 0.05 && oracle_ok,
        format!(
            "min ratio lower bound over 300 runs={worst:.4} (>=0.05) exact inside MC CI:{oracle_ok} (worst |Δ|/halfwidth={worst_z:.2})"
        ),
    ))
}

fn area_formula() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let xi = KickSequence::unkicked();
    let r = DyadicSquare::new(2, 1, 2).map_err(e)?;
    let q = DyadicSquare::new(2, 3, 0).map_err(e)?;
    let mc = overlap_mc(r, q, 8, &xi, &p, 10_000_000, 5, CONFIDENCE).map_err(e)?;
    let quad = area_quadrature(r, q, 4, &xi, &p, 8, 200, 7, CONFIDENCE).map_err(e)?;
    let rel = (quad.value - mc.value).abs() / mc.value;

    let wu = USegment::horizontal(&p, [rat(1, 4), rat(5, 8)], rat(1, 4)).map_err(e)?;
    let ws = USegment::vertical(&p, [rat(7, 8), rat(0, 1)], rat(1, 4)).map_err(e)?;
    let n = intersection_threshold(wu.length(), 16);
    let mode = IntersectionMode::Sampled { samples: 2000, seed: 3, confidence: CONFIDENCE };
    let s = intersection_sum(&wu, &ws, n, &xi, &p, mode).map_err(e)?;
    let bound = 0.05 * wu.length() * ws.length();
    Ok(outcome(
        rel <= 0.02 && s.ci.0 >= bound && !s.below_threshold,
        format!(
            "quadrature={:.5} overlap={:.5} rel={rel:.2e} (<=2e-2) intersection_sum(n={n}) lower={:.4} (>= {bound:.4})",
            quad.value, mc.value, s.ci.0
        ),
    ))
}

fn jacobians() -> Result<Outcome, String> {
    let mut maxes = Vec::new();
    for alpha in [16u32, 64, 256] {
        let p = MapParams::with_alpha(alpha).map_err(e)?;
        let mut worst = 0.0f64;
        for n in 1..=8 {
            worst = worst.max(jacobian_summary(&p, n, 10_000, 0.1, 11).map_err(e)?.max_dev);
        }
        maxes.push((alpha, worst));
    }
    let finite = maxes.iter().all(|m| m.1.is_finite());
    let decreasing = maxes.windows(2).all(|w| w[1].1 < w[0].1);
    let top = maxes[2].1;
    let c = top * 256.0;
    let list: Vec<String> = maxes.iter().map(|(a, m)| format!("α={a}:{m:.3e}")).collect();
    Ok(outcome(
        finite && decreasing && top <= 8.0 / 256.0,
        format!("max|JuJs/JF−1| {} decreasing:{decreasing} α=256 <= 8/α={:.4} fitted C={c:.3}", list.join(" "), 8.0 / 256.0),
    ))
}

fn enhanced_dissipation() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let f0 = initial_field("sin_y", 12).map_err(e)?;
    let threshold = 1e-6;
    let curves = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5]
        .iter()
        .map(|&nu| pulsed_evolve(&f0, &p, nu, 200, threshold, "sin_y"))
        .collect::<Result<Vec<_>, _>>()
        .map_err(e)?;
    let fit = fit_rate(&curves, threshold).map_err(e)?;
    let pulsed = curves[4].crossing(threshold).ok_or("pulsed curve at 1e-5 never crossed")?;
    let heat = heat_only_crossing(&f0, 1e-5, threshold).map_err(e)?;
    let ratio = heat / pulsed;
    let stars: Vec<String> =
        fit.entries.iter().map(|r| format!("{:.2}", r.n_star.unwrap_or(f64::NAN))).collect();
    Ok(outcome(
        fit.entries.iter().all(|r| r.n_star.is_some()) && fit.dispersion <= 2.0 && ratio >= 100.0,
        format!("n*=[{}] dispersion={:.3} (<=2) heat/pulsed at 1e-5={ratio:.0} (>=100)", stars.join(","), fit.dispersion),
    ))
}

fn continuous_solver() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let level = 9;
    let f0 = initial_field("sin_x_cos_y", level).map_err(e)?;

    // f(1) = f₀ ∘ φ₁⁻¹ with φ₁⁻¹ = T₁ ∘ T₂, evaluated pointwise
    let want = SpectralField::from_fn(level, |x, y| {
        let (x, y) = apply_t1(apply_t2(TorusPoint::<u64>::from_f64(x, y), &p), &p).to_f64();
        (2.0 * PI * x).sin() * (2.0 * PI * y).cos()
    })
    .map_err(e)?;
    let r0 = continuous_solve(&f0, &p, 0.0, 1, 16, "sin_x_cos_y").map_err(e)?;
    let transport = r0.snapshots[1].distance(&want) / f0.l2();

    let nu = 1e-3;
    let reference = continuous_solve(&f0, &p, nu, 1, 256, "sin_x_cos_y").map_err(e)?;
    let mut errs = Vec::new();
    let mut defect = 0.0f64;
    for s in [8usize, 16, 32, 64] {
        let r = continuous_solve(&f0, &p, nu, 1, s, "sin_x_cos_y").map_err(e)?;
        defect = defect.max(r.energy_defect);
        errs.push(r.snapshots[1].distance(&reference.snapshots[1]));
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let order2 = ratios.iter().all(|r| (3.0..=5.0).contains(r));
    let list: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    Ok(outcome(
        transport <= 1e-12 && defect <= 1e-6 && order2,
        format!(
            "ν=0 rel L2={transport:.2e} (<=1e-12) energy defect={defect:.2e} (<=1e-6) halving ratios=[{}] (in [3,5])",
            list.join(",")
        ),
    ))
}

fn pulsed_vs_continuous() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let f0 = initial_field("sin_y", 9).map_err(e)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut errs = Vec::new();
    for nu in [1e-2, 1e-3, 1e-4] {
        let c = compare_pulsed_continuous(&f0, &p, nu, 10, 16).map_err(e)?;
        xs.push(nu.ln());
        ys.push(c.max_error().ln());
        errs.push(format!("{:.3e}", c.max_error()));
    }
    let slope = linear_fit(&xs, &ys).ok_or("degenerate fit")?.slope;
    Ok(outcome(
        (0.35..=0.65).contains(&slope),
        format!("max_k errors=[{}] log-log slope={slope:.3} (want 0.5±0.15)", errs.join(",")),
    ))
}

fn doeblin_floor() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let z0 = TorusPoint::from_f64(0.3, 0.6);
    let mut curves = Vec::new();
    for (i, nu) in [1e-2, 1e-3, 1e-4].into_iter().enumerate() {
        let b = bins_for_viscosity(nu).map_err(e)?;
        curves.push(density_curve(z0, nu, b, 10, 1000 << (2 * b), 900 + i as u64, CONFIDENCE, &p).map_err(e)?);
    }
    let fit = onset_fit(&curves, 4);
    let floor_ok = fit.plateaus.iter().all(|&v| v >= 0.1);
    let mean = fit.plateaus.iter().sum::<f64>() / fit.plateaus.len() as f64;
    let common = fit.plateaus.iter().all(|&v| (v - mean).abs() <= 0.5 * mean);
    let slope = fit.fit.as_ref().map(|f| f.slope);
    let all_onsets = fit.onsets.iter().all(|o| o.is_some());
    let pl: Vec<String> = fit.plateaus.iter().map(|v| format!("{v:.3}")).collect();
    let on: Vec<String> = fit.onsets.iter().map(|o| o.map_or("none".into(), |v| format!("{v:.2}"))).collect();
    Ok(outcome(
        floor_ok && common && all_onsets && slope.is_some_and(|s| s > 0.0),
        format!(
            "plateaus=[{}] (>=0.1, within ±50% of {mean:.3}) onsets=[{}] slope on |log ν|={:.3} (>0)",
            pl.join(","),
            on.join(","),
            slope.unwrap_or(f64::NAN)
        ),
    ))
}

fn mixing_scale() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let level = 12;
    let f = sample_field(level, |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos()).map_err(e)?;
    let series = mixing_scale_series(&f, level, 0.5, 12, &p, Pullback::Jittered { seed: 1 }).map_err(e)?;
    let floor = grid_floor(&f, level, 0.5, 1).map_err(e)?.mix;
    let mix: Vec<f64> = series.iter().map(|r| r.mix).collect();
    let non_increasing = mix.windows(2).all(|w| w[1] <= w[0]);
    let reached = mix.iter().position(|&v| v <= floor);
    // fit over the steps before the floor, plus the first step at it
    let end = reached.map_or(mix.len(), |k| k + 1);
    let xs: Vec<f64> = (0..end).map(|n| n as f64).collect();
    let ys: Vec<f64> = mix[..end].iter().map(|v| (1.0 / v).log2()).collect();
    let slope = linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN);
    let list: Vec<String> = mix.iter().map(|v| format!("2^{}", v.log2().round())).collect();
    Ok(outcome(
        non_increasing && reached.is_some() && slope > 0.5,
        format!(
            "mix=[{}] non-increasing:{non_increasing} floor=2^{} reached at n={} slope={slope:.2} (>0.5)",
            list.join(","),
            floor.log2().round(),
            reached.map_or("never".into(), |k| k.to_string())
        ),
    ))
}

fn correlation_decay() -> Result<Outcome, String> {
    let p = MapParams::with_alpha(16).map_err(e)?;
    let mut runs = Vec::new();
    for level in [11u32, 12] {
        let f = sample_field(level, |x, _| (2.0 * PI * x).sin()).map_err(e)?;
        let c = correlation_series(&f, &f, level, 8, &p, Pullback::Jittered { seed: 1 }).map_err(e)?;
        runs.push((correlation_floor(&f, &f, level), c));
    }
    let (floor_fine, fine) = &runs[1];
    let (floor_coarse, coarse) = &runs[0];
    let small = fine[8].abs() < 1e-3;
    let mut stable = true;
    let mut compared = 0;
    for (a, b) in coarse.iter().zip(fine) {
        if a.abs() > *floor_coarse && b.abs() > *floor_fine {
            stable &= (a - b).abs() <= 1e-4;
            compared += 1;
        }
    }
    let list: Vec<String> = fine.iter().map(|v| format!("{v:.1e}")).collect();
    Ok(outcome(
        small && stable && compared > 0,
        format!(
            "corr(M=4096)=[{}] |corr(8)|={:.1e} (<1e-3) M=2048 vs 4096 above floor: {compared} steps agree to 1e-4:{stable}",
            list.join(","),
            fine[8].abs()
        ),
    ))
}

fn main() {
    let checks: [(&str, Check); 12] = [
        ("hyperbolicity certificate", hyperbolicity),
        ("lattice exactness", exactness),
        ("segment complexity", complexity),
        ("geometric mixing", geometric_mixing),
        ("area formula", area_formula),
        ("jacobian comparison", jacobians),
        ("enhanced dissipation", enhanced_dissipation),
        ("continuous solver", continuous_solver),
        ("pulsed vs continuous", pulsed_vs_continuous),
        ("doeblin floor", doeblin_floor),
        ("mixing-scale decay", mixing_scale),
        ("correlation decay", correlation_decay),
    ];
    let only: Option<usize> = std::env::var("HYPERMIX_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut run = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|k| k != id) {
            continue;
        }
        run += 1;
        let t = Instant::now();
        let result = check().unwrap_or_else(|err| outcome(false, format!("error: {err}")));
        let tag = match (result.pass, KNOWN_GAPS.contains(&id)) {
            (true, _) => {
                passed += 1;
                "PASS"
            }
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                unexpected.push(id);
                "FAIL"
            }
        };
        println!("criterion {id:>2} {tag} {name}: {} [{:.1}s]", result.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed}/{run} passed");
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
