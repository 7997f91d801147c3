//! One function per experiment suite. Each reads its keys from the config,
//! runs, and writes its tables; defaults reproduce the reference runs.

use hypermix::complexity::{complexity_horizon, final_generation_stats, Evaluation, USegment};
use hypermix::dynamics::{verify_hyperbolicity, KickSequence};
use hypermix::geometry::{parse_rat, rat, rat_to_f64, Side};
use hypermix::markov::{bins_for_viscosity, density_curve};
use hypermix::mixing::{
    correlation_series, grid_floor, jacobian_summary, mixing_scale_series, overlap_exact, overlap_mc, Pullback,
};
use hypermix::singularity::singularity_lines;
use hypermix::spectral::{compare_pulsed_continuous, continuous_solve, fit_rate, initial_field, pulsed_evolve};
use hypermix::tables::{self, OverlapRow, Table};
use hypermix::torus::{DyadicSquare, MapParams, TorusPoint};

use crate::config::Config;
use crate::output::Output;
use crate::CliError;

pub const SUITES: &[&str] = &[
    "hyperbolicity",
    "complexity",
    "overlap",
    "mixscale",
    "correlation",
    "jacobian",
    "pulsed",
    "continuous",
    "compare",
    "doeblin",
];

fn params(cfg: &Config) -> Result<MapParams, CliError> {
    Ok(MapParams::parse(cfg.get("alpha", 16)?, &cfg.string("delta1", "1/2"))?)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("{name} must be positive, got {v}")))
    }
}

fn pullback(cfg: &Config) -> Result<Pullback, CliError> {
    match cfg.string("pullback", "jittered").as_str() {
        "jittered" => Ok(Pullback::Jittered { seed: cfg.task_seed(0)? }),
        "lattice" => Ok(Pullback::Lattice),
        other => Err(CliError::Validation(format!("pullback must be jittered or lattice, got '{other}'"))),
    }
}

pub fn run(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    match cfg.suite.as_str() {
        "hyperbolicity" => hyperbolicity(cfg, out),
        "complexity" => complexity(cfg, out),
        "overlap" => overlap(cfg, out),
        "mixscale" => mixscale(cfg, out),
        "correlation" => correlation(cfg, out),
        "jacobian" => jacobian(cfg, out),
        "pulsed" => pulsed(cfg, out),
        "continuous" => continuous(cfg, out),
        "compare" => compare(cfg, out),
        "doeblin" => doeblin(cfg, out),
        other => Err(CliError::Validation(format!("unknown suite '{other}'"))),
    }
}

fn hyperbolicity(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let cert = verify_hyperbolicity(&p);
    out.write(&tables::hyperbolicity_table(&cert))?;
    let lines = singularity_lines(&p, 1, &KickSequence::unkicked(), Side::Forward, cfg.get("budget", 1 << 16)?)?;
    out.write(&tables::singularity_table(&lines))?;
    Ok(format!("pass={} min_expansion={}", cert.passed, cert.min_expansion))
}

fn complexity(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let alpha = p.alpha();
    let length = match cfg.raw("segment_length") {
        Some(s) => parse_rat(s)?,
        None => rat(1, 8 * alpha as i64),
    };
    let seg = USegment::horizontal(&p, [rat(1, 7), rat(2, 9)], length.clone())?;
    let horizon = complexity_horizon(rat_to_f64(&length), alpha);
    let steps: Vec<usize> = cfg.list("steps", &horizon.to_string())?;
    let samples: u64 = cfg.get("samples", 10_000)?;
    let confidence: f64 = cfg.get("confidence", 0.99)?;
    let exact = match cfg.string("method", "sampled").as_str() {
        "sampled" => false,
        "exact" => true,
        other => return Err(CliError::Validation(format!("method must be sampled or exact, got '{other}'"))),
    };
    let mut stats = Vec::new();
    for (i, &n) in steps.iter().enumerate() {
        let eval = if exact {
            Evaluation::Exhaustive { budget: cfg.get("budget", 1 << 22)? }
        } else {
            Evaluation::Sampled { samples, seed: cfg.task_seed(i as u64)?, confidence }
        };
        stats.push(final_generation_stats(&seg, &p, &KickSequence::unkicked(), n, eval)?);
    }
    out.write(&tables::complexity_table(alpha, &stats))?;
    let last = stats.last().map(|s| s.long_fraction).unwrap_or(f64::NAN);
    Ok(format!("horizon={horizon} long_fraction={last}"))
}

fn overlap(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let level: u32 = cfg.get("level", 3)?;
    if !(1..=16).contains(&level) {
        return Err(CliError::Validation(format!("level must lie in 1..=16, got {level}")));
    }
    let n: usize = cfg.get("n", 16)?;
    let nus: Vec<f64> = cfg.list("nu", "0")?;
    let pairs: u64 = cfg.get("pairs", 50)?;
    let sequences: u64 = cfg.get("kick_sequences", 5)?;
    let samples: u64 = cfg.get("samples", 1_000_000)?;
    let confidence: f64 = cfg.get("confidence", 0.99)?;
    let method = cfg.string("method", "mc");
    if method != "mc" && method != "exact" {
        return Err(CliError::Validation(format!("method must be mc or exact, got '{method}'")));
    }
    let side = 1u64 << level;
    let squares: Vec<(DyadicSquare, DyadicSquare)> = (0..pairs)
        .map(|i| {
            let h = cfg.task_seed(1 << 40 | i)?;
            let c = |s: u64| (s % side, (s / side) % side);
            let (rj, rk) = c(h);
            let (qj, qk) = c(h >> 32);
            Ok((DyadicSquare::new(level, rj, rk)?, DyadicSquare::new(level, qj, qk)?))
        })
        .collect::<Result<_, CliError>>()?;
    let mut rows = Vec::new();
    let mut task = 0u64;
    let mut worst = f64::INFINITY;
    for &nu in &nus {
        if nu < 0.0 {
            return Err(CliError::Validation(format!("nu must be nonnegative, got {nu}")));
        }
        // zero kicks first; at nu = 0 every Gaussian sequence is the zero sequence
        let mut kicks = vec![(0u64, KickSequence::unkicked())];
        if nu > 0.0 {
            for s in 0..sequences {
                let seed = cfg.task_seed(1 << 41 | s)?;
                kicks.push((seed, KickSequence::for_viscosity(n, nu, seed, 0)));
            }
        }
        for (kick_seed, xi) in &kicks {
            for &(r, q) in &squares {
                let estimate = if method == "mc" {
                    overlap_mc(r, q, n, xi, &p, samples, cfg.task_seed(task)?, confidence)?
                } else {
                    overlap_exact(r, q, n, xi, &p, cfg.get("budget", 1 << 20)?)?
                };
                task += 1;
                worst = worst.min(estimate.ratio_ci().0);
                rows.push(OverlapRow { nu, kick_seed: *kick_seed, estimate });
            }
        }
    }
    out.write(&tables::overlap_table(&rows))?;
    Ok(format!("rows={} min_ratio_lower={worst}", rows.len()))
}

fn mixscale(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let level = cfg.grid_level(4096)?;
    let field = initial_field(&cfg.string("field", "sin_x_plus_cos_y"), level)?;
    let kappa = positive("kappa", cfg.get("kappa", 0.5)?)?;
    let series = mixing_scale_series(&field.values, level, kappa, cfg.get("n_max", 12)?, &p, pullback(cfg)?)?;
    let floor = grid_floor(&field.values, level, kappa, cfg.task_seed(1)?)?;
    out.write(&tables::mixscale_table(&series))?;
    let mut t = Table::new("mixscale_floor", &["kappa", "floor"]);
    t.push(vec![tables::fmt_f64(kappa), tables::fmt_f64(floor.mix)]);
    out.write(&t)?;
    let last = series.last().map(|r| r.mix).unwrap_or(f64::NAN);
    Ok(format!("final_mix={last} floor={}", floor.mix))
}

fn correlation(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let level = cfg.grid_level(4096)?;
    let f = initial_field(&cfg.string("field", "sin_x"), level)?;
    let g = initial_field(&cfg.string("g_field", "sin_x"), level)?;
    let series = correlation_series(&f.values, &g.values, level, cfg.get("n_max", 8)?, &p, pullback(cfg)?)?;
    out.write(&tables::corr_table(&series))?;
    let last = series.last().copied().unwrap_or(f64::NAN);
    Ok(format!("final_corr={last}"))
}

fn jacobian(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let steps: Vec<usize> = cfg.list("steps", "8")?;
    let samples: u64 = cfg.get("samples", 10_000)?;
    let nu: f64 = cfg.list::<f64>("nu", "0")?.first().copied().unwrap_or(0.0);
    if nu < 0.0 {
        return Err(CliError::Validation(format!("nu must be nonnegative, got {nu}")));
    }
    let mut rows = Vec::new();
    for (i, &n) in steps.iter().enumerate() {
        rows.push(jacobian_summary(&p, n, samples, (2.0 * nu).sqrt(), cfg.task_seed(i as u64)?)?);
    }
    out.write(&tables::jac_table(&rows))?;
    let worst = rows.iter().map(|r| r.max_dev).fold(0.0, f64::max);
    Ok(format!("max_dev={worst}"))
}

fn pulsed(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let level = cfg.grid_level(4096)?;
    let name = cfg.string("field", "sin_y");
    let f0 = initial_field(&name, level)?;
    let threshold = positive("threshold", cfg.get("threshold", 1e-6)?)?;
    let n_max: usize = cfg.get("n_max", 200)?;
    let nus: Vec<f64> = cfg.list("nu", "1e-3,3e-4,1e-4,3e-5,1e-5")?;
    let curves = nus
        .iter()
        .map(|&nu| pulsed_evolve(&f0, &p, nu, n_max, threshold, &name))
        .collect::<Result<Vec<_>, _>>()?;
    out.write(&tables::decay_table(&curves))?;
    if nus.len() >= 3 {
        let fit = fit_rate(&curves, threshold)?;
        out.write(&tables::ratefit_table(&fit))?;
        return Ok(format!("dispersion={}", fit.dispersion));
    }
    Ok(format!("curves={}", curves.len()))
}

fn continuous(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let level = cfg.grid_level(512)?;
    let name = cfg.string("field", "sin_y");
    let f0 = initial_field(&name, level)?;
    let periods: usize = cfg.get("periods", 4)?;
    let substeps: usize = cfg.get("substeps", 16)?;
    let mut curves = Vec::new();
    let mut defect = 0.0f64;
    for nu in cfg.list::<f64>("nu", "1e-3")? {
        let run = continuous_solve(&f0, &p, nu, periods, substeps, &name)?;
        defect = defect.max(run.energy_defect);
        curves.push(run.curve);
    }
    out.write(&tables::decay_table(&curves))?;
    Ok(format!("energy_defect={defect}"))
}

fn compare(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let level = cfg.grid_level(512)?;
    let f0 = initial_field(&cfg.string("field", "sin_y"), level)?;
    let n: usize = cfg.get("n", 10)?;
    let substeps: usize = cfg.get("substeps", 16)?;
    let rows = cfg
        .list::<f64>("nu", "1e-2,1e-3,1e-4")?
        .into_iter()
        .map(|nu| compare_pulsed_continuous(&f0, &p, nu, n, substeps))
        .collect::<Result<Vec<_>, _>>()?;
    out.write(&tables::compare_table(&rows))?;
    let worst = rows.iter().map(|r| r.max_error()).fold(0.0, f64::max);
    Ok(format!("max_error={worst}"))
}

fn doeblin(cfg: &Config, out: &mut Output) -> Result<String, CliError> {
    let p = params(cfg)?;
    let z: Vec<f64> = cfg.list("z0", "0.3,0.6")?;
    if z.len() != 2 {
        return Err(CliError::Validation("z0 must be two coordinates".into()));
    }
    let z0 = TorusPoint::from_f64(z[0], z[1]);
    let n_max: usize = cfg.get("n_max", 10)?;
    let per_bin: usize = cfg.get("samples_per_bin", 1000)?;
    let confidence: f64 = cfg.get("confidence", 0.99)?;
    let mut curves = Vec::new();
    for (i, nu) in cfg.list::<f64>("nu", "1e-2,1e-3,1e-4")?.into_iter().enumerate() {
        let b = bins_for_viscosity(nu)?;
        curves.push(density_curve(z0, nu, b, n_max, per_bin << (2 * b), cfg.task_seed(i as u64)?, confidence, &p)?);
    }
    out.write(&tables::density_table(&curves))?;
    let floor = curves
        .iter()
        .filter_map(|c| c.points.last().map(|q| q.min_density))
        .fold(f64::INFINITY, f64::min);
    Ok(format!("final_min_density={floor}"))
}
