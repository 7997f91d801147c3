//! Column layouts of the CSV artifacts. Each builder returns a [`Table`] of
//! already formatted cells; floats use the shortest round-trip form so that
//! equal values always print the same.

use crate::complexity::ComplexityStats;
use crate::dynamics::HyperbolicityCertificate;
use crate::markov::DensityCurve;
use crate::mixing::{JacobianSummary, MixScaleResult, OverlapEstimate};
use crate::singularity::SingularityLines;
use crate::spectral::{DecayCurve, PulsedContinuousComparison, RateFit};
use crate::geometry::rat_to_f64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn f(v: f64) -> String {
    fmt_f64(v)
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

pub fn hyperbolicity_table(cert: &HyperbolicityCertificate) -> Table {
    let mut t = Table::new(
        "hyperbolicity",
        &["alpha", "matrix", "det", "unstable_eigenvalue", "eigenvalue_ok", "forward_invariant",
          "backward_invariant", "min_expansion", "required_expansion", "expansion_ok", "pass"],
    );
    for c in &cert.checks {
        t.push(vec![
            cert.params.alpha().to_string(),
            c.id.to_string(),
            c.det.to_string(),
            f(c.unstable_eigenvalue),
            c.eigenvalue_ok.to_string(),
            c.forward_invariant.to_string(),
            c.backward_invariant.to_string(),
            f(c.min_expansion),
            f(cert.required_expansion),
            c.expansion_ok.to_string(),
            cert.passed.to_string(),
        ]);
    }
    t
}

pub fn singularity_table(lines: &SingularityLines) -> Table {
    let mut t = Table::new("singularity", &["kind", "step", "slope", "offset", "x0", "y0", "x1", "y1"]);
    for s in &lines.segments {
        t.push(vec![
            s.kind.as_str().to_string(),
            s.step.to_string(),
            f(s.slope()),
            f(rat_to_f64(&s.offset)),
            f(rat_to_f64(&s.start[0])),
            f(rat_to_f64(&s.start[1])),
            f(rat_to_f64(&s.end[0])),
            f(rat_to_f64(&s.end[1])),
        ]);
    }
    t
}

pub fn complexity_table(alpha: u32, stats: &[ComplexityStats]) -> Table {
    let mut t = Table::new(
        "complexity",
        &["alpha", "n", "long_fraction", "trapped_fraction", "ci_lo", "ci_hi", "pieces_sampled"],
    );
    for s in stats {
        t.push(vec![
            alpha.to_string(),
            s.n.to_string(),
            f(s.long_fraction),
            f(s.trapped_fraction),
            f(s.ci_lo),
            f(s.ci_hi),
            s.pieces.to_string(),
        ]);
    }
    t
}

/// One overlap estimate with the viscosity and kick seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRow {
    pub nu: f64,
    pub kick_seed: u64,
    pub estimate: OverlapEstimate,
}

pub fn overlap_table(rows: &[OverlapRow]) -> Table {
    let mut t = Table::new(
        "overlap",
        &["N", "n", "nu", "seed", "Rj", "Rk", "Qj", "Qk", "value", "ci_lo", "ci_hi", "method"],
    );
    for r in rows {
        let e = &r.estimate;
        t.push(vec![
            e.r.level.to_string(),
            e.n.to_string(),
            f(r.nu),
            r.kick_seed.to_string(),
            e.r.j.to_string(),
            e.r.k.to_string(),
            e.q.j.to_string(),
            e.q.k.to_string(),
            f(e.value),
            f(e.ci.0),
            f(e.ci.1),
            e.method.as_str().to_string(),
        ]);
    }
    t
}

pub fn mixscale_table(series: &[MixScaleResult]) -> Table {
    let mut t = Table::new("mixscale", &["n", "kappa", "mix"]);
    for (n, r) in series.iter().enumerate() {
        t.push(vec![n.to_string(), f(r.kappa), f(r.mix)]);
    }
    t
}

pub fn corr_table(series: &[f64]) -> Table {
    let mut t = Table::new("corr", &["n", "value"]);
    for (n, v) in series.iter().enumerate() {
        t.push(vec![n.to_string(), f(*v)]);
    }
    t
}

pub fn jac_table(rows: &[JacobianSummary]) -> Table {
    let mut t = Table::new("jac", &["alpha", "n", "max_dev", "p99_dev"]);
    for r in rows {
        t.push(vec![r.alpha.to_string(), r.n.to_string(), f(r.max_dev), f(r.p99_dev)]);
    }
    t
}

pub fn decay_table(curves: &[DecayCurve]) -> Table {
    let mut t = Table::new("decay", &["step_or_time", "l2", "linf", "nu", "alpha", "M", "scheme"]);
    for c in curves {
        for q in &c.points {
            t.push(vec![f(q.t), f(q.l2), f(q.linf), f(c.nu), c.alpha.to_string(), c.m.to_string(), c.scheme.clone()]);
        }
    }
    t
}

pub fn ratefit_table(fit: &RateFit) -> Table {
    let mut t = Table::new("ratefit", &["nu", "nstar", "lognu", "fit_slope", "fit_intercept", "dispersion"]);
    for e in &fit.entries {
        t.push(vec![
            f(e.nu),
            opt(e.n_star),
            f(e.log_nu),
            opt(fit.fit.as_ref().map(|l| l.slope)),
            opt(fit.fit.as_ref().map(|l| l.intercept)),
            f(fit.dispersion),
        ]);
    }
    t
}

pub fn compare_table(rows: &[PulsedContinuousComparison]) -> Table {
    let mut t = Table::new(
        "compare",
        &["nu", "k", "error", "pulsed_dissipation", "continuous_dissipation"],
    );
    for r in rows {
        for (k, e) in r.errors.iter().enumerate() {
            t.push(vec![f(r.nu), k.to_string(), f(*e), f(r.pulsed_dissipation), f(r.continuous_dissipation)]);
        }
    }
    t
}

pub fn density_table(curves: &[DensityCurve]) -> Table {
    let mut t = Table::new("density", &["nu", "n", "bins", "min_density", "max_density", "tv"]);
    for c in curves {
        for q in &c.points {
            t.push(vec![f(c.nu), q.n.to_string(), (1u64 << c.b).to_string(), f(q.min_density), f(q.max_density), f(q.tv)]);
        }
    }
    t
}
