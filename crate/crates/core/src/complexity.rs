//! Generations of cone-tangent segments under a kicked composition.
//!
//! A generation is the image of a segment `W` after `n` steps, cut along the
//! singularity lines of each step and with every image longer than the cap
//! split into equal parts. Each piece remembers the parameter interval of `W`
//! it came from, so the masses `|T^{-n} W_i| / |W|` are exact rationals. A piece
//! is long when its length is at least the rule's threshold and trapped when
//! it and all its ancestors were short.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::KickSequence;
use crate::error::{domain, Error, Result};
use crate::geometry::{int, kick_vector, rat_to_f64, LengthRule, Piece, Rat, Side, Tracked};
use crate::rng::stream;
use crate::stats::clopper_pearson;
use crate::torus::{Cone, MapParams};

/// A segment tangent to the unstable cone (forward side) or the stable cone
/// (backward side): `start + s * dir` for `s ∈ [0, extent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct USegment {
    pub start: [Rat; 2],
    pub dir: [BigInt; 2],
    pub extent: Rat,
    pub side: Side,
}

fn cone_for(p: &MapParams, side: Side) -> Cone {
    match side {
        Side::Forward => Cone::unstable(*p),
        Side::Backward => Cone::stable(*p),
    }
}

impl USegment {
    pub fn new(p: &MapParams, start: [Rat; 2], dir: [BigInt; 2], extent: Rat, side: Side) -> Result<Self> {
        if !extent.is_positive() {
            return domain(format!("segment extent must be positive, got {extent}"));
        }
        if !cone_for(p, side).contains_big(&dir[0], &dir[1])? {
            return domain(format!("direction ({}, {}) is outside the {side:?} cone", dir[0], dir[1]));
        }
        Ok(USegment { start, dir, extent, side })
    }

    /// A horizontal segment of the given length, pushed forward.
    pub fn horizontal(p: &MapParams, start: [Rat; 2], length: Rat) -> Result<Self> {
        USegment::new(p, start, [1.into(), 0.into()], length, Side::Forward)
    }

    /// A vertical segment of the given length, pushed backward.
    pub fn vertical(p: &MapParams, start: [Rat; 2], length: Rat) -> Result<Self> {
        USegment::new(p, start, [0.into(), 1.into()], length, Side::Backward)
    }

    pub fn piece(&self) -> Piece {
        Piece::new(self.start.clone(), self.dir.clone(), self.extent.clone())
    }

    pub fn length(&self) -> f64 {
        self.piece().length()
    }
}

/// Kicks in the order the steps of a side apply them: `ξ1..ξn` forward,
/// `ξn..ξ1` backward (the inverse of `T^n_ξ`).
pub fn kick_schedule(xi: &KickSequence, n: usize, side: Side) -> Vec<[Rat; 2]> {
    let mut out: Vec<[Rat; 2]> = (0..n).map(|i| kick_vector(xi, i)).collect();
    if side == Side::Backward {
        out.reverse();
    }
    out
}

/// `⌈1 + ln(1/|W|) + ln(8α)⌉`, the step count after which long pieces dominate.
pub fn complexity_horizon(length: f64, alpha: u32) -> usize {
    (1.0 + (1.0 / length).ln() + (8.0 * alpha as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenPiece {
    pub piece: Piece,
    pub long: bool,
    pub trapped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub step: usize,
    pub side: Side,
    /// Parameter extent of the original segment.
    pub extent: Rat,
    pub pieces: Vec<GenPiece>,
}

impl Generation {
    pub fn initial(seg: &USegment) -> Self {
        Generation {
            step: 0,
            side: seg.side,
            extent: seg.extent.clone(),
            pieces: vec![GenPiece { piece: seg.piece(), long: false, trapped: true }],
        }
    }

    /// Sum of the preimage extents; equals [`Generation::extent`] exactly.
    pub fn mass(&self) -> Rat {
        self.pieces.iter().map(|g| g.piece.extent()).sum()
    }

    pub fn long_mass(&self) -> Rat {
        self.pieces.iter().filter(|g| g.long).map(|g| g.piece.extent()).sum()
    }

    pub fn trapped_mass(&self) -> Rat {
        self.pieces.iter().filter(|g| g.trapped).map(|g| g.piece.extent()).sum()
    }
}

fn assert_in_cone(p: &MapParams, side: Side, piece: &Piece) {
    let inside = cone_for(p, side)
        .contains_big(&piece.dir[0], &piece.dir[1])
        .expect("nonzero direction");
    assert!(inside, "piece direction left the {side:?} cone: {:?}", piece.dir);
}

/// One more step: cut, map, subdivide to the rule's cap, and update the flags.
pub fn advance_generation(
    g: &Generation,
    p: &MapParams,
    kick: &[Rat; 2],
    rule: &LengthRule,
    budget: usize,
) -> Result<Generation> {
    let mut pieces = Vec::new();
    for parent in &g.pieces {
        for img in parent.piece.step(p, g.side, kick) {
            assert_in_cone(p, g.side, &img);
            for sub in img.subdivide(&rule.cap) {
                let long = rule.is_long(&sub);
                pieces.push(GenPiece { trapped: parent.trapped && !long, long, piece: sub });
            }
        }
        if pieces.len() > budget {
            return Err(Error::Resource(format!(
                "generation {} exceeds {budget} pieces",
                g.step + 1
            )));
        }
    }
    Ok(Generation { step: g.step + 1, side: g.side, extent: g.extent.clone(), pieces })
}

/// Long / short / trapped mass fractions, exact or sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityStats {
    pub n: usize,
    pub long_fraction: f64,
    pub short_fraction: f64,
    pub trapped_fraction: f64,
    /// Mass fraction of final pieces whose horizontal extent is at least 1.
    pub wrapping_fraction: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trapped_ci: (f64, f64),
    /// Pieces in the final generation (exhaustive) or leaf samples drawn.
    pub pieces: u64,
    pub sampled: bool,
    pub below_horizon: bool,
    /// Exact long and trapped fractions when the tree was enumerated.
    pub exact: Option<(Rat, Rat)>,
}

impl ComplexityStats {
    fn exact(n: usize, extent: &Rat, long: Rat, trapped: Rat, wraps: Rat, pieces: u64, below: bool) -> Self {
        let lf = long / extent;
        let tf = trapped / extent;
        let l = rat_to_f64(&lf);
        let t = rat_to_f64(&tf);
        ComplexityStats {
            n,
            long_fraction: l,
            short_fraction: 1.0 - l,
            trapped_fraction: t,
            wrapping_fraction: rat_to_f64(&(wraps / extent)),
            ci_lo: l,
            ci_hi: l,
            trapped_ci: (t, t),
            pieces,
            sampled: false,
            below_horizon: below,
            exact: Some((lf, tf)),
        }
    }
}

/// Fractions of an existing generation.
pub fn classify_generation(g: &Generation) -> ComplexityStats {
    let wraps = g.pieces.iter().filter(|q| wraps_torus(&q.piece)).map(|q| q.piece.extent()).sum();
    ComplexityStats::exact(
        g.step,
        &g.extent,
        g.long_mass(),
        g.trapped_mass(),
        wraps,
        g.pieces.len() as u64,
        false,
    )
}

fn wraps_torus(piece: &Piece) -> bool {
    piece.extent() * Rat::from_integer(piece.dir[0].abs()) >= int(1)
}

/// Exhaustive statistics of the `n`-th generation. The last step is evaluated
/// without materializing its subdivision; `last_rule` replaces the standard
/// rule there when given (the 5/4 to 5/2 rule for the terminal generation).
pub fn generation_stats_exhaustive(
    seg: &USegment,
    p: &MapParams,
    xi: &KickSequence,
    n: usize,
    last_rule: Option<&LengthRule>,
    budget: usize,
) -> Result<ComplexityStats> {
    if n == 0 {
        return domain("generation statistics need n >= 1");
    }
    let kicks = kick_schedule(xi, n, seg.side);
    let standard = LengthRule::standard(p);
    let mut g = Generation::initial(seg);
    for kick in &kicks[..n - 1] {
        g = advance_generation(&g, p, kick, &standard, budget)?;
    }
    let rule = last_rule.unwrap_or(&standard);
    let (mut long, mut trapped, mut wraps) = (Rat::zero(), Rat::zero(), Rat::zero());
    let mut count = 0u64;
    for parent in &g.pieces {
        for img in parent.piece.step(p, seg.side, &kicks[n - 1]) {
            let k = img.subdivision_count(&rule.cap);
            count += k;
            let is_long = k > 1 || rule.is_long(&img);
            let e = img.extent();
            if is_long {
                long += &e;
            } else if parent.trapped {
                trapped += &e;
            }
            // parts of a subdivided piece have x-extent 1/k of the whole
            if img.extent() * Rat::from_integer(img.dir[0].abs()) >= int(k) {
                wraps += &e;
            }
        }
    }
    let below = n < complexity_horizon(seg.length(), p.alpha());
    Ok(ComplexityStats::exact(n, &seg.extent, long, trapped, wraps, count, below))
}

/// What happened to the leaf containing one parameter of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafOutcome {
    pub long: bool,
    pub trapped: bool,
    pub wraps: bool,
    pub piece: Piece,
    /// Length of the leaf piece at every step.
    pub lengths: Vec<f64>,
}

/// Follows the generation tree along the piece containing parameter `s`.
pub fn sample_leaf(
    seg: &USegment,
    p: &MapParams,
    kicks: &[[Rat; 2]],
    last_rule: Option<&LengthRule>,
    s: &Rat,
) -> LeafOutcome {
    let standard = LengthRule::standard(p);
    let mut t = Tracked::new(&seg.piece(), s);
    let mut trapped = true;
    let mut long = false;
    let mut lengths = Vec::with_capacity(kicks.len());
    for (i, kick) in kicks.iter().enumerate() {
        let rule = match last_rule {
            Some(r) if i + 1 == kicks.len() => r,
            _ => &standard,
        };
        t.step(p, seg.side, kick);
        let k = t.subdivide(&rule.cap);
        let len_sq = t.length_sq();
        long = k > 1 || len_sq >= &rule.long * &rule.long;
        trapped = trapped && !long;
        lengths.push(rat_to_f64(&len_sq).sqrt());
    }
    let piece = t.to_piece();
    LeafOutcome { long, trapped, wraps: wraps_torus(&piece), piece, lengths }
}

/// A uniform parameter of `[0, extent)` from a 64-bit draw (odd numerator, so
/// never an endpoint of a dyadic subdivision).
pub fn sample_parameter<R: Rng + ?Sized>(extent: &Rat, rng: &mut R) -> Rat {
    let r: u64 = rng.random();
    let num = (BigInt::from(r) << 1) + 1;
    extent * Rat::new(num, BigInt::from(1u8) << 65)
}

/// Monte Carlo estimate over leaves: the long fraction is the probability that
/// a uniform point of `W` ends in a long piece.
pub fn leaf_sample_estimate(
    seg: &USegment,
    p: &MapParams,
    xi: &KickSequence,
    n: usize,
    last_rule: Option<&LengthRule>,
    samples: u64,
    seed: u64,
    confidence: f64,
) -> Result<ComplexityStats> {
    if samples == 0 {
        return domain("leaf sampling needs at least one sample");
    }
    if n == 0 {
        return domain("leaf sampling needs n >= 1");
    }
    let kicks = kick_schedule(xi, n, seg.side);
    let outcomes: Vec<(bool, bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let s = sample_parameter(&seg.extent, &mut rng);
            let o = sample_leaf(seg, p, &kicks, last_rule, &s);
            (o.long, o.trapped, o.wraps)
        })
        .collect();
    let long = outcomes.iter().filter(|o| o.0).count() as u64;
    let trapped = outcomes.iter().filter(|o| o.1).count() as u64;
    let wraps = outcomes.iter().filter(|o| o.2).count() as u64;
    let (lo, hi) = clopper_pearson(long, samples, confidence);
    let nf = samples as f64;
    let l = long as f64 / nf;
    Ok(ComplexityStats {
        n,
        long_fraction: l,
        short_fraction: 1.0 - l,
        trapped_fraction: trapped as f64 / nf,
        wrapping_fraction: wraps as f64 / nf,
        ci_lo: lo,
        ci_hi: hi,
        trapped_ci: clopper_pearson(trapped, samples, confidence),
        pieces: samples,
        sampled: true,
        below_horizon: n < complexity_horizon(seg.length(), p.alpha()),
        exact: None,
    })
}

/// How [`final_generation_stats`] evaluates the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Exhaustive { budget: usize },
    Sampled { samples: u64, seed: u64, confidence: f64 },
}

/// Mass fraction carried by pieces of length at least 5/4 after `n` steps, with
/// the last step subdivided into parts of length in (5/4, 5/2].
pub fn final_generation_stats(
    seg: &USegment,
    p: &MapParams,
    xi: &KickSequence,
    n: usize,
    eval: Evaluation,
) -> Result<ComplexityStats> {
    let terminal = LengthRule::terminal();
    match eval {
        Evaluation::Exhaustive { budget } => {
            generation_stats_exhaustive(seg, p, xi, n, Some(&terminal), budget)
        }
        Evaluation::Sampled { samples, seed, confidence } => {
            leaf_sample_estimate(seg, p, xi, n, Some(&terminal), samples, seed, confidence)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rat;

    fn p(alpha: u32) -> MapParams {
        MapParams::with_alpha(alpha).unwrap()
    }

    #[test]
    fn segments_must_lie_in_their_cone() {
        let prm = p(16);
        assert!(USegment::new(&prm, [rat(0, 1), rat(0, 1)], [1.into(), 1.into()], rat(1, 8), Side::Forward).is_err());
        assert!(USegment::new(&prm, [rat(0, 1), rat(0, 1)], [8.into(), 1.into()], rat(1, 8), Side::Forward).is_ok());
        assert!(USegment::horizontal(&prm, [rat(0, 1), rat(0, 1)], rat(0, 1)).is_err());
    }

    #[test]
    fn first_generation_conserves_mass_and_caps_lengths() {
        let prm = p(4);
        let seg = USegment::horizontal(&prm, [rat(1, 7), rat(2, 9)], rat(1, 16)).unwrap();
        let rule = LengthRule::standard(&prm);
        let g = advance_generation(&Generation::initial(&seg), &prm, &[rat(0, 1), rat(0, 1)], &rule, 1 << 20).unwrap();
        assert_eq!(g.mass(), rat(1, 16));
        assert!(g.pieces.iter().all(|q| q.piece.length_sq() <= &rule.cap * &rule.cap));
        let s = classify_generation(&g);
        // trapped and short coincide after one step
        assert_eq!(s.trapped_fraction, s.short_fraction);
    }

    #[test]
    fn horizon_at_alpha_256() {
        assert_eq!(complexity_horizon(1.0 / 2048.0, 256), 17);
        assert_eq!(complexity_horizon(1.0 / 128.0, 16), 11);
    }

    #[test]
    fn zero_samples_is_an_error() {
        let prm = p(16);
        let seg = USegment::horizontal(&prm, [rat(0, 1), rat(1, 3)], rat(1, 128)).unwrap();
        assert!(leaf_sample_estimate(&seg, &prm, &KickSequence::unkicked(), 1, None, 0, 1, 0.99).is_err());
    }

    #[test]
    fn backward_generation_stays_in_the_stable_cone() {
        let prm = p(16);
        let seg = USegment::vertical(&prm, [rat(1, 3), rat(1, 5)], rat(1, 128)).unwrap();
        let rule = LengthRule::standard(&prm);
        let xi = KickSequence::gaussian(2, 0.1, 5, 0);
        let mut g = Generation::initial(&seg);
        for kick in kick_schedule(&xi, 2, Side::Backward) {
            g = advance_generation(&g, &prm, &kick, &rule, 1 << 20).unwrap();
            assert_eq!(g.mass(), rat(1, 128));
        }
        let c = Cone::stable(prm);
        assert!(g.pieces.iter().all(|q| c.contains_big(&q.piece.dir[0], &q.piece.dir[1]).unwrap()));
    }
}
