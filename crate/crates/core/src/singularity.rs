//! Singularity lines of `T` and `T^{-1}` and of their kicked compositions.
//!
//! `S+` is `{x = 0}`, `{x = 1/2}` and the steep lines `y - αx ∈ Z/2` over
//! `0 <= x <= 1/2` and `y + αx ∈ Z/2` over `1/2 <= x <= 1`. Following the usual
//! convention for these pictures, a line's slope is reported as `dx/dy`, so the
//! two families have slopes `+1/α` and `-1/α` and are spaced `1/(2α)` apart
//! horizontally. `S- = T(S+)` is the transposed picture.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::dynamics::KickSequence;
use crate::error::{Error, Result};
use crate::geometry::{frac, int, kick_vector, rat, rat_to_f64, Piece, Rat, Side};
use crate::torus::MapParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LineKind {
    Vertical,
    Horizontal,
    /// Positive `dx/dy`.
    Rising,
    /// Negative `dx/dy`.
    Falling,
    /// A preimage or image of a basic line under earlier or later steps.
    Image,
}

impl LineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LineKind::Vertical => "vertical",
            LineKind::Horizontal => "horizontal",
            LineKind::Rising => "rising",
            LineKind::Falling => "falling",
            LineKind::Image => "image",
        }
    }
}

/// One closed segment of a singularity set, given by a lift to the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSegment {
    pub kind: LineKind,
    /// Step `k` of the composition the segment belongs to (1-based).
    pub step: usize,
    /// For the basic families, the constant value of `y ∓ αx` (or of the
    /// fixed coordinate for axis lines).
    pub offset: Rat,
    pub start: [Rat; 2],
    pub end: [Rat; 2],
}

impl SingularSegment {
    fn new(kind: LineKind, step: usize, offset: Rat, start: [Rat; 2], end: [Rat; 2]) -> Self {
        SingularSegment { kind, step, offset, start, end }
    }

    pub fn direction(&self) -> [Rat; 2] {
        [&self.end[0] - &self.start[0], &self.end[1] - &self.start[1]]
    }

    /// `dx/dy`; infinite for horizontal segments.
    pub fn slope(&self) -> f64 {
        let d = self.direction();
        if d[1].is_zero() {
            f64::INFINITY
        } else {
            rat_to_f64(&(&d[0] / &d[1]))
        }
    }

    fn as_piece(&self) -> Piece {
        let d = self.direction();
        let den = d[0].denom() * d[1].denom();
        let dir = [(&d[0] * int(den.clone())).to_integer(), (&d[1] * int(den.clone())).to_integer()];
        Piece::new(self.start.clone(), dir, Rat::new(1.into(), den))
    }

    fn from_piece(piece: &Piece, step: usize) -> Self {
        SingularSegment::new(LineKind::Image, step, Rat::zero(), piece.start(), piece.end())
    }

    fn translated(&self, v: &[Rat; 2]) -> Self {
        let mv = |p: &[Rat; 2]| [&p[0] + &v[0], &p[1] + &v[1]];
        SingularSegment { start: mv(&self.start), end: mv(&self.end), ..self.clone() }
    }
}

/// A set of singularity segments, with the composition it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityLines {
    pub alpha: u32,
    pub steps: usize,
    pub side: Side,
    pub segments: Vec<SingularSegment>,
}

impl SingularityLines {
    /// Shifts every segment by `-v`.
    pub fn translate(&self, v: &[Rat; 2]) -> SingularityLines {
        let neg = [-v[0].clone(), -v[1].clone()];
        SingularityLines {
            segments: self.segments.iter().map(|s| s.translated(&neg)).collect(),
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments of one kind.
    pub fn of_kind(&self, kind: LineKind) -> impl Iterator<Item = &SingularSegment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }
}

/// The explicit segments of `S+` inside the unit square.
pub fn basic_forward_lines(p: &MapParams) -> Vec<SingularSegment> {
    let a = p.alpha_i64();
    let mut out = vec![
        SingularSegment::new(LineKind::Vertical, 1, rat(0, 1), [rat(0, 1), rat(0, 1)], [rat(0, 1), rat(1, 1)]),
        SingularSegment::new(LineKind::Vertical, 1, rat(1, 2), [rat(1, 2), rat(0, 1)], [rat(1, 2), rat(1, 1)]),
    ];
    // y - αx = c on 0 <= x <= 1/2
    for m in -a..=2 {
        let c = rat(m, 2);
        let lo = max(rat(0, 1), -&c / int(a));
        let hi = min(rat(1, 2), (int(1) - &c) / int(a));
        if lo < hi {
            let y = |x: &Rat| &c + x * int(a);
            out.push(SingularSegment::new(LineKind::Rising, 1, c.clone(), [lo.clone(), y(&lo)], [hi.clone(), y(&hi)]));
        }
    }
    // y + αx = c on 1/2 <= x <= 1
    for m in a..=2 * a + 2 {
        let c = rat(m, 2);
        let lo = max(rat(1, 2), (&c - int(1)) / int(a));
        let hi = min(rat(1, 1), &c / int(a));
        if lo < hi {
            let y = |x: &Rat| &c - x * int(a);
            out.push(SingularSegment::new(LineKind::Falling, 1, c.clone(), [lo.clone(), y(&lo)], [hi.clone(), y(&hi)]));
        }
    }
    out
}

/// The explicit segments of `S- = T(S+)` inside the unit square.
pub fn basic_backward_lines(p: &MapParams) -> Vec<SingularSegment> {
    let a = p.alpha_i64();
    let mut out = vec![
        SingularSegment::new(LineKind::Horizontal, 1, rat(0, 1), [rat(0, 1), rat(0, 1)], [rat(1, 1), rat(0, 1)]),
        SingularSegment::new(LineKind::Horizontal, 1, rat(1, 2), [rat(0, 1), rat(1, 2)], [rat(1, 1), rat(1, 2)]),
    ];
    // x - αy = c on 1/2 <= y <= 1
    for m in -2 * a - 2..=a {
        let c = rat(m, 2);
        let lo = max(rat(1, 2), -&c / int(a));
        let hi = min(rat(1, 1), (int(1) - &c) / int(a));
        if lo < hi {
            let x = |y: &Rat| &c + y * int(a);
            out.push(SingularSegment::new(LineKind::Rising, 1, c.clone(), [x(&lo), lo.clone()], [x(&hi), hi.clone()]));
        }
    }
    // x + αy = c on 0 <= y <= 1/2
    for m in -2..=a + 2 {
        let c = rat(m, 2);
        let lo = max(rat(0, 1), (&c - int(1)) / int(a));
        let hi = min(rat(1, 2), &c / int(a));
        if lo < hi {
            let x = |y: &Rat| &c - y * int(a);
            out.push(SingularSegment::new(LineKind::Falling, 1, c.clone(), [x(&lo), lo.clone()], [x(&hi), hi.clone()]));
        }
    }
    out
}

fn max(a: Rat, b: Rat) -> Rat {
    if a >= b {
        a
    } else {
        b
    }
}

fn min(a: Rat, b: Rat) -> Rat {
    if a <= b {
        a
    } else {
        b
    }
}

/// `S^{+,n}_ξ = ∪_k T_ξ^{-(k-1)}(S+ - π(ξ_k))` (forward side), or
/// `S^{-,n}_ξ = T^n_ξ(S^{+,n}_ξ) = ∪_k T_{ξn} ∘ ... ∘ T_{ξ(k+1)}(S-)` (backward side).
///
/// Preimages and images are computed piecewise and exactly; `budget` caps the
/// total number of segments.
pub fn singularity_lines(
    p: &MapParams,
    n: usize,
    xi: &KickSequence,
    side: Side,
    budget: usize,
) -> Result<SingularityLines> {
    if n == 0 {
        return Err(Error::Domain("singularity lines need n >= 1".into()));
    }
    let mut segments = Vec::new();
    for k in 1..=n {
        let base: Vec<SingularSegment> = match side {
            Side::Forward => {
                let v = kick_vector(xi, k - 1);
                let neg = [-v[0].clone(), -v[1].clone()];
                basic_forward_lines(p).iter().map(|s| SingularSegment { step: k, ..s.translated(&neg) }).collect()
            }
            Side::Backward => basic_backward_lines(p).into_iter().map(|s| SingularSegment { step: k, ..s }).collect(),
        };
        let later: Vec<usize> = match side {
            Side::Forward => (0..k - 1).rev().collect(),
            Side::Backward => (k..n).collect(),
        };
        if later.is_empty() {
            segments.extend(base);
        } else {
            let mut pieces: Vec<Piece> = base.iter().map(|s| s.as_piece()).collect();
            let map_side = match side {
                Side::Forward => Side::Backward,
                Side::Backward => Side::Forward,
            };
            for i in later {
                let v = kick_vector(xi, i);
                let mut next = Vec::new();
                for q in &pieces {
                    next.extend(q.step(p, map_side, &v));
                    if next.len() + segments.len() > budget {
                        return Err(Error::Resource(format!(
                            "singularity set for n = {n} exceeds {budget} segments"
                        )));
                    }
                }
                pieces = next;
            }
            segments.extend(pieces.iter().map(|q| SingularSegment::from_piece(q, k)));
        }
        if segments.len() > budget {
            return Err(Error::Resource(format!("singularity set for n = {n} exceeds {budget} segments")));
        }
    }
    Ok(SingularityLines { alpha: p.alpha(), steps: n, side, segments })
}

/// Parameters in `(s0, s1)` where a piece crosses a singularity segment (any
/// periodic copy), sorted and without repeats.
pub fn crossing_parameters(piece: &Piece, lines: &SingularityLines) -> Vec<Rat> {
    let mut cuts = BTreeSet::new();
    let (a0, a1) = (piece.start(), piece.end());
    for seg in &lines.segments {
        let e = seg.direction();
        let dx = Rat::from_integer(piece.dir[0].clone());
        let dy = Rat::from_integer(piece.dir[1].clone());
        let det = &e[0] * &dy - &dx * &e[1];
        if det.is_zero() {
            continue;
        }
        let range = |axis: usize| {
            let (alo, ahi) = sorted(&a0[axis], &a1[axis]);
            let (blo, bhi) = sorted(&seg.start[axis], &seg.end[axis]);
            ((alo - bhi).ceil().to_integer(), (ahi - blo).floor().to_integer())
        };
        let (kx0, kx1) = range(0);
        let (ky0, ky1) = range(1);
        let mut kx = kx0;
        while kx <= kx1 {
            let mut ky: BigInt = ky0.clone();
            while ky <= ky1 {
                let rx = &seg.start[0] + Rat::from_integer(kx.clone()) - &piece.origin[0];
                let ry = &seg.start[1] + Rat::from_integer(ky.clone()) - &piece.origin[1];
                let s = (&e[0] * &ry - &e[1] * &rx) / &det;
                let t = (&dx * &ry - &dy * &rx) / &det;
                if s > piece.s0 && s < piece.s1 && !t.is_negative() && t <= int(1) {
                    cuts.insert(s);
                }
                ky += 1;
            }
            kx += 1;
        }
    }
    cuts.into_iter().collect()
}

fn sorted(a: &Rat, b: &Rat) -> (Rat, Rat) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Cuts a piece at its crossings with the lines; the parts are ordered along
/// the piece and share only endpoints.
pub fn cut_segment(piece: &Piece, lines: &SingularityLines) -> Vec<Piece> {
    let mut bounds = vec![piece.s0.clone()];
    bounds.extend(crossing_parameters(piece, lines));
    bounds.push(piece.s1.clone());
    bounds.windows(2).map(|w| piece.restrict(w[0].clone(), w[1].clone())).collect()
}

/// The largest number of distinct lines through a single point of the torus,
/// over all pairwise intersection points of the set.
pub fn max_lines_through_a_point(lines: &SingularityLines) -> usize {
    let segs = &lines.segments;
    let mut points: BTreeMap<[Rat; 2], ()> = BTreeMap::new();
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            for z in segment_meets(&segs[i], &segs[j]) {
                points.insert([frac(&z[0]), frac(&z[1])], ());
            }
        }
    }
    let mut best = 0;
    for z in points.keys() {
        let mut dirs: BTreeSet<[Rat; 2]> = BTreeSet::new();
        for s in segs {
            if on_segment_mod1(s, z) {
                dirs.insert(normalized(&s.direction()));
            }
        }
        best = best.max(dirs.len());
    }
    best
}

fn normalized(d: &[Rat; 2]) -> [Rat; 2] {
    let r = if d[1].is_zero() { [int(1), Rat::zero()] } else { [&d[0] / &d[1], int(1)] };
    r
}

fn on_segment_mod1(s: &SingularSegment, z: &[Rat; 2]) -> bool {
    let d = s.direction();
    let (xlo, xhi) = sorted(&s.start[0], &s.end[0]);
    let (ylo, yhi) = sorted(&s.start[1], &s.end[1]);
    for kx in -1i64..=1 {
        for ky in -1i64..=1 {
            let w = [&z[0] + int(kx), &z[1] + int(ky)];
            if w[0] < xlo || w[0] > xhi || w[1] < ylo || w[1] > yhi {
                continue;
            }
            let cross = (&w[0] - &s.start[0]) * &d[1] - (&w[1] - &s.start[1]) * &d[0];
            if cross.is_zero() {
                return true;
            }
        }
    }
    false
}

/// Intersection points of two segments, allowing integer translates of the second.
fn segment_meets(a: &SingularSegment, b: &SingularSegment) -> Vec<[Rat; 2]> {
    let d = a.direction();
    let e = b.direction();
    let det = &e[0] * &d[1] - &d[0] * &e[1];
    let mut out = Vec::new();
    if det.is_zero() {
        // Collinear overlaps only matter through their endpoints, which other pairs cover.
        return out;
    }
    for kx in -1i64..=1 {
        for ky in -1i64..=1 {
            let rx = &b.start[0] + int(kx) - &a.start[0];
            let ry = &b.start[1] + int(ky) - &a.start[1];
            let s = (&e[0] * &ry - &e[1] * &rx) / &det;
            let t = (&d[0] * &ry - &d[1] * &rx) / &det;
            let unit = |v: &Rat| !v.is_negative() && *v <= int(1);
            if unit(&s) && unit(&t) {
                out.push([&a.start[0] + &s * &d[0], &a.start[1] + &s * &d[1]]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::stages;

    fn p(alpha: u32) -> MapParams {
        MapParams::with_alpha(alpha).unwrap()
    }

    #[test]
    fn alpha16_families_are_spaced_one_over_32() {
        let prm = p(16);
        let s = singularity_lines(&prm, 1, &KickSequence::unkicked(), Side::Forward, 10_000).unwrap();
        assert_eq!(s.of_kind(LineKind::Vertical).count(), 2);
        let at_quarter = |kind: LineKind| {
            let mut xs: Vec<Rat> = s
                .of_kind(kind)
                .filter_map(|seg| {
                    let (lo, hi) = sorted(&seg.start[1], &seg.end[1]);
                    let y = rat(1, 4);
                    if lo <= y && y <= hi {
                        let d = seg.direction();
                        Some(&seg.start[0] + (&y - &seg.start[1]) * &d[0] / &d[1])
                    } else {
                        None
                    }
                })
                .collect();
            xs.sort();
            xs
        };
        for (kind, slope) in [(LineKind::Rising, 1.0 / 16.0), (LineKind::Falling, -1.0 / 16.0)] {
            let xs = at_quarter(kind);
            assert_eq!(xs.len(), 16);
            for w in xs.windows(2) {
                assert_eq!(&w[1] - &w[0], rat(1, 32));
            }
            assert!(s.of_kind(kind).all(|seg| (seg.slope() - slope).abs() < 1e-15));
        }
        assert!(s.of_kind(LineKind::Rising).all(|seg| seg.start[0] <= rat(1, 2) && seg.end[0] <= rat(1, 2)));
        assert!(s.of_kind(LineKind::Falling).all(|seg| seg.start[0] >= rat(1, 2) && seg.end[0] >= rat(1, 2)));
    }

    #[test]
    fn horizontal_line_crossings_match_the_stage_cuts() {
        let prm = p(4);
        let s = singularity_lines(&prm, 1, &KickSequence::unkicked(), Side::Forward, 10_000).unwrap();
        let w = Piece::new([rat(0, 1), rat(1, 4)], [1.into(), 0.into()], rat(1, 1));
        let pieces = cut_segment(&w, &s);
        // x = 1/2 plus alpha crossings of each sloped family
        assert_eq!(pieces.len(), 2 + 2 * 4);
        let [a, b] = stages(&prm, Side::Forward);
        let staged: usize = w.apply_stage(a).iter().map(|q| q.apply_stage(b).len()).sum();
        assert_eq!(staged, pieces.len());
    }

    #[test]
    fn at_most_three_lines_meet() {
        for alpha in [4, 16] {
            let prm = p(alpha);
            let s = singularity_lines(&prm, 1, &KickSequence::unkicked(), Side::Forward, 10_000).unwrap();
            assert_eq!(max_lines_through_a_point(&s), 3);
        }
    }

    #[test]
    fn kicked_lines_are_translates() {
        let prm = p(16);
        let xi = KickSequence::new(vec![[0.3, 0.7]], 1.0);
        let plain = singularity_lines(&prm, 1, &KickSequence::unkicked(), Side::Forward, 10_000).unwrap();
        let kicked = singularity_lines(&prm, 1, &xi, Side::Forward, 10_000).unwrap();
        assert_eq!(kicked, plain.translate(&kick_vector(&xi, 0)));
    }

    #[test]
    fn backward_lines_bound_the_inverse_branches() {
        let prm = p(4);
        let s = singularity_lines(&prm, 1, &KickSequence::unkicked(), Side::Backward, 10_000).unwrap();
        let w = Piece::new([rat(1, 3), rat(0, 1)], [0.into(), 1.into()], rat(1, 1));
        let [a, b] = stages(&prm, Side::Backward);
        let staged: usize = w.apply_stage(a).iter().map(|q| q.apply_stage(b).len()).sum();
        assert_eq!(cut_segment(&w, &s).len(), staged);
    }

    #[test]
    fn two_step_set_contains_the_first_step() {
        let prm = p(4);
        let s = singularity_lines(&prm, 2, &KickSequence::unkicked(), Side::Forward, 100_000).unwrap();
        assert!(s.segments.iter().any(|seg| seg.step == 2));
        let first = s.segments.iter().filter(|seg| seg.step == 1).count();
        assert_eq!(first, basic_forward_lines(&prm).len());
        assert!(singularity_lines(&prm, 2, &KickSequence::unkicked(), Side::Forward, 10).is_err());
    }
}
