//! Exact images of segments and convex polygons under kicked shear steps.
//!
//! Sets are carried in unwrapped plane coordinates. A shear stage splits a set
//! along the lines where the tested coordinate lies in `Z/2`, then adds
//! `±c * tested` to the other coordinate on each strip, with `+` on strips
//! `[k/2, (k+1)/2)` for odd `k`. Since `α/2` is an integer these lifts agree with
//! the toral branches modulo 1, so nothing has to be wrapped inside a step.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::dynamics::KickSequence;
use crate::torus::{BranchMatrix, IntMatrix, MapParams};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(n.into(), d.into())
}

/// Parses an exact rational such as `3/7` or `5`.
pub fn parse_rat(s: &str) -> crate::Result<Rat> {
    s.trim().parse().map_err(|_| crate::Error::Config(format!("expected a fraction like 1/128, got '{s}'")))
}

pub fn int(n: impl Into<BigInt>) -> Rat {
    Rat::from_integer(n.into())
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn half_strip(c: &Rat) -> BigInt {
    (c * int(2)).floor().to_integer()
}

/// Which map a set is pushed through: `T_ξ` forward or `T_ξ^{-1}` backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Forward,
    Backward,
}

/// One shear: test coordinate `axis`, add `±coef * x_axis` to the other one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub axis: usize,
    pub coef: i64,
}

impl Stage {
    pub fn matrix(&self, upper: bool) -> BranchMatrix {
        let s = if upper { self.coef } else { -self.coef };
        if self.axis == 0 {
            BranchMatrix::vertical_shear(s)
        } else {
            BranchMatrix::horizontal_shear(s)
        }
    }
}

/// The two stages of one step, in order of application.
pub fn stages(p: &MapParams, side: Side) -> [Stage; 2] {
    let a = p.alpha_i64();
    match side {
        Side::Forward => [Stage { axis: 0, coef: a }, Stage { axis: 1, coef: a }],
        Side::Backward => [Stage { axis: 1, coef: -a }, Stage { axis: 0, coef: -a }],
    }
}

/// The lattice-rounded kick `i` as an exact rational vector.
pub fn kick_vector(xi: &KickSequence, i: usize) -> [Rat; 2] {
    xi.lattice_kick::<u64>(i).to_rational()
}

fn mat_apply(m: &BranchMatrix, v: &[Rat; 2]) -> [Rat; 2] {
    [
        &v[0] * int(m.a) + &v[1] * int(m.b),
        &v[0] * int(m.c) + &v[1] * int(m.d),
    ]
}

/// Subsegment cap and long threshold used when building generations.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthRule {
    pub long: Rat,
    pub cap: Rat,
}

impl LengthRule {
    /// Long means at least `α^{-1}/8`; images are capped at `α^{-1}/4`.
    pub fn standard(p: &MapParams) -> Self {
        let a = p.alpha_i64();
        LengthRule { long: rat(1, 8 * a), cap: rat(1, 4 * a) }
    }

    /// The last-step rule: long means at least 5/4, capped at 5/2.
    pub fn terminal() -> Self {
        LengthRule { long: rat(5, 4), cap: rat(5, 2) }
    }

    pub fn is_long(&self, piece: &Piece) -> bool {
        piece.length_sq() >= &self.long * &self.long
    }
}

/// A segment `origin + s * dir`, `s ∈ [s0, s1]`, where `s` is the parameter of the
/// segment the piece descends from.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub origin: [Rat; 2],
    pub dir: [BigInt; 2],
    pub s0: Rat,
    pub s1: Rat,
    /// Linear part of the composed branch maps.
    pub jac: IntMatrix,
}

impl Piece {
    /// The segment from `start` along `dir` for parameters `[0, extent]`.
    pub fn new(start: [Rat; 2], dir: [BigInt; 2], extent: Rat) -> Self {
        Piece { origin: start, dir, s0: Rat::zero(), s1: extent, jac: IntMatrix::identity() }
    }

    pub fn coord(&self, axis: usize, s: &Rat) -> Rat {
        &self.origin[axis] + s * Rat::from_integer(self.dir[axis].clone())
    }

    pub fn point(&self, s: &Rat) -> [Rat; 2] {
        [self.coord(0, s), self.coord(1, s)]
    }

    pub fn start(&self) -> [Rat; 2] {
        self.point(&self.s0)
    }

    pub fn end(&self) -> [Rat; 2] {
        self.point(&self.s1)
    }

    pub fn extent(&self) -> Rat {
        &self.s1 - &self.s0
    }

    pub fn dir_norm_sq(&self) -> BigInt {
        &self.dir[0] * &self.dir[0] + &self.dir[1] * &self.dir[1]
    }

    pub fn length_sq(&self) -> Rat {
        let e = self.extent();
        &e * &e * Rat::from_integer(self.dir_norm_sq())
    }

    pub fn length(&self) -> f64 {
        rat_to_f64(&self.length_sq()).sqrt()
    }

    pub fn restrict(&self, a: Rat, b: Rat) -> Piece {
        Piece { origin: self.origin.clone(), dir: self.dir.clone(), s0: a, s1: b, jac: self.jac.clone() }
    }

    pub fn translate(&mut self, v: &[Rat; 2]) {
        self.origin[0] += &v[0];
        self.origin[1] += &v[1];
    }

    pub fn translate_neg(&mut self, v: &[Rat; 2]) {
        self.origin[0] -= &v[0];
        self.origin[1] -= &v[1];
    }

    fn shear(&mut self, m: &BranchMatrix) {
        self.origin = mat_apply(m, &self.origin);
        let d = &self.dir;
        self.dir = [&d[0] * m.a + &d[1] * m.b, &d[0] * m.c + &d[1] * m.d];
        self.jac = self.jac.premul(m);
    }

    /// Shifts by an integer vector so the start point lies in `[0,1)^2`.
    pub fn reduce(&mut self) {
        let st = self.start();
        for (o, c) in self.origin.iter_mut().zip(st.iter()) {
            *o -= Rat::from_integer(c.floor().to_integer());
        }
    }

    /// Parameters strictly inside the piece where the coordinate crosses `Z/2`.
    fn half_crossings(&self, axis: usize) -> Vec<Rat> {
        let d = &self.dir[axis];
        if d.is_zero() {
            return Vec::new();
        }
        let c0 = self.coord(axis, &self.s0);
        let c1 = self.coord(axis, &self.s1);
        let (lo, hi) = if c0 <= c1 { (c0, c1) } else { (c1, c0) };
        let mut k: BigInt = half_strip(&lo) + 1;
        let kmax: BigInt = (&hi * int(2)).ceil().to_integer() - 1;
        let dr = Rat::from_integer(d.clone());
        let mut out = Vec::new();
        while k <= kmax {
            out.push((Rat::new(k.clone(), 2.into()) - &self.origin[axis]) / &dr);
            k += 1;
        }
        if d.is_negative() {
            out.reverse();
        }
        out
    }

    /// Cuts where the stage's test coordinate crosses `Z/2` and shears every part.
    pub fn apply_stage(&self, st: Stage) -> Vec<Piece> {
        let mut cuts = vec![self.s0.clone()];
        cuts.extend(self.half_crossings(st.axis));
        cuts.push(self.s1.clone());
        cuts.windows(2)
            .filter(|w| w[0] < w[1])
            .map(|w| {
                let mid = (&w[0] + &w[1]) / int(2);
                let upper = half_strip(&self.coord(st.axis, &mid)).is_odd();
                let mut sub = self.restrict(w[0].clone(), w[1].clone());
                sub.shear(&st.matrix(upper));
                sub
            })
            .collect()
    }

    /// The part of [`Piece::apply_stage`] whose half-open parameter interval contains `s`.
    pub fn apply_stage_at(&self, st: Stage, s: &Rat) -> Piece {
        let d = &self.dir[st.axis];
        let twice = self.coord(st.axis, s) * int(2);
        let mut k = twice.floor().to_integer();
        let mut sub = self.clone();
        if !d.is_zero() {
            if d.is_negative() && twice.is_integer() {
                k -= 1;
            }
            let dr = Rat::from_integer(d.clone());
            let a = (Rat::new(k.clone(), 2.into()) - &self.origin[st.axis]) / &dr;
            let b = (Rat::new(&k + 1, 2.into()) - &self.origin[st.axis]) / &dr;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if lo > sub.s0 {
                sub.s0 = lo;
            }
            if hi < sub.s1 {
                sub.s1 = hi;
            }
        }
        sub.shear(&st.matrix(k.is_odd()));
        sub
    }

    /// All pieces of one kicked step (`T_v` forward, `T_v^{-1}` backward), reduced.
    pub fn step(&self, p: &MapParams, side: Side, kick: &[Rat; 2]) -> Vec<Piece> {
        let [a, b] = stages(p, side);
        let mut start = self.clone();
        if side == Side::Forward {
            start.translate(kick);
        }
        let mut out = Vec::new();
        for q in start.apply_stage(a) {
            for mut r in q.apply_stage(b) {
                if side == Side::Backward {
                    r.translate_neg(kick);
                }
                r.reduce();
                out.push(r);
            }
        }
        out
    }

    /// The piece of [`Piece::step`] containing parameter `s`.
    pub fn step_at(&self, p: &MapParams, side: Side, kick: &[Rat; 2], s: &Rat) -> Piece {
        let [a, b] = stages(p, side);
        let mut q = self.clone();
        if side == Side::Forward {
            q.translate(kick);
        }
        let mut r = q.apply_stage_at(a, s).apply_stage_at(b, s);
        if side == Side::Backward {
            r.translate_neg(kick);
        }
        r.reduce();
        r
    }

    /// Number of equal parts needed so that each is at most `cap` long.
    pub fn subdivision_count(&self, cap: &Rat) -> u64 {
        subdivision_count_for(&self.length_sq(), cap)
    }

    /// Equal parts of length at most `cap`; an over-long piece yields parts in `(cap/2, cap]`.
    pub fn subdivide(&self, cap: &Rat) -> Vec<Piece> {
        let k = self.subdivision_count(cap);
        if k == 1 {
            return vec![self.clone()];
        }
        let w = self.extent() / int(k);
        (0..k)
            .map(|i| {
                let a = &self.s0 + &w * int(i);
                let b = if i + 1 == k { self.s1.clone() } else { &self.s0 + &w * int(i + 1) };
                let mut r = self.restrict(a, b);
                r.reduce();
                r
            })
            .collect()
    }

    /// The part of [`Piece::subdivide`] containing `s`, and the number of parts.
    pub fn subdivide_at(&self, cap: &Rat, s: &Rat) -> (Piece, u64) {
        let k = self.subdivision_count(cap);
        if k == 1 {
            return (self.clone(), 1);
        }
        let e = self.extent();
        let idx = ((s - &self.s0) * int(k) / &e).floor().to_integer();
        let i = idx.to_u64().unwrap_or(0).min(k - 1);
        let w = e / int(k);
        let a = &self.s0 + &w * int(i);
        let b = if i + 1 == k { self.s1.clone() } else { &self.s0 + &w * int(i + 1) };
        let mut r = self.restrict(a, b);
        r.reduce();
        (r, k)
    }
}

/// The piece containing one tracked parameter `s*`, stored relative to it:
/// the tracked point's image `point`, the direction `dir`, and the parameter
/// offsets `[u0, u1)` of the piece around `s*`. Only the tracked point is
/// reduced modulo 1, which keeps every number small.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracked {
    pub s: Rat,
    pub point: [Rat; 2],
    pub dir: [BigInt; 2],
    pub u0: Rat,
    pub u1: Rat,
    pub jac: IntMatrix,
}

impl Tracked {
    /// Tracks parameter `s` of a piece, which must lie in `[s0, s1)`.
    pub fn new(piece: &Piece, s: &Rat) -> Self {
        let pt = piece.point(s);
        Tracked {
            s: s.clone(),
            point: [frac(&pt[0]), frac(&pt[1])],
            dir: piece.dir.clone(),
            u0: &piece.s0 - s,
            u1: &piece.s1 - s,
            jac: piece.jac.clone(),
        }
    }

    pub fn extent(&self) -> Rat {
        &self.u1 - &self.u0
    }

    pub fn length_sq(&self) -> Rat {
        let e = self.extent();
        &e * &e * norm_sq(&self.dir)
    }

    pub fn length(&self) -> f64 {
        rat_to_f64(&self.length_sq()).sqrt()
    }

    /// The tracked piece in the parametrization of [`Piece`].
    pub fn to_piece(&self) -> Piece {
        let origin = [
            &self.point[0] - &self.s * Rat::from_integer(self.dir[0].clone()),
            &self.point[1] - &self.s * Rat::from_integer(self.dir[1].clone()),
        ];
        Piece {
            origin,
            dir: self.dir.clone(),
            s0: &self.s + &self.u0,
            s1: &self.s + &self.u1,
            jac: self.jac.clone(),
        }
    }

    fn stage(&mut self, st: Stage) {
        let a = st.axis;
        let c = &self.point[a];
        let twice = c * int(2);
        let mut k = twice.floor().to_integer();
        let d = &self.dir[a];
        if !d.is_zero() {
            if d.is_negative() && twice.is_integer() {
                k -= 1;
            }
            let dr = Rat::from_integer(d.clone());
            let ua = (Rat::new(k.clone(), 2.into()) - c) / &dr;
            let ub = (Rat::new(&k + 1, 2.into()) - c) / &dr;
            let (lo, hi) = if ua <= ub { (ua, ub) } else { (ub, ua) };
            if lo > self.u0 {
                self.u0 = lo;
            }
            if hi < self.u1 {
                self.u1 = hi;
            }
        }
        let m = st.matrix(k.is_odd());
        self.point = mat_apply(&m, &self.point);
        let dv = &self.dir;
        self.dir = [&dv[0] * m.a + &dv[1] * m.b, &dv[0] * m.c + &dv[1] * m.d];
        self.jac = self.jac.premul(&m);
    }

    /// One kicked step, keeping the part that contains the tracked parameter.
    pub fn step(&mut self, p: &MapParams, side: Side, kick: &[Rat; 2]) {
        if side == Side::Forward {
            self.point = [&self.point[0] + &kick[0], &self.point[1] + &kick[1]];
        }
        for st in stages(p, side) {
            self.stage(st);
        }
        if side == Side::Backward {
            self.point = [&self.point[0] - &kick[0], &self.point[1] - &kick[1]];
        }
        self.point = [frac(&self.point[0]), frac(&self.point[1])];
    }

    /// Splits into equal parts no longer than `cap`, keeps the part holding the
    /// tracked parameter, and returns the number of parts.
    pub fn subdivide(&mut self, cap: &Rat) -> u64 {
        let len_sq = self.length_sq();
        let k = subdivision_count_for(&len_sq, cap);
        if k > 1 {
            let e = self.extent();
            let idx = (-&self.u0 * int(k) / &e).floor().to_integer();
            let i = idx.to_u64().unwrap_or(0).min(k - 1);
            let w = e / int(k);
            let lo = &self.u0 + &w * int(i);
            if i + 1 < k {
                self.u1 = &self.u0 + &w * int(i + 1);
            }
            self.u0 = lo;
        }
        k
    }
}

fn subdivision_count_for(len_sq: &Rat, cap: &Rat) -> u64 {
    let cap_sq = cap * cap;
    if *len_sq <= cap_sq {
        return 1;
    }
    let est = (rat_to_f64(len_sq) / rat_to_f64(&cap_sq)).sqrt().ceil().max(1.0) as u64;
    let fits = |k: u64| *len_sq <= &cap_sq * int(k * k);
    let mut k = est.max(1);
    while k > 1 && fits(k - 1) {
        k -= 1;
    }
    while !fits(k) {
        k += 1;
    }
    k
}

/// Parameters of the intersections of two pieces on the torus, i.e. all
/// `(s, t)` with `a(s) = b(t) + k` for some `k ∈ Z^2`, using half-open ranges
/// `[s0, s1)` and `[t0, t1)`. Parallel pieces yield nothing.
pub fn torus_intersections(a: &Piece, b: &Piece) -> Vec<(Rat, Rat)> {
    let dx = Rat::from_integer(a.dir[0].clone());
    let dy = Rat::from_integer(a.dir[1].clone());
    let ex = Rat::from_integer(b.dir[0].clone());
    let ey = Rat::from_integer(b.dir[1].clone());
    let det = &ex * &dy - &dx * &ey;
    if det.is_zero() {
        return Vec::new();
    }
    let (a0, a1) = (a.start(), a.end());
    let (b0, b1) = (b.start(), b.end());
    let range = |axis: usize| {
        let (alo, ahi) = minmax(&a0[axis], &a1[axis]);
        let (blo, bhi) = minmax(&b0[axis], &b1[axis]);
        let lo = (alo - bhi).ceil().to_integer();
        let hi = (ahi - blo).floor().to_integer();
        (lo, hi)
    };
    let (kx0, kx1) = range(0);
    let (ky0, ky1) = range(1);
    let mut out = Vec::new();
    let mut kx = kx0;
    while kx <= kx1 {
        let mut ky = ky0.clone();
        while ky <= ky1 {
            // a.origin + s D = b.origin + k + t E
            let rx = &b.origin[0] + Rat::from_integer(kx.clone()) - &a.origin[0];
            let ry = &b.origin[1] + Rat::from_integer(ky.clone()) - &a.origin[1];
            let s = (&ex * &ry - &ey * &rx) / &det;
            let t = (&dx * &ry - &dy * &rx) / &det;
            if s >= a.s0 && s < a.s1 && t >= b.s0 && t < b.s1 {
                out.push((s, t));
            }
            ky += 1;
        }
        kx += 1;
    }
    out
}

/// `x mod 1` for a rational.
pub fn frac(x: &Rat) -> Rat {
    x - x.floor()
}

/// Exact image of a rational point under one kicked step, reduced to `[0,1)^2`.
pub fn map_point(p: &MapParams, side: Side, kick: &[Rat; 2], z: &[Rat; 2]) -> [Rat; 2] {
    let mut w = z.clone();
    if side == Side::Forward {
        w = [&w[0] + &kick[0], &w[1] + &kick[1]];
    }
    for st in stages(p, side) {
        let upper = frac(&w[st.axis]) >= rat(1, 2);
        w = mat_apply(&st.matrix(upper), &w);
    }
    if side == Side::Backward {
        w = [&w[0] - &kick[0], &w[1] - &kick[1]];
    }
    [frac(&w[0]), frac(&w[1])]
}

fn minmax(a: &Rat, b: &Rat) -> (Rat, Rat) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// A convex polygon with counterclockwise vertices in unwrapped coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[Rat; 2]>,
}

impl Polygon {
    pub fn rectangle(x0: Rat, y0: Rat, x1: Rat, y1: Rat) -> Self {
        Polygon {
            vertices: vec![
                [x0.clone(), y0.clone()],
                [x1.clone(), y0],
                [x1, y1.clone()],
                [x0, y1],
            ],
        }
    }

    /// Shoelace area; nonnegative for counterclockwise polygons.
    pub fn area(&self) -> Rat {
        let n = self.vertices.len();
        if n < 3 {
            return Rat::zero();
        }
        let mut s = Rat::zero();
        for i in 0..n {
            let p = &self.vertices[i];
            let q = &self.vertices[(i + 1) % n];
            s += &p[0] * &q[1] - &q[0] * &p[1];
        }
        s / int(2)
    }

    pub fn bounds(&self, axis: usize) -> (Rat, Rat) {
        let mut lo = self.vertices[0][axis].clone();
        let mut hi = lo.clone();
        for v in &self.vertices[1..] {
            if v[axis] < lo {
                lo = v[axis].clone();
            }
            if v[axis] > hi {
                hi = v[axis].clone();
            }
        }
        (lo, hi)
    }

    /// Intersection with the closed half-plane `x_axis >= value` (or `<=`).
    pub fn clip(&self, axis: usize, value: &Rat, keep_above: bool) -> Polygon {
        let inside = |v: &[Rat; 2]| if keep_above { &v[axis] >= value } else { &v[axis] <= value };
        let n = self.vertices.len();
        let mut out: Vec<[Rat; 2]> = Vec::with_capacity(n + 2);
        for i in 0..n {
            let p = &self.vertices[i];
            let q = &self.vertices[(i + 1) % n];
            let (pin, qin) = (inside(p), inside(q));
            if pin {
                push_distinct(&mut out, p.clone());
            }
            if pin != qin && p[axis] != q[axis] {
                let t = (value - &p[axis]) / (&q[axis] - &p[axis]);
                let o = 1 - axis;
                let mut x = [Rat::zero(), Rat::zero()];
                x[axis] = value.clone();
                x[o] = &p[o] + &t * (&q[o] - &p[o]);
                push_distinct(&mut out, x);
            }
        }
        if out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        Polygon { vertices: out }
    }

    fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3 || self.area().is_zero()
    }

    pub fn translate(&mut self, v: &[Rat; 2]) {
        for p in &mut self.vertices {
            p[0] += &v[0];
            p[1] += &v[1];
        }
    }

    fn shear(&mut self, m: &BranchMatrix) {
        for p in &mut self.vertices {
            *p = mat_apply(m, p);
        }
    }

    /// Shifts by an integer vector so the lower-left bound lies in `[0,1)^2`.
    pub fn reduce(&mut self) {
        let sx = self.bounds(0).0.floor();
        let sy = self.bounds(1).0.floor();
        self.translate(&[-sx, -sy]);
    }

    /// Splits into strips `[k/2, (k+1)/2]` of the test coordinate and shears each.
    pub fn apply_stage(&self, st: Stage) -> Vec<Polygon> {
        let (lo, hi) = self.bounds(st.axis);
        let mut k = half_strip(&lo);
        let mut rest = self.clone();
        let mut out = Vec::new();
        loop {
            let top = Rat::new(&k + 1, 2.into());
            let last = top >= hi;
            let mut part = if last { rest.clone() } else { rest.clip(st.axis, &top, false) };
            if !part.is_degenerate() {
                part.shear(&st.matrix(k.is_odd()));
                out.push(part);
            }
            if last {
                break;
            }
            rest = rest.clip(st.axis, &top, true);
            k += 1;
        }
        out
    }

    /// The pieces of the image under one kicked step.
    pub fn step(&self, p: &MapParams, side: Side, kick: &[Rat; 2]) -> Vec<Polygon> {
        let [a, b] = stages(p, side);
        let mut start = self.clone();
        if side == Side::Forward {
            start.translate(kick);
        }
        let mut out = Vec::new();
        for q in start.apply_stage(a) {
            for mut r in q.apply_stage(b) {
                if side == Side::Backward {
                    r.translate(&[-kick[0].clone(), -kick[1].clone()]);
                }
                r.reduce();
                out.push(r);
            }
        }
        out
    }

    /// Area of the intersection with the periodic copies of the box `[x0,x1]×[y0,y1]`.
    pub fn overlap_area_mod1(&self, x0: &Rat, y0: &Rat, x1: &Rat, y1: &Rat) -> Rat {
        let (pxlo, pxhi) = self.bounds(0);
        let (pylo, pyhi) = self.bounds(1);
        let kx0 = (&pxlo - x1).ceil().to_integer();
        let kx1 = (&pxhi - x0).floor().to_integer();
        let ky0 = (&pylo - y1).ceil().to_integer();
        let ky1 = (&pyhi - y0).floor().to_integer();
        let mut total = Rat::zero();
        let mut kx = kx0;
        while kx <= kx1 {
            let sx = Rat::from_integer(kx.clone());
            let clipped_x = self.clip(0, &(x0 + &sx), true).clip(0, &(x1 + &sx), false);
            if !clipped_x.is_degenerate() {
                let mut ky = ky0.clone();
                while ky <= ky1 {
                    let sy = Rat::from_integer(ky.clone());
                    let c = clipped_x.clip(1, &(y0 + &sy), true).clip(1, &(y1 + &sy), false);
                    total += c.area();
                    ky += 1;
                }
            }
            kx += 1;
        }
        total
    }
}

fn push_distinct(out: &mut Vec<[Rat; 2]>, v: [Rat; 2]) {
    if out.last() != Some(&v) {
        out.push(v);
    }
}

/// `|v|^2` of an integer vector as a rational.
pub fn norm_sq(v: &[BigInt; 2]) -> Rat {
    Rat::from_integer(&v[0] * &v[0] + &v[1] * &v[1])
}
