//! The map `T = T2 ∘ T1`, its inverse, kicked compositions, gradients along
//! orbits, the time-periodic shear flow, and the hyperbolicity certificate.
//!
//! `T1(x, y) = (x, y + α|x - 1/2|)` and `T2(x, y) = (x + α|y - 1/2|, y)`, both
//! modulo 1. Since `α` is even each branch is an integer shear, so on the
//! fixed-point lattice every evaluation below is exact.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};

use crate::error::{domain, Error, Result, SingularLine};
use crate::rng::{polar_normal_pair, stream};
use crate::torus::{
    branch_id, branch_matrix_set, BranchMatrix, Cone, IntMatrix, MapParams, TorusPoint, Word,
};

#[inline]
fn shear_sign(upper: bool, alpha: i64) -> i64 {
    if upper {
        alpha
    } else {
        -alpha
    }
}

/// `(x, y + α|x - 1/2|)`.
#[inline]
pub fn apply_t1<W: Word>(z: TorusPoint<W>, p: &MapParams) -> TorusPoint<W> {
    let s = shear_sign(z.x >= W::HALF, p.alpha_i64());
    TorusPoint::new(z.x, z.y.wrapping_add(z.x.wrapping_mul_int(s)))
}

/// `(x + α|y - 1/2|, y)`.
#[inline]
pub fn apply_t2<W: Word>(z: TorusPoint<W>, p: &MapParams) -> TorusPoint<W> {
    let s = shear_sign(z.y >= W::HALF, p.alpha_i64());
    TorusPoint::new(z.x.wrapping_add(z.y.wrapping_mul_int(s)), z.y)
}

#[inline]
pub fn apply_t1_inv<W: Word>(z: TorusPoint<W>, p: &MapParams) -> TorusPoint<W> {
    let s = shear_sign(z.x >= W::HALF, p.alpha_i64());
    TorusPoint::new(z.x, z.y.wrapping_sub(z.x.wrapping_mul_int(s)))
}

#[inline]
pub fn apply_t2_inv<W: Word>(z: TorusPoint<W>, p: &MapParams) -> TorusPoint<W> {
    let s = shear_sign(z.y >= W::HALF, p.alpha_i64());
    TorusPoint::new(z.x.wrapping_sub(z.y.wrapping_mul_int(s)), z.y)
}

#[inline]
pub fn apply_t<W: Word>(z: TorusPoint<W>, p: &MapParams) -> TorusPoint<W> {
    apply_t2(apply_t1(z, p), p)
}

#[inline]
pub fn apply_t_inv<W: Word>(z: TorusPoint<W>, p: &MapParams) -> TorusPoint<W> {
    apply_t1_inv(apply_t2_inv(z, p), p)
}

/// `T(z + π(v))`, with `v` rounded to the lattice.
pub fn apply_kicked<W: Word>(z: TorusPoint<W>, v: [f64; 2], p: &MapParams) -> TorusPoint<W> {
    apply_t(z + TorusPoint::from_f64(v[0], v[1]), p)
}

/// A finite kick sequence `(ξ1, ..., ξn)` with a common multiplier.
///
/// Positions past the end act as zero kicks, so the empty sequence is the unkicked map.
#[derive(Debug, Clone, PartialEq)]
pub struct KickSequence {
    pub kicks: Vec<[f64; 2]>,
    pub scale: f64,
}

impl KickSequence {
    pub fn new(kicks: Vec<[f64; 2]>, scale: f64) -> Self {
        KickSequence { kicks, scale }
    }

    pub fn unkicked() -> Self {
        KickSequence { kicks: Vec::new(), scale: 0.0 }
    }

    /// `n` i.i.d. standard Gaussian kicks from stream `(seed, stream_id)`.
    pub fn gaussian(n: usize, scale: f64, seed: u64, stream_id: u64) -> Self {
        let mut rng = stream(seed, stream_id);
        let kicks = (0..n).map(|_| polar_normal_pair(&mut rng)).collect();
        KickSequence { kicks, scale }
    }

    /// The kick sequence of the chain at viscosity `nu`: multiplier `sqrt(2 nu)`.
    pub fn for_viscosity(n: usize, nu: f64, seed: u64, stream_id: u64) -> Self {
        KickSequence::gaussian(n, (2.0 * nu).sqrt(), seed, stream_id)
    }

    pub fn len(&self) -> usize {
        self.kicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kicks.is_empty()
    }

    /// The shifted sequence `θ^k ξ`.
    pub fn shift(&self, k: usize) -> KickSequence {
        KickSequence { kicks: self.kicks.iter().skip(k).copied().collect(), scale: self.scale }
    }

    /// The `i`-th kick (0-based) projected to the lattice.
    pub fn lattice_kick<W: Word>(&self, i: usize) -> TorusPoint<W> {
        match self.kicks.get(i) {
            Some(v) if self.scale != 0.0 => {
                TorusPoint::from_f64(self.scale * v[0], self.scale * v[1])
            }
            _ => TorusPoint::origin(),
        }
    }
}

/// `T_{ξn} ∘ ... ∘ T_{ξ1}(z)`.
pub fn iterate_kicked<W: Word>(
    mut z: TorusPoint<W>,
    xi: &KickSequence,
    n: usize,
    p: &MapParams,
) -> TorusPoint<W> {
    for i in 0..n {
        z = apply_t(z + xi.lattice_kick(i), p);
    }
    z
}

/// The inverse of [`iterate_kicked`]: `T_{ξ1}^{-1} ∘ ... ∘ T_{ξn}^{-1}(z)`.
pub fn iterate_kicked_inverse<W: Word>(
    mut z: TorusPoint<W>,
    xi: &KickSequence,
    n: usize,
    p: &MapParams,
) -> TorusPoint<W> {
    for i in (0..n).rev() {
        z = apply_t_inv(z, p) - xi.lattice_kick(i);
    }
    z
}

/// Branch ids along an orbit and the exact product of their matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Itinerary {
    pub branches: Vec<u8>,
    pub product: IntMatrix,
}

impl Itinerary {
    /// Recomputes the product from the ids; for inverse itineraries the
    /// factors are the inverses of the listed branches.
    pub fn recompute(&self, p: &MapParams, inverse: bool) -> IntMatrix {
        let set = branch_matrix_set(p);
        self.branches.iter().fold(IntMatrix::identity(), |acc, &id| {
            let m = set[id as usize - 1];
            let m = if inverse { m.inverse().expect("unimodular") } else { m };
            acc.premul(&m)
        })
    }
}

fn check_line<W: Word>(v: W, step: usize, zero: SingularLine, half: SingularLine) -> Result<()> {
    if v == W::ZERO {
        Err(Error::Singular { step, line: zero })
    } else if v == W::HALF {
        Err(Error::Singular { step, line: half })
    } else {
        Ok(())
    }
}

/// `∇T^n_ξ(z)` together with the branch ids visited.
pub fn gradient_itinerary<W: Word>(
    mut z: TorusPoint<W>,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
) -> Result<Itinerary> {
    let set = branch_matrix_set(p);
    let mut branches = Vec::with_capacity(n);
    let mut product = IntMatrix::identity();
    for i in 0..n {
        let w = z + xi.lattice_kick(i);
        check_line(w.x, i + 1, SingularLine::XZero, SingularLine::XHalf)?;
        let w1 = apply_t1(w, p);
        check_line(w1.y, i + 1, SingularLine::YZero, SingularLine::YHalf)?;
        let id = branch_id(w.x >= W::HALF, w1.y >= W::HALF);
        branches.push(id);
        product = product.premul(&set[id as usize - 1]);
        z = apply_t2(w1, p);
    }
    Ok(Itinerary { branches, product })
}

/// `∇T^{-n}_ξ(z)`, the gradient of [`iterate_kicked_inverse`]. Branch ids name
/// the forward matrices whose inverses were applied, in order of application.
pub fn inverse_gradient_itinerary<W: Word>(
    mut z: TorusPoint<W>,
    n: usize,
    xi: &KickSequence,
    p: &MapParams,
) -> Result<Itinerary> {
    let set = branch_matrix_set(p);
    let mut branches = Vec::with_capacity(n);
    let mut product = IntMatrix::identity();
    for (step, i) in (0..n).rev().enumerate() {
        check_line(z.y, step + 1, SingularLine::YZero, SingularLine::YHalf)?;
        let w = apply_t2_inv(z, p);
        check_line(w.x, step + 1, SingularLine::XZero, SingularLine::XHalf)?;
        let id = branch_id(w.x >= W::HALF, z.y >= W::HALF);
        branches.push(id);
        let inv = set[id as usize - 1].inverse().expect("unimodular");
        product = product.premul(&inv);
        z = apply_t1_inv(w, p) - xi.lattice_kick(i);
    }
    Ok(Itinerary { branches, product })
}

/// `|v - 1/2|` on the circle, as a fraction in [0, 1/2].
#[inline]
fn dist_to_half<W: Word>(v: W) -> W {
    if v >= W::HALF {
        v.wrapping_sub(W::HALF)
    } else {
        W::HALF.wrapping_sub(v)
    }
}

/// `d * factor` rounded to the lattice, using the exact binary expansion of `factor`.
fn scaled<W: Word>(d: W, factor: f64) -> W {
    if factor == 0.0 {
        return W::ZERO;
    }
    let bits = factor.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_bits == 0 { (frac, -1074) } else { (frac | (1 << 52), exp_bits - 1075) };
    let prod = BigInt::from(d.to_biguint()) * BigInt::from(mant);
    let val = if exp >= 0 {
        prod << exp as usize
    } else {
        let sh = (-exp) as usize;
        let half = BigInt::one() << (sh - 1);
        (prod + half) >> sh
    };
    W::from_bigint_mod(&val)
}

/// Vertical half of the flow run for time `tau ∈ [0, 1/2]`: `y -= 2α|x-1/2| τ`.
fn vertical_flow<W: Word>(z: TorusPoint<W>, tau: f64, p: &MapParams) -> TorusPoint<W> {
    let d = scaled(dist_to_half(z.x), 2.0 * p.alpha() as f64 * tau);
    TorusPoint::new(z.x, z.y.wrapping_sub(d))
}

fn horizontal_flow<W: Word>(z: TorusPoint<W>, tau: f64, p: &MapParams) -> TorusPoint<W> {
    let d = scaled(dist_to_half(z.y), 2.0 * p.alpha() as f64 * tau);
    TorusPoint::new(z.x.wrapping_sub(d), z.y)
}

fn vertical_flow_inv<W: Word>(z: TorusPoint<W>, tau: f64, p: &MapParams) -> TorusPoint<W> {
    let d = scaled(dist_to_half(z.x), 2.0 * p.alpha() as f64 * tau);
    TorusPoint::new(z.x, z.y.wrapping_add(d))
}

fn horizontal_flow_inv<W: Word>(z: TorusPoint<W>, tau: f64, p: &MapParams) -> TorusPoint<W> {
    let d = scaled(dist_to_half(z.y), 2.0 * p.alpha() as f64 * tau);
    TorusPoint::new(z.x.wrapping_add(d), z.y)
}

fn split_time(t: f64) -> Result<(u64, f64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("flow time must be finite and nonnegative, got {t}"));
    }
    let whole = t.floor();
    Ok((whole as u64, t - whole))
}

/// The flow `φ_t` of the time-periodic shear field: vertical shear
/// `(0, -2α|x-1/2|)` on `[0, 1/2)`, horizontal shear `(-2α|y-1/2|, 0)` on `[1/2, 1)`.
///
/// Whole periods are exact lattice maps; a fractional remainder is rounded to
/// the nearest lattice point (exact when the displacement is dyadic).
pub fn flow_map<W: Word>(mut z: TorusPoint<W>, t: f64, p: &MapParams) -> Result<TorusPoint<W>> {
    let (whole, frac) = split_time(t)?;
    for _ in 0..whole {
        z = apply_t2_inv(apply_t1_inv(z, p), p);
    }
    Ok(if frac < 0.5 {
        vertical_flow(z, frac, p)
    } else {
        horizontal_flow(apply_t1_inv(z, p), frac - 0.5, p)
    })
}

/// The inverse map `φ_t^{-1}`. For `t = 1` this is `T1 ∘ T2`.
pub fn flow_map_inverse<W: Word>(mut z: TorusPoint<W>, t: f64, p: &MapParams) -> Result<TorusPoint<W>> {
    let (whole, frac) = split_time(t)?;
    z = if frac < 0.5 {
        vertical_flow_inv(z, frac, p)
    } else {
        apply_t1(horizontal_flow_inv(z, frac - 0.5, p), p)
    };
    for _ in 0..whole {
        z = apply_t1(apply_t2(z, p), p);
    }
    Ok(z)
}

/// Per-matrix findings of [`verify_hyperbolicity`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCheck {
    pub id: u8,
    pub matrix: BranchMatrix,
    pub det: i128,
    pub unstable_eigenvalue: f64,
    /// `|λ_u| >= α²/4`, decided exactly.
    pub eigenvalue_ok: bool,
    pub eigenvector_in_cone: bool,
    pub forward_invariant: bool,
    pub backward_invariant: bool,
    /// `min |Av|/|v|` over the unstable cone.
    pub min_expansion: f64,
    /// `min |A^{-1}v|/|v|` over the stable cone.
    pub min_backward_expansion: f64,
    pub expansion_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicityCertificate {
    pub params: MapParams,
    pub checks: Vec<MatrixCheck>,
    pub cone_invariance: bool,
    pub min_expansion: f64,
    pub required_expansion: f64,
    pub passed: bool,
}

fn ray_maps_into(m: &BranchMatrix, rays: [[i128; 2]; 2], cone: &Cone, axis: usize) -> bool {
    let imgs = rays.map(|r| m.apply_i128(r));
    let inside = imgs.iter().all(|v| cone.contains_int(v[0], v[1]).unwrap_or(false));
    // Both images on the same side, so the whole sector between them stays in the cone.
    inside && imgs[0][axis].signum() == imgs[1][axis].signum() && imgs[0][axis] != 0
}

fn sq_norm(v: [i128; 2]) -> BigInt {
    let (a, b) = (BigInt::from(v[0]), BigInt::from(v[1]));
    &a * &a + &b * &b
}

/// Exact `min_{v in cone} |Mv| >= (p/q) α²`, plus the float value of the minimum.
fn cone_expansion(m: &BranchMatrix, cone: &Cone, p: &MapParams) -> (bool, f64) {
    let num = BigInt::from(*p.delta1().numer());
    let den = BigInt::from(*p.delta1().denom());
    let a2 = BigInt::from(p.alpha()).pow(2);
    let c_num = &num * &a2; // c = c_num / den
    let mut ok = true;
    let mut min = f64::INFINITY;
    for r in cone.boundary_rays() {
        let img = m.apply_i128(r);
        // |img|² den² >= c_num² |r|²
        ok &= sq_norm(img) * &den * &den >= &c_num * &c_num * sq_norm(r);
        let ratio = (sq_norm(img).to_f64().unwrap() / sq_norm(r).to_f64().unwrap()).sqrt();
        min = min.min(ratio);
    }
    // Interior critical point: the right singular vector of the smaller singular value.
    let (a, b, c, d) = (m.a as f64, m.b as f64, m.c as f64, m.d as f64);
    let (g11, g12, g22) = (a * a + c * c, a * b + c * d, b * b + d * d);
    let tr = g11 + g22;
    let mu_min = 1.0 / ((tr + (tr * tr - 4.0).max(0.0).sqrt()) / 2.0);
    let dir = if g12.abs() > 0.0 { [g12, mu_min - g11] } else if g11 <= g22 { [1.0, 0.0] } else { [0.0, 1.0] };
    let (along, across) = match cone.kind {
        crate::torus::ConeKind::Unstable => (dir[0].abs(), dir[1].abs()),
        crate::torus::ConeKind::Stable => (dir[1].abs(), dir[0].abs()),
    };
    let aperture = p.alpha() as f64 * p.delta1().to_f64().unwrap();
    if aperture * across <= along {
        min = min.min(mu_min.sqrt());
        // mu_min >= C² with C = c_num/den, exactly: C⁴ - tr C² + 1 >= 0 and 2C² <= tr.
        let (ai, bi, ci, di) = (BigInt::from(m.a), BigInt::from(m.b), BigInt::from(m.c), BigInt::from(m.d));
        let tr_i = &ai * &ai + &bi * &bi + &ci * &ci + &di * &di;
        let c2 = &c_num * &c_num;
        let d2 = &den * &den;
        let quad = &c2 * &c2 - &tr_i * &c2 * &d2 + &d2 * &d2;
        ok &= !quad.is_negative() && BigInt::from(2) * &c2 <= tr_i * &d2;
    }
    (ok, min)
}

/// `|λ_u| >= α²/4` exactly: with `t = |tr|` and `c = α²/4 >= 1`, this is `c² - t c + 1 <= 0`.
fn eigenvalue_at_least_quarter_alpha_sq(m: &BranchMatrix, p: &MapParams) -> bool {
    let t = BigInt::from(m.trace()).abs();
    let a2 = BigInt::from(p.alpha()).pow(2);
    // Multiply through by 16: a2² - 4 t a2 + 16 <= 0.
    let v = &a2 * &a2 - BigInt::from(4) * &t * &a2 + BigInt::from(16);
    !v.is_positive() && a2 >= BigInt::from(4)
}

/// Checks cone invariance and uniform expansion for every matrix of the branch set.
pub fn verify_hyperbolicity(p: &MapParams) -> HyperbolicityCertificate {
    let cu = Cone::unstable(*p);
    let cs = Cone::stable(*p);
    let set = branch_matrix_set(p);
    let required = p.expansion_bound();
    let mut checks = Vec::with_capacity(4);
    for (i, m) in set.iter().enumerate() {
        let inv = m.inverse().expect("branch matrices are unimodular");
        let tr = m.trace() as f64;
        let disc = (tr * tr - 4.0).max(0.0).sqrt();
        let lu = if tr >= 0.0 { (tr + disc) / 2.0 } else { (tr - disc) / 2.0 };
        let ev = [m.b as f64, lu - m.a as f64];
        let aperture = p.alpha() as f64 * p.delta1().to_f64().unwrap();
        let eigenvector_in_cone = aperture * ev[1].abs() <= ev[0].abs();
        let (fwd_ok, fwd_min) = cone_expansion(m, &cu, p);
        let (bwd_ok, bwd_min) = cone_expansion(&inv, &cs, p);
        checks.push(MatrixCheck {
            id: i as u8 + 1,
            matrix: *m,
            det: m.det(),
            unstable_eigenvalue: lu.abs(),
            eigenvalue_ok: eigenvalue_at_least_quarter_alpha_sq(m, p),
            eigenvector_in_cone,
            forward_invariant: ray_maps_into(m, cu.boundary_rays(), &cu, 0),
            backward_invariant: ray_maps_into(&inv, cs.boundary_rays(), &cs, 1),
            min_expansion: fwd_min,
            min_backward_expansion: bwd_min,
            expansion_ok: fwd_ok && bwd_ok,
        });
    }
    let cone_invariance = checks.iter().all(|c| c.forward_invariant && c.backward_invariant);
    let min_expansion = checks
        .iter()
        .map(|c| c.min_expansion.min(c.min_backward_expansion))
        .fold(f64::INFINITY, f64::min);
    let passed = cone_invariance
        && checks.iter().all(|c| c.det == 1 && c.expansion_ok && c.eigenvalue_ok);
    HyperbolicityCertificate { params: *p, checks, cone_invariance, min_expansion, required_expansion: required, passed }
}

/// Smallest `n` with `n >= x` for a nonnegative float, as used for horizons.
pub fn ceil_usize(x: f64) -> usize {
    x.ceil().max(0.0) as usize
}
