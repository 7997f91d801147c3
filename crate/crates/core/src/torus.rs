//! Exact toral arithmetic.
//!
//! Points of the torus are stored as pairs of fixed-point fractions with
//! denominator `2^W`. Every branch of the map is an integer matrix plus an
//! integer offset, so wrapping integer arithmetic computes true orbits of
//! the lattice with no rounding at all.

use std::fmt::Debug;
use std::hash::Hash;
use std::ops::{Add, Sub};

use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Unsigned machine word used as a fixed-point fraction of the unit interval.
pub trait Word: Copy + Default + Eq + Ord + Hash + Debug + Send + Sync + 'static {
    const BITS: u32;
    const ZERO: Self;
    /// The fraction 1/2.
    const HALF: Self;

    fn wrapping_add(self, rhs: Self) -> Self;
    fn wrapping_sub(self, rhs: Self) -> Self;
    /// Multiplication by a signed integer modulo 1.
    fn wrapping_mul_int(self, k: i64) -> Self;
    fn shr(self, n: u32) -> Self;
    /// Nearest lattice point to `v mod 1`.
    fn from_f64_mod1(v: f64) -> Self;
    /// Truncates to 53 bits, so the result is monotone and lies in [0,1).
    fn to_f64(self) -> f64;
    fn to_biguint(self) -> BigUint;
    /// Reduces an integer numerator modulo `2^BITS`.
    fn from_bigint_mod(v: &BigInt) -> Self;
    /// `j * 2^(BITS - level)`, the left edge of dyadic interval `j` at `level`.
    fn from_dyadic(j: u64, level: u32) -> Self;
    /// Index of the dyadic interval at `level` containing the fraction.
    fn dyadic_index(self, level: u32) -> u64;
}

macro_rules! impl_word {
    ($t:ty, $bits:expr) => {
        impl Word for $t {
            const BITS: u32 = $bits;
            const ZERO: Self = 0;
            const HALF: Self = 1 << ($bits - 1);

            #[inline]
            fn wrapping_add(self, rhs: Self) -> Self {
                <$t>::wrapping_add(self, rhs)
            }
            #[inline]
            fn wrapping_sub(self, rhs: Self) -> Self {
                <$t>::wrapping_sub(self, rhs)
            }
            #[inline]
            fn wrapping_mul_int(self, k: i64) -> Self {
                // Two's complement: (k as $t) is congruent to k modulo 2^BITS.
                self.wrapping_mul(k as i128 as $t)
            }
            #[inline]
            fn shr(self, n: u32) -> Self {
                if n >= $bits {
                    0
                } else {
                    self >> n
                }
            }
            fn from_f64_mod1(v: f64) -> Self {
                assert!(v.is_finite(), "non-finite coordinate {v}");
                let frac = v - v.floor();
                let scaled = (frac * 2f64.powi($bits)).round();
                if scaled >= 2f64.powi($bits) {
                    0
                } else {
                    scaled as $t
                }
            }
            #[inline]
            fn to_f64(self) -> f64 {
                (self >> ($bits - 53)) as f64 * 2f64.powi(-53)
            }
            fn to_biguint(self) -> BigUint {
                BigUint::from(self)
            }
            fn from_bigint_mod(v: &BigInt) -> Self {
                let modulus: BigInt = BigInt::one() << $bits;
                let r: BigInt = ((v % &modulus) + &modulus) % &modulus;
                r.to_biguint()
                    .and_then(|u| u.to_u128())
                    .expect("residue fits the word") as $t
            }
            fn from_dyadic(j: u64, level: u32) -> Self {
                if level == 0 {
                    0
                } else {
                    (j as $t) << ($bits - level)
                }
            }
            fn dyadic_index(self, level: u32) -> u64 {
                if level == 0 {
                    0
                } else {
                    (self >> ($bits - level)) as u64
                }
            }
        }
    };
}

impl_word!(u64, 64);
impl_word!(u128, 128);

/// A point of the 2-torus with `W`-bit fixed-point coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorusPoint<W: Word = u64> {
    pub x: W,
    pub y: W,
}

impl<W: Word> TorusPoint<W> {
    pub const fn new(x: W, y: W) -> Self {
        TorusPoint { x, y }
    }

    pub fn origin() -> Self {
        TorusPoint::new(W::ZERO, W::ZERO)
    }

    /// Rounds `(x mod 1, y mod 1)` to the nearest lattice point.
    pub fn from_f64(x: f64, y: f64) -> Self {
        TorusPoint::new(W::from_f64_mod1(x), W::from_f64_mod1(y))
    }

    pub fn to_f64(self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }

    /// Exact coordinates as rationals in [0,1).
    pub fn to_rational(self) -> [BigRational; 2] {
        let den = BigInt::one() << W::BITS;
        [
            BigRational::new(BigInt::from(self.x.to_biguint()), den.clone()),
            BigRational::new(BigInt::from(self.y.to_biguint()), den),
        ]
    }

    /// Nearest lattice point to a rational point; exact when the point is dyadic
    /// with denominator dividing `2^W`.
    pub fn from_rational(p: &[BigRational; 2]) -> Self {
        let round = |v: &BigRational| {
            let scaled = v * BigRational::from_integer(BigInt::one() << W::BITS);
            W::from_bigint_mod(&scaled.round().to_integer())
        };
        TorusPoint::new(round(&p[0]), round(&p[1]))
    }
}

impl<W: Word> Add for TorusPoint<W> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        TorusPoint::new(self.x.wrapping_add(rhs.x), self.y.wrapping_add(rhs.y))
    }
}

impl<W: Word> Sub for TorusPoint<W> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        TorusPoint::new(self.x.wrapping_sub(rhs.x), self.y.wrapping_sub(rhs.y))
    }
}

/// Shear strength `alpha` and cone aperture parameter `delta1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapParams {
    alpha: u32,
    delta1: Rational64,
}

impl MapParams {
    pub fn new(alpha: u32, delta1: Rational64) -> Result<Self> {
        if alpha < 2 || alpha % 2 != 0 {
            return Err(Error::Config(format!("alpha must be an even integer >= 2, got {alpha}")));
        }
        if alpha > 1 << 20 {
            return Err(Error::Config(format!("alpha {alpha} exceeds the supported range")));
        }
        if delta1 <= Rational64::zero() || delta1 >= Rational64::one() {
            return Err(Error::Config(format!("delta1 must lie in (0,1), got {delta1}")));
        }
        Ok(MapParams { alpha, delta1 })
    }

    /// `delta1 = 1/2`.
    pub fn with_alpha(alpha: u32) -> Result<Self> {
        MapParams::new(alpha, Rational64::new(1, 2))
    }

    /// Parses `delta1` written as a fraction such as `1/2`.
    pub fn parse(alpha: u32, delta1: &str) -> Result<Self> {
        let d: Rational64 = delta1
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("delta1 must be a fraction like 1/2, got '{delta1}'")))?;
        MapParams::new(alpha, d)
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn alpha_i64(&self) -> i64 {
        self.alpha as i64
    }

    pub fn delta1(&self) -> Rational64 {
        self.delta1
    }

    /// The expansion rate `delta1 * alpha^2` guaranteed inside the unstable cone.
    pub fn expansion_bound(&self) -> f64 {
        let a = self.alpha as f64;
        self.delta1.to_f64().unwrap() * a * a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Unstable,
    Stable,
}

/// The closed cones `|y| <= |x| / (alpha delta1)` and its mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cone {
    pub kind: ConeKind,
    pub params: MapParams,
}

impl Cone {
    pub fn unstable(params: MapParams) -> Self {
        Cone { kind: ConeKind::Unstable, params }
    }

    pub fn stable(params: MapParams) -> Self {
        Cone { kind: ConeKind::Stable, params }
    }

    /// Exact membership of an integer vector.
    pub fn contains_big(&self, x: &BigInt, y: &BigInt) -> Result<bool> {
        if x.is_zero() && y.is_zero() {
            return Err(Error::Domain("cone membership of the zero vector".into()));
        }
        let p = BigInt::from(*self.params.delta1.numer());
        let q = BigInt::from(*self.params.delta1.denom());
        let a = BigInt::from(self.params.alpha);
        let (along, across) = match self.kind {
            ConeKind::Unstable => (x.abs(), y.abs()),
            ConeKind::Stable => (y.abs(), x.abs()),
        };
        Ok(a * p * across <= q * along)
    }

    pub fn contains_int(&self, x: i128, y: i128) -> Result<bool> {
        self.contains_big(&BigInt::from(x), &BigInt::from(y))
    }

    /// Exact membership of a rational vector (cleared of denominators first).
    pub fn contains_rational(&self, x: &BigRational, y: &BigRational) -> Result<bool> {
        let den = x.denom() * y.denom();
        let xi = (x * BigRational::from_integer(den.clone())).to_integer();
        let yi = (y * BigRational::from_integer(den)).to_integer();
        self.contains_big(&xi, &yi)
    }

    /// The two boundary rays, as integer vectors with positive leading coordinate
    /// (x for the unstable cone, y for the stable cone).
    pub fn boundary_rays(&self) -> [[i128; 2]; 2] {
        let p = *self.params.delta1.numer() as i128;
        let q = *self.params.delta1.denom() as i128;
        let a = self.params.alpha as i128;
        match self.kind {
            ConeKind::Unstable => [[a * p, q], [a * p, -q]],
            ConeKind::Stable => [[q, a * p], [-q, a * p]],
        }
    }
}

/// A 2x2 integer matrix `((a, b), (c, d))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BranchMatrix {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl BranchMatrix {
    pub const IDENTITY: BranchMatrix = BranchMatrix::new(1, 0, 0, 1);

    pub const fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        BranchMatrix { a, b, c, d }
    }

    /// `((1, 0), (s, 1))`: adds `s x` to `y`.
    pub const fn vertical_shear(s: i64) -> Self {
        BranchMatrix::new(1, 0, s, 1)
    }

    /// `((1, s), (0, 1))`: adds `s y` to `x`.
    pub const fn horizontal_shear(s: i64) -> Self {
        BranchMatrix::new(1, s, 0, 1)
    }

    pub fn det(&self) -> i128 {
        self.a as i128 * self.d as i128 - self.b as i128 * self.c as i128
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    /// Matrix product `self * rhs`; panics on overflow.
    pub fn mul(&self, rhs: &BranchMatrix) -> BranchMatrix {
        let m = |x: i64, y: i64, z: i64, w: i64| {
            x.checked_mul(y)
                .and_then(|p| z.checked_mul(w).and_then(|q| p.checked_add(q)))
                .expect("branch matrix product overflows i64")
        };
        BranchMatrix::new(
            m(self.a, rhs.a, self.b, rhs.c),
            m(self.a, rhs.b, self.b, rhs.d),
            m(self.c, rhs.a, self.d, rhs.c),
            m(self.c, rhs.b, self.d, rhs.d),
        )
    }

    /// Inverse of a determinant-one matrix.
    pub fn inverse(&self) -> Result<BranchMatrix> {
        if self.det() != 1 {
            return Err(Error::Domain(format!("matrix {self:?} is not unimodular")));
        }
        Ok(BranchMatrix::new(self.d, -self.b, -self.c, self.a))
    }

    pub fn apply_i128(&self, v: [i128; 2]) -> [i128; 2] {
        [
            self.a as i128 * v[0] + self.b as i128 * v[1],
            self.c as i128 * v[0] + self.d as i128 * v[1],
        ]
    }

    /// Image of a lattice point under the linear map, reduced modulo 1.
    #[inline]
    pub fn apply_mod1<W: Word>(&self, z: TorusPoint<W>) -> TorusPoint<W> {
        TorusPoint::new(
            z.x.wrapping_mul_int(self.a).wrapping_add(z.y.wrapping_mul_int(self.b)),
            z.x.wrapping_mul_int(self.c).wrapping_add(z.y.wrapping_mul_int(self.d)),
        )
    }
}

/// Matrix applied to `z` modulo 1 (free-function form).
pub fn matrix_apply_mod1<W: Word>(a: &BranchMatrix, z: TorusPoint<W>) -> TorusPoint<W> {
    a.apply_mod1(z)
}

/// A 2x2 matrix of unbounded integers, used for long itinerary products.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
    pub d: BigInt,
}

impl IntMatrix {
    pub fn identity() -> Self {
        IntMatrix::from(BranchMatrix::IDENTITY)
    }

    pub fn mul(&self, rhs: &IntMatrix) -> IntMatrix {
        IntMatrix {
            a: &self.a * &rhs.a + &self.b * &rhs.c,
            b: &self.a * &rhs.b + &self.b * &rhs.d,
            c: &self.c * &rhs.a + &self.d * &rhs.c,
            d: &self.c * &rhs.b + &self.d * &rhs.d,
        }
    }

    /// `branch * self`, the update used when composing one more step.
    pub fn premul(&self, m: &BranchMatrix) -> IntMatrix {
        IntMatrix {
            a: &self.a * m.a + &self.c * m.b,
            b: &self.b * m.a + &self.d * m.b,
            c: &self.a * m.c + &self.c * m.d,
            d: &self.b * m.c + &self.d * m.d,
        }
    }

    pub fn det(&self) -> BigInt {
        &self.a * &self.d - &self.b * &self.c
    }

    /// Inverse, assuming determinant one.
    pub fn inverse_unimodular(&self) -> IntMatrix {
        debug_assert!(self.det().is_one());
        IntMatrix { a: self.d.clone(), b: -&self.b, c: -&self.c, d: self.a.clone() }
    }

    pub fn apply(&self, v: &[BigInt; 2]) -> [BigInt; 2] {
        [&self.a * &v[0] + &self.b * &v[1], &self.c * &v[0] + &self.d * &v[1]]
    }

    pub fn column(&self, j: usize) -> [BigInt; 2] {
        if j == 0 {
            [self.a.clone(), self.c.clone()]
        } else {
            [self.b.clone(), self.d.clone()]
        }
    }

    pub fn row(&self, i: usize) -> [BigInt; 2] {
        if i == 0 {
            [self.a.clone(), self.b.clone()]
        } else {
            [self.c.clone(), self.d.clone()]
        }
    }
}

impl From<BranchMatrix> for IntMatrix {
    fn from(m: BranchMatrix) -> Self {
        IntMatrix { a: m.a.into(), b: m.b.into(), c: m.c.into(), d: m.d.into() }
    }
}

/// Euclidean norm of an integer vector, as a float (valid far beyond f64 integer range).
pub fn big_norm(v: &[BigInt; 2]) -> f64 {
    let s = &v[0] * &v[0] + &v[1] * &v[1];
    big_to_f64(&s).sqrt()
}

/// Nearest-float conversion that does not overflow until 2^1024.
pub fn big_to_f64(v: &BigInt) -> f64 {
    v.to_f64().unwrap_or(if v.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

/// The four matrices `A1..A4` of `∇T = ∇T2 · ∇T1`, indexed by branch id - 1.
///
/// `A1` is the branch `x >= 1/2`, `y' >= 1/2`; `A2` has `x < 1/2`, `y' >= 1/2`;
/// `A3` has `x >= 1/2`, `y' < 1/2`; `A4` has both lower branches.
pub fn branch_matrix_set(params: &MapParams) -> [BranchMatrix; 4] {
    let a = params.alpha_i64();
    let a2 = a * a;
    [
        BranchMatrix::new(1 + a2, a, a, 1),
        BranchMatrix::new(1 - a2, a, -a, 1),
        BranchMatrix::new(1 - a2, -a, a, 1),
        BranchMatrix::new(1 + a2, -a, -a, 1),
    ]
}

/// Branch id in `1..=4` from the two half-plane tests.
pub fn branch_id(x_upper: bool, y_upper: bool) -> u8 {
    match (x_upper, y_upper) {
        (true, true) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (false, false) => 4,
    }
}

/// A square of the dyadic tiling at scale `2^-level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicSquare {
    pub level: u32,
    pub j: u64,
    pub k: u64,
}

impl DyadicSquare {
    pub fn new(level: u32, j: u64, k: u64) -> Result<Self> {
        if level > 63 {
            return Err(Error::Domain(format!("dyadic level {level} exceeds 63")));
        }
        let side = 1u64 << level;
        if j >= side || k >= side {
            return Err(Error::Domain(format!("square index ({j},{k}) outside level {level}")));
        }
        Ok(DyadicSquare { level, j, k })
    }

    pub fn whole_torus() -> Self {
        DyadicSquare { level: 0, j: 0, k: 0 }
    }

    pub fn all(level: u32) -> impl Iterator<Item = DyadicSquare> {
        let side = 1u64 << level;
        (0..side).flat_map(move |j| (0..side).map(move |k| DyadicSquare { level, j, k }))
    }

    pub fn side(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::one() << self.level)
    }

    pub fn area(&self) -> BigRational {
        let s = self.side();
        &s * &s
    }

    pub fn area_f64(&self) -> f64 {
        4f64.powi(-(self.level as i32))
    }

    /// Lower-left corner as exact rationals.
    pub fn corner(&self) -> [BigRational; 2] {
        let s = self.side();
        [
            &s * BigRational::from_integer(self.j.into()),
            &s * BigRational::from_integer(self.k.into()),
        ]
    }

    /// Closed-square membership on the torus (the right and top edges included).
    pub fn contains<W: Word>(&self, z: TorusPoint<W>) -> bool {
        let side = 1u64 << self.level;
        let in_axis = |v: W, idx: u64| {
            v.dyadic_index(self.level) == idx || v == W::from_dyadic((idx + 1) % side, self.level)
        };
        self.level == 0 || (in_axis(z.x, self.j) && in_axis(z.y, self.k))
    }

    /// The lattice point at offset `(u, v)` inside the square; the offsets are
    /// full-range words whose top `level` bits are discarded.
    pub fn point_at<W: Word>(&self, u: W, v: W) -> TorusPoint<W> {
        TorusPoint::new(
            W::from_dyadic(self.j, self.level).wrapping_add(u.shr(self.level)),
            W::from_dyadic(self.k, self.level).wrapping_add(v.shr(self.level)),
        )
    }
}
