//! Fields sampled on the dyadic lattice `{(i, j) / 2^level}`.
//!
//! Storage is row-major with `y` as the row: index `j * M + i` holds the value
//! at `(i/M, j/M)`. Because α is an integer, every branch of `T` maps this
//! lattice onto itself, so `f ∘ T` is an exact permutation of the samples.

use rayon::prelude::*;

use crate::dynamics::{apply_t, apply_t1, apply_t2};
use crate::error::{domain, Result};
use crate::torus::{MapParams, TorusPoint, Word};

/// Largest supported level; indices must fit a `u32`.
pub const MAX_LEVEL: u32 = 15;

pub fn check_level(level: u32) -> Result<usize> {
    if level == 0 || level > MAX_LEVEL {
        return domain(format!("grid level must lie in 1..={MAX_LEVEL}, got {level}"));
    }
    Ok(1usize << level)
}

/// Samples `f(x, y)` at the lattice points.
pub fn sample_field(level: u32, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Vec<f64>> {
    let m = check_level(level)?;
    let h = 1.0 / m as f64;
    let mut out = vec![0.0; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = f(i as f64 * h, j as f64 * h);
        }
    });
    Ok(out)
}

fn index_of(z: TorusPoint<u64>, level: u32) -> u32 {
    ((z.y.dyadic_index(level) << level) | z.x.dyadic_index(level)) as u32
}

/// `perm[i]` is the index of `map(z_i)`. Panics if `map` leaves the lattice.
pub fn grid_permutation(
    level: u32,
    map: impl Fn(TorusPoint<u64>) -> TorusPoint<u64> + Sync,
) -> Result<Vec<u32>> {
    let m = check_level(level)?;
    let mut perm = vec![0u32; m * m];
    perm.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            let z = TorusPoint::new(u64::from_dyadic(i as u64, level), u64::from_dyadic(j as u64, level));
            let w = map(z);
            debug_assert!((w.x | w.y) & (u64::MAX >> level) == 0, "image left the lattice");
            *v = index_of(w, level);
        }
    });
    Ok(perm)
}

/// The permutation of `T`.
pub fn t_permutation(level: u32, p: &MapParams) -> Result<Vec<u32>> {
    grid_permutation(level, |z| apply_t(z, p))
}

/// The permutation of `T1 ∘ T2`, the inverse of the time-one flow map.
pub fn flow_inverse_permutation(level: u32, p: &MapParams) -> Result<Vec<u32>> {
    grid_permutation(level, |z| apply_t1(apply_t2(z, p), p))
}

/// `(f ∘ map)` for the map whose permutation is `perm`.
pub fn pullback(field: &[f64], perm: &[u32]) -> Vec<f64> {
    perm.par_iter().map(|&k| field[k as usize]).collect()
}

/// Compensated (Neumaier) sum.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn grid_mean(field: &[f64]) -> f64 {
    stable_sum(field.iter().copied()) / field.len() as f64
}

pub fn sup_norm(field: &[f64]) -> f64 {
    field.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::flow_map_inverse;

    #[test]
    fn t_is_a_bijection_of_the_lattice() {
        let p = MapParams::with_alpha(16).unwrap();
        let perm = t_permutation(6, &p).unwrap();
        let mut seen = vec![false; perm.len()];
        for &k in &perm {
            assert!(!seen[k as usize]);
            seen[k as usize] = true;
        }
    }

    #[test]
    fn flow_inverse_matches_the_pointwise_map() {
        let p = MapParams::with_alpha(4).unwrap();
        let perm = flow_inverse_permutation(5, &p).unwrap();
        for (k, &img) in perm.iter().enumerate().step_by(7) {
            let z = TorusPoint::new(u64::from_dyadic(k as u64 & 31, 5), u64::from_dyadic(k as u64 >> 5, 5));
            let w = flow_map_inverse(z, 1.0, &p).unwrap();
            assert_eq!(img, index_of(w, 5));
        }
    }

    #[test]
    fn compensated_sum_cancels() {
        assert_eq!(stable_sum([1e16, 1.0, -1e16]), 1.0);
    }
}
