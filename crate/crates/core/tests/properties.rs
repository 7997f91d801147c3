use hypermix::complexity::{advance_generation, Generation, USegment};
use hypermix::dynamics::{apply_t, apply_t_inv, iterate_kicked, iterate_kicked_inverse, KickSequence};
use hypermix::geometry::{rat, LengthRule, Side};
use hypermix::markov::{doeblin_bound, tv_to_uniform, DensityHistogram};
use hypermix::spectral::{transport_step, SpectralField, SpectralGrid};
use hypermix::grid::t_permutation;
use hypermix::torus::{Cone, MapParams, TorusPoint};
use proptest::prelude::*;

fn alpha() -> impl Strategy<Value = u32> {
    prop_oneof![Just(4u32), Just(16), Just(64)]
}

fn segment(side: Side) -> impl Strategy<Value = (u32, USegment)> {
    segment_at(alpha(), side)
}

fn segment_at(alpha: impl Strategy<Value = u32>, side: Side) -> impl Strategy<Value = (u32, USegment)> {
    (alpha, 0i64..997, 0i64..991, 1i64..=8).prop_map(move |(a, x, y, l)| {
        let p = MapParams::with_alpha(a).unwrap();
        let start = [rat(x, 997), rat(y, 991)];
        // lengths in (0, α⁻¹/4]
        let len = rat(l, 32 * a as i64);
        let seg = match side {
            Side::Forward => USegment::horizontal(&p, start, len),
            Side::Backward => USegment::vertical(&p, start, len),
        };
        (a, seg.unwrap())
    })
}

proptest! {
    #[test]
    fn t_inverse_undoes_t(a in alpha(), x in any::<u64>(), y in any::<u64>()) {
        let p = MapParams::with_alpha(a).unwrap();
        let z = TorusPoint::new(x, y);
        prop_assert_eq!(apply_t_inv(apply_t(z, &p), &p), z);
        prop_assert_eq!(apply_t(apply_t_inv(z, &p), &p), z);
    }

    #[test]
    fn kicked_orbits_invert(a in alpha(), x in any::<u64>(), y in any::<u64>(), seed in any::<u64>(), n in 1usize..12) {
        let p = MapParams::with_alpha(a).unwrap();
        let xi = KickSequence::gaussian(n, 0.1, seed, 0);
        let z = TorusPoint::new(x, y);
        prop_assert_eq!(iterate_kicked_inverse(iterate_kicked(z, &xi, n, &p), &xi, n, &p), z);
    }

    #[test]
    fn lattice_transport_permutes_values(values in proptest::collection::vec(-1e3f64..1e3, 256)) {
        let p = MapParams::with_alpha(16).unwrap();
        let f = SpectralField::new(4, values).unwrap();
        let g = transport_step(&f, &t_permutation(4, &p).unwrap());
        let mut a = f.values.clone();
        let mut b = g.values.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn heat_contracts_and_keeps_the_mean(values in proptest::collection::vec(-1.0f64..1.0, 1024), t in 0.0f64..1e-2) {
        let grid = SpectralGrid::new(5).unwrap();
        let mut f = SpectralField::new(5, values).unwrap();
        let (m0, l0) = (f.mean(), f.l2());
        grid.heat_step(&mut f, t).unwrap();
        prop_assert!((f.mean() - m0).abs() < 1e-12);
        prop_assert!(f.l2() <= l0 * (1.0 + 1e-12));
    }

    #[test]
    fn histogram_pigeonhole(points in proptest::collection::vec((any::<u64>(), any::<u64>()), 1..400), b in 1u32..5) {
        let pts: Vec<_> = points.into_iter().map(|(x, y)| TorusPoint::new(x, y)).collect();
        let h = DensityHistogram::from_points(b, &pts).unwrap();
        prop_assert!((h.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(h.min_density() <= 1.0 && h.max_density() >= 1.0);
        let tv = tv_to_uniform(&h);
        prop_assert!((0.0..1.0).contains(&tv));
    }

    #[test]
    fn doeblin_bounds_decrease(lambda in 1e-6f64..1.0, k in 0u32..50) {
        prop_assert!(doeblin_bound(lambda, k + 1).unwrap() <= doeblin_bound(lambda, k).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generations_conserve_mass_and_stay_in_the_cone(
        // α = 64 reaches millions of pieces after two steps
        (a, seg) in prop_oneof![
            segment_at(prop_oneof![Just(4u32), Just(16)], Side::Forward),
            segment_at(prop_oneof![Just(4u32), Just(16)], Side::Backward),
        ],
        kx in -50i64..50,
        ky in -50i64..50,
    ) {
        let p = MapParams::with_alpha(a).unwrap();
        let rule = LengthRule::standard(&p);
        let cone = match seg.side {
            Side::Forward => Cone::unstable(p),
            Side::Backward => Cone::stable(p),
        };
        let kick = [rat(kx, 101), rat(ky, 103)];
        let mut g = Generation::initial(&seg);
        let steps = if a <= 4 { 3 } else { 2 };
        for _ in 0..steps {
            g = advance_generation(&g, &p, &kick, &rule, 1 << 20).unwrap();
            prop_assert_eq!(g.mass(), g.extent.clone());
            for gp in &g.pieces {
                prop_assert!(cone.contains_big(&gp.piece.dir[0], &gp.piece.dir[1]).unwrap());
                prop_assert!(gp.piece.length_sq() <= &rule.cap * &rule.cap);
            }
        }
    }

    #[test]
    fn short_segments_meet_at_most_four_branches((a, seg) in prop_oneof![segment(Side::Forward), segment(Side::Backward)]) {
        let p = MapParams::with_alpha(a).unwrap();
        let images = seg.piece().step(&p, seg.side, &[rat(0, 1), rat(0, 1)]);
        prop_assert!(!images.is_empty() && images.len() <= 4, "{} pieces", images.len());
    }
}
