//! Property tests for the structural invariants.

use nalgebra::DMatrix;
use num::{BigInt, Zero};
use proptest::prelude::*;

use symmetra::crossing::{enumerate_cyclic, star_crossing};
use symmetra::hamming_codes::{delsarte_lp, lexicode, KrawtchoukTable};
use symmetra::perm_groups::{pair_orbits, structure_constants, GroupAction, Permutation};
use symmetra::sdp_model::{SdpaBuilder, SdpaProblem};
use symmetra::solver::Arithmetic;
use symmetra::sos_sym::{monomial_rep, Polynomial};
use symmetra::sphere_codes::JacobiFamily;
use symmetra::star_algebra::{block_diagonalize, AlgebraBasis};

fn permutation(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle().prop_map(|v| Permutation::new(v).unwrap())
}

fn group() -> impl Strategy<Value = GroupAction> {
    (3usize..9).prop_flat_map(|n| prop::collection::vec(permutation(n), 1..3).prop_map(move |g| GroupAction::new(n, g).unwrap()))
}

/// Invertible integer 2×2 matrices with determinant ±1.
fn unimodular() -> impl Strategy<Value = DMatrix<f64>> {
    (-2i32..=2, -2i32..=2, any::<bool>()).prop_map(|(a, b, flip)| {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, a as f64, 0.0, 1.0]) * DMatrix::from_row_slice(2, 2, &[1.0, 0.0, b as f64, 1.0]);
        if flip {
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]) * m
        } else {
            m
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inverse_composes_to_identity(p in permutation(12)) {
        prop_assert!(p.compose(&p.inverse()).is_identity());
        prop_assert!(p.inverse().compose(&p).is_identity());
    }

    #[test]
    fn pair_orbits_partition_and_pair_up(g in group()) {
        let o = pair_orbits(&g);
        prop_assert_eq!(o.orbit_sizes.iter().sum::<u64>(), (o.n * o.n) as u64);
        for r in 0..o.m {
            prop_assert_eq!(o.transpose_map[o.transpose_map[r]], r);
            prop_assert_eq!(o.orbit_sizes[r], o.orbit_sizes[o.transpose_map[r]]);
        }
        for gen in &g.generators {
            for i in 0..o.n {
                for j in 0..o.n {
                    prop_assert_eq!(o.id(gen.apply(i), gen.apply(j)), o.id(i, j));
                }
            }
        }
    }

    #[test]
    fn structure_constants_are_associative(g in group()) {
        let o = pair_orbits(&g);
        let sc = structure_constants(&o, &g).unwrap();
        prop_assert!(sc.verify_exact());
    }

    #[test]
    fn block_sizes_account_for_the_dimension(g in group(), seed in 0u64..1000) {
        let o = pair_orbits(&g);
        let bd = block_diagonalize(&AlgebraBasis::from_orbits(&o), seed, 1e-9).unwrap();
        prop_assert_eq!(bd.block_sizes.iter().map(|m| m * m).sum::<usize>(), o.m);
        let n: usize = bd.block_sizes.iter().zip(&bd.multiplicities).map(|(m, k)| m * k).sum();
        prop_assert_eq!(n + bd.kernel_dim, o.n);
    }

    #[test]
    fn monomial_rep_is_a_homomorphism(a in unimodular(), b in unimodular(), d in 1u32..4) {
        let rep = monomial_rep(&[a.clone(), b.clone(), &a * &b], 2, d).unwrap();
        let lhs = &rep.matrices[2];
        let rhs = &rep.matrices[0] * &rep.matrices[1];
        prop_assert!((lhs - &rhs).amax() <= 1e-10 * (1.0 + rhs.amax()));
    }

    #[test]
    fn polynomial_product_evaluates_pointwise(
        p in prop::collection::vec((0u32..3, 0u32..3, -3.0f64..3.0), 1..5),
        q in prop::collection::vec((0u32..3, 0u32..3, -3.0f64..3.0), 1..5),
        x in -1.5f64..1.5,
        y in -1.5f64..1.5,
    ) {
        let mk = |t: &[(u32, u32, f64)]| Polynomial::new(2, t.iter().map(|&(a, b, c)| (vec![a, b], c))).unwrap();
        let (p, q) = (mk(&p), mk(&q));
        let lhs = p.mul(&q).eval(&[x, y]);
        let rhs = p.eval(&[x, y]) * q.eval(&[x, y]);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn jacobi_is_one_at_one_and_bounded(n in 2usize..30, t in -1.0f64..1.0) {
        let fam = JacobiFamily::sphere(n).unwrap();
        let at_one = fam.values(30, 1.0);
        prop_assert!(at_one.iter().all(|&v| (v - 1.0).abs() <= 1e-12));
        prop_assert!(fam.values(30, t).iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn krawtchouk_rows_are_orthogonal(n in 1usize..9, q in 2usize..5) {
        let table = KrawtchoukTable::new(n, q).unwrap();
        for i in 0..=n {
            for k in 0..=n {
                let v = table.orthogonality(i, k);
                prop_assert_eq!(v.is_zero(), i != k);
                if i == k {
                    prop_assert!(v > BigInt::zero());
                }
            }
        }
    }

    #[test]
    fn delsarte_bounds_lexicodes(n in 2usize..9, d in 1usize..9) {
        prop_assume!(d <= n);
        let b = delsarte_lp(n, d, 2, Arithmetic::Float).unwrap().bound;
        prop_assert!(b + 1e-9 >= lexicode(n, d).len() as f64);
        prop_assert!(b <= (1u64 << n) as f64 + 1e-9);
    }

    #[test]
    fn star_crossing_is_symmetric(m in 3usize..7, a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let cycles = enumerate_cyclic(m).unwrap();
        let (s, t) = (a.get(&cycles), b.get(&cycles));
        prop_assert_eq!(star_crossing(s, t), star_crossing(t, s));
    }

    #[test]
    fn sdpa_text_round_trips(
        entries in prop::collection::vec((0usize..3, 0usize..2, 0usize..3, 0usize..3, -5.0f64..5.0), 1..12),
        c in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let mut b = SdpaBuilder::new(vec![3, -3], c);
        for (mat, block, i, j, v) in entries {
            let (i, j) = if block == 1 { (i, i) } else { (i, j) };
            b.add(mat, block, i, j, v);
        }
        let p = b.build();
        let back = SdpaProblem::parse(&p.to_sdpa_string()).unwrap();
        prop_assert_eq!(back.canonical(), p.canonical());
    }
}
