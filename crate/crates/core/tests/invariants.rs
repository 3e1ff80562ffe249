use std::sync::Arc;

use markov_gap::algebra::{inner_product, Block, Element, TracialAlgebra};
use markov_gap::bounds::forward_bound;
use markov_gap::channels::{adjoint, build_channel, compose, validate_markov, ChannelSpec, MarkovMap};
use markov_gap::ensemble::{random_channel, random_element, random_permutation_mixture, random_unitary_channel};
use markov_gap::exec::ExecPolicy;
use markov_gap::gap::{gap_l2, gap_lp, GapOptions};
use markov_gap::sigma::{sigma_norm, SigmaInstance};
use markov_gap::structure::{birkhoff_decomposition, build_dilation, fixed_point_algebra, verify_factorization, Subalgebra};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn two_block() -> Arc<TracialAlgebra> {
    Arc::new(TracialAlgebra::new(vec![Block { dim: 2, weight: 0.7 }, Block { dim: 1, weight: 0.3 }]).unwrap())
}

fn quick(seed: u64) -> GapOptions {
    GapOptions { restarts: 4, seed, ..GapOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mazur_maps_move_unit_spheres(seed in any::<u64>(), p in 1.1f64..6.0, q in 1.1f64..6.0) {
        let alg = two_block();
        let x = random_element(&alg, &mut rng(seed));
        let x = x.scale_re(1.0 / x.schatten_norm(p).unwrap());
        let y = x.mazur(p, q).unwrap();
        prop_assert!((y.schatten_norm(q).unwrap() - 1.0).abs() < 1e-10);
        prop_assert!(y.mazur(q, p).unwrap().max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn duality_map_norms_its_argument(seed in any::<u64>(), p in 1.1f64..6.0) {
        let alg = two_block();
        let x = random_element(&alg, &mut rng(seed));
        let j = x.duality_map(p).unwrap();
        let q = p / (p - 1.0);
        prop_assert!((j.schatten_norm(q).unwrap() - 1.0).abs() < 1e-10);
        let pairing = inner_product(&j, &x).unwrap();
        prop_assert!((pairing.re - x.schatten_norm(p).unwrap()).abs() < 1e-10 * x.schatten_norm(p).unwrap().max(1.0));
        prop_assert!(pairing.im.abs() < 1e-10);
    }

    #[test]
    fn markov_maps_contract_lp(seed in any::<u64>(), n in 2usize..4, p in 1.0f64..8.0) {
        let mut r = rng(seed);
        let t = random_channel(n, &mut r).unwrap();
        let x = random_element(t.algebra(), &mut r);
        prop_assert!(t.apply(&x).unwrap().schatten_norm(p).unwrap() <= x.schatten_norm(p).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn compositions_and_adjoints_stay_markov(seed in any::<u64>(), n in 2usize..4) {
        let mut r = rng(seed);
        let s = random_channel(n, &mut r).unwrap();
        let t = random_channel(n, &mut r).unwrap();
        prop_assert!(validate_markov(&compose(&s, &t).unwrap()).passes());
        prop_assert!(validate_markov(&adjoint(&s)).passes());
    }

    #[test]
    fn rotated_pairs_have_closed_form_gap(angle in 0.01f64..1.56, n in 2usize..4) {
        // c2 of E_A E_B for the diagonal algebra and its rotation by θ in the
        // first coordinate plane: the principal angle between σ_z and its image
        // gives |cos 2θ|; the remaining diagonal directions are shared.
        let alg = Arc::new(TracialAlgebra::matrix(n).unwrap());
        let inst = SigmaInstance::new(Subalgebra::diagonal(&alg).unwrap(), Subalgebra::rotated_diagonal(&alg, angle).unwrap()).unwrap();
        let want = (2.0 * angle).cos().abs();
        let ab = gap_l2(&inst.t, &inst.n).unwrap().lower;
        let ba = gap_l2(&inst.reversed(), &inst.n).unwrap().lower;
        prop_assert!((ab - want).abs() < 1e-12, "{} vs {}", ab, want);
        prop_assert!((ba - want).abs() < 1e-12, "{} vs {}", ba, want);
    }

    #[test]
    fn sigma_norm_is_at_most_four_lp(seed in any::<u64>(), angle in 0.05f64..1.5, p in 1.0f64..8.0) {
        let alg = Arc::new(TracialAlgebra::matrix(3).unwrap());
        let inst = SigmaInstance::new(Subalgebra::diagonal(&alg).unwrap(), Subalgebra::rotated_diagonal(&alg, angle).unwrap()).unwrap();
        let x = random_element(&alg, &mut rng(seed));
        let x = &x - &inst.n.project(&x);
        prop_assert!(sigma_norm(&inst, &x, p).unwrap() <= 4.0 * x.schatten_norm(p).unwrap() + 1e-10);
    }

    #[test]
    fn forward_bound_is_monotone_in_c2(p in prop::sample::select(vec![1.2, 1.5, 2.0, 3.0, 4.0, 8.0])) {
        let mut last = 0.0;
        for k in 0..400 {
            let c2 = k as f64 / 400.0;
            let v = forward_bound(c2, p).unwrap().thm21_final.value();
            prop_assert!(v >= last - 1e-12, "p={} c2={} {} < {}", p, c2, v, last);
            last = v;
        }
    }

    #[test]
    fn birkhoff_reconstructs_permutation_mixtures(seed in any::<u64>(), n in 2usize..6, terms in 1usize..5) {
        let k = random_permutation_mixture(n, terms, &mut rng(seed));
        let parts = birkhoff_decomposition(&k).unwrap();
        let mut rebuilt = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (w, perm) in &parts {
            for (i, &j) in perm.iter().enumerate() {
                rebuilt[(i, j)] += w;
            }
        }
        prop_assert!((rebuilt - k).amax() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_unitary_channels_are_certified(seed in any::<u64>(), n in 2usize..4, terms in 1usize..4) {
        let t = random_unitary_channel(n, terms, &mut rng(seed)).unwrap();
        let cert = build_dilation(&t).unwrap();
        prop_assert!(verify_factorization(&cert, &t).unwrap().passes());
    }

    #[test]
    fn gap_estimates_respect_forward_bounds(seed in any::<u64>(), p in prop::sample::select(vec![1.2, 1.5, 3.0, 4.0])) {
        let mut r = rng(seed);
        let t = random_channel(2, &mut r).unwrap();
        let n = fixed_point_algebra(&t).unwrap();
        let c2 = gap_l2(&t, &n).unwrap().lower;
        prop_assume!(c2 < 1.0 - 1e-9);
        let est = gap_lp(&t, &n, p, &quick(seed)).unwrap();
        let bound = forward_bound(c2, p).unwrap().minimum_applicable.map_or(1.0, |(v, _)| v);
        prop_assert!(est.lower <= bound + 1e-7);
        if let Some(v) = est.reevaluate(&t) {
            prop_assert!((v - est.lower).abs() < 1e-10);
        }
    }
}

#[test]
fn parallel_and_sequential_estimates_agree() {
    let mut r = rng(11);
    for _ in 0..6 {
        let t: MarkovMap = random_channel(3, &mut r).unwrap();
        let n = fixed_point_algebra(&t).unwrap();
        let seq = GapOptions { policy: ExecPolicy::Sequential, ..quick(3) };
        let par = GapOptions { policy: ExecPolicy::Parallel, ..quick(3) };
        for p in [1.5, 4.0] {
            let a = gap_lp(&t, &n, p, &seq).unwrap();
            let b = gap_lp(&t, &n, p, &par).unwrap();
            assert_eq!(a.lower.to_bits(), b.lower.to_bits());
            assert_eq!(a.iterations, b.iterations);
        }
    }
}

#[test]
fn depolarizing_family_is_exact() {
    for lambda in [0.1, 0.5, 0.9] {
        for n in 2..=4 {
            let t = build_channel(ChannelSpec::Depolarizing { n, lambda }).unwrap();
            let sub = Subalgebra::scalars(t.algebra());
            for p in [1.5, 3.0] {
                let est = gap_lp(&t, &sub, p, &quick(1)).unwrap();
                assert!((est.lower - (1.0 - lambda)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn identity_against_full_algebra_has_no_sphere() {
    let alg = two_block();
    let t = MarkovMap::identity(&alg);
    let est = gap_lp(&t, &Subalgebra::full(&alg), 3.0, &quick(0)).unwrap();
    assert_eq!(est.lower, 0.0);
    assert!(est.witness.is_none());
    let e = Element::identity(&alg);
    assert_eq!(t.apply(&e).unwrap().max_abs_diff(&e), 0.0);
}
