use ghostnet::canonical::{canonicalize, frobenius_similarity, ReorderMethod};
use ghostnet::equilibrium::{iterate, NoiseDist, QuadraticLandscape};
use ghostnet::netcore::{build_network, network_from_json, network_to_json, Activation, Architecture, NetworkParams};
use ghostnet::orthopoly::PolyFamily;
use ghostnet::prepruning::{generate_mask, mask_network, BinaryMask};
use ghostnet::symmetry::{apply_permutation, count_equivalent_optima, functional_equivalence, LayerPermutationSet};
use ghostnet::Matrix;
use num_bigint::BigUint;
use proptest::prelude::*;

fn architecture() -> impl Strategy<Value = Architecture> {
    (1usize..=5, prop::collection::vec(1usize..=9, 1..=3), 1usize..=3).prop_map(|(i, hidden, o)| {
        let mut widths = vec![i];
        widths.extend(hidden);
        widths.push(o);
        Architecture::new(widths).unwrap()
    })
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Tanh), Just(Activation::Relu), Just(Activation::Identity)]
}

fn network() -> impl Strategy<Value = NetworkParams> {
    (architecture(), activation(), any::<u64>())
        .prop_map(|(arch, act, seed)| build_network(&arch, act, 1.0, seed).unwrap())
}

/// A network together with a permutation of its hidden layers.
fn network_and_perm() -> impl Strategy<Value = (NetworkParams, LayerPermutationSet)> {
    network().prop_flat_map(|net| {
        let perms: Vec<_> = net
            .architecture()
            .hidden_widths()
            .iter()
            .map(|&w| Just((0..w).collect::<Vec<_>>()).prop_shuffle())
            .collect();
        (Just(net), perms).prop_map(|(net, perms)| (net, LayerPermutationSet::new(perms).unwrap()))
    })
}

fn matrix_pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
        let entries = prop::collection::vec(-10.0f64..10.0, r * c);
        (entries.clone(), entries)
            .prop_map(move |(a, b)| (Matrix::from_vec(r, c, a).unwrap(), Matrix::from_vec(r, c, b).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_then_inverse_is_identity((net, pi) in network_and_perm()) {
        let there = apply_permutation(&net, &pi).unwrap();
        prop_assert_eq!(apply_permutation(&there, &pi.inverse()).unwrap(), net);
    }

    #[test]
    fn permutation_preserves_function((net, pi) in network_and_perm(), seed in any::<u64>()) {
        let moved = apply_permutation(&net, &pi).unwrap();
        prop_assert!(functional_equivalence(&net, &moved, 16, 1e-12, seed).unwrap().equivalent);
    }

    #[test]
    fn composition_matches_sequential_application((net, a) in network_and_perm(), seed in any::<u64>()) {
        let b = ghostnet::symmetry::random_permutation(net.architecture(), seed);
        let sequential = apply_permutation(&apply_permutation(&net, &a).unwrap(), &b).unwrap();
        prop_assert_eq!(apply_permutation(&net, &a.then(&b).unwrap()).unwrap(), sequential);
    }

    #[test]
    fn canonicalization_is_idempotent_and_reports_its_permutation(net in network()) {
        for method in [ReorderMethod::Lexicographic, ReorderMethod::Maximin] {
            let (canon, pi) = canonicalize(&net, method);
            prop_assert_eq!(&apply_permutation(&net, &pi).unwrap(), &canon);
            let (again, _) = canonicalize(&canon, method);
            prop_assert_eq!(&again, &canon);
        }
    }

    #[test]
    fn lexicographic_form_is_an_orbit_invariant((net, pi) in network_and_perm()) {
        let moved = apply_permutation(&net, &pi).unwrap();
        prop_assert_eq!(
            canonicalize(&moved, ReorderMethod::Lexicographic).0,
            canonicalize(&net, ReorderMethod::Lexicographic).0
        );
    }

    #[test]
    fn phi_is_symmetric_and_zero_on_the_diagonal((a, b) in matrix_pair()) {
        let ab = frobenius_similarity(&a, &b).unwrap();
        prop_assert_eq!(ab.to_bits(), frobenius_similarity(&b, &a).unwrap().to_bits());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(frobenius_similarity(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn network_json_round_trips_bitwise(net in network()) {
        prop_assert_eq!(network_from_json(&network_to_json(&net).unwrap()).unwrap(), net);
    }

    #[test]
    fn permutation_json_round_trips((_, pi) in network_and_perm()) {
        prop_assert_eq!(LayerPermutationSet::from_json(&pi.to_json().unwrap()).unwrap(), pi);
    }

    #[test]
    fn generated_masks_have_distinct_columns(rows in 3usize..=10, cols in 1usize..=8, rho in 0.2f64..0.8, seed in any::<u64>()) {
        let mask = generate_mask(rows, cols, rho, seed).unwrap();
        prop_assert_eq!(mask.shape(), (rows, cols));
        prop_assert!(mask.has_distinct_columns());
        prop_assert_eq!(BinaryMask::from_json(&mask.to_json().unwrap()).unwrap(), mask);
    }

    #[test]
    fn masking_zeroes_exactly_the_masked_entries(seed in any::<u64>(), hidden in 3usize..=8) {
        let arch = Architecture::new(vec![4, hidden, 2]).unwrap();
        let net = build_network(&arch, Activation::Tanh, 1.0, seed).unwrap();
        let mask = generate_mask(4, hidden, 0.5, seed ^ 1).unwrap();
        let masked = mask_network(&net, &[Some(mask.clone()), None]).unwrap();
        for i in 0..4 {
            for j in 0..hidden {
                let expected = if mask.get(i, j) == 1 { net.layer(1)[(i, j)] } else { 0.0 };
                prop_assert_eq!(masked.layer(1)[(i, j)], expected);
            }
        }
        prop_assert_eq!(masked.layer(2), net.layer(2));
    }

    #[test]
    fn count_is_the_product_of_factorials(arch in architecture()) {
        let expected: BigUint = arch
            .hidden_widths()
            .iter()
            .map(|&n| (1..=n as u64).map(BigUint::from).product::<BigUint>())
            .product();
        prop_assert_eq!(count_equivalent_optima(&arch), expected);
    }

    #[test]
    fn batch_evaluation_matches_single_evaluation(x in -1.0f64..1.0, family_index in 0usize..3) {
        let family = [PolyFamily::Laguerre, PolyFamily::Legendre, PolyFamily::Chebyshev][family_index];
        let x = if family == PolyFamily::Laguerre { 5.0 * (x + 1.0) } else { x };
        let mut all = vec![0.0; 10];
        family.eval_all(x, &mut all);
        for (i, v) in all.iter().enumerate() {
            prop_assert_eq!(v.to_bits(), family.eval(i, x).to_bits());
        }
    }

    #[test]
    fn noiseless_iterates_decay_geometrically(el in 0.01f64..1.9, x0 in -5.0f64..5.0) {
        let eta = 0.1;
        let land = QuadraticLandscape::centered(vec![el / eta], vec![0.0], NoiseDist::Gaussian).unwrap();
        let trace = iterate(&land, &[x0], eta, 40, 0).unwrap();
        for t in 0..trace.len() {
            let expected = x0 * (1.0 - el).powi(t as i32);
            prop_assert!((trace.deviation(t)[0] - expected).abs() <= 1e-12 * (1.0 + x0.abs()));
        }
    }
}

#[test]
fn legendre_and_chebyshev_are_one_at_one() {
    for i in 0..12 {
        assert!((PolyFamily::Legendre.eval(i, 1.0) - 1.0).abs() < 1e-12);
        assert!((PolyFamily::Chebyshev.eval(i, 1.0) - 1.0).abs() < 1e-12);
    }
}
