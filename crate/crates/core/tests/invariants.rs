use proptest::prelude::*;

use treecode_core::bounds::{rate_bound_deficient, rate_bound_plain};
use treecode_core::code::{Alphabet, Caps, Codebook, FnCode, TableCode, TreeCode};
use treecode_core::entropy::{entropy, mutual_information, verify_data_processing, FiniteJoint};
use treecode_core::partitions::{eks_partition, ghk_partition};
use treecode_core::rational::q;
use treecode_core::rational::Q;
use treecode_core::verify::{
    check_eks_condition, check_eks_condition_in, check_ghk_condition, check_ghk_condition_in,
    check_immediacy_function, check_neighborhood_decoding, check_tree_distance, tree_distance,
    GhkParams, Imm, ImmScope, Scope,
};

fn table_code(n: usize, sigma: u64) -> impl Strategy<Value = TableCode> {
    let edges = TableCode::edge_count(n, 2).unwrap();
    prop::collection::vec(0..sigma, edges)
        .prop_map(move |t| TableCode::new(n, 2, Alphabet::new(sigma).unwrap(), t).unwrap())
}

/// A code where position `k` sees the prefix through a random
/// per-position map; collisions in the map make conditions fail.
fn prefix_map_code(n: usize) -> impl Strategy<Value = FnCode> {
    prop::collection::vec(prop::collection::vec(0u64..6, 1 << n), n).prop_map(move |maps| {
        FnCode::new(
            "prefix-map",
            n,
            Alphabet::binary(),
            Alphabet::new(6).unwrap(),
            move |x| {
                let mut rank = 0usize;
                (0..x.len())
                    .map(|k| {
                        rank = rank * 2 + x[k] as usize;
                        maps[k][rank << (x.len() - 1 - k)]
                    })
                    .collect()
            },
        )
    })
}

fn joint(names: &[&str], outcomes: Vec<Vec<u64>>) -> FiniteJoint {
    FiniteJoint::uniform(names.iter().map(|s| s.to_string()).collect(), outcomes).unwrap()
}

fn codeword_joint(code: &dyn TreeCode) -> FiniteJoint {
    let book = Codebook::materialize(code, &Caps::default()).unwrap();
    let names: Vec<String> = (1..=code.n()).map(|k| format!("y{k}")).collect();
    let words = (0..book.len()).map(|i| book.word(i).to_vec()).collect();
    FiniteJoint::uniform(names, words).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn deficient_bound_without_deficiency_is_plain(
        an in 1i128..20, ad in 1i128..40, ell in 0u64..50, n in 1u128..1000, lg_in in 1i128..16
    ) {
        let alpha = Q::new(an, ad);
        let lg_in = Q::from_integer(lg_in);
        prop_assert_eq!(rate_bound_deficient(&alpha, ell, 0, n, &lg_in), rate_bound_plain(&alpha, ell, &lg_in));
    }

    #[test]
    fn deficiency_lowers_the_bound(ell in 1u64..20, n in 1u128..64, d in 0u128..64) {
        let a = q(1, 4);
        let one = q(1, 1);
        prop_assert!(rate_bound_deficient(&a, ell, d, n, &one) <= rate_bound_plain(&a, ell, &one));
        prop_assert!(rate_bound_deficient(&a, ell, d + 1, n, &one) < rate_bound_deficient(&a, ell, d, n, &one));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_threshold_is_monotone(code in table_code(4, 4)) {
        let caps = Caps::default();
        let exact = tree_distance(&code, &caps).unwrap();
        for d in [q(1, 4), q(1, 3), q(1, 2), q(2, 3), q(1, 1)] {
            let v = check_tree_distance(&code, &d, &caps).unwrap();
            prop_assert_eq!(v.pass, d <= exact);
            if let Some(w) = &v.witness {
                prop_assert!(w.recheck(&code));
            }
        }
    }

    #[test]
    fn linear_first_only_is_tree_distance(code in table_code(4, 3), num in 1i128..4) {
        let caps = Caps::default();
        let d = Q::new(num, 4);
        let a = check_tree_distance(&code, &d, &caps).unwrap().pass;
        let b = check_immediacy_function(&code, &Imm::Linear, &d, ImmScope::FirstOnly, &caps).unwrap().pass;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tabulated_codes_are_online(code in table_code(5, 3)) {
        let book = Codebook::materialize(&code, &Caps::default()).unwrap();
        prop_assert!(book.online_violation().is_none());
    }

    #[test]
    fn restriction_entropy_is_subadditive(code in table_code(5, 3), mask in 1u32..31, other in 1u32..31) {
        let j = codeword_joint(&code);
        let b1: Vec<String> = (0..5).filter(|k| mask >> k & 1 == 1).map(|k| format!("y{}", k + 1)).collect();
        let b2: Vec<String> = (0..5)
            .filter(|k| other >> k & 1 == 1 && mask >> k & 1 == 0)
            .map(|k| format!("y{}", k + 1))
            .collect();
        prop_assume!(!b2.is_empty());
        let r1: Vec<&str> = b1.iter().map(String::as_str).collect();
        let r2: Vec<&str> = b2.iter().map(String::as_str).collect();
        let both: Vec<&str> = r1.iter().chain(&r2).copied().collect();
        let lhs = entropy(&j, &both).unwrap();
        prop_assert!(lhs <= entropy(&j, &r1).unwrap() + entropy(&j, &r2).unwrap() + 1e-9);
    }

    #[test]
    fn information_identities(cells in prop::collection::vec((0u64..3, 0u64..3, 0u64..2), 1..24)) {
        let j = joint(&["x", "y", "z"], cells.iter().map(|&(a, b, c)| vec![a, b, c]).collect());
        let h = |v: &[&str]| entropy(&j, v).unwrap();
        let i = |a: &[&str], b: &[&str], c: &[&str]| mutual_information(&j, a, b, c).unwrap();
        prop_assert!(h(&["x"]) >= -1e-12);
        prop_assert!(i(&["x"], &["y"], &[]) >= -1e-12);
        prop_assert!(i(&["x"], &["y"], &["z"]) >= -1e-12);
        // conditioning reduces entropy
        prop_assert!(h(&["x", "z"]) - h(&["z"]) <= h(&["x"]) + 1e-9);
        // chain rules
        prop_assert!((h(&["x", "y", "z"]) - (h(&["x"]) + (h(&["x", "y"]) - h(&["x"])) + (h(&["x", "y", "z"]) - h(&["x", "y"])))).abs() < 1e-9);
        let lhs = i(&["x", "y"], &["z"], &[]);
        let rhs = i(&["x"], &["z"], &[]) + i(&["y"], &["z"], &["x"]);
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn data_processing_on_function_pairs(
        bs in prop::collection::vec((0u64..4, 0u64..4), 1..20),
        f in prop::collection::vec(0u64..2, 4),
    ) {
        // A = f(B); C carries A plus independent noise, so A = g(C) too.
        let rows = bs.iter().map(|&(b, noise)| {
            let a = f[b as usize];
            vec![a, b, a * 4 + noise]
        }).collect();
        let j = joint(&["a", "b", "c"], rows);
        let r = verify_data_processing(&j, &["a"], &["b"], &["c"]).unwrap();
        prop_assert!(r.pass);
    }

    #[test]
    fn eks_condition_implies_decoding(code in prefix_map_code(4), num in 1i128..3) {
        let caps = Caps::default();
        let delta = Q::new(num, 4);
        let p = eks_partition(2).unwrap();
        let cond = check_eks_condition(&code, &delta, 2, &caps).unwrap();
        let nb = check_neighborhood_decoding(&code, &p, None, &caps).unwrap();
        if cond.pass {
            prop_assert!(nb.verdict.pass);
        }
        for b in nb.failing_blocks() {
            prop_assert!(!check_eks_condition_in(&code, &delta, 2, Scope::Block(b), &caps).unwrap().pass);
        }
        if let Some(w) = &cond.witness {
            prop_assert!(w.recheck(&code));
        }
    }

    #[test]
    fn ghk_condition_implies_decoding(code in prefix_map_code(4)) {
        let caps = Caps::default();
        let params = GhkParams::new(4, 1, q(1, 2)).unwrap();
        let p = ghk_partition(4, 1, &q(1, 2)).unwrap();
        let cond = check_ghk_condition(&code, &params, &caps).unwrap();
        let nb = check_neighborhood_decoding(&code, &p, None, &caps).unwrap();
        if cond.pass {
            prop_assert!(nb.verdict.pass);
        }
        for b in nb.failing_blocks() {
            prop_assert!(!check_ghk_condition_in(&code, &params, Scope::Block(b), &caps).unwrap().pass);
        }
        if let Some(w) = &nb.verdict.witness {
            prop_assert!(w.recheck(&code));
        }
    }
}
