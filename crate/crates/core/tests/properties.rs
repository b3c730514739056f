use approx::abs_diff_eq;
use proptest::prelude::*;

use process_rule::channels::{
    choi_from_kraus, kraus_from_choi, povm_to_instrument, random_cp, random_cptp_tuple,
    random_instrument, random_povm, Instrument, QuantumMap, Region,
};
use process_rule::gleason::{reconstruct_process_with, FrameOracle, ReconstructOptions};
use process_rule::process::{
    conditional_prob, identity_channel_process, joint_prob, prob_table, sequential_process,
    spacelike_process, update_denominator, update_process, ProcessMatrix, Scenario,
};
use process_rule::random::{derive_seed, random_density};
use process_rule::sampler::born_collapse_table;
use process_rule::superop::{completeness_deviation, cj_inner, super_inner};
use process_rule::tensor::{partial_trace, HermBasis};
use process_rule::Error;

fn region(label: &str, d_in: usize, d_out: usize) -> Region {
    Region::new(label, d_in, d_out).unwrap()
}

/// A two- or three-region process from one of the constructors.
fn process(kind: u8, seed: u64) -> ProcessMatrix {
    let rho = random_density(2, seed);
    match kind % 4 {
        0 => identity_channel_process(&rho, 2).unwrap(),
        1 => spacelike_process(&random_density(6, seed), 2, 3).unwrap(),
        2 => sequential_process(&rho, &[region("A", 2, 3), region("B", 3, 1)]).unwrap(),
        _ => sequential_process(&rho, &[region("A", 2, 2), region("B", 2, 2), region("C", 2, 1)])
            .unwrap(),
    }
}

fn random_maps(w: &ProcessMatrix, seed: u64) -> Vec<QuantumMap> {
    w.regions()
        .iter()
        .enumerate()
        .map(|(x, r)| random_cp(r, derive_seed(seed, x as u64)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swap_sum_is_basis_independent(d in 1usize..=4, s1: u64, s2: u64) {
        let a = HermBasis::random(d, s1).swap_sum();
        let b = HermBasis::random(d, s2).swap_sum();
        prop_assert!((&a - &b).max_abs() < 1e-10);
    }

    #[test]
    fn random_bases_are_complete(d in 1usize..=4, seed: u64) {
        prop_assert!(completeness_deviation(&HermBasis::random(d, seed)) < 1e-10);
    }

    #[test]
    fn partial_traces_compose(a in 1usize..=3, b in 1usize..=3, c in 1usize..=3, seed: u64) {
        let dims = [a, b, c];
        let m = random_density(a * b * c, seed);
        let joint = partial_trace(&m, &dims, &[1]).unwrap();
        let first_c = partial_trace(&partial_trace(&m, &dims, &[0, 1]).unwrap(), &[a, b], &[1]).unwrap();
        let first_a = partial_trace(&partial_trace(&m, &dims, &[1, 2]).unwrap(), &[b, c], &[0]).unwrap();
        prop_assert!((&joint - &first_c).max_abs() < 1e-12);
        prop_assert!((&joint - &first_a).max_abs() < 1e-12);
    }

    #[test]
    fn kraus_choi_round_trip(d_in in 1usize..=3, d_out in 1usize..=3, seed: u64) {
        let r = region("A", d_in, d_out);
        let m = random_cp(&r, seed);
        let kraus = kraus_from_choi(&r, m.choi(), 1e-12).unwrap();
        let again = choi_from_kraus(&r, &kraus).unwrap();
        prop_assert!((&again - m.choi()).max_abs() < 1e-10);
    }

    #[test]
    fn kraus_and_choi_application_agree(d_in in 1usize..=3, d_out in 1usize..=3, seed: u64) {
        let m = random_cp(&region("A", d_in, d_out), seed);
        let rho = random_density(d_in, derive_seed(seed, 1));
        let via_kraus = m.apply(&rho).unwrap();
        let via_choi = m.apply_via_choi(&rho).unwrap();
        prop_assert!((&via_kraus - &via_choi).max_abs() < 1e-10);
    }

    #[test]
    fn instruments_preserve_trace(d_in in 1usize..=3, d_out in 1usize..=3, k in 1usize..=4, seed: u64) {
        let inst = random_instrument(&region("A", d_in, d_out), k, seed).unwrap();
        for t in 0..20 {
            let rho = random_density(d_in, derive_seed(seed, t));
            let total: f64 = inst.elements().iter().map(|m| m.apply(&rho).unwrap().trace().re).sum();
            prop_assert!(abs_diff_eq!(total, 1.0, epsilon = 1e-9));
        }
    }

    #[test]
    fn collapse_ignores_the_kraus_decomposition(d in 1usize..=3, seed: u64) {
        let r = region("A", d, d);
        let original = random_cp(&r, seed);
        let refactored = QuantumMap::from_choi(r.clone(), original.choi().clone()).unwrap();
        let rho = random_density(d, derive_seed(seed, 1));
        let collapse = |m: &QuantumMap| {
            let out = m.apply(&rho).unwrap();
            out.scale_real(1.0 / out.trace().re)
        };
        prop_assert!((&collapse(&original) - &collapse(&refactored)).max_abs() < 1e-10);
    }

    #[test]
    fn inner_product_formulas_agree(d_in in 1usize..=3, d_out in 1usize..=3, seed: u64) {
        let r = region("A", d_in, d_out);
        let (m, n) = (random_cp(&r, seed), random_cp(&r, derive_seed(seed, 1)));
        let cj = cj_inner(&m, &n).unwrap();
        for basis in [HermBasis::gell_mann(d_in), HermBasis::random(d_in, derive_seed(seed, 2))] {
            prop_assert!((super_inner(&m, &n, &basis).unwrap() - cj).norm() < 1e-9);
        }
        prop_assert!(cj_inner(&m, &m).unwrap().re > 0.0);
    }

    #[test]
    fn joint_probability_is_convex_multilinear(kind: u8, seed: u64, p in 0.0f64..=1.0) {
        let w = process(kind, seed);
        let maps = random_maps(&w, derive_seed(seed, 1));
        for slot in 0..maps.len() {
            let other = random_cp(&w.regions()[slot], derive_seed(seed, 100 + slot as u64));
            let mix = maps[slot].scaled(p).unwrap().sum(&other.scaled(1.0 - p).unwrap()).unwrap();
            let at = |m: &QuantumMap| {
                let mut t = maps.clone();
                t[slot] = m.clone();
                joint_prob(&w, &t).unwrap().raw
            };
            let defect = at(&mix) - p * at(&maps[slot]) - (1.0 - p) * at(&other);
            prop_assert!(defect.abs() < 1e-10);
        }
    }

    #[test]
    fn probabilities_do_not_depend_on_the_instrument(seed: u64) {
        let w = process(0, seed);
        let a = region("A", 2, 2);
        let first = random_instrument(&a, 3, derive_seed(seed, 1)).unwrap();
        let shared = first.elements()[0].clone();
        let second = Instrument::new(
            a.clone(),
            vec![("shared".into(), shared), ("other".into(), random_cp(&a, derive_seed(seed, 2)))],
        )
        .unwrap();
        let b = random_instrument(&region("B", 2, 2), 2, derive_seed(seed, 3)).unwrap();
        let t1 = prob_table(&Scenario::new(vec![first.clone(), b.clone()], Some(w.clone())).unwrap()).unwrap();
        let t2 = prob_table(&Scenario::new(vec![second, b.clone()], Some(w)).unwrap()).unwrap();
        for l in b.labels() {
            let p1 = t1.get(&[first.labels()[0].as_str(), l]).unwrap();
            let p2 = t2.get(&["shared", l]).unwrap();
            prop_assert!(abs_diff_eq!(p1, p2, epsilon = 1e-12));
        }
    }

    #[test]
    fn tables_are_normalized(kind: u8, seed: u64, k in 1usize..=3) {
        let w = process(kind, seed);
        let instruments: Vec<Instrument> = w
            .regions()
            .iter()
            .enumerate()
            .map(|(x, r)| random_instrument(r, k + x % 2, derive_seed(seed, x as u64)).unwrap())
            .collect();
        let table = prob_table(&Scenario::new(instruments, Some(w)).unwrap()).unwrap();
        prop_assert!(abs_diff_eq!(table.total(), 1.0, epsilon = 1e-9));
    }

    #[test]
    fn conditionals_and_updates_agree(kind: u8, seed: u64) {
        let w = process(kind, seed);
        let inst = random_instrument(&w.regions()[0], 2, derive_seed(seed, 1)).unwrap();
        let m = &inst.elements()[0];
        let rest: Vec<QuantumMap> = random_maps(&w, derive_seed(seed, 2)).split_off(1);
        // the ratio and update routes are compared inside conditional_prob
        let p = conditional_prob(&w, 0, m, &inst, &rest).unwrap();
        let via_update = joint_prob(&update_process(&w, 0, m).unwrap(), &rest).unwrap().value;
        prop_assert!(abs_diff_eq!(p, via_update, epsilon = 1e-10));
    }

    #[test]
    fn update_denominator_ignores_the_completion(kind: u8, seed: u64) {
        let w = process(kind, seed);
        let m = random_cp(&w.regions()[0], seed);
        let rest = w.regions()[1..].to_vec();
        let values: Vec<f64> = (0..10)
            .map(|t| update_denominator(&w, 0, &m, &random_cptp_tuple(&rest, derive_seed(seed, t))).unwrap())
            .collect();
        for v in &values {
            prop_assert!(abs_diff_eq!(*v, values[0], epsilon = 1e-10));
        }
    }

    #[test]
    fn sequential_marginals_are_single_shot_born(d in 2usize..=3, seed: u64) {
        let rho = random_density(d, seed);
        let first = random_instrument(&region("A", d, d), 3, derive_seed(seed, 1)).unwrap();
        let second = random_instrument(&region("B", d, 2), 2, derive_seed(seed, 2)).unwrap();
        let table = born_collapse_table(&rho, &[first.clone(), second.clone()]).unwrap();
        for (label, m) in first.iter() {
            let marginal: f64 = second.labels().iter().map(|l| table.get(&[label, l]).unwrap()).sum();
            let born = m.apply(&rho).unwrap().trace().re;
            prop_assert!(abs_diff_eq!(marginal, born, epsilon = 1e-10));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reconstruction_is_basis_independent(kind: u8, seed: u64) {
        let w = process(kind % 3, seed);
        let oracle = FrameOracle::from_process(w.clone());
        let canonical = reconstruct_process_with(&oracle, &ReconstructOptions::default()).unwrap();
        let rotated = reconstruct_process_with(
            &oracle,
            &ReconstructOptions { rotated_basis: Some(seed), ..ReconstructOptions::default() },
        )
        .unwrap();
        prop_assert!(canonical.matrix().distance(w.matrix()) < 1e-8);
        prop_assert!(canonical.matrix().distance(rotated.matrix()) < 1e-8);
    }

    #[test]
    fn non_additive_oracles_are_refused(seed: u64) {
        let oracle = FrameOracle::squared(process(0, seed));
        let err = reconstruct_process_with(&oracle, &ReconstructOptions::default()).unwrap_err();
        prop_assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn povm_tables_match_born(d in 1usize..=4, k in 1usize..=5, seed: u64) {
        let rho = random_density(d, seed);
        let povm = random_povm(d, k, derive_seed(seed, 1)).unwrap();
        let w = process_rule::process::state_process(&rho).unwrap();
        let table = prob_table(&Scenario::new(vec![povm_to_instrument(&povm, "A").unwrap()], Some(w)).unwrap()).unwrap();
        for (p, e) in table.probabilities().iter().zip(povm.effects()) {
            prop_assert!(abs_diff_eq!(*p, e.trace_product(&rho).re, epsilon = 1e-10));
        }
    }
}
