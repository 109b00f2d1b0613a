use commoninfo::csbs::{a1_of_a0, dsbs_joint};
use commoninfo::dist::binary_entropy;
use commoninfo::measures::{gk_common_randomness, pairwise_information};
use commoninfo::seed::stream_rng;
use commoninfo::wyner::{
    gamma, gamma_with_init, wyner_ci, wyner_upper_via_test_channel, wyner_upper_with_init,
    AuxModel, Certificate, OptConfig,
};
use commoninfo::JointPmf;
use proptest::prelude::*;
use rand::Rng;

fn quick(w_size: usize) -> OptConfig {
    OptConfig {
        w_size: Some(w_size),
        restarts: 4,
        ..OptConfig::default()
    }
}

fn dsbs_closed_form(a0: f64) -> f64 {
    let a1 = a1_of_a0(a0).unwrap();
    1.0 + binary_entropy(a0).unwrap() - 2.0 * binary_entropy(a1).unwrap()
}

fn copy_pair() -> JointPmf {
    JointPmf::from_sizes(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap()
}

#[test]
fn independent_pair_needs_no_common_part() {
    let p = JointPmf::product(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
    for w in [1, 2, 4] {
        let r = wyner_upper_via_test_channel(&p, &quick(w)).unwrap();
        assert!(r.value.abs() < 1e-6, "w={w}: {}", r.value);
    }
}

#[test]
fn copied_bit_costs_one_bit() {
    let r = wyner_upper_via_test_channel(&copy_pair(), &quick(2)).unwrap();
    assert!((r.value - 1.0).abs() < 1e-4, "{}", r.value);
    assert_eq!(r.certificate, Certificate::Upper);
}

#[test]
fn dsbs_with_binary_aux_hits_closed_form() {
    let p = dsbs_joint(0.25).unwrap();
    let r = wyner_upper_via_test_channel(&p, &quick(2)).unwrap();
    assert!(
        (r.value - dsbs_closed_form(0.25)).abs() < 1e-3,
        "{}",
        r.value
    );
}

#[test]
fn gamma_of_independent_pair_is_sum_of_entropies() {
    let p = JointPmf::product(&[vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
    let r = gamma(&p, 0.0, 0.0, &quick(2)).unwrap();
    let want = p.entropy(&[0]).unwrap() + p.entropy(&[1]).unwrap();
    assert!((r.value - want).abs() < 1e-3, "{} vs {want}", r.value);
}

#[test]
fn gamma_of_dsbs_is_twice_crossover_entropy() {
    let p = dsbs_joint(0.25).unwrap();
    let r = gamma(&p, 0.0, 0.0, &quick(2)).unwrap();
    let want = 2.0 * binary_entropy(a1_of_a0(0.25).unwrap()).unwrap();
    assert!((r.value - want).abs() < 2e-3, "{} vs {want}", r.value);
}

#[test]
fn feeding_back_a_witness_does_not_hurt() {
    let p = dsbs_joint(0.25).unwrap();
    let cfg = quick(2);
    let first = wyner_upper_via_test_channel(&p, &cfg).unwrap();
    let again = wyner_upper_with_init(&p, &cfg, &first.model).unwrap();
    assert!(
        again.value <= first.value + 1e-6,
        "{} > {}",
        again.value,
        first.value
    );

    let g = gamma(&p, 0.0, 0.0, &cfg).unwrap();
    let g2 = gamma_with_init(&p, 0.0, 0.0, &cfg, &g.model).unwrap();
    assert!(g2.value >= g.value - 1e-6, "{} < {}", g2.value, g.value);
}

#[test]
fn gamma_grows_with_slack_and_is_concave_on_a_line() {
    let p = dsbs_joint(0.25).unwrap();
    let cfg = quick(2);
    let at = |d: f64| gamma(&p, d, d, &cfg).unwrap().value;
    let (lo, mid, hi) = (at(0.0), at(0.05), at(0.1));
    assert!(mid >= lo - 1e-3 && hi >= mid - 1e-3, "{lo} {mid} {hi}");
    assert!(mid >= 0.5 * (lo + hi) - 2e-3, "{lo} {mid} {hi}");
    let only_d2 = gamma(&p, 0.0, 0.1, &cfg).unwrap().value;
    assert!(only_d2 >= lo - 1e-3);
}

#[test]
fn estimate_is_sandwiched_by_classical_measures() {
    let p = dsbs_joint(0.1).unwrap();
    let est = wyner_ci(&p, &quick(2)).unwrap();
    let i_max = pairwise_information(&p)
        .iter()
        .map(|q| q.mutual_information)
        .fold(0.0, f64::max);
    assert!(i_max <= est.value + 5e-3);
    assert!(gk_common_randomness(&p) <= est.value + 5e-3);
    assert!(est.disagreement <= 5e-3);
}

#[test]
fn single_symbol_coordinates_are_ignored() {
    let p = JointPmf::from_sizes(vec![2, 1, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let r = wyner_upper_via_test_channel(&p, &quick(2)).unwrap();
    assert!((r.value - 1.0).abs() < 1e-4);
}

#[test]
fn same_seed_same_answer() {
    let p = dsbs_joint(0.4).unwrap();
    let a = wyner_ci(&p, &quick(2)).unwrap();
    let b = wyner_ci(&p, &quick(2)).unwrap();
    assert_eq!(a, b);
}

fn random_aux(seed: u64, w: usize) -> AuxModel {
    let mut rng = stream_rng(seed, 0);
    let mut row = |k: usize| {
        let v: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let prior = row(w);
    let channels = (0..2).map(|_| (0..w).map(|_| row(2)).collect()).collect();
    AuxModel::new(prior, channels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn generated_source_costs_at_most_its_prior(seed in 0u64..1000) {
        let aux = random_aux(seed, 2);
        let p = aux.induced();
        let r = wyner_upper_via_test_channel(&p, &quick(4)).unwrap();
        let h = commoninfo::dist::entropy_of(aux.w_prior());
        prop_assert!(r.value <= h + 5e-3, "{} > {}", r.value, h);
    }
}
