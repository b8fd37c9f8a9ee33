mod common;

use ath_core::data::{generate_synthetic_gitr, DomainId};
use ath_core::diagnostics::trace_transfer;
use ath_core::graph::{AffinityGraph, GraphKind};
use ath_core::optimizer::{objective, step_a, step_b};
use ath_core::*;
use common::{random_state, Shape};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_task(seed: u64, hetero: bool) -> GitrTask {
    generate_synthetic_gitr(&SynthSpec {
        class_count: 3,
        n_source: 60,
        n_target: 45,
        latent_dim: 4,
        source_dim: 10,
        target_dim: if hetero { 7 } else { 10 },
        noise_sigma: 0.3,
        seed,
        query_count: None,
    })
    .unwrap()
}

fn slack(j: f64) -> f64 {
    1e-8 * j.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_block_update_descends(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape {
            d_s: rng.random_range(3..=12),
            d_t: rng.random_range(3..=12),
            n_s: rng.random_range(15..=40),
            n_t: rng.random_range(15..=40),
            r: rng.random_range(1..=8),
            knn: Some(3),
        };
        let mut state = random_state(&mut rng, shape);
        let mut hp = HyperParams::defaults(Variant::U, shape.r);
        hp.alpha_s = rng.random_range(0.01..1.0);
        hp.alpha_t = rng.random_range(0.01..1.0);
        hp.beta_s = rng.random_range(0.0..0.5);
        hp.beta_t = rng.random_range(0.0..0.5);
        hp.lambda = rng.random_range(0.0..2.0);

        for pass in 0..3 {
            for domain in [DomainId::Source, DomainId::Target] {
                let before = objective(&state, &hp).regularized();
                let a = step_a(&state, &hp, domain).unwrap();
                state.set_projection(domain, a);
                let after = objective(&state, &hp).regularized();
                prop_assert!(after <= before + slack(before), "A-step {domain:?} pass {pass}: {before} -> {after}");
            }
            for domain in [DomainId::Source, DomainId::Target] {
                let before = objective(&state, &hp).regularized();
                let b = step_b(&state, &hp, domain);
                prop_assert!(b.is_balanced());
                state.set_codes(domain, b);
                let after = objective(&state, &hp).regularized();
                prop_assert!(after <= before + slack(before), "B-step {domain:?} pass {pass}: {before} -> {after}");
            }
            let before = objective(&state, &hp).regularized();
            state.update_bipartite(&hp, true).unwrap();
            let after = objective(&state, &hp).regularized();
            prop_assert!(after <= before + slack(before), "W-step pass {pass}: {before} -> {after}");
        }
    }
}

#[test]
fn objective_at_zero_projection_and_uniform_graph() {
    let (d_s, d_t, n_s, n_t, r) = (4, 3, 6, 4, 2);
    let gamma = 0.7;
    let model = HashModel::new(
        HashFunction::linear(DMatrix::zeros(d_s, r)).unwrap(),
        HashFunction::linear(DMatrix::zeros(d_t, r)).unwrap(),
        Variant::U,
    )
    .unwrap();
    let ones = |n| BinaryCodes::new(DMatrix::from_element(r, n, 1i8)).unwrap();
    let state = TrainState::new(
        DMatrix::from_fn(d_s, n_s, |i, j| (i + 2 * j) as f64),
        DMatrix::from_fn(d_t, n_t, |i, j| (i * j) as f64 - 1.0),
        AffinityGraph::empty(n_s, GraphKind::Semantic),
        AffinityGraph::empty(n_t, GraphKind::Semantic),
        model,
        ones(n_s),
        ones(n_t),
        BipartiteGraph::uniform(n_s, n_t, Gamma::Shared(gamma)),
    )
    .unwrap();
    let hp = HyperParams::defaults(Variant::U, r);
    let terms = objective(&state, &hp);
    let expected = hp.alpha_s * (r * n_s) as f64
        + hp.alpha_t * (r * n_t) as f64
        + gamma * n_s as f64 / n_t as f64;
    assert!(
        (terms.j() - expected).abs() < 1e-12,
        "{} vs {expected}",
        terms.j()
    );
    assert_eq!(terms.structure, 0.0);
    assert_eq!(terms.ridge, 0.0);
}

#[test]
fn semantic_variant_objective_never_increases() {
    for seed in 0..4 {
        let task = small_task(seed, seed % 2 == 1);
        let hp = HyperParams::defaults(Variant::S, 8);
        let state = train(
            task.source(),
            task.target(),
            &hp,
            Variant::S,
            &TrainOptions::default(),
        )
        .unwrap();
        for w in state.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + slack(w[0]), "{:?}", state.objective_trace);
        }
    }
}

#[test]
fn trace_has_one_entry_per_pass_plus_init() {
    let task = small_task(1, true);
    let mut hp = HyperParams::defaults(Variant::U, 6);
    hp.rel_tol = 1e-300;
    hp.max_iters = 4;
    let state = train(
        task.source(),
        task.target(),
        &hp,
        Variant::U,
        &TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(state.objective_trace.len(), 5);
    assert_eq!(state.terms_trace.len(), 5);
    assert_eq!(state.iterations(), 4);
    assert!(state.codes_s.is_balanced() && state.codes_t.is_balanced());
    for row in state.bipartite.weights().row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn training_is_deterministic() {
    let task = small_task(2, true);
    for variant in [Variant::U, Variant::M, Variant::S, Variant::K] {
        let hp = HyperParams::defaults(variant, 8);
        let opts = TrainOptions {
            seed: 5,
            ..Default::default()
        };
        let a = train(task.source(), task.target(), &hp, variant, &opts).unwrap();
        let b = train(task.source(), task.target(), &hp, variant, &opts).unwrap();
        assert_eq!(a.model, b.model, "{variant}");
        assert_eq!(a.objective_trace, b.objective_trace, "{variant}");
    }
}

#[test]
fn kernel_variant_trains_on_anchor_features() {
    let task = small_task(3, true);
    let hp = HyperParams::defaults(Variant::K, 8);
    let opts = TrainOptions {
        kernel: KernelSpec {
            source_anchors: 20,
            target_anchors: 15,
            sigma: SigmaMode::Median,
        },
        ..Default::default()
    };
    let state = train(task.source(), task.target(), &hp, Variant::K, &opts).unwrap();
    assert_eq!(state.x_s.nrows(), 20);
    assert_eq!(state.x_t.nrows(), 15);
    assert_eq!(state.model.source_fn().input_dim(), 10);
    assert_eq!(state.model.target_fn().input_dim(), 7);
    assert!(state.x_s.iter().all(|&v| v > 0.0 && v <= 1.0));
}

#[test]
fn supervised_variants_require_labels() {
    let task = small_task(4, false);
    let unlabeled_t = task.target().without_labels();
    let unlabeled_s = task.source().without_labels();
    for variant in [Variant::S, Variant::K] {
        let hp = HyperParams::defaults(variant, 4);
        let err = train(
            task.source(),
            &unlabeled_t,
            &hp,
            variant,
            &TrainOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AthError::MissingLabels(_)), "{err}");
    }
    let hp = HyperParams::defaults(Variant::M, 4);
    assert!(matches!(
        train(
            &unlabeled_s,
            task.target(),
            &hp,
            Variant::M,
            &TrainOptions::default()
        ),
        Err(AthError::MissingLabels(_))
    ));
    let hp = HyperParams::defaults(Variant::U, 4);
    assert!(train(
        &unlabeled_s,
        &unlabeled_t,
        &hp,
        Variant::U,
        &TrainOptions::default()
    )
    .is_ok());
}

#[test]
fn neighbor_counts_must_fit_the_data() {
    let task = small_task(5, false);
    let mut hp = HyperParams::defaults(Variant::U, 4);
    hp.eta_bipartite = task.target().len();
    assert!(train(
        task.source(),
        task.target(),
        &hp,
        Variant::U,
        &TrainOptions::default()
    )
    .is_err());
}

#[test]
fn transfer_trace_mirrors_objective_trace() {
    let task = small_task(6, true);
    let hp = HyperParams::defaults(Variant::M, 6);
    let (trace, state) = trace_transfer(
        task.source(),
        task.target(),
        &hp,
        Variant::M,
        &TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(trace.objective_per_iter, state.objective_trace);
    assert_eq!(trace.accuracy_per_iter.len(), state.iterations() + 1);
    assert!(trace
        .accuracy_per_iter
        .iter()
        .all(|a| (0.0..=1.0).contains(a)));

    let (again, _) = trace_transfer(
        task.source(),
        task.target(),
        &hp,
        Variant::M,
        &TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(trace, again);
}

#[test]
fn zero_iterations_leave_only_the_initial_point() {
    let task = small_task(7, false);
    let mut hp = HyperParams::defaults(Variant::M, 6);
    hp.max_iters = 0;
    let (trace, _) = trace_transfer(
        task.source(),
        task.target(),
        &hp,
        Variant::M,
        &TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(trace.accuracy_per_iter.len(), 1);
    assert_eq!(trace.objective_per_iter.len(), 1);
}

#[test]
fn diagnostics_need_target_truth() {
    let task = small_task(8, false);
    let hp = HyperParams::defaults(Variant::U, 4);
    let err = trace_transfer(
        task.source(),
        &task.target().without_labels(),
        &hp,
        Variant::U,
        &TrainOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, AthError::MissingLabels(_)));
    assert!(err.to_string().contains("target"));
}

#[test]
fn homogeneous_identical_domains_start_fully_correct() {
    let task = small_task(9, false);
    let same = task.source().clone().with_domain(DomainId::Target);
    let p = ath_core::diagnostics::initial_pseudo_label(task.source(), &same, 4).unwrap();
    assert_eq!(
        ath_core::diagnostics::accuracy(&p, same.labels().unwrap()).unwrap(),
        1.0
    );
}
