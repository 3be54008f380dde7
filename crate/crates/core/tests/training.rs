use relu_nfa::equivalence::{check_equivalence, extract_nfa, CheckMode, TRAINED_THRESHOLD};
use relu_nfa::training::{evaluate, sample_strings, Slot};
use relu_nfa::{
    backward, bce_loss, compile, forward_smooth, generate_dataset, generate_random_nfa, train,
    Execution, MaskedModel, RandomNfaConfig, TrainConfig,
};

fn setup(config: RandomNfaConfig, seed: u64) -> (relu_nfa::Nfa, relu_nfa::ReluAcceptor) {
    let nfa = generate_random_nfa(&config.with_seed(seed));
    let acc = compile(&nfa);
    (nfa, acc)
}

fn loss_of(model: &MaskedModel, input: &str, label: bool) -> f64 {
    bce_loss(forward_smooth(model, input).unwrap().0, label)
}

/// Analytic gradients against central differences (h = 1e-4) at masked-in
/// coordinates, on inputs with no pre-activation near zero and no
/// saturated output.
#[test]
fn gradients_match_finite_differences() {
    let h = 1e-4;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (nfa, acc) = setup(RandomNfaConfig::six_state(0), seed);
        let mut model = MaskedModel::from_acceptor(&acc);
        model.jitter(0.1, seed);
        // scale down so outputs stay off the sigmoid plateau
        for slot in model.slots().collect::<Vec<_>>() {
            for t in 0..6 {
                for s in 0..6 {
                    let w = model.weight(slot, t, s);
                    model.set_weight(slot, t, s, w * 0.3);
                }
            }
        }
        model.set_bias(0.2);
        let strings = sample_strings(nfa.alphabet(), 40, 0, 4, seed).unwrap();
        for (k, input) in strings.iter().enumerate() {
            let label = k % 2 == 0;
            let (p, cache) = forward_smooth(&model, input).unwrap();
            if cache.min_abs_preactivation() < 1e-6
                || cache.clipped()
                || !(1e-4..1.0 - 1e-4).contains(&p)
            {
                continue;
            }
            let grads = backward(&model, &cache, label);
            let coords: Vec<(Slot, usize, usize)> = model
                .slots()
                .flat_map(|slot| (0..36).map(move |i| (slot, i / 6, i % 6)))
                .filter(|&(slot, t, s)| model.mask(slot)[t * 6 + s])
                .collect();
            for &(slot, t, s) in coords.iter().step_by(3).take(20) {
                let w = model.weight(slot, t, s);
                let mut plus = model.clone();
                plus.set_weight(slot, t, s, w + h);
                let mut minus = model.clone();
                minus.set_weight(slot, t, s, w - h);
                let numeric =
                    (loss_of(&plus, input, label) - loss_of(&minus, input, label)) / (2.0 * h);
                let analytic = grads.get(&model, slot, t, s);
                let scale = analytic.abs().max(numeric.abs());
                if scale < 1e-8 {
                    assert!((analytic - numeric).abs() < 1e-8);
                    continue;
                }
                let rel = (analytic - numeric).abs() / scale;
                worst = worst.max(rel);
                assert!(
                    rel < 1e-3,
                    "{input:?} {slot:?}[{t}][{s}]: analytic {analytic} numeric {numeric}"
                );
                checked += 1;
            }
            // bias
            let mut plus = model.clone();
            plus.set_bias(model.bias() + h);
            let mut minus = model.clone();
            minus.set_bias(model.bias() - h);
            let numeric =
                (loss_of(&plus, input, label) - loss_of(&minus, input, label)) / (2.0 * h);
            assert!((grads.bias - numeric).abs() / grads.bias.abs().max(numeric.abs()) < 1e-3);
        }
    }
    println!("finite-difference coordinates checked: {checked}, worst relative error {worst:.2e}");
    assert!(checked >= 100, "only {checked} coordinates checked");
}

#[test]
fn masked_out_gradients_are_zero() {
    let (nfa, acc) = setup(RandomNfaConfig::six_state(0), 1);
    let mut model = MaskedModel::from_acceptor(&acc);
    model.jitter(0.1, 2);
    for input in sample_strings(nfa.alphabet(), 50, 0, 8, 4).unwrap() {
        let (_, cache) = forward_smooth(&model, &input).unwrap();
        let g = backward(&model, &cache, true);
        for slot in model.slots() {
            for t in 0..6 {
                for s in 0..6 {
                    if !model.mask(slot)[t * 6 + s] {
                        assert_eq!(g.get(&model, slot, t, s), 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn smooth_forward_agrees_with_network_under_exact_weights() {
    for seed in 0..5 {
        let (nfa, acc) = setup(RandomNfaConfig::six_state(0), seed);
        let model = MaskedModel::from_acceptor(&acc);
        for s in sample_strings(nfa.alphabet(), 200, 0, 10, seed).unwrap() {
            let (p, _) = forward_smooth(&model, &s).unwrap();
            let accepted = acc.accepts(&s).unwrap();
            assert_eq!(p > 0.5, accepted, "seed {seed} {s:?} p={p}");
            if !accepted {
                assert!((p - 0.377_540_668_798_145_4).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mean_loss_under_exact_weights_is_below_ln2() {
    let (nfa, acc) = setup(RandomNfaConfig::six_state(0), 1);
    let data = generate_dataset(&nfa, 200, 1, 10, 5).unwrap();
    let (loss, accuracy) = evaluate(&MaskedModel::from_acceptor(&acc), &data).unwrap();
    println!(
        "positives {:.3} mean loss {loss:.4}",
        data.positive_fraction()
    );
    assert!(loss.is_finite());
    assert!(loss < std::f64::consts::LN_2);
    assert_eq!(accuracy, 1.0);
}

fn standard_protocol(
    config: RandomNfaConfig,
    seed: u64,
    train_cfg: TrainConfig,
) -> (relu_nfa::Nfa, MaskedModel, relu_nfa::TrainReport) {
    let (nfa, acc) = setup(config, seed);
    let max_len = if nfa.alphabet().len() == 2 { 10 } else { 15 };
    let train_data = generate_dataset(&nfa, 200, 1, max_len, 100 + seed).unwrap();
    let test_data = generate_dataset(&nfa, 100, 1, max_len, 200 + seed).unwrap();
    let mut model = MaskedModel::from_acceptor(&acc);
    let report = train(&mut model, &train_data, &test_data, &acc, &train_cfg).unwrap();
    (nfa, model, report)
}

#[test]
fn masked_training_keeps_structure_every_epoch() {
    for config in [RandomNfaConfig::six_state(0), RandomNfaConfig::ten_state(0)] {
        for seed in 0..5 {
            for cfg in [
                TrainConfig {
                    seed,
                    ..TrainConfig::default()
                },
                TrainConfig {
                    seed,
                    init_jitter: 0.1,
                    batch_size: Some(16),
                    epochs: 8,
                    ..TrainConfig::default()
                },
            ] {
                let (_, model, report) = standard_protocol(config.clone(), seed, cfg);
                assert_eq!(report.epoch_mask_violations, vec![0; report.config.epochs]);
                assert_eq!(report.violations, 0);
                assert_eq!(model.mask_violations(), 0);
            }
        }
    }
}

#[test]
fn six_state_protocol_reaches_high_test_accuracy() {
    for seed in 0..5 {
        let (_, _, report) = standard_protocol(
            RandomNfaConfig::six_state(0),
            seed,
            TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        );
        assert_eq!(report.epoch_losses.len(), 5);
        assert!(
            report.test_accuracy >= 0.95,
            "seed {seed}: {}",
            report.test_accuracy
        );
    }
}

/// Starting from exact weights, thresholded predictions still agree with
/// the automaton on every string up to length 6.
#[test]
fn training_preserves_semantics() {
    let mut preserved = 0;
    for seed in 0..5 {
        let (nfa, model, _) = standard_protocol(
            RandomNfaConfig::six_state(0),
            seed,
            TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        );
        let report = check_equivalence(
            &nfa,
            &model,
            &CheckMode::Exhaustive { max_len: 6 },
            Execution::Sequential,
        )
        .unwrap();
        if report.is_equivalent() {
            preserved += 1;
        } else {
            println!(
                "seed {seed}: {} mismatches, e.g. {:?}",
                report.mismatches.len(),
                report.mismatches[0]
            );
        }
    }
    assert!(
        preserved >= 4,
        "only {preserved} of 5 seeds preserved the language"
    );
}

#[test]
fn jittered_training_loss_decreases() {
    let floor = -(1.0f64 - 1e-7).ln() * (1.0 + 1e-9);
    let mut monotone = 0;
    let mut strict = 0;
    for seed in 0..5 {
        let cfg = TrainConfig {
            seed,
            init_jitter: 0.1,
            epochs: 5,
            ..TrainConfig::default()
        };
        let (_, _, report) = standard_protocol(RandomNfaConfig::six_state(0), seed, cfg);
        println!("seed {seed}: {:?}", report.epoch_losses);
        let non_increasing = report.epoch_losses.windows(2).all(|w| w[1] <= w[0]);
        let first = report.epoch_losses[0];
        let last = *report.epoch_losses.last().unwrap();
        if non_increasing && last < first {
            strict += 1;
        }
        if non_increasing && (last < first || first <= floor) {
            monotone += 1;
        }
    }
    assert!(
        monotone >= 4,
        "loss decreased monotonically on only {monotone} of 5 seeds"
    );
    assert!(strict >= 1);
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig {
        seed: 3,
        init_jitter: 0.1,
        batch_size: Some(32),
        ..TrainConfig::default()
    };
    let (_, m1, r1) = standard_protocol(RandomNfaConfig::ten_state(0), 3, cfg.clone());
    let (_, m2, r2) = standard_protocol(RandomNfaConfig::ten_state(0), 3, cfg);
    assert_eq!(
        serde_json::to_string(&r1).unwrap(),
        serde_json::to_string(&r2).unwrap()
    );
    assert_eq!(m1.to_json(), m2.to_json());
}

#[test]
fn unmasked_training_leaks_outside_structure() {
    let leaked: usize = (0..5)
        .map(|seed| {
            let cfg = TrainConfig {
                seed,
                masked: false,
                ..TrainConfig::default()
            };
            standard_protocol(RandomNfaConfig::six_state(0), seed, cfg)
                .2
                .violations
        })
        .sum();
    assert!(leaked > 0);
}

#[test]
fn extracted_automaton_stays_within_source_edges() {
    for seed in 0..5 {
        let cfg = TrainConfig {
            seed,
            init_jitter: 0.1,
            ..TrainConfig::default()
        };
        let (nfa, model, _) = standard_protocol(RandomNfaConfig::six_state(0), seed, cfg);
        let extracted = extract_nfa(&model, TRAINED_THRESHOLD);
        for q in 0..nfa.states() {
            for x in 0..nfa.alphabet().len() {
                for t in extracted.targets(q, x) {
                    assert!(nfa.targets(q, x).contains(t));
                }
            }
            for t in extracted.eps_targets(q) {
                assert!(nfa.eps_targets(q).contains(t));
            }
        }
        assert_eq!(extracted.accept(), nfa.accept());
        assert_eq!(extracted.start(), nfa.start());
    }
}
