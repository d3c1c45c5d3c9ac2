//! Acceptance suite: every criterion runs in order at its stated tolerance
//! and prints one PASS/FAIL line. Oracles are reimplemented from scratch in
//! this file so they stay independent of the library code they check.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use fetel_core::corpus::{EmbedId, EmbeddingTable};
use fetel_core::eval::{evaluate, macro_f1, micro_f1, strict_accuracy, LabelSet};
use fetel_core::features::featurize_dataset;
use fetel_core::kb::{AnchorStatistics, EntityRecord, KnowledgeBase};
use fetel_core::linker::link_mention;
use fetel_core::model::{
    load_checkpoint, save_checkpoint, DecodePolicy, EncodedMention, ModelConfig, TypingModel,
};
use fetel_core::synthetic::{generate, SyntheticSpec};
use fetel_core::training::{
    apply_nil_dropout, featurize_for_epoch, hinge_loss, inject_person_type_noise, train,
    FeaturizedExample, TrainingConfig,
};
use fetel_core::types::{KbTypeMapping, TypePath, TypeVocabulary};

fn set(paths: &[&str]) -> LabelSet {
    paths.iter().map(|p| TypePath::parse(p).unwrap()).collect()
}

// ---------------------------------------------------------------------------
// Criterion 1: hinge-loss oracle equivalence.
// ---------------------------------------------------------------------------

/// Independent evaluation of the margin loss, written from the formula with
/// its own fine-grained-person test.
fn brute_force_loss(scores: &[f64], gold: &LabelSet, vocab: &TypeVocabulary, lambda_p: f64) -> f64 {
    let mut total = 0.0;
    for (i, t) in vocab.types().iter().enumerate() {
        let s = scores[i];
        if gold.contains(t) {
            let margin = 1.0 - s;
            if margin > 0.0 {
                total += margin;
            }
        } else {
            let canon = t.canonical();
            let fine_person = canon.starts_with("/person/") && canon.matches('/').count() >= 2;
            let lambda = if fine_person { lambda_p } else { 1.0 };
            let margin = 1.0 + s;
            if margin > 0.0 {
                total += lambda * margin;
            }
        }
    }
    total
}

fn random_vocab<R: Rng>(rng: &mut R) -> TypeVocabulary {
    let roots = ["person", "location", "organization", "event", "building"];
    let mut lines = String::new();
    let mut count = 0;
    let k = rng.random_range(2..=20);
    'outer: for root in roots {
        lines.push_str(&format!("/{}\n", root));
        count += 1;
        if count == k {
            break;
        }
        let children = rng.random_range(0..4);
        for c in 0..children {
            lines.push_str(&format!("/{}/sub{}\n", root, c));
            count += 1;
            if count == k {
                break 'outer;
            }
        }
    }
    TypeVocabulary::from_lines(&lines).unwrap()
}

fn random_closed_subset<R: Rng>(vocab: &TypeVocabulary, rng: &mut R) -> LabelSet {
    let mut labels = LabelSet::new();
    for t in vocab.types() {
        if rng.random_range(0.0..1.0) < 0.3 {
            labels.insert(t.clone());
        }
    }
    if labels.is_empty() {
        labels.insert(vocab.get(rng.random_range(0..vocab.len())).clone());
    }
    vocab.expand_with_ancestors(&labels).unwrap()
}

fn criterion_1_loss_oracle() {
    let start = Instant::now();
    let vocab = TypeVocabulary::from_lines("/person\n/person/politician\n/location\n").unwrap();

    // Hand case 1: s = (0.5, -2.0, 0.2), gold {/person}, unweighted -> 1.7.
    let loss = hinge_loss(&[0.5, -2.0, 0.2], &set(&["/person"]), &vocab, 1.0).unwrap();
    assert!((loss - 1.7).abs() < 1e-12, "unweighted hand case: {}", loss);

    // Hand case 2: s = (0.5, 0.2, -2.0), gold {/person}, lambda_p 2 -> 2.9.
    let loss = hinge_loss(&[0.5, 0.2, -2.0], &set(&["/person"]), &vocab, 2.0).unwrap();
    assert!((loss - 2.9).abs() < 1e-12, "weighted hand case: {}", loss);

    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for case in 0..1000 {
        let vocab = random_vocab(&mut rng);
        let gold = random_closed_subset(&vocab, &mut rng);
        let scores: Vec<f64> = (0..vocab.len())
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let lambda_p = [1.0, 2.0, 3.5][case % 3];
        let ours = hinge_loss(&scores, &gold, &vocab, lambda_p).unwrap();
        let oracle = brute_force_loss(&scores, &gold, &vocab, lambda_p);
        assert!(
            (ours - oracle).abs() < 1e-6,
            "case {}: {} vs oracle {}",
            case,
            ours,
            oracle
        );
    }
    assert!(
        start.elapsed() < Duration::from_secs(5),
        "ran {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: metric oracle equivalence.
// ---------------------------------------------------------------------------

fn brute_force_metrics(pairs: &[(LabelSet, LabelSet)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let strict = pairs.iter().filter(|(g, p)| g == p).count() as f64 / n;

    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut inter = 0.0;
    let mut pred_sz = 0.0;
    let mut gold_sz = 0.0;
    for (g, p) in pairs {
        let o = p.iter().filter(|t| g.contains(*t)).count() as f64;
        if !p.is_empty() {
            p_sum += o / p.len() as f64;
        }
        if !g.is_empty() {
            r_sum += o / g.len() as f64;
        }
        inter += o;
        pred_sz += p.len() as f64;
        gold_sz += g.len() as f64;
    }
    let (map, mar) = (p_sum / n, r_sum / n);
    let macro_f = if map + mar == 0.0 {
        0.0
    } else {
        2.0 * map * mar / (map + mar)
    };
    let mip = if pred_sz == 0.0 { 0.0 } else { inter / pred_sz };
    let mir = if gold_sz == 0.0 { 0.0 } else { inter / gold_sz };
    let micro_f = if mip + mir == 0.0 {
        0.0
    } else {
        2.0 * mip * mir / (mip + mir)
    };
    (strict, macro_f, micro_f)
}

fn criterion_2_metric_oracle() {
    let start = Instant::now();

    let fixture = vec![
        (set(&["/person", "/person/politician"]), set(&["/person"])),
        (set(&["/organization"]), set(&["/organization"])),
    ];
    assert_eq!(strict_accuracy(&fixture).unwrap(), 0.5);
    let (_, _, maf) = macro_f1(&fixture).unwrap();
    assert!((maf - 0.857142).abs() < 1e-6, "macro F1 {}", maf);
    let (_, _, mif) = micro_f1(&fixture).unwrap();
    assert!((mif - 0.8).abs() < 1e-9, "micro F1 {}", mif);

    let mut rng = ChaCha12Rng::seed_from_u64(202);
    for case in 0..1000 {
        let vocab = random_vocab(&mut rng);
        let n = rng.random_range(1..25);
        let pairs: Vec<(LabelSet, LabelSet)> = (0..n)
            .map(|_| {
                (
                    random_closed_subset(&vocab, &mut rng),
                    random_closed_subset(&vocab, &mut rng),
                )
            })
            .collect();
        let (strict, macro_f, micro_f) = brute_force_metrics(&pairs);
        assert!(
            (strict_accuracy(&pairs).unwrap() - strict).abs() < 1e-9,
            "case {}",
            case
        );
        assert!(
            (macro_f1(&pairs).unwrap().2 - macro_f).abs() < 1e-9,
            "case {}",
            case
        );
        assert!(
            (micro_f1(&pairs).unwrap().2 - micro_f).abs() < 1e-9,
            "case {}",
            case
        );
    }
    assert!(
        start.elapsed() < Duration::from_secs(5),
        "ran {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: commonness and linker argmax.
// ---------------------------------------------------------------------------

fn criterion_3_commonness() {
    let start = Instant::now();

    let (stats, _) = AnchorStatistics::ingest(
        [
            ("Trump", "E1"),
            ("Trump", "E1"),
            ("Trump", "E1"),
            ("Trump", "E2"),
        ]
        .into_iter()
        .map(|(s, e)| (s.to_string(), e.to_string())),
    );
    assert_eq!(stats.commonness("trump", "E1"), 0.75);
    let total: f64 = ["E1", "E2"]
        .iter()
        .map(|e| stats.commonness("trump", e))
        .sum();
    assert_eq!(total, 1.0, "probabilities must sum to 1 exactly");

    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let surfaces = ["a", "b", "c", "d e"];
    let entities = ["E1", "E2", "E3", "E4", "E5"];
    for case in 0..1000 {
        let n = rng.random_range(0..40);
        let pairs: Vec<(String, String)> = (0..n)
            .map(|_| {
                (
                    surfaces[rng.random_range(0..surfaces.len())].to_string(),
                    entities[rng.random_range(0..entities.len())].to_string(),
                )
            })
            .collect();
        let (stats, _) = AnchorStatistics::ingest(pairs);
        let kb = KnowledgeBase::new(vec![], stats);
        for query in surfaces {
            let link = link_mention(&kb, query);
            // Brute force over every entity, smallest id wins ties.
            let mut best: Option<(&str, f64)> = None;
            for e in entities {
                let c = kb.commonness(query, e);
                if c > 0.0 {
                    let better = match best {
                        None => true,
                        Some((be, bc)) => c > bc || (c == bc && e < be),
                    };
                    if better {
                        best = Some((e, c));
                    }
                }
            }
            match best {
                None => assert!(link.is_nil(), "case {} query {}", case, query),
                Some((e, c)) => {
                    assert_eq!(
                        link.entity_id.as_deref(),
                        Some(e),
                        "case {} query {}",
                        case,
                        query
                    );
                    assert!((link.confidence - c).abs() < 1e-15);
                }
            }
        }
    }
    assert!(
        start.elapsed() < Duration::from_secs(5),
        "ran {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: finite-difference gradient check.
// ---------------------------------------------------------------------------

fn batch_loss(
    model: &TypingModel,
    table: &EmbeddingTable,
    batch: &[EncodedMention],
    golds: &[LabelSet],
    vocab: &TypeVocabulary,
    lambda_p: f64,
) -> f64 {
    // Dropout is zero, so the rng draw never happens; training mode keeps
    // batch-statistic normalization in the differentiated path.
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let (scores, _) = model.forward_batch_train(table, batch, &mut rng).unwrap();
    let mut total = 0.0;
    for (row, gold) in golds.iter().enumerate() {
        total += hinge_loss(&scores.row(row).to_vec(), gold, vocab, lambda_p).unwrap();
    }
    total / batch.len() as f64
}

fn criterion_4_gradient_check() {
    let start = Instant::now();
    let vocab = TypeVocabulary::from_lines("/person\n/person/politician\n/location\n").unwrap();
    let lambda_p = 2.0;

    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let words: Vec<String> = (0..50).map(|i| format!("w{}", i)).collect();
    let matrix = Array2::from_shape_fn((50, 8), |_| rng.random_range(-0.5..0.5));
    let table = EmbeddingTable::from_parts(words, matrix);
    let config = ModelConfig {
        embed_dim: 8,
        recurrent_hidden: 6,
        mlp_hidden: 10,
        type_embed_dim: 10,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };

    let all_types: Vec<TypePath> = vocab.types().to_vec();
    let mut max_rel = 0.0f64;
    for input in 0..20 {
        let model = TypingModel::new(config.clone(), vocab.len(), &table, 404 + input).unwrap();
        // A batch of three random mentions so batch normalization is active.
        let mut batch = Vec::new();
        let mut golds = Vec::new();
        for _ in 0..3 {
            let len = rng.random_range(3..7);
            let mention_pos = rng.random_range(0..len);
            let ids: Vec<EmbedId> = (0..len)
                .map(|p| {
                    if p == mention_pos {
                        EmbedId::MentionToken
                    } else {
                        EmbedId::Word(rng.random_range(0..50))
                    }
                })
                .collect();
            let f_s = Array1::from_iter((0..8).map(|_| rng.random_range(-0.5..0.5)));
            let f_e: Vec<f64> = (0..3)
                .map(|_| f64::from(rng.random_range(0.0..1.0) < 0.5))
                .collect();
            batch.push(EncodedMention {
                ids,
                mention_pos,
                f_s,
                f_e,
                g: rng.random_range(0.0..1.0),
            });
            let gold = vocab
                .expand_with_ancestors(&BTreeSet::from([all_types
                    [rng.random_range(0..all_types.len())]
                .clone()]))
                .unwrap();
            golds.push(gold);
        }

        // Analytic gradients.
        let mut rng0 = ChaCha12Rng::seed_from_u64(0);
        let (scores, trace) = model
            .forward_batch_train(&table, &batch, &mut rng0)
            .unwrap();
        let mut d_scores = Array2::zeros(scores.raw_dim());
        for (row, gold) in golds.iter().enumerate() {
            for (i, t) in vocab.types().iter().enumerate() {
                let s = scores[[row, i]];
                d_scores[[row, i]] = if gold.contains(t) {
                    if 1.0 - s > 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                } else if 1.0 + s > 0.0 {
                    if t.is_fine_person() {
                        lambda_p
                    } else {
                        1.0
                    }
                } else {
                    0.0
                } / batch.len() as f64;
            }
        }
        let grads = model.backward_batch(&trace, &d_scores);

        // Numeric check over the type embeddings and every MLP parameter.
        let eps = 1e-5;
        let checked: Vec<(String, &Array2<f64>)> = model
            .named_params()
            .into_iter()
            .filter(|(name, _)| name.starts_with("mlp") || name == "type_embeddings")
            .collect();
        let grad_by_name: Vec<(String, &Array2<f64>)> = {
            let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
            names.into_iter().zip(grads.tensors()).collect()
        };
        for (name, param) in checked {
            let analytic_tensor = grad_by_name
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, g)| *g)
                .unwrap();
            for ((r, c), _) in param.indexed_iter() {
                let analytic = analytic_tensor[[r, c]];
                let mut up = model.clone();
                let mut down = model.clone();
                for (n, p) in up.named_params_mut() {
                    if n == name {
                        p[[r, c]] += eps;
                    }
                }
                for (n, p) in down.named_params_mut() {
                    if n == name {
                        p[[r, c]] -= eps;
                    }
                }
                let numeric = (batch_loss(&up, &table, &batch, &golds, &vocab, lambda_p)
                    - batch_loss(&down, &table, &batch, &golds, &vocab, lambda_p))
                    / (2.0 * eps);
                let denom = analytic.abs().max(numeric.abs());
                let ok = if denom > 1e-6 {
                    let rel = (analytic - numeric).abs() / denom;
                    max_rel = max_rel.max(rel);
                    rel <= 1e-4
                } else {
                    (analytic - numeric).abs() <= 1e-7
                };
                assert!(
                    ok,
                    "input {} tensor {} [{},{}]: analytic {} vs numeric {}",
                    input, name, r, c, analytic, numeric
                );
            }
        }
    }
    eprintln!("    max relative gradient error: {:.2e}", max_rel);
    assert!(
        start.elapsed() < Duration::from_secs(60),
        "ran {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: overfitting sanity at desk scale.
// ---------------------------------------------------------------------------

fn desk_model_config(embed_dim: usize) -> ModelConfig {
    ModelConfig {
        embed_dim,
        recurrent_hidden: 16,
        mlp_hidden: 32,
        type_embed_dim: 24,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    }
}

fn criterion_5_overfit_sanity() {
    let spec = SyntheticSpec {
        include_persons: false,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec);
    assert_eq!(data.examples.len(), 200);
    assert_eq!(data.vocab.len(), 12);

    let model_config = desk_model_config(spec.embed_dim);
    let training_config = TrainingConfig {
        max_epochs: 100,
        seed: 11,
        ..TrainingConfig::default()
    };

    let run = || {
        let t0 = Instant::now();
        let outcome = train(
            &data.examples,
            &data.examples, // overfit run: selection on the training set itself
            &data.kb,
            &data.mapping,
            &data.vocab,
            &data.table,
            model_config.clone(),
            &training_config,
        )
        .unwrap();
        let elapsed = t0.elapsed();
        assert!(
            elapsed < Duration::from_secs(300),
            "training took {:?}",
            elapsed
        );
        outcome
    };

    let first = run();
    assert!(first.log.len() <= 100);
    let report = evaluate(
        &first.model,
        &data.table,
        &data.examples,
        &data.kb,
        &data.mapping,
        &data.vocab,
        DecodePolicy::MultiPath,
    )
    .unwrap();
    eprintln!(
        "    train strict {:.4} after {} epochs",
        report.strict_accuracy,
        first.log.len()
    );
    assert!(
        report.strict_accuracy >= 0.95,
        "train strict accuracy {} < 0.95",
        report.strict_accuracy
    );

    // Same seed, identical epoch logs.
    let second = run();
    assert_eq!(
        first.log, second.log,
        "epoch logs must be identical under a fixed seed"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: entity-linking ablation direction.
// ---------------------------------------------------------------------------

fn criterion_6_el_ablation() {
    // Context tokens are uninformative by construction; KB types determine
    // the gold labels. Both arms train DirectTrain-style and differ only in
    // use_el_features.
    let spec = SyntheticSpec {
        include_persons: false,
        informative_context: false,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec);
    let (train_set, dev_set) =
        fetel_core::corpus::split_dev(data.examples.clone(), 40, 99).unwrap();

    let training_config = TrainingConfig {
        lambda_p: 1.0,
        nil_dropout_rate: 0.0,
        person_noise_enabled: false,
        max_epochs: 60,
        patience: 10,
        seed: 21,
        ..TrainingConfig::default()
    };

    let run = |use_el: bool| {
        let model_config = ModelConfig {
            use_el_features: use_el,
            ..desk_model_config(spec.embed_dim)
        };
        train(
            &train_set,
            &dev_set,
            &data.kb,
            &data.mapping,
            &data.vocab,
            &data.table,
            model_config,
            &training_config,
        )
        .unwrap()
    };

    let with_el = run(true);
    let without_el = run(false);
    eprintln!(
        "    dev strict: with EL {:.3}, without EL {:.3}",
        with_el.best_dev_strict, without_el.best_dev_strict
    );
    assert!(
        with_el.best_dev_strict >= 0.9,
        "EL-enabled dev strict {} < 0.9",
        with_el.best_dev_strict
    );
    assert!(
        without_el.best_dev_strict <= 0.5,
        "no-EL dev strict {} > 0.5 (labels should be unrecoverable)",
        without_el.best_dev_strict
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: noise-mechanism properties.
// ---------------------------------------------------------------------------

fn criterion_7_noise_mechanisms() {
    // A person entity holding one of three fine person types.
    let vocab = TypeVocabulary::from_lines(
        "/person\n/person/politician\n/person/actor\n/person/scientist\n/location\n",
    )
    .unwrap();
    let mapping =
        KbTypeMapping::from_lines("kb.person\t/person\nkb.actor\t/person/actor\n", &vocab).unwrap();
    let actor = EntityRecord::new(
        "E_actor",
        "Some Actor",
        vec!["kb.person".to_string(), "kb.actor".to_string()],
        &mapping,
        &vocab,
    );
    assert!(actor.is_person);
    let (stats, _) = AnchorStatistics::ingest(
        [("some actor", "E_actor")]
            .into_iter()
            .map(|(s, e)| (s.to_string(), e.to_string())),
    );
    let kb = KnowledgeBase::new(vec![actor.clone()], stats);

    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let table = EmbeddingTable::from_parts(
        vec!["said".to_string()],
        Array2::from_shape_fn((1, 4), |_| rng.random_range(-0.5..0.5)),
    );
    let example = fetel_core::corpus::MentionExample::new(
        "d0",
        vec!["some".to_string(), "actor".to_string(), "said".to_string()],
        (0, 2),
        set(&["/person", "/person/actor"]),
        Some("E_actor".to_string()),
    )
    .unwrap();
    let prepared = featurize_dataset(&[example], &kb, &mapping, &vocab, &table)
        .unwrap()
        .remove(0);
    assert_eq!(prepared.link.entity_id.as_deref(), Some("E_actor"));
    let weak_labels = prepared.gold.clone();
    let entity_set = prepared.kb_types.clone();

    let fine: BTreeSet<TypePath> = vocab.person_fine_types().iter().cloned().collect();
    for _ in 0..1000 {
        let featurized = featurize_for_epoch(&prepared, &kb, &vocab, true, &mut rng).unwrap();
        let noisy = vocab.decode_one_hot(&featurized.encoded.f_e);
        assert_ne!(
            noisy, weak_labels,
            "KB feature set must differ from the weak-label set in every sample"
        );
        let added: Vec<&TypePath> = noisy.difference(&entity_set).collect();
        assert_eq!(added.len(), 1, "exactly one type is added");
        assert!(
            fine.contains(added[0]),
            "added type is a fine-grained person type"
        );
        assert!(
            !entity_set.contains(added[0]),
            "added type is absent from the entity"
        );

        // Direct check of the set-level operation as well.
        let noisy_set = inject_person_type_noise(&entity_set, &actor, &vocab, &mut rng);
        assert!(entity_set.is_subset(&noisy_set));
        assert_eq!(noisy_set.difference(&entity_set).count(), 1);
    }

    // NIL dropout at rate 0.5 over 10,000 examples: count in [4850, 5150].
    let mut batch: Vec<FeaturizedExample> = (0..10_000)
        .map(|_| featurize_for_epoch(&prepared, &kb, &vocab, false, &mut rng).unwrap())
        .collect();
    let dropped = apply_nil_dropout(&mut batch, 0.5, &mut rng);
    assert!(
        (4850..=5150).contains(&dropped),
        "NIL count {} outside [4850, 5150]",
        dropped
    );
    for ex in &batch {
        if ex.nil {
            assert!(ex.encoded.f_e.iter().all(|&b| b == 0.0));
            assert_eq!(ex.encoded.g, 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: persistence round-trips.
// ---------------------------------------------------------------------------

fn criterion_8_persistence() {
    let dir = tempfile::tempdir().unwrap();

    // KB snapshot: identical commonness values after save/load.
    let spec = SyntheticSpec::default();
    let data = generate(&spec);
    let kb_path = dir.path().join("kb.snapshot");
    data.kb.save(&kb_path).unwrap();
    let loaded_kb = KnowledgeBase::load(&kb_path).unwrap();
    assert_eq!(loaded_kb.n_entities(), data.kb.n_entities());
    for entity in data.kb.entities() {
        let surface = format!(
            "ent{:03}",
            entity
                .entity_id
                .trim_start_matches('E')
                .parse::<usize>()
                .unwrap()
        );
        assert_eq!(
            loaded_kb.commonness(&surface, &entity.entity_id),
            data.kb.commonness(&surface, &entity.entity_id),
        );
        assert_eq!(
            loaded_kb.entity_types(&entity.entity_id).unwrap(),
            data.kb.entity_types(&entity.entity_id).unwrap()
        );
    }

    // Model checkpoint: bitwise-identical evaluation-mode scores.
    let model_config = desk_model_config(spec.embed_dim);
    let training_config = TrainingConfig {
        max_epochs: 3,
        patience: 10,
        seed: 31,
        ..TrainingConfig::default()
    };
    let (train_set, dev_set) = fetel_core::corpus::split_dev(data.examples.clone(), 20, 1).unwrap();
    let outcome = train(
        &train_set,
        &dev_set,
        &data.kb,
        &data.mapping,
        &data.vocab,
        &data.table,
        model_config,
        &training_config,
    )
    .unwrap();

    let ckpt = dir.path().join("model");
    save_checkpoint(
        &ckpt,
        &outcome.model,
        &data.vocab,
        &data.mapping,
        &data.table,
    )
    .unwrap();
    let loaded = load_checkpoint(&ckpt).unwrap();

    let prepared =
        featurize_dataset(&dev_set, &data.kb, &data.mapping, &data.vocab, &data.table).unwrap();
    let encoded: Vec<EncodedMention> = prepared
        .iter()
        .map(|p| p.encode_clean(&data.vocab).unwrap())
        .collect();
    let before = outcome
        .model
        .forward_batch_eval(&data.table, &encoded)
        .unwrap();
    let after = loaded
        .model
        .forward_batch_eval(&loaded.table, &encoded)
        .unwrap();
    assert_eq!(
        before, after,
        "evaluation-mode scores must be bitwise identical"
    );
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn())> = vec![
        ("1 loss oracle equivalence", criterion_1_loss_oracle),
        ("2 metric oracle equivalence", criterion_2_metric_oracle),
        ("3 commonness correctness", criterion_3_commonness),
        ("4 gradient check", criterion_4_gradient_check),
        ("5 overfitting sanity", criterion_5_overfit_sanity),
        ("6 EL ablation direction", criterion_6_el_ablation),
        ("7 noise-mechanism property", criterion_7_noise_mechanisms),
        ("8 persistence round-trips", criterion_8_persistence),
    ];

    let mut failures = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(()) => eprintln!("PASS criterion {} ({:?})", name, start.elapsed()),
            Err(err) => {
                let msg = err
                    .downcast_ref::<String>()
                    .map(|s| s.as_str())
                    .or_else(|| err.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                eprintln!("FAIL criterion {}: {}", name, msg);
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {:?}", failures);
}
