//! Property tests for cross-module invariants.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::Rng;
use repvec_core::classifier::{
    train_classifier, Activation, ClassifierConfig, FeedForwardClassifier, Features, LabeledData, OutputMode,
};
use repvec_core::container::Persist;
use repvec_core::corpus::{
    count_terms, featurize_split, DatasetSplit, PatientDocument, SparseFeatureVector, TfIdf, Vocabulary,
};
use repvec_core::doc2vec::{ns_loss_and_grad, train_dbow, Doc2VecConfig};
use repvec_core::eval::{approx_randomization_test, roc_auc};
use repvec_core::interpret::{instance_sensitivity, pipeline_sensitivity, InstanceMode};
use repvec_core::linalg::{softmax, Matrix};
use repvec_core::projection::{joint_probabilities, kl_divergence, kl_gradient};
use repvec_core::rng::seeded;
use repvec_core::sdae::{DaeLayer, LayerSpec, SdaeConfig, SdaeModel};

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn central<F: Fn(f64) -> f64>(f: F) -> f64 {
    (f(H) - f(-H)) / (2.0 * H)
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_classifier(seed: u64, input: usize) -> FeedForwardClassifier {
    let mut rng = seeded(seed);
    let config = ClassifierConfig {
        hidden_layers: rng.random_range(0..3),
        width: rng.random_range(2..6),
        activation: Activation::ALL[rng.random_range(0..3)],
        seed,
        ..ClassifierConfig::default()
    };
    let classes = (0..rng.random_range(2..5)).map(|c| c.to_string()).collect();
    let mut clf = FeedForwardClassifier::initialize(input, classes, &config).unwrap();
    for b in &mut clf.biases {
        b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    clf
}

fn document(id: &str, tokens: &[String]) -> PatientDocument {
    PatientDocument {
        patient_id: id.to_owned(),
        tokens: tokens.to_vec(),
        labels: BTreeMap::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mapped_documents_stay_inside_the_vocabulary(
        train in vec(vec("[a-e]{1,2}", 1..12), 2..8),
        held_out in vec("[a-h]{1,2}", 0..15),
        min_frequency in 1u64..4,
    ) {
        let counts: Vec<_> = train.iter().map(|d| count_terms(d)).collect();
        let Ok(vocab) = Vocabulary::build(&counts, min_frequency) else { return Ok(()); };
        let tfidf = TfIdf::fit(&counts, &vocab);
        let row = tfidf.transform(&count_terms(&held_out), &vocab).unwrap();
        for (i, _) in row.iter() {
            prop_assert!(i < vocab.len());
            if i != vocab.oov_index() {
                prop_assert!(held_out.iter().any(|t| t == vocab.term(i)));
            }
        }
        for t in &held_out {
            if vocab.get(t).is_none() && tfidf.idf()[vocab.oov_index()] > 0.0 {
                prop_assert!(row.get(vocab.oov_index()) > 0.0);
            }
        }
    }

    #[test]
    fn held_out_documents_never_change_idf(
        train in vec(vec("[a-d]{1,2}", 1..10), 2..6),
        test_a in vec(vec("[a-f]{1,2}", 0..10), 1..4),
        test_b in vec(vec("[a-f]{1,2}", 0..10), 1..4),
    ) {
        let run = |test: &[Vec<String>]| {
            let mut docs = Vec::new();
            let mut split = DatasetSplit { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
            for (i, d) in train.iter().enumerate() {
                docs.push(document(&format!("r{i}"), d));
                split.train.push(format!("r{i}"));
            }
            for (i, d) in test.iter().enumerate() {
                docs.push(document(&format!("t{i}"), d));
                split.test.push(format!("t{i}"));
            }
            featurize_split(&docs, &split, 1).unwrap()
        };
        let (a, b) = (run(&test_a), run(&test_b));
        prop_assert_eq!(a.vocabulary.terms(), b.vocabulary.terms());
        prop_assert_eq!(a.tfidf.idf(), b.tfidf.idf());
    }

    #[test]
    fn sdae_layer_gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (d_in, d_out) = (rng.random_range(2..7), rng.random_range(1..5));
        let layer = DaeLayer::new(d_in, d_out, &mut rng);
        let input: Vec<f64> = (0..d_in).map(|_| rng.random_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..d_in).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, g) = layer.loss_and_gradients(&input, &target).unwrap();
        for m in 0..d_out {
            for i in 0..d_in {
                let fd = central(|h| {
                    let mut l = layer.clone();
                    l.enc_w.set(m, i, layer.enc_w.get(m, i) + h);
                    l.loss(&input, &target).unwrap()
                });
                prop_assert!(rel_err(g.enc_w.get(m, i), fd) < 1e-4);
                let fd = central(|h| {
                    let mut l = layer.clone();
                    l.dec_w.set(i, m, layer.dec_w.get(i, m) + h);
                    l.loss(&input, &target).unwrap()
                });
                prop_assert!(rel_err(g.dec_w.get(i, m), fd) < 1e-4);
            }
            let fd = central(|h| {
                let mut l = layer.clone();
                l.enc_b[m] += h;
                l.loss(&input, &target).unwrap()
            });
            prop_assert!(rel_err(g.enc_b[m], fd) < 1e-4);
        }
        for i in 0..d_in {
            let fd = central(|h| {
                let mut l = layer.clone();
                l.dec_b[i] += h;
                l.loss(&input, &target).unwrap()
            });
            prop_assert!(rel_err(g.dec_b[i], fd) < 1e-4);
        }
    }

    #[test]
    fn representations_are_bitwise_reproducible(seed in any::<u64>(), dense in vec(0.0f64..1.0, 6)) {
        let config = SdaeConfig {
            layers: vec![LayerSpec { hidden: 4, corruption: 0.5 }, LayerSpec { hidden: 3, corruption: 0.5 }],
            seed,
            ..SdaeConfig::default()
        };
        let model = SdaeModel::initialized(&config, 6, 9);
        let x = SparseFeatureVector::from_dense(&dense, 9);
        let (a, b) = (model.represent(&x).unwrap(), model.represent(&x).unwrap());
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn negative_sampling_gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let dim = rng.random_range(2..8);
        let h = random_vec(&mut rng, dim);
        let outputs: Vec<Vec<f64>> = (0..rng.random_range(2..7)).map(|_| random_vec(&mut rng, dim)).collect();
        let loss = |h: &[f64], outs: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
            ns_loss_and_grad(h, &refs).0
        };
        let refs: Vec<&[f64]> = outputs.iter().map(Vec::as_slice).collect();
        let (_, gh, gu) = ns_loss_and_grad(&h, &refs);
        for i in 0..dim {
            let fd = central(|e| { let mut hh = h.clone(); hh[i] += e; loss(&hh, &outputs) });
            prop_assert!(rel_err(gh[i], fd) < 1e-4);
            for j in 0..outputs.len() {
                let fd = central(|e| { let mut oo = outputs.clone(); oo[j][i] += e; loss(&h, &oo) });
                prop_assert!(rel_err(gu[j][i], fd) < 1e-4);
            }
        }
    }

    #[test]
    fn classifier_gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = seeded(seed ^ 0x5eed);
        let d = rng.random_range(2..6);
        let clf = random_classifier(seed, d);
        let x = random_vec(&mut rng, d);
        let label = rng.random_range(0..clf.n_classes());
        let (_, g) = clf.loss_and_gradients(&x, label).unwrap();
        for l in 0..clf.weights.len() {
            for idx in 0..clf.weights[l].as_slice().len() {
                let fd = central(|h| {
                    let mut c = clf.clone();
                    c.weights[l].as_mut_slice()[idx] += h;
                    c.loss_and_gradients(&x, label).unwrap().0
                });
                prop_assert!(rel_err(g.weights[l].as_slice()[idx], fd) < 1e-4);
            }
            for idx in 0..clf.biases[l].len() {
                let fd = central(|h| {
                    let mut c = clf.clone();
                    c.biases[l][idx] += h;
                    c.loss_and_gradients(&x, label).unwrap().0
                });
                prop_assert!(rel_err(g.biases[l][idx], fd) < 1e-4);
            }
        }
        for mode in [OutputMode::Probability, OutputMode::Logit] {
            for k in 0..clf.n_classes() {
                let analytic = clf.classifier_gradient(&x, k, mode).unwrap();
                for i in 0..d {
                    let fd = central(|h| {
                        let mut xx = x.clone();
                        xx[i] += h;
                        match mode {
                            OutputMode::Probability => clf.predict_proba(&xx).unwrap()[k],
                            OutputMode::Logit => clf.logits(&xx).unwrap()[k],
                        }
                    });
                    prop_assert!(rel_err(analytic[i], fd) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn softmax_sums_to_one(logits in vec(-800.0f64..800.0, 1..12)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn class_permutation_permutes_probabilities(seed in any::<u64>(), shuffle in any::<u64>()) {
        let clf = random_classifier(seed, 4);
        let mut perm: Vec<usize> = (0..clf.n_classes()).collect();
        let mut rng = seeded(shuffle);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = clf.permute_classes(&perm).unwrap();
        let x = random_vec(&mut rng, 4);
        let (p, q) = (clf.predict_proba(&x).unwrap(), permuted.predict_proba(&x).unwrap());
        for k in 0..p.len() {
            prop_assert!((q[perm[k]] - p[k]).abs() <= 1e-15);
            prop_assert_eq!(&permuted.classes[perm[k]], &clf.classes[k]);
        }
        let (a, b) = (clf.predict(&x).unwrap().0, permuted.predict(&x).unwrap().0);
        prop_assert_eq!(&clf.classes[a], &permuted.classes[b]);
    }

    #[test]
    fn composed_sensitivity_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let v = rng.random_range(3..7);
        let vocab = Vocabulary::from_parts(
            (0..v).map(|i| if i + 1 == v { "<oov>".to_owned() } else { format!("w{i}") }).collect(),
            vec![1; v],
            1,
        );
        let config = SdaeConfig {
            layers: vec![LayerSpec { hidden: rng.random_range(2..5), corruption: 0.1 }],
            seed,
            ..SdaeConfig::default()
        };
        let sdae = SdaeModel::initialized(&config, v, vocab.fingerprint());
        let clf = random_classifier(seed.wrapping_add(1), sdae.output_dim());
        let inputs: Vec<SparseFeatureVector> = (0..3)
            .map(|_| SparseFeatureVector::from_dense(&(0..v).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>(), vocab.fingerprint()))
            .collect();
        let mut per_instance = Vec::new();
        for x in &inputs {
            let z = x.to_dense();
            let s = instance_sensitivity(&sdae, &clf, &z, None, OutputMode::Probability).unwrap();
            for k in 0..clf.n_classes() {
                for i in 0..v {
                    let fd = central(|h| {
                        let mut zz = z.clone();
                        zz[i] += h;
                        clf.predict_proba(&sdae.encode(&zz).unwrap()).unwrap()[k]
                    });
                    prop_assert!(rel_err(s.get(k, i), fd) < 1e-4);
                }
            }
            per_instance.push(s);
        }
        let agg = pipeline_sensitivity(&sdae, &clf, &inputs, &vocab, None, InstanceMode::Aggregate, OutputMode::Probability).unwrap();
        for i in 0..v {
            let rms: Vec<f64> = (0..clf.n_classes())
                .map(|k| (per_instance.iter().map(|m| m.get(k, i).powi(2)).sum::<f64>() / 3.0).sqrt())
                .collect();
            for (k, r) in rms.iter().enumerate() {
                prop_assert!((agg.aggregate.get(k, i) - r).abs() <= 1e-12);
            }
            prop_assert_eq!(agg.phi[i], rms.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms(data in vec((0u8..8, any::<bool>()), 2..50)) {
        let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 7.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 10.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap().auc, roc_auc(&transformed, &labels).unwrap().auc);
    }

    #[test]
    fn randomization_p_is_symmetric_in_the_systems(
        pairs in vec((any::<bool>(), any::<bool>(), any::<bool>()), 3..30),
        seed in any::<u64>(),
    ) {
        let truth: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let a: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let b: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let accuracy = |pred: &[bool]| Some(pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64);
        let ab = approx_randomization_test("accuracy", &a, &b, accuracy, 300, seed).unwrap();
        let ba = approx_randomization_test("accuracy", &b, &a, accuracy, 300, seed).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert_eq!(ab.observed, -ba.observed);
    }

    #[test]
    fn joint_probabilities_meet_their_constraints(seed in any::<u64>(), n in 5usize..16, frac in 0.1f64..0.9) {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 3)).collect();
        let perplexity = 1.0 + frac * (n as f64 - 2.0);
        let jp = joint_probabilities(&Matrix::from_rows(&rows).unwrap(), perplexity).unwrap();
        for r in &jp.row_perplexities {
            prop_assert!((r - perplexity).abs() <= 1e-3, "row perplexity {r} vs {perplexity}");
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = jp.p.get(i, j);
                prop_assert!(p >= 0.0);
                prop_assert_eq!(p, jp.p.get(j, i));
                total += p;
            }
        }
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn tsne_gradient_matches_finite_differences(seed in any::<u64>(), n in 4usize..11) {
        let mut rng = seeded(seed);
        let data: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 3)).collect();
        let p = joint_probabilities(&Matrix::from_rows(&data).unwrap(), 2.0).unwrap().p;
        let y = Matrix::from_rows(&(0..n).map(|_| random_vec(&mut rng, 2)).collect::<Vec<_>>()).unwrap();
        let g = kl_gradient(&p, &y);
        for i in 0..n {
            for c in 0..2 {
                let fd = central(|h| {
                    let mut yy = y.clone();
                    yy.set(i, c, y.get(i, c) + h);
                    kl_divergence(&p, &yy)
                });
                prop_assert!(rel_err(g.get(i, c), fd) < 1e-3);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn classifier_training_is_deterministic(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let x: Vec<Vec<f64>> = (0..40).map(|_| random_vec(&mut rng, 3)).collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] + r[1] > 0.0)).collect();
        let config = ClassifierConfig { hidden_layers: 1, width: 4, max_epochs: 5, batch_size: 8, seed, ..ClassifierConfig::default() };
        let classes = vec!["0".to_owned(), "1".to_owned()];
        let data = LabeledData { features: Features::Dense(&x), labels: &y };
        let a = train_classifier(&data, None, &classes, &config).unwrap();
        let b = train_classifier(&data, None, &classes, &config).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn doc2vec_is_deterministic_and_respects_min_count(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let docs: Vec<PatientDocument> = (0..12)
            .map(|i| {
                let tokens: Vec<String> = (0..15)
                    .map(|_| format!("w{}", (rng.random_range(0.0f64..1.0).powi(3) * 30.0) as usize))
                    .collect();
                document(&format!("p{i}"), &tokens)
            })
            .collect();
        let config = Doc2VecConfig { dim: 8, epochs: 2, seed, ..Doc2VecConfig::default() };
        let a = train_dbow(&docs, &config).unwrap();
        let b = train_dbow(&docs, &config).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for d in &docs {
            for t in &d.tokens {
                *freq.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        for (term, count) in freq {
            prop_assert_eq!(a.word_vector(term).is_some(), count >= 10, "{} occurs {} times", term, count);
        }
    }
}
