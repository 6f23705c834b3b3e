mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repvec_core::container::Persist;
use repvec_core::sdae::{corrupt, pretrain_stack, LayerSpec, SdaeConfig, SdaeModel};

fn mean_reconstruction(model: &SdaeModel, rows: &[Vec<f64>], noisy: &[Vec<f64>]) -> f64 {
    let layer = &model.layers[0];
    rows.iter()
        .zip(noisy)
        .map(|(clean, input)| layer.loss(input, clean).unwrap())
        .sum::<f64>()
        / rows.len() as f64
}

#[test]
fn training_halves_reconstruction_error() {
    let data = common::featurized(200, Vec::new(), 11);
    let config = SdaeConfig {
        epochs: 20,
        seed: 5,
        ..SdaeConfig::single_layer(64, 0.1)
    };
    let dense: Vec<Vec<f64>> = data.rows.iter().map(|r| r.to_dense()).collect();
    let untrained = SdaeModel::initialized(&config, data.vocab.len(), data.vocab.fingerprint());
    let model = pretrain_stack(&config, &data.rows).unwrap();
    let initial = mean_reconstruction(&untrained, &dense, &dense);
    let trained = mean_reconstruction(&model, &dense, &dense);
    assert!(trained < 0.5 * initial, "{trained} vs {initial}");
    assert_eq!(model.loss_trace[0].len(), 20);
    assert!(model.loss_trace[0].last().unwrap() < &model.loss_trace[0][0]);
}

#[test]
fn trained_model_denoises_better_than_untrained() {
    let data = common::featurized(200, Vec::new(), 12);
    let config = SdaeConfig {
        epochs: 10,
        seed: 3,
        ..SdaeConfig::single_layer(48, 0.3)
    };
    let dense: Vec<Vec<f64>> = data.rows.iter().map(|r| r.to_dense()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noisy: Vec<Vec<f64>> = dense.iter().map(|x| corrupt(x, 0.3, &mut rng).unwrap()).collect();
    let untrained = SdaeModel::initialized(&config, data.vocab.len(), data.vocab.fingerprint());
    let model = pretrain_stack(&config, &data.rows).unwrap();
    assert!(mean_reconstruction(&model, &dense, &noisy) < mean_reconstruction(&untrained, &dense, &noisy));
}

#[test]
fn later_layers_leave_earlier_layers_untouched() {
    let data = common::featurized(60, Vec::new(), 13);
    let one = SdaeConfig {
        epochs: 3,
        seed: 8,
        ..SdaeConfig::single_layer(20, 0.2)
    };
    let two = SdaeConfig {
        layers: vec![
            LayerSpec { hidden: 20, corruption: 0.2 },
            LayerSpec { hidden: 10, corruption: 0.1 },
        ],
        ..one.clone()
    };
    let shallow = pretrain_stack(&one, &data.rows).unwrap();
    let deep = pretrain_stack(&two, &data.rows).unwrap();
    assert_eq!(deep.layers[0], shallow.layers[0]);
    assert_eq!(deep.output_dim(), 10);
    assert_eq!(deep.layers[1].input_dim(), deep.layers[0].output_dim());
}

#[test]
fn reloaded_model_gives_identical_representations() {
    let data = common::featurized(50, Vec::new(), 14);
    let config = SdaeConfig {
        epochs: 2,
        seed: 1,
        ..SdaeConfig::single_layer(16, 0.05)
    };
    let model = pretrain_stack(&config, &data.rows).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sdae.bin");
    model.save(&path).unwrap();
    let loaded = SdaeModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    for row in &data.rows {
        let a = model.represent(row).unwrap();
        let b = loaded.represent(row).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let bytes = std::fs::read(&path).unwrap();
    assert!(SdaeModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}
