use propspan::gradcheck::tiny_problem;
use propspan::losses::Grounding;
use propspan::model::{DefinitionEncoderMode, Definitions, LossOptions, TrainingExample};
use propspan::optim::{AdamConfig, AdamW};
use propspan::params::ParamSet;
use propspan::synth::{generate, SynthConfig};
use propspan::trainer::{train, TrainConfig};

#[test]
fn one_small_step_decreases_the_joint_loss() {
    let mut checked = 0;
    for seed in 0..20 {
        let (mut model, batch) = tiny_problem(seed, 4, DefinitionEncoderMode::Separate);
        let refs: Vec<&TrainingExample> = batch.iter().collect();
        let opts = LossOptions {
            grounding: if seed % 2 == 0 { Grounding::Masked } else { Grounding::Plain },
            ..LossOptions::default()
        };
        let mut grads = model.zero_gradients();
        let before = model.batch_loss(&refs, &opts, Definitions::Live, Some(&mut grads)).unwrap();
        if grads.params.sq_norm().sqrt() < 1e-12 {
            continue;
        }
        let mut opt = AdamW::new(&model.params, AdamConfig::default());
        let mode = model.config;
        opt.step(&mut model.params, &grads.params, 1e-6, |n| mode.is_trainable(n));
        let after = model.batch_loss(&refs, &opts, Definitions::Live, None).unwrap();
        assert!(after.joint < before.joint, "seed {seed}: {} -> {}", before.joint, after.joint);
        checked += 1;
    }
    assert!(checked >= 15);
}

#[test]
fn identical_config_and_seed_give_identical_parameters() {
    let split = generate(&SynthConfig { sentences: 48, ..SynthConfig::default() }, 16);
    let train_corpus = split.train.corpus().unwrap();
    let dev = split.dev.corpus().unwrap();
    let config = TrainConfig {
        max_epochs: 3,
        warmup_steps: 4,
        batch_size: 8,
        hidden: 8,
        ..TrainConfig::default()
    };
    let a = train(&train_corpus, &dev, &split.catalog, &config).unwrap();
    let b = train(&train_corpus, &dev, &split.catalog, &config).unwrap();
    assert_eq!(propspan::checkpoint::to_bytes(&a.model), propspan::checkpoint::to_bytes(&b.model));
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());

    let other = train(&train_corpus, &dev, &split.catalog, &TrainConfig { seed: 43, ..config }).unwrap();
    assert_ne!(propspan::checkpoint::to_bytes(&a.model), propspan::checkpoint::to_bytes(&other.model));
}
