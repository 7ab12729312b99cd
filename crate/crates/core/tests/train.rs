use segunet::data::{PreprocessedSample, Ratios, SplitAssignment};
use segunet::model::{build_baseline, Architecture, GradientTape, ModelConfig};
use segunet::nn::Mode;
use segunet::synthetic::synthetic_sample;
use segunet::train::{
    adam_step, load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig, LOG_HEADER,
};
use segunet::{Error, Tensor};

fn samples(n: usize, size: usize) -> Vec<PreprocessedSample> {
    (0..n).map(|i| synthetic_sample(&format!("s{i:02}"), size, i as u64)).collect()
}

fn splits(train: &[PreprocessedSample], val: &[PreprocessedSample]) -> SplitAssignment {
    SplitAssignment {
        seed: 0,
        ratios: Ratios::default(),
        train_ids: train.iter().map(|s| s.sample_id.clone()).collect(),
        val_ids: val.iter().map(|s| s.sample_id.clone()).collect(),
        test_ids: vec![],
    }
}

fn tiny() -> ModelConfig {
    ModelConfig::default()
}

#[test]
fn one_epoch_four_samples_is_one_step() {
    let data = samples(5, 8);
    let sp = splits(&data[..4], &data[4..]);
    let mut m = build_baseline(&tiny());
    let cfg = TrainConfig { epochs: 1, ..Default::default() };
    let out = train(&mut m, &sp, &data, &cfg).unwrap();
    assert_eq!(out.steps, 1);
    assert_eq!(out.log.records.len(), 1);
}

#[test]
fn ten_samples_give_three_steps_per_epoch() {
    let data = samples(11, 8);
    let sp = splits(&data[..10], &data[10..]);
    let mut m = build_baseline(&tiny());
    let cfg = TrainConfig { epochs: 2, ..Default::default() };
    let out = train(&mut m, &sp, &data, &cfg).unwrap();
    assert_eq!(cfg.steps_per_epoch(10), 3);
    assert_eq!(out.steps, 6);
    assert_eq!(out.log.records.len(), 2);
}

#[test]
fn runs_are_reproducible_and_best_matches_log() {
    let data = samples(6, 8);
    let sp = splits(&data[..4], &data[4..]);
    let cfg = TrainConfig { epochs: 4, learning_rate: 1e-3, ..Default::default() };
    let mut a = build_baseline(&tiny());
    let mut b = build_baseline(&tiny());
    let ra = train(&mut a, &sp, &data, &cfg).unwrap();
    let rb = train(&mut b, &sp, &data, &cfg).unwrap();
    assert_eq!(ra.log, rb.log);
    assert_eq!(ra.log.records.len(), cfg.epochs);
    for r in &ra.log.records {
        for v in [r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.val_dice] {
            assert!(v.is_finite());
        }
    }
    assert_eq!(ra.best.meta.val_dice, ra.log.best_val_dice());
    assert!(ra.log.to_csv().starts_with(LOG_HEADER));
}

#[test]
fn empty_validation_split_falls_back_to_training_split() {
    let data = samples(4, 8);
    let sp = splits(&data, &[]);
    let mut m = build_baseline(&tiny());
    let out = train(&mut m, &sp, &data, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    assert_eq!(out.log.records.len(), 1);
}

#[test]
fn unknown_split_id() {
    let data = samples(2, 8);
    let mut sp = splits(&data, &[]);
    sp.train_ids.push("ghost".into());
    let mut m = build_baseline(&tiny());
    let err = train(&mut m, &sp, &data, &TrainConfig { epochs: 1, ..Default::default() }).unwrap_err();
    assert!(matches!(err, Error::UnknownSample(s) if s == "ghost"));
}

#[test]
fn invalid_config_lists_every_problem() {
    let cfg = TrainConfig { epochs: 0, batch_size: 0, learning_rate: -1.0, adam_beta1: 1.0, ..Default::default() };
    assert_eq!(cfg.validate().unwrap_err().len(), 4);
}

fn trained_checkpoint() -> (Checkpoint, Vec<PreprocessedSample>) {
    let data = samples(4, 8);
    let sp = splits(&data[..3], &data[3..]);
    let mut m = build_baseline(&tiny());
    let out = train(&mut m, &sp, &data, &TrainConfig { epochs: 2, learning_rate: 1e-3, ..Default::default() }).unwrap();
    (out.best, data)
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let (ck, data) = trained_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path, Some(Architecture::Baseline)).unwrap();
    assert_eq!(back.meta, ck.meta);
    assert_eq!(back.adam, ck.adam);
    let x = Tensor::stack(&data.iter().map(|s| &s.image).collect::<Vec<_>>()).unwrap();
    let mut original = ck.model.clone();
    original.set_mode(Mode::Infer);
    let y0 = original.infer(&x).unwrap();
    let y1 = back.model.infer(&x).unwrap();
    assert_eq!(y0.data(), y1.data());
}

#[test]
fn wrong_architecture_is_rejected() {
    let (ck, _) = trained_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let err = load_checkpoint(&path, Some(Architecture::Vgg19Backbone)).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)));
}

#[test]
fn corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, b"not an archive at all").unwrap();
    assert!(matches!(load_checkpoint(&path, None), Err(Error::CorruptArchive(_) | Error::TruncatedPayload { .. })));
}

#[test]
fn resumed_adam_step_matches_uninterrupted() {
    let (ck, _) = trained_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("resume.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let mut resumed = load_checkpoint(&path, None).unwrap();
    let mut straight = ck.clone();

    let mut tape = GradientTape::default();
    for (i, (name, p)) in straight.model.params.iter().enumerate() {
        if p.trainable {
            tape.params.insert(name.clone(), (0..p.data.len()).map(|j| ((i + j) % 7) as f32 * 0.01 - 0.03).collect());
        }
    }
    let cfg = TrainConfig::default().adam();
    adam_step(&mut straight.model.params, &tape, &mut straight.adam, &cfg).unwrap();
    adam_step(&mut resumed.model.params, &tape, &mut resumed.adam, &cfg).unwrap();
    assert_eq!(straight.adam.step, resumed.adam.step);
    for (name, p) in &straight.model.params {
        let q = &resumed.model.params[name];
        for (a, b) in p.data.iter().zip(&q.data) {
            assert!((*a as f64 - *b as f64).abs() <= 1e-12, "{name}");
        }
    }
}
