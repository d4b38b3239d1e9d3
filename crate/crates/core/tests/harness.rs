use matrix_se::harness::checkpoint::load_checkpoint;
use matrix_se::harness::eval::{eval_instances, score};
use matrix_se::harness::train::{batch_loss, fresh_checkpoint, step_rng};
use matrix_se::harness::{
    benchmark_speed_with, curriculum_sample, loglog_slope, size_weights, train, ModelPredictor, MetricsRecord,
    OraclePredictor, TrainConfig, TrainError, TrainOptions,
};
use matrix_se::tasks::TaskId;

fn tiny(task: TaskId, steps: u64) -> TrainConfig {
    TrainConfig {
        task,
        m: 8,
        blocks: 1,
        max_train_size: 4,
        eval_sizes: vec![4],
        steps,
        batch_size: 8,
        learning_rate: 3e-3,
        metrics_every: 10,
        checkpoint_every: 50,
        eval_instances: 8,
        ..TrainConfig::default()
    }
}

fn read_metrics(dir: &std::path::Path) -> Vec<MetricsRecord> {
    std::fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn initial_loss_is_near_uniform() {
    let cfg = tiny(TaskId::Transpose, 1);
    let ck = fresh_checkpoint(&cfg);
    let batch = curriculum_sample(&cfg, 0, &mut step_rng(cfg.seed, 0), None).unwrap();
    let mut tape = matrix_se::autodiff::Tape::new();
    let bound = ck.params.bind_frozen(&mut tape);
    let (_, stats) = batch_loss(&mut tape, &bound, &batch, 1).unwrap();
    let uniform = (TaskId::Transpose.vocab_out() as f64).ln();
    assert!((stats.loss - uniform).abs() < 0.5, "{} vs {uniform}", stats.loss);
}

#[test]
fn smoke_run_learns_small_transpose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(TaskId::Transpose, 200);
    let out = train(
        &cfg,
        TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let recs = read_metrics(dir.path());
    assert_eq!(recs.len(), 20);
    assert!(recs.windows(2).all(|w| w[1].step > w[0].step));
    assert!(recs.last().unwrap().loss < recs[0].loss - 0.1, "{recs:?}");
    assert!(dir.path().join("checkpoint.ckpt").exists());
    let back = load_checkpoint(dir.path().join("checkpoint.ckpt")).unwrap();
    assert_eq!(back.step, 200);
    assert_eq!(back.params, out.checkpoint.params);

    // a second run appends rather than truncates
    train(
        &cfg,
        TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            until_step: Some(10),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let again = read_metrics(dir.path());
    assert_eq!(again.len(), 21);
    assert_eq!(&again[..20], &recs[..]);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let cfg = tiny(TaskId::Rotate90, 40);
    let full = train(&cfg, TrainOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    train(
        &cfg,
        TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            until_step: Some(17),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let half = load_checkpoint(dir.path().join("checkpoint.ckpt")).unwrap();
    assert_eq!(half.step, 17);
    let resumed = train(
        &cfg,
        TrainOptions {
            resume: Some(half),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    assert_eq!(resumed.checkpoint.step, 40);
    assert_eq!(resumed.checkpoint.params, full.checkpoint.params);
    assert_eq!(resumed.checkpoint.optimizer, full.checkpoint.optimizer);
}

#[test]
fn non_finite_loss_keeps_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(TaskId::Transpose, 20);
    train(
        &cfg,
        TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let path = dir.path().join("checkpoint.ckpt");
    let before = std::fs::read(&path).unwrap();

    let mut poisoned = load_checkpoint(&path).unwrap();
    poisoned.params.embedding.data_mut().fill(f32::NAN);
    let cfg = tiny(TaskId::Transpose, 60);
    let err = train(
        &cfg,
        TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            resume: Some(poisoned),
            ..TrainOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { step: 21 }), "{err}");
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn masked_cells_do_not_affect_loss() {
    let cfg = tiny(TaskId::Xor, 1);
    let ck = fresh_checkpoint(&cfg);
    let batch: Vec<_> = (0..4).map(|s| TaskId::Xor.generate(6, s).unwrap()).collect();
    let mut perturbed = batch.clone();
    for inst in &mut perturbed {
        let side = inst.side();
        for (i, &m) in inst.mask.clone().iter().enumerate() {
            if m == 0 {
                let v = inst.target.get(i / side, i % side);
                inst.target.set(i / side, i % side, (v + 1) % 2);
            }
        }
    }
    let loss_of = |b: &[matrix_se::tasks::TaskInstance]| {
        let mut tape = matrix_se::autodiff::Tape::new();
        let bound = ck.params.bind_frozen(&mut tape);
        batch_loss(&mut tape, &bound, b, 1).unwrap().1.loss
    };
    assert_ne!(batch, perturbed);
    assert_eq!(loss_of(&batch).to_bits(), loss_of(&perturbed).to_bits());
}

#[test]
fn curriculum_shifts_from_small_to_all_sizes() {
    let w0 = size_weights(3, 0.0);
    assert!(w0[0] >= 0.9, "{w0:?}");
    let w1 = size_weights(3, 1.0);
    assert!(w1.iter().all(|&w| w >= 1.0 / 6.0), "{w1:?}");

    let mut cfg = tiny(TaskId::Transpose, 1000);
    cfg.max_train_size = 16;
    cfg.batch_size = 200;
    let early = curriculum_sample(&cfg, 0, &mut step_rng(1, 0), None).unwrap();
    let small = early.iter().filter(|i| i.n == 4).count();
    assert!(small as f64 >= 0.85 * 200.0, "{small}");
    let late = curriculum_sample(&cfg, 999, &mut step_rng(1, 999), None).unwrap();
    for n in [4, 8, 16] {
        let c = late.iter().filter(|i| i.n == n).count();
        assert!(c >= 30, "size {n}: {c}");
    }

    cfg.max_train_size = 4;
    let only = curriculum_sample(&cfg, 500, &mut step_rng(1, 500), None).unwrap();
    assert!(only.iter().all(|i| i.n == 4));
}

#[test]
fn untrained_model_is_near_chance_and_oracle_is_perfect() {
    let cfg = tiny(TaskId::Transpose, 1);
    let ck = fresh_checkpoint(&cfg);
    let inst = eval_instances(TaskId::Transpose, 8, 16).unwrap();
    let (elem, whole) = score(
        &ModelPredictor {
            params: &ck.params,
            recurrent_steps: 1,
        },
        &inst,
    )
    .unwrap();
    assert!(elem < 0.35, "{elem}");
    assert_eq!(whole, 0.0);
    assert_eq!(score(&OraclePredictor, &inst).unwrap(), (1.0, 1.0));
}

#[test]
fn inference_is_cheaper_than_training() {
    let cfg = tiny(TaskId::Transpose, 1);
    let rows = benchmark_speed_with(&cfg, &[8, 16], 1, 3).unwrap();
    for r in &rows {
        assert!(r.infer_ms <= r.train_ms, "{r:?}");
    }
    let slope = loglog_slope(&[(1.0, 1.0), (2.0, 4.0), (4.0, 16.0)]);
    assert!((slope - 2.0).abs() < 1e-12);
}
