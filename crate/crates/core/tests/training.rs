use tbcc::channel::{random_bits, substream};
use tbcc::crc16::CrcCode;
use tbcc::ensemble::{partition_dataset, train_ensemble, Ensemble, EnsembleConfig, TrainingMeta};
use tbcc::harness::{run_experiment, DecoderKind, ExperimentConfig, StopRule};
use tbcc::trellis::Trellis;
use tbcc::wcva::{example_loss, simulate_example, ExpertTrainer, TrainConfig, WeightSet};

fn small_train() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        num_batches: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn repeated_example_loss_goes_down() {
    let t = Trellis::lte();
    let crc = CrcCode::lte(13).unwrap();
    let cfg = TrainConfig::default();
    let seeds = 20;
    let mut improved = 0;
    for seed in 0..seeds {
        let mut rng = substream(seed, 7, 0);
        let (ex, _) = simulate_example(&t, &crc, (-1.0, -1.0), &mut rng).unwrap();
        let mut tr = ExpertTrainer::new(&t, 29, &cfg).unwrap();
        let before = example_loss(&t, &tr.weights, &ex).unwrap();
        for _ in 0..20 {
            tr.step(&t, std::slice::from_ref(&ex)).unwrap();
        }
        let after = example_loss(&t, &tr.weights, &ex).unwrap();
        improved += usize::from(after < before);
    }
    assert!(improved * 10 >= seeds as usize * 9, "{improved}/{seeds}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let t = Trellis::lte();
    let crc = CrcCode::lte(13).unwrap();
    let cfg = EnsembleConfig::default();
    let a = train_ensemble(&t, &crc, &cfg, &small_train(), 3).unwrap();
    let b = train_ensemble(&t, &crc, &cfg, &small_train(), 3).unwrap();
    let c = train_ensemble(&t, &crc, &cfg, &small_train(), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let identity = WeightSet::identity(&t, 3, 29).unwrap();
    assert!(a.experts.iter().all(|w| *w != identity));
}

#[test]
fn ensemble_directory_round_trip() {
    let t = Trellis::lte();
    let crc = CrcCode::lte(13).unwrap();
    let cfg = EnsembleConfig::default();
    let ens = train_ensemble(&t, &crc, &cfg, &small_train(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = TrainingMeta {
        seed: 11,
        train: small_train(),
    };
    ens.save(dir.path(), &meta).unwrap();
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("expert_7.wts").exists());
    let (back, meta_back) = Ensemble::load(dir.path()).unwrap();
    assert_eq!(back, ens);
    assert_eq!(meta_back, meta);
}

#[test]
fn corrupt_ensemble_is_rejected() {
    let t = Trellis::lte();
    let crc = CrcCode::lte(13).unwrap();
    let ens = Ensemble::untrained(t, crc, EnsembleConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ens.save(
        dir.path(),
        &TrainingMeta {
            seed: 0,
            train: TrainConfig::default(),
        },
    )
    .unwrap();
    let f = dir.path().join("expert_2.wts");
    let text = std::fs::read_to_string(&f).unwrap();
    std::fs::write(&f, &text[..text.len() / 2]).unwrap();
    assert!(Ensemble::load(dir.path()).is_err());
    std::fs::remove_file(&f).unwrap();
    assert!(Ensemble::load(dir.path()).is_err());
}

#[test]
fn partition_is_close_to_uniform() {
    let t = Trellis::lte();
    let crc = CrcCode::lte(13).unwrap();
    let cfg = EnsembleConfig::default();
    let mut rng = substream(21, 0, 0);
    let n = 8000;
    let words = (0..n).map(|_| (Vec::new(), crc.encode(&random_bits(13, &mut rng)).unwrap()));
    let parts = partition_dataset(words, &t, &cfg).unwrap();
    let expect = n as f64 / 8.0;
    let sd = (n as f64 * 0.125 * 0.875).sqrt();
    for (i, p) in parts.iter().enumerate() {
        assert!(
            (p.len() as f64 - expect).abs() < 5.0 * sd,
            "expert {i}: {}",
            p.len()
        );
        for (_, u) in p {
            assert_eq!(cfg.expert_of_state(&t, t.state_of(u).unwrap()), i);
        }
    }
}

fn quick_eval(decoders: Vec<DecoderKind>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        decoders,
        snr_db: vec![-1.0, 1.0],
        seed,
        stop: StopRule {
            min_errors: 10,
            max_trials: 600,
            watch: vec![DecoderKind::Cva],
        },
        block_size: 100,
        ..ExperimentConfig::default()
    }
}

#[test]
fn experiment_is_reproducible_and_paired() {
    let ens = Ensemble::untrained(
        Trellis::lte(),
        CrcCode::lte(13).unwrap(),
        EnsembleConfig::default(),
    )
    .unwrap();
    let cfg = quick_eval(vec![DecoderKind::Cva, DecoderKind::GatedWcvae], 5);
    let a = run_experiment(&cfg, Some(ens.clone())).unwrap();
    let b = run_experiment(&cfg, Some(ens.clone())).unwrap();
    assert_eq!(a, b);
    // CVA alone sees the same words
    let solo = run_experiment(&quick_eval(vec![DecoderKind::Cva], 5), None).unwrap();
    assert_eq!(solo[0], a[0]);
    assert_eq!(solo[1], a[2]);
}

#[test]
fn stop_rule_blocks_and_cap() {
    let cfg = quick_eval(vec![DecoderKind::Cva], 1);
    let recs = run_experiment(&cfg, None).unwrap();
    for r in &recs {
        assert_eq!(r.trials % 100, 0);
        assert!(r.trials <= 600);
        assert!(r.frame_errors >= 10 || r.capped);
        assert_eq!(r.mean_va_runs, 3.0);
    }
    // at 1 dB ten errors need far more than 600 words
    assert!(recs[1].capped);
    assert_eq!(recs[1].trials, 600);
}

#[test]
fn noiseless_sweep_has_no_errors() {
    let ens = Ensemble::untrained(
        Trellis::lte(),
        CrcCode::lte(13).unwrap(),
        EnsembleConfig::default(),
    )
    .unwrap();
    let mut cfg = quick_eval(DecoderKind::ALL.to_vec(), 2);
    cfg.noiseless = true;
    cfg.stop.max_trials = 100;
    for r in run_experiment(&cfg, Some(ens)).unwrap() {
        assert_eq!(r.frame_errors, 0, "{}", r.decoder);
        if r.decoder == DecoderKind::GatedWcvae {
            assert_eq!(r.mean_va_runs, 3.0);
        }
    }
}
