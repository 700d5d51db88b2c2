use geomag_nav::talstm::{
    load_model, read_dataset_csv, save_model, train, write_dataset_csv, ModelDims, Optimizer, Predictor, TaLstmModel,
    TrainConfig, WindowSeries, MODEL_MAGIC,
};

/// Smooth straight-line track: positions advance linearly, D and I drift
/// slowly, heading fixed at `theta`.
fn track(theta: f64, t: usize, windows: usize, offset: f64) -> Vec<WindowSeries> {
    (1..=windows)
        .map(|n| WindowSeries {
            n,
            inputs: (0..t)
                .map(|k| {
                    let s = ((n - 1) * t + k) as f64 + offset;
                    [-3000.0 * s, 1500.0 * s, 0.5 - 0.002 * s, 3.0 - 0.004 * s]
                })
                .collect(),
            targets: vec![theta; t],
        })
        .collect()
}

fn adam(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 1,
        learning_rate: 0.005,
        drop_factor: 1.0,
        drop_period: 1,
        train_ratio: 1.0,
        val_ratio: 0.0,
        optimizer: Optimizer::Adam,
        ..Default::default()
    }
}

fn trained_small() -> TaLstmModel {
    let mut m = TaLstmModel::new(ModelDims::new(8, 20), 3).unwrap();
    train(&mut m, &[track(30.0, 20, 3, 0.0)], &adam(5)).unwrap();
    m
}

#[test]
fn save_load_keeps_predictions() {
    let m = trained_small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.talstm");
    save_model(&m, &path).unwrap();
    let back = load_model(&path, Some(20)).unwrap();
    assert_eq!(back, m);
    let seq = track(30.0, 20, 3, 7.0);
    let (mut pa, mut pb) = (Predictor::new(&m).unwrap(), Predictor::new(&back).unwrap());
    for w in &seq {
        assert_eq!(pa.predict_window(w).unwrap(), pb.predict_window(w).unwrap());
    }
}

#[test]
fn bad_files_are_rejected() {
    let m = trained_small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.talstm");
    save_model(&m, &path).unwrap();

    let msg = load_model(&path, Some(10)).unwrap_err().to_string();
    assert!(msg.contains("20") && msg.contains("10"), "{msg}");

    let mut bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], MODEL_MAGIC);
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    let msg = load_model(&path, None).unwrap_err().to_string();
    assert!(msg.contains("magic"), "{msg}");
}

#[test]
fn prediction_shape_and_purity() {
    let m = trained_small();
    let seq = track(30.0, 20, 2, 0.0);
    let run = || {
        let mut p = Predictor::new(&m).unwrap();
        seq.iter().map(|w| p.predict_window(w).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    for p in &a {
        assert_eq!(p.headings_deg.len(), 20);
        assert!((p.local_attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.global_attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn overfits_constant_heading_track() {
    let data = vec![track(30.0, 20, 4, 0.0)];
    let mut m = TaLstmModel::new(ModelDims::new(20, 20), 11).unwrap();
    let report = train(&mut m, &data, &adam(300)).unwrap();
    let mut p = Predictor::new(&m).unwrap();
    // Windows 1..N-1 forecast a window that was trained on.
    for w in &data[0][..3] {
        let pred = p.predict_window(w).unwrap();
        for h in pred.headings_deg {
            assert!((h - 30.0).abs() < 0.5, "predicted {h}, final loss {:?}", report.train_loss.last());
        }
    }
}

#[test]
fn single_forecast_overfits_in_500_epochs() {
    // Two windows give exactly one forecast target.
    let data = vec![vec![
        track(0.0, 20, 1, 0.0).remove(0),
        WindowSeries {
            n: 2,
            targets: (0..20).map(|k| -40.0 + 4.0 * k as f64).collect(),
            ..track(0.0, 20, 2, 0.0).remove(1)
        },
    ]];
    let mut m = TaLstmModel::new(ModelDims::new(20, 20), 5).unwrap();
    let r = train(&mut m, &data, &adam(500)).unwrap();
    let last = *r.train_loss.last().unwrap();
    assert!(last < 1e-3, "final loss {last}");
}

#[test]
fn loss_falls_over_first_ten_epochs() {
    let data: Vec<Vec<WindowSeries>> = (0..20)
        .map(|i| track(-90.0 + 9.0 * i as f64, 20, 3, 5.0 * i as f64))
        .collect();
    let mut m = TaLstmModel::new(ModelDims::new(20, 20), 2).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        train_ratio: 1.0,
        val_ratio: 0.0,
        ..Default::default()
    };
    let r = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(r.train_loss.len(), 10);
    assert!(r.train_loss[9] < r.train_loss[0], "{:?}", r.train_loss);
}

#[test]
fn dataset_csv_round_trip() {
    let data = vec![track(12.5, 20, 3, 0.0), track(-100.0, 20, 2, 3.0)];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset_csv(&path, &data).unwrap();
    assert_eq!(read_dataset_csv(&path).unwrap(), data);
}
