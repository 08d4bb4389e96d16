use cgp_core::eval::{run_benchmark, BenchEnv, PipelineOptions};
use cgp_core::io::{self, Transform};
use cgp_core::rolling::{realized_variance, rolling_analysis, rv_weights, PriceOptions};
use cgp_core::select::{auto_fit, sweep, GridSpec, SelectionRule, SweepOptions};
use cgp_core::{generate_instance, AdjacencyMatrix, CgpError, SbmParams, TimeSeries};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(n: usize, k: usize, seed: u64) -> cgp_core::CgpInstance {
    generate_instance(&SbmParams::with_density(n, 5, 0.021, seed).unwrap(), 3, k).unwrap()
}

#[test]
fn series_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let inst = instance(100, 50, 1);
    let labels = io::default_labels(100);
    io::write_series(&path, &inst.x, &labels).unwrap();
    let back = io::load_csv(&path, Transform::None).unwrap();
    assert_eq!(back.labels, labels);
    assert_eq!(back.series, inst.x);
    assert!(matches!(
        io::load_csv(&dir.path().join("missing.csv"), Transform::None),
        Err(CgpError::Io { .. })
    ));
}

#[test]
fn adjacency_sidecar_carries_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let a = instance(100, 10, 2).a_true;
    let mut meta = serde_json::Map::new();
    meta.insert("seed".into(), 2.into());
    io::write_adjacency(&path, &a, &meta).unwrap();
    let side: serde_json::Value = io::read_json(&io::sidecar_path(&path)).unwrap();
    assert_eq!(side["seed"], 2);
    assert_eq!(side["n_nodes"], 100);
    assert_eq!(side["edge_count"], a.edge_count());
    assert_eq!(io::read_adjacency(&path).unwrap(), a);
}

#[test]
fn curve_csv_leaves_undefined_cells_empty() {
    let inst = instance(100, 300, 3);
    let opts = SweepOptions::default();
    let (train, _) = cgp_core::select::split_for_sweep(&inst.x, &opts).unwrap();
    let lmax = cgp_core::solver::lambda_max(&train, 3).unwrap();
    let grid = cgp_core::LambdaGrid::new(vec![0.2 * lmax, 2.0 * lmax]).unwrap();
    let curve = sweep(&inst.x, 3, &grid, &opts).unwrap();
    let text = String::from_utf8(io::curve_csv(&curve).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], io::CURVE_HEADER.join(","));
    let last: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(last[1], "0");
    assert_eq!((last[2], last[3]), ("", ""));
    assert!(!last[6].is_empty());
}

#[test]
fn realized_variance_matches_weighted_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = TimeSeries::new(Array2::from_shape_fn((4, 120), |_| rng.random_range(-0.05..0.05))).unwrap();
    let rv = realized_variance(&x, 0.99, 40).unwrap();
    let norm: f64 = (0..40).map(|t| 0.99f64.powi(t)).sum();
    let v = x.values();
    for k in 39..120 {
        let mut market = 0.0;
        for i in 0..4 {
            let mut s = 0.0;
            for t in 0..40 {
                s += 0.99f64.powi(t as i32) / norm * v[[i, k - t]] * v[[i, k - t]];
            }
            assert!((rv.get(i, k).unwrap() - s).abs() <= 1e-12 * s.max(1e-300));
            market += s.ln();
        }
        assert!((rv.market_log_rv[k].unwrap() - market / 4.0).abs() <= 1e-12 * (market / 4.0).abs());
    }
    assert!((rv_weights(0.99, 40).iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn single_window_gives_single_row() {
    let inst = instance(100, 400, 5);
    let price = PriceOptions {
        transform: Transform::None,
        window_len: 400,
        step: 50,
        ..PriceOptions::default()
    };
    let rows = rolling_analysis(&inst.x, 3, &price, &PipelineOptions::default()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].window_start, rows[0].window_end), (0, 399));
    let too_long = PriceOptions {
        window_len: 401,
        ..price
    };
    assert!(rolling_analysis(&inst.x, 3, &too_long, &PipelineOptions::default()).is_err());
}

#[test]
fn stationary_sparsity_is_steady() {
    let inst = instance(100, 1040 + 3 * 260, 6);
    let price = PriceOptions {
        transform: Transform::None,
        window_len: 1040,
        step: 260,
        ..PriceOptions::default()
    };
    let rows = rolling_analysis(&inst.x, 3, &price, &PipelineOptions::default()).unwrap();
    assert_eq!(rows.len(), 4);
    let mut s: Vec<f64> = rows.iter().map(|r| r.sparsity_pct.unwrap()).collect();
    s.sort_by(f64::total_cmp);
    let median = 0.5 * (s[1] + s[2]);
    let mut dev: Vec<f64> = s.iter().map(|v| (v - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    assert!(0.5 * (dev[1] + dev[2]) <= 1.0, "sparsity {s:?}");
    assert!(rows.iter().all(|r| r.market_log_rv.is_some()));
}

#[test]
fn auto_fit_returns_scored_row() {
    let inst = instance(100, 1040, 7);
    let opts = SweepOptions::default();
    let f = auto_fit(&inst.x, 3, &GridSpec::default(), &opts, SelectionRule::ErrPair).unwrap();
    assert!(f.curve.lambdas().first().unwrap() <= &f.selection.lambda1);
    assert!(f.curve.lambdas().last().unwrap() >= &f.selection.lambda1);
    assert!(!f.fit.a.is_empty());
    assert_eq!(f.fit.lambda1, f.selection.lambda1);
}

#[test]
fn narrow_grid_without_peak_fails_selection() {
    let inst = instance(50, 300, 8);
    let lmax = cgp_core::solver::lambda_max(&inst.x, 3).unwrap();
    let grid = GridSpec::Explicit(cgp_core::LambdaGrid::new(vec![2.0 * lmax, 3.0 * lmax, 4.0 * lmax]).unwrap());
    let err = auto_fit(&inst.x, 3, &grid, &SweepOptions::default(), SelectionRule::ErrPair).unwrap_err();
    assert_eq!(err.category(), "selection_failure");
}

#[test]
fn benchmark_records_each_seed() {
    let report = run_benchmark(&BenchEnv::new(100, 5, 3, 400), &[3, 1, 2], &PipelineOptions::default()).unwrap();
    assert_eq!(report.per_seed.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(report.per_seed.iter().filter(|s| s.report.is_some()).count(), 3);
    let a = AdjacencyMatrix::zeros(2);
    assert_eq!(a.edge_count(), 0);
}
