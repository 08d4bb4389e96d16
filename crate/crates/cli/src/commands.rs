use std::fs;
use std::path::{Path, PathBuf};

use cgp_core::eval::{run_benchmark, BenchEnv, PipelineOptions};
use cgp_core::io::{self, LabeledSeries};
use cgp_core::rolling::{rolling_analysis, PriceOptions};
use cgp_core::select::{refit, select_lambda, split_for_sweep, sweep};
use cgp_core::{fit, generate_instance, recovery_report, AdjacencyMatrix, CgpError, FitResult, SbmParams};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::args::{BenchmarkArgs, Command, FitArgs, GridArgs, RollingArgs, SelectArgs, SimulateArgs, SolverArgs};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(CgpError),
}

impl From<CgpError> for Failure {
    fn from(e: CgpError) -> Self {
        Failure::Run(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage(e: CgpError) -> Failure {
    Failure::Usage(e.to_string())
}

fn check(ok: bool, msg: &str) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Usage(msg.into()))
    }
}

/// Provenance attached to every output sidecar.
struct Provenance {
    base: Map<String, Value>,
    out: PathBuf,
}

impl Provenance {
    fn new(cmd: &Command, seed: Option<u64>, inputs: &[(&Path, String)]) -> Outcome<Self> {
        let config = serde_json::to_value(cmd).expect("arguments serialize");
        let hash = hex::encode(Sha256::digest(config.to_string().as_bytes()));
        let mut base = Map::new();
        base.insert("tool".into(), "cgp".into());
        base.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        base.insert("command".into(), cmd.name().into());
        base.insert("config".into(), config);
        base.insert("config_hash".into(), hash.into());
        base.insert("seed".into(), seed.map_or(Value::Null, Value::from));
        let inputs: Map<String, Value> =
            inputs.iter().map(|(p, h)| (p.display().to_string(), Value::from(h.as_str()))).collect();
        base.insert("inputs_sha256".into(), inputs.into());
        let out = match cmd {
            Command::Simulate(a) => &a.output.out,
            Command::Fit(a) => &a.output.out,
            Command::Select(a) => &a.output.out,
            Command::Benchmark(a) => &a.output.out,
            Command::Rolling(a) => &a.output.out,
        };
        fs::create_dir_all(out).map_err(|e| CgpError::Io {
            path: out.clone(),
            source: e,
        })?;
        Ok(Self { base, out: out.clone() })
    }

    fn with(&self, extra: Value) -> Map<String, Value> {
        let mut m = self.base.clone();
        if let Value::Object(e) = extra {
            m.extend(e);
        }
        m
    }

    fn table(&self, name: &str, bytes: Vec<u8>, extra: Value) -> Outcome {
        let path = self.out.join(name);
        io::write_atomic(&path, &bytes)?;
        io::write_json(&io::sidecar_path(&path), &Value::Object(self.with(extra)))?;
        Ok(())
    }

    fn adjacency(&self, name: &str, a: &AdjacencyMatrix, extra: Value) -> Outcome {
        io::write_adjacency(&self.out.join(name), a, &self.with(extra))?;
        Ok(())
    }

    fn json(&self, name: &str, body: Value) -> Outcome {
        io::write_json(&self.out.join(name), &Value::Object(self.with(body)))?;
        Ok(())
    }
}

fn read_input(path: &Path) -> Outcome<(Vec<u8>, String)> {
    let bytes = fs::read(path).map_err(|e| CgpError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let hash = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, hash))
}

fn load_series(bytes: &[u8], transform: crate::args::TransformArg) -> Outcome<LabeledSeries> {
    let text = String::from_utf8_lossy(bytes);
    Ok(io::parse_csv(&text, transform.into())?)
}

fn validate_grid(grid: &GridArgs) -> Outcome {
    grid.grid().map_err(usage)?;
    check(grid.grid_count >= 3, "--grid-count must be at least 3")?;
    check(grid.grid_low > 0.0 && grid.grid_low < 1.0, "--grid-low must lie in (0, 1)")?;
    check(grid.holdout >= 0.0 && grid.holdout < 1.0, "--holdout must lie in [0, 1)")
}

fn validate_solver(solver: &SolverArgs, lambda1: f64) -> Outcome {
    solver.options(lambda1).validate().map_err(usage)
}

fn fit_tables(prov: &Provenance, f: &FitResult, labels: &[String]) -> Outcome {
    let summary = json!({
        "lambda1": f.lambda1,
        "n_sweeps": f.n_sweeps,
        "stop_reason": f.stop_reason.as_str(),
    });
    prov.adjacency("adjacency.csv", &f.a, summary.clone())?;
    prov.table(
        "poly.csv",
        io::poly_csv(&f.c)?,
        json!({"layout": "lag,power,value (lag 1-based)"}),
    )?;
    prov.json(
        "fit.json",
        json!({
            "fit": {
                "lambda1": f.lambda1,
                "n_sweeps": f.n_sweeps,
                "stop_reason": f.stop_reason.as_str(),
                "objective_trace": f.objective_trace,
                "ridge": f.ridge,
                "dead_columns": f.dead_columns,
                "edge_count": f.a.edge_count(),
                "labels": labels,
            }
        }),
    )
}

fn truth_report(prov: &Provenance, truth: Option<&Path>, a_hat: &AdjacencyMatrix) -> Outcome {
    if let Some(path) = truth {
        let a_true = io::read_adjacency(path)?;
        let r = recovery_report(&a_true, a_hat)?;
        prov.table("report.csv", io::report_csv(&r)?, json!({"truth": path.display().to_string()}))?;
    }
    Ok(())
}

pub fn run(cmd: &Command) -> Outcome {
    match cmd {
        Command::Simulate(a) => simulate(cmd, a),
        Command::Fit(a) => fit_cmd(cmd, a),
        Command::Select(a) => select(cmd, a),
        Command::Benchmark(a) => benchmark(cmd, a),
        Command::Rolling(a) => rolling(cmd, a),
    }
}

fn simulate(cmd: &Command, a: &SimulateArgs) -> Outcome {
    let mut params = SbmParams::with_density(a.sbm.n, a.sbm.clusters, a.sbm.density, a.seed).map_err(usage)?;
    params.noise_sigma = a.sigma;
    params.spectral_target = a.spectral_radius;
    params.validate().map_err(usage)?;
    check(a.sbm.lags >= 1, "--lags must be at least 1")?;
    check(a.sbm.k >= 1, "--k must be at least 1")?;

    let inst = generate_instance(&params, a.sbm.lags, a.sbm.k)?;
    let prov = Provenance::new(cmd, Some(a.seed), &[])?;
    let labels = io::default_labels(a.sbm.n);
    prov.table(
        "series.csv",
        io::series_csv(&inst.x, &labels)?,
        json!({"layout": "label row, then one row per time step"}),
    )?;
    prov.adjacency("adjacency.csv", &inst.a_true, json!({"density": inst.density()}))?;
    prov.table(
        "poly.csv",
        io::poly_csv(&inst.c_true)?,
        json!({"layout": "lag,power,value (lag 1-based)"}),
    )?;
    prov.json(
        "instance.json",
        json!({"params": params, "n_lags": inst.n_lags, "burn_in": inst.burn_in, "density": inst.density()}),
    )
}

fn fit_cmd(cmd: &Command, a: &FitArgs) -> Outcome {
    validate_solver(&a.solver, a.lambda1)?;
    let (bytes, hash) = read_input(&a.input.input)?;
    let series = load_series(&bytes, a.input.transform)?;
    let f = fit(&series.series, a.input.lags, &a.solver.options(a.lambda1))?;
    let prov = Provenance::new(cmd, None, &[(&a.input.input, hash)])?;
    fit_tables(&prov, &f, &series.labels)?;
    truth_report(&prov, a.truth.as_deref(), &f.a)
}

fn select(cmd: &Command, a: &SelectArgs) -> Outcome {
    validate_solver(&a.solver, 0.0)?;
    validate_grid(&a.grid)?;
    let (bytes, hash) = read_input(&a.input.input)?;
    let series = load_series(&bytes, a.input.transform)?;
    let x = &series.series;
    let lags = a.input.lags;
    let opts = a.grid.sweep(&a.solver);

    let (train, _) = split_for_sweep(x, &opts)?;
    let grid = a.grid.grid()?.resolve(&train, lags)?;
    let curve = sweep(x, lags, &grid, &opts)?;
    let prov = Provenance::new(cmd, None, &[(&a.input.input, hash)])?;
    if a.emit_plot_data {
        prov.table(
            "curve.csv",
            io::curve_csv(&curve)?,
            json!({"layout": "one row per lambda1; empty cell = undefined"}),
        )?;
    }
    let selection = select_lambda(&curve, a.grid.rule())?;
    let f = refit(&train, lags, selection.lambda1, &opts.solver)?;
    prov.json("selection.json", json!({"selection": selection, "grid": grid.values()}))?;
    fit_tables(&prov, &f, &series.labels)?;
    truth_report(&prov, a.truth.as_deref(), &f.a)
}

fn benchmark(cmd: &Command, a: &BenchmarkArgs) -> Outcome {
    validate_solver(&a.solver, 0.0)?;
    validate_grid(&a.grid)?;
    SbmParams::with_density(a.sbm.n, a.sbm.clusters, a.sbm.density, a.seed)
        .and_then(|p| p.validate())
        .map_err(usage)?;
    check(a.seeds >= 1, "--seeds must be at least 1")?;
    check(a.sbm.lags >= 1, "--lags must be at least 1")?;

    let mut env = BenchEnv::new(a.sbm.n, a.sbm.clusters, a.sbm.lags, a.sbm.k);
    env.density = a.sbm.density;
    if let Some(m) = a.fit_lags {
        env = env.misspecified(m);
    }
    let pipeline = PipelineOptions {
        sweep: a.grid.sweep(&a.solver),
        grid: a.grid.grid()?,
        rule: a.grid.rule(),
    };
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let report = run_benchmark(&env, &seeds, &pipeline)?;
    let prov = Provenance::new(cmd, Some(a.seed), &[])?;
    prov.table("benchmark_seeds.csv", io::benchmark_seeds_csv(&report)?, json!({}))?;
    prov.table("benchmark_summary.csv", io::benchmark_summary_csv(&report)?, json!({}))?;
    prov.json("benchmark.json", json!({"report": report}))
}

fn rolling(cmd: &Command, a: &RollingArgs) -> Outcome {
    validate_solver(&a.solver, 0.0)?;
    validate_grid(&a.grid)?;
    let price = PriceOptions {
        transform: a.transform.into(),
        window_len: a.window,
        step: a.step,
        rv_decay: a.rv_decay,
        rv_window: a.rv_window,
    };
    price.validate().map_err(usage)?;
    let (bytes, hash) = read_input(&a.input)?;
    let series = load_series(&bytes, a.transform)?;
    let pipeline = PipelineOptions {
        sweep: a.grid.sweep(&a.solver),
        grid: a.grid.grid()?,
        rule: a.grid.rule(),
    };
    let rows = rolling_analysis(&series.series, a.lags, &price, &pipeline)?;
    let prov = Provenance::new(cmd, None, &[(&a.input, hash)])?;
    prov.table(
        "rolling.csv",
        io::rolling_csv(&rows)?,
        json!({"layout": "window_end is inclusive; sparsity_pct = 100 * edges / N^2; empty cell = failed window"}),
    )
}
