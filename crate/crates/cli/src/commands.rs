use std::fmt::Write as _;
use std::time::Instant;

use serde_json::{json, Map, Number, Value};
use thiserror::Error;
use ucorr::inference::{empirical_p_value, permutation_null};
use ucorr::simulate::{null_dist_experiment, power_experiment};
use ucorr::{
    generate, p_value_analytic, ucorr, ForestConfig, NullParams, PValueMethod, RelationshipSpec,
};

use crate::args::{BenchArgs, ComputeArgs, ForestArgs, FormatArg, NullDistArgs, PValueArg, PowerArgs};
use crate::dataset::{fnv1a64, parse_delimiter, read_dataset, DatasetError, ParseOptions, MIN_ROWS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] DatasetError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Numeric(#[from] ucorr::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) | CliError::Output { .. } => 3,
            CliError::Validation(_) | CliError::Numeric(_) => 4,
        }
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Reals rendered with 17 significant digits so they parse back bit-exactly.
pub fn real(v: f64) -> Value {
    match format!("{v:.16e}").parse::<Number>() {
        Ok(n) => Value::Number(n),
        Err(_) => Value::Null,
    }
}

fn forest_config(args: &ForestArgs, m: Option<usize>) -> ForestConfig {
    ForestConfig {
        tree_count: args.trees,
        random_split_fraction: args.random_split_fraction,
        subset_size: m,
        max_leaf_count: args.leaves,
        min_leaf_width: args.min_leaf_width,
        split_trials: args.split_trials,
        seed: args.seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rho: f64,
    pub sigma0: f64,
    pub z: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
    pub method: PValueMethod,
    pub config: Map<String, Value>,
    pub input_digest: u64,
    pub elapsed_ms: u64,
    pub phase_ms: Vec<(&'static str, f64)>,
}

impl RunReport {
    pub fn to_json(&self) -> Value {
        let method = match self.method {
            PValueMethod::Analytic => "analytic",
            PValueMethod::Permutation => "permutation",
            PValueMethod::MannWhitney => "mann_whitney",
        };
        let phases: Map<String, Value> = self
            .phase_ms
            .iter()
            .map(|(k, v)| (k.to_string(), real(*v)))
            .collect();
        json!({
            "rho": real(self.rho),
            "sigma0": real(self.sigma0),
            "z": real(self.z),
            "p_value": real(self.p_value),
            "n": self.n,
            "m": self.m,
            "method": method,
            "config": self.config,
            "input_digest": format!("{:016x}", self.input_digest),
            "elapsed_ms": self.elapsed_ms,
            "version": VERSION,
            "phase_ms": phases,
        })
    }

    /// Header line plus one value line; config keys are prefixed `config.`.
    pub fn to_csv(&self) -> String {
        let json = self.to_json();
        let obj = json.as_object().expect("report is an object");
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (k, v) in obj {
            match v {
                Value::Object(inner) => {
                    for (ik, iv) in inner {
                        names.push(format!("{k}.{ik}"));
                        values.push(csv_value(iv));
                    }
                }
                other => {
                    names.push(k.clone());
                    values.push(csv_value(other));
                }
            }
        }
        format!("{}\n{}\n", names.join(","), values.join(","))
    }
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn compute(args: &ComputeArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let opts = ParseOptions {
        delimiter: parse_delimiter(&args.delimiter)?,
        has_header: args.has_header,
        x_col: args.x_col as usize,
        y_col: args.y_col as usize,
    };
    let (dataset, bytes) = read_dataset(&args.input, &opts)?;
    let parse_ms = started.elapsed().as_secs_f64() * 1e3;
    if dataset.len() < MIN_ROWS {
        return Err(CliError::Validation(format!(
            "{} has {} usable rows; at least {MIN_ROWS} are required for the large-sample \
             normal approximation (assumption A2: n > 8 and m > 8)",
            args.input.display(),
            dataset.len()
        )));
    }
    if args.pvalue == PValueArg::Permutation && args.permutations < ucorr::inference::MIN_PERMUTATIONS {
        return Err(CliError::Validation(format!(
            "--permutations must be at least {}",
            ucorr::inference::MIN_PERMUTATIONS
        )));
    }
    let sample = dataset.to_sample()?;
    let config = forest_config(&args.forest, args.m);
    let n = sample.len();
    config.validate(n)?;
    let m = config.subset_size_for(n);
    let params = NullParams::new(n, m, args.forest.k_bias)?;

    let t = Instant::now();
    let out = with_threads(args.forest.threads, || ucorr(&sample, &config))??;
    let coefficient_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let (method, p_value) = match args.pvalue {
        PValueArg::Analytic => (PValueMethod::Analytic, p_value_analytic(out.rho, &params)),
        PValueArg::Permutation => {
            let null = with_threads(args.forest.threads, || {
                permutation_null(&sample, &config, args.permutations, config.seed)
            })??;
            (PValueMethod::Permutation, empirical_p_value(out.rho, &null))
        }
    };
    let pvalue_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut cfg = Map::new();
    cfg.insert("trees".into(), json!(config.tree_count));
    cfg.insert("m".into(), json!(m));
    cfg.insert("leaves".into(), json!(config.leaf_count_for(n)));
    cfg.insert("min_leaf_width".into(), json!(config.min_leaf_width_for(n)));
    cfg.insert("split_trials".into(), json!(config.split_trials));
    cfg.insert("random_split_fraction".into(), real(config.random_split_fraction));
    cfg.insert("k_bias".into(), real(args.forest.k_bias));
    cfg.insert("seed".into(), json!(config.seed));
    cfg.insert("threads".into(), json!(args.forest.threads));
    cfg.insert(
        "pvalue".into(),
        json!(match args.pvalue {
            PValueArg::Analytic => "analytic",
            PValueArg::Permutation => "permutation",
        }),
    );
    cfg.insert("permutations".into(), json!(args.permutations));
    cfg.insert("delimiter".into(), json!(args.delimiter));
    cfg.insert("has_header".into(), json!(args.has_header));
    cfg.insert("x_col".into(), json!(args.x_col));
    cfg.insert("y_col".into(), json!(args.y_col));
    cfg.insert("input".into(), json!(args.input.display().to_string()));

    Ok(RunReport {
        rho: out.rho,
        sigma0: params.sigma0,
        z: out.rho / params.sigma0,
        p_value,
        n,
        m,
        method,
        config: cfg,
        input_digest: fnv1a64(&bytes),
        elapsed_ms: started.elapsed().as_millis() as u64,
        phase_ms: vec![
            ("parse", parse_ms),
            ("coefficient", coefficient_ms),
            ("p_value", pvalue_ms),
        ],
    })
}

pub fn render_compute(report: &RunReport, format: FormatArg) -> String {
    match format {
        FormatArg::Json => {
            let mut s = serde_json::to_string_pretty(&report.to_json()).expect("serialisable");
            s.push('\n');
            s
        }
        FormatArg::Csv => report.to_csv(),
    }
}

pub fn nulldist(args: &NullDistArgs) -> Result<String, CliError> {
    let config = forest_config(&args.forest, Some(args.m));
    let summary = with_threads(args.forest.threads, || {
        null_dist_experiment(
            args.n,
            args.m,
            args.reps,
            args.bins,
            args.forest.k_bias,
            &config,
            args.forest.seed,
        )
    })??;
    let mut out = String::from(
        "bin_lo,bin_hi,count,density,predicted_density,n,m,reps,mean,std,q05,q50,q95,predicted_sigma\n",
    );
    for b in &summary.bins {
        writeln!(
            out,
            "{:.10e},{:.10e},{},{:.10e},{:.10e},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            b.lo,
            b.hi,
            b.count,
            b.density,
            b.predicted_density,
            summary.n,
            summary.m,
            summary.reps,
            summary.mean,
            summary.std,
            summary.q05,
            summary.q50,
            summary.q95,
            summary.predicted_sigma
        )
        .unwrap();
    }
    Ok(out)
}

/// `start:stop:step` (inclusive) or a comma list.
pub fn parse_noise_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid noise grid '{spec}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| start + k as f64 * step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|v| !(0.0..=100.0).contains(v)) {
        return Err(CliError::Usage(format!(
            "noise levels must lie in [0, 100], got '{spec}'"
        )));
    }
    Ok(grid)
}

pub fn power(args: &PowerArgs) -> Result<String, CliError> {
    let grid = parse_noise_grid(&args.noise)?;
    let config = forest_config(&args.forest, None);
    let mut out = String::from("relation,coefficient,noise,n,reps,null_quantile_95,power\n");
    for &kind in &args.relation {
        for (level, &noise) in grid.iter().enumerate() {
            for &coeff in &args.coeff {
                // One level at a time keeps the row order fixed and the seeds per level stable.
                let seed = ucorr::forest::derive_seed(args.forest.seed, level as u64);
                let res = with_threads(args.forest.threads, || {
                    power_experiment(kind, args.n, &[noise], args.reps, coeff, &config, seed)
                })??;
                let p = &res.points[0];
                writeln!(
                    out,
                    "{kind},{coeff},{noise},{},{},{:.10e},{}",
                    args.n, p.reps, p.null_quantile_95, p.power
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub elapsed_ms: f64,
}

pub fn bench_rows(args: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    if args.repeats == 0 {
        return Err(CliError::Validation("--repeats must be at least 1".into()));
    }
    let mut sizes = args.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let config = forest_config(&args.forest, None);
    let mut rows = Vec::with_capacity(sizes.len());
    for n in sizes {
        let sample = generate(&RelationshipSpec {
            kind: args.relation,
            n,
            noise: args.noise,
            seed: args.forest.seed ^ n as u64,
        })?;
        let mut best = f64::INFINITY;
        for _ in 0..args.repeats {
            let t = Instant::now();
            let out = with_threads(args.forest.threads, || ucorr(&sample, &config))??;
            let params = NullParams::new(out.n, out.m, args.forest.k_bias)?;
            std::hint::black_box(p_value_analytic(out.rho, &params));
            best = best.min(t.elapsed().as_secs_f64() * 1e3);
        }
        rows.push(BenchRow { n, elapsed_ms: best });
    }
    Ok(rows)
}

/// Least-squares slope of log(elapsed) on log(n).
pub fn log_log_slope(rows: &[BenchRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.elapsed_ms.max(1e-6).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,elapsed_ms\n");
    for r in rows {
        writeln!(out, "{},{:.3}", r.n, r.elapsed_ms).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_grid_forms() {
        assert_eq!(
            parse_noise_grid("0:100:25").unwrap(),
            vec![0.0, 25.0, 50.0, 75.0, 100.0]
        );
        assert_eq!(parse_noise_grid("0,10,55").unwrap(), vec![0.0, 10.0, 55.0]);
        assert!(parse_noise_grid("0:100").is_err());
        assert!(parse_noise_grid("0:200:50").is_err());
        assert!(parse_noise_grid("10:0:5").is_err());
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 0.0, 123_456.789_012_345_67] {
            let rendered = serde_json::to_string(&real(v)).unwrap();
            assert_eq!(rendered.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{rendered}");
            let digits = rendered
                .trim_start_matches('-')
                .split('e')
                .next()
                .unwrap()
                .replace('.', "");
            assert_eq!(digits.len(), 17);
        }
    }

    #[test]
    fn slope_of_linear_rows() {
        let rows: Vec<BenchRow> = [1000usize, 2000, 4000]
            .iter()
            .map(|&n| BenchRow {
                n,
                elapsed_ms: n as f64 * 0.01,
            })
            .collect();
        assert!((log_log_slope(&rows).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Input(DatasetError::AmbiguousHeader { line: 1 }).exit_code(),
            3
        );
        assert_eq!(CliError::Validation("x".into()).exit_code(), 4);
    }
}
