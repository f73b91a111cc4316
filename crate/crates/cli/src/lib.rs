//! Experiment drivers behind the `hopfix` binary.

pub mod args;
pub mod output;
pub mod patterns;

use std::path::{Path, PathBuf};
use std::time::Instant;

use hopfix::experiments::{BetaSearchConfig, CipsTableConfig, DynamicsConfig};
use hopfix::{derive_seed, Beta, Error, PatternSet, SearchStrategy};
use serde::Serialize;

pub use args::{Cli, Command, Common, Format};
use output::{index_list, num, opt_num, write_manifest, RunManifest, Sink};

/// Failures, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::Domain(_)
            | Error::InvalidFace { .. }
            | Error::Unsupported(_)
            | Error::NoSideFacets
            | Error::CipsViolation { .. }
            | Error::EpsilonTooLarge { .. }
            | Error::NotApplicable(_) => CliError::Config(e.to_string()),
            Error::DegenerateBifurcation { .. }
            | Error::ProjectionFailed { .. }
            | Error::RefinementFailed { .. }
            | Error::Inconsistent(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct Echo<'a> {
    common: &'a Common,
    command: &'a Command,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Thresholds(_) => "thresholds",
        Command::SimplexCatalog(_) => "simplex-catalog",
        Command::CipsTable(_) => "cips-table",
        Command::BetaSearch(_) => "beta-search",
        Command::Dynamics(_) => "dynamics",
        Command::Fixpoints(_) => "fixpoints",
    }
}

/// Runs one subcommand and writes its outputs.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let echo = serde_json::to_value(Echo { common: &cli.common, command: &cli.command })
        .map_err(|e| CliError::Io(e.to_string()))?;
    let mut manifest = RunManifest::new(command_name(&cli.command), echo, cli.common.seed);
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::Thresholds(a) => thresholds(a, &cli.common, &manifest)?,
        Command::SimplexCatalog(a) => simplex_catalog(a, &cli.common, &manifest)?,
        Command::CipsTable(a) => cips_table(a, &cli.common, &mut manifest)?,
        Command::BetaSearch(a) => beta_search(a, &cli.common, &manifest)?,
        Command::Dynamics(a) => dynamics(a, &cli.common, &mut manifest)?,
        Command::Fixpoints(a) => fixpoints(a, &cli.common, &manifest)?,
    }
    if let Some(path) = out {
        manifest.wall_time_s = start.elapsed().as_secs_f64();
        write_manifest(path, &manifest)?;
    }
    Ok(())
}

fn format_or(common: &Common, default: Format) -> Format {
    common.format.unwrap_or(default)
}

fn beta(v: f64) -> Result<Beta, CliError> {
    Beta::new(v).map_err(CliError::from)
}

fn thresholds(a: &args::ThresholdsArgs, common: &Common, manifest: &RunManifest) -> Result<(), CliError> {
    if a.n.is_empty() {
        return Err(CliError::Config("--n needs at least one value".into()));
    }
    let rows: Vec<(usize, f64)> =
        a.n.iter().map(|&n| Ok((n, hopfix::m_nk(n, a.k)?))).collect::<Result<_, Error>>()?;
    let sink = match format_or(common, Format::Csv) {
        Format::Csv => {
            let mut s = Sink::csv(manifest, &["n", "k", "m"]);
            for (n, m) in &rows {
                s.row(&[n.to_string(), a.k.to_string(), num(*m)]);
            }
            s
        }
        Format::Jsonl => {
            let mut s = Sink::jsonl(manifest);
            for (n, m) in &rows {
                s.record(&serde_json::json!({ "n": n, "k": a.k, "m": m }))?;
            }
            s
        }
    };
    sink.finish(common.out.as_deref())?;
    Ok(())
}

fn simplex_catalog(a: &args::CatalogArgs, common: &Common, manifest: &RunManifest) -> Result<(), CliError> {
    let catalog = hopfix::enumerate_softmax_fixed_points(a.n, beta(a.beta)?)?;
    let catalog = hopfix::classify_softmax_catalog(catalog)?;
    let stable = catalog.stable_count();
    let sink = match format_or(common, Format::Jsonl) {
        Format::Jsonl => {
            let mut s = Sink::jsonl(manifest);
            s.record(&serde_json::json!({
                "n": catalog.n,
                "beta": catalog.beta,
                "regime": catalog.regime,
                "count": catalog.count().to_string(),
                "stable_count": stable.to_string(),
                "materialized": catalog.materialized,
                "thresholds": catalog.thresholds,
                "root_pairs": catalog.root_pairs,
            }))?;
            for p in &catalog.points {
                s.record(p)?;
            }
            s
        }
        Format::Csv => {
            let mut s = Sink::csv(manifest, &["id", "subset", "root", "residual", "spectral_radius", "stable", "entries"]);
            for (i, p) in catalog.points.iter().enumerate() {
                s.row(&[
                    i.to_string(),
                    index_list(&p.subset),
                    format!("{:?}", p.root),
                    num(p.residual),
                    opt_num(p.spectral_radius),
                    p.theory_stable.map_or("none".into(), |b| b.to_string()),
                    p.entries.iter().map(|&v| num(v)).collect::<Vec<_>>().join(";"),
                ]);
            }
            s
        }
    };
    sink.finish(common.out.as_deref())
}

fn cips_table(a: &args::CipsTableArgs, common: &Common, manifest: &mut RunManifest) -> Result<(), CliError> {
    if a.n.is_empty() || a.kappa.is_empty() || a.face_sizes.is_empty() || a.faces == 0 || a.samples == 0 {
        return Err(CliError::Config("cips-table needs nonempty n, kappa, face sizes and positive counts".into()));
    }
    let mut rows = Vec::new();
    for &n in &a.n {
        for &kappa in &a.kappa {
            let seed = derive_seed(common.seed, rows.len() as u64);
            manifest.derived_seeds.push((format!("n={n},kappa={kappa}"), seed));
            let cfg = CipsTableConfig {
                n,
                kappa,
                face_sizes: a.face_sizes.clone(),
                faces_per_size: a.faces,
                samples: a.samples,
                threshold: a.threshold,
                spacing: common.spacing.into(),
                seed,
            };
            rows.push(hopfix::cips_table_row(&cfg)?.0);
        }
    }
    let sink = match format_or(common, Format::Csv) {
        Format::Csv => {
            let mut s = Sink::csv(manifest, &["n", "kappa", "delta_min", "delta_median", "rate", "faces", "passed"]);
            for r in &rows {
                s.row(&[
                    r.n.to_string(),
                    num(r.kappa),
                    num(r.delta_min),
                    num(r.delta_median),
                    num(r.rate),
                    r.faces.to_string(),
                    r.passed.to_string(),
                ]);
            }
            s
        }
        Format::Jsonl => {
            let mut s = Sink::jsonl(manifest);
            for r in &rows {
                s.record(r)?;
            }
            s
        }
    };
    sink.finish(common.out.as_deref())
}

/// `lo, lo + step, ...` up to `hi` inclusive.
fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(lo > 0.0 && hi >= lo && step > 0.0) || !hi.is_finite() {
        return Err(CliError::Config(format!("bad beta grid {lo}..{hi} step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

fn beta_search(a: &args::BetaSearchArgs, common: &Common, manifest: &RunManifest) -> Result<(), CliError> {
    if a.lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("--lambdas must be ascending".into()));
    }
    let cfg = BetaSearchConfig {
        n: a.n,
        kappa: a.kappa,
        face_sizes: a.face_sizes.clone(),
        faces_per_size: a.faces,
        beta_grid: grid(a.beta_min, a.beta_max, a.beta_step)?,
        lambda_grid: a.lambdas.clone(),
        samples: a.samples,
        margin_samples: a.margin_samples,
        spacing: common.spacing.into(),
        seed: common.seed,
    };
    let rows = hopfix::beta_search(&cfg)?;
    let sink = match format_or(common, Format::Csv) {
        Format::Csv => {
            let mut s = Sink::csv(
                manifest,
                &["face_id", "k", "indices", "beta", "lambda", "sufficient_beta", "sufficient_lambda"],
            );
            for r in &rows {
                s.row(&[
                    r.face_id.to_string(),
                    r.k.to_string(),
                    index_list(&r.indices),
                    opt_num(r.beta),
                    opt_num(r.lambda),
                    num(r.sufficient_beta),
                    num(r.sufficient_lambda),
                ]);
            }
            s
        }
        Format::Jsonl => {
            let mut s = Sink::jsonl(manifest);
            for r in &rows {
                s.record(r)?;
            }
            s
        }
    };
    sink.finish(common.out.as_deref())
}

fn load_patterns(source: &args::PatternSource, common: &Common) -> Result<PatternSet, CliError> {
    match (&source.patterns, source.identity) {
        (Some(path), _) => patterns::read_patterns(path, !common.no_normalize),
        (None, Some(n)) => Ok(PatternSet::identity(n)?),
        (None, None) => Ok(PatternSet::cross_2d()),
    }
}

fn records_path(a: &args::DynamicsArgs, out: Option<&Path>) -> Option<PathBuf> {
    a.records_out.clone().or_else(|| {
        out.map(|p| {
            let mut name = p.file_name().map(|s| s.to_os_string()).unwrap_or_default();
            name.push(".records.jsonl");
            p.with_file_name(name)
        })
    })
}

fn dynamics(a: &args::DynamicsArgs, common: &Common, manifest: &mut RunManifest) -> Result<(), CliError> {
    let w = load_patterns(&a.source, common)?;
    if a.points == 0 || a.max_iter == 0 || !(a.tol > 0.0) {
        return Err(CliError::Config("dynamics needs positive points, max-iter and tol".into()));
    }
    let cfg = DynamicsConfig {
        beta: a.beta,
        points: a.points,
        snapshots: a.snapshots.clone(),
        max_iter: a.max_iter,
        tol: a.tol,
        seed: common.seed,
    };
    manifest.derived_seeds.push(("search".into(), derive_seed(common.seed, 0)));
    manifest.derived_seeds.push(("points".into(), derive_seed(common.seed, 1)));
    let (records, orbits) = hopfix::dynamics(&w, &cfg)?;
    let sink = match format_or(common, Format::Jsonl) {
        Format::Jsonl => {
            let mut s = Sink::jsonl(manifest);
            for o in &orbits {
                for (it, x) in &o.snapshots {
                    s.record(&serde_json::json!({ "id": o.id, "iteration": it, "x": x, "basin": o.basin }))?;
                }
            }
            s
        }
        Format::Csv => {
            let mut cols = vec!["id".to_string(), "iteration".to_string()];
            cols.extend((0..w.dim()).map(|i| format!("x{i}")));
            cols.push("converged".into());
            cols.push("basin".into());
            let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut s = Sink::csv(manifest, &cols);
            for o in &orbits {
                for (it, x) in &o.snapshots {
                    let mut row = vec![o.id.to_string(), it.to_string()];
                    row.extend(x.iter().map(|&v| num(v)));
                    row.push(o.converged.to_string());
                    row.push(o.basin.map_or("none".into(), |b| b.to_string()));
                    s.row(&row);
                }
            }
            s
        }
    };
    sink.finish(common.out.as_deref())?;
    if let Some(path) = records_path(a, common.out.as_deref()) {
        let mut s = Sink::jsonl(manifest);
        for (id, r) in records.iter().enumerate() {
            s.record(&serde_json::json!({ "id": id, "record": r }))?;
        }
        s.finish(Some(&path))?;
    }
    Ok(())
}

fn fixpoints(a: &args::FixpointsArgs, common: &Common, manifest: &RunManifest) -> Result<(), CliError> {
    let w = load_patterns(&a.source, common)?;
    let strategy = SearchStrategy {
        max_face_size: a.max_face_size,
        random_points: a.random_points,
        seed: common.seed,
        ..SearchStrategy::default()
    };
    let records = hopfix::find_fixed_points(&w, beta(a.beta)?, &strategy)?;
    let summary = hopfix::summarize(&records);
    let sink = match format_or(common, Format::Jsonl) {
        Format::Jsonl => {
            let mut s = Sink::jsonl(manifest);
            for r in &records {
                s.record(r)?;
            }
            s.record(&serde_json::json!({ "summary": summary }))?;
            s
        }
        Format::Csv => {
            let mut cols = vec!["id", "classification", "spectral_radius", "residual", "face_hint"];
            let names: Vec<String> = (0..w.dim()).map(|i| format!("x{i}")).collect();
            cols.extend(names.iter().map(String::as_str));
            let mut s = Sink::csv(manifest, &cols);
            for (i, r) in records.iter().enumerate() {
                let mut row = vec![
                    i.to_string(),
                    format!("{:?}", r.classification).to_lowercase(),
                    num(r.spectral_radius),
                    num(r.residual),
                    r.face_hint.as_deref().map_or("none".into(), index_list),
                ];
                row.extend(r.location.iter().map(|&v| num(v)));
                s.row(&row);
            }
            s
        }
    };
    sink.finish(common.out.as_deref())
}
