use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::Args;
use riskscope_core::bench::{log_log_slope, time_per_call};
use riskscope_core::fixtures::{adult, adult_queries, DEFAULT_FIXTURE_SEED};
use riskscope_core::{
    find_and_release_epsilon, find_epsilon_from_rdr, per_instance_sensitivity, project_query_attributes,
    EpsilonGrid, Mechanism, NoiseSource, PreparedQuery, PrivacyPreference, SearchOptions, SvtConfig,
};
use serde::Serialize;

use crate::inputs::parse_size;
use crate::DataError;

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "1k,10k,100k", value_delimiter = ',', value_parser = parse_size)]
    sizes: Vec<usize>,
    #[arg(long, default_value = "1", value_delimiter = ',')]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Benchmark query, `q1` through `q5`.
    #[arg(long, default_value = "q3")]
    query: String,
    /// Also time complete searches (both algorithms) on the default grid.
    #[arg(long)]
    search: bool,
    /// Minimum wall time per sample; short calls are repeated until it is reached.
    #[arg(long, default_value_t = 50)]
    min_time_ms: u64,
    #[arg(long, default_value_t = DEFAULT_FIXTURE_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row<'a> {
    op: &'a str,
    query: &'a str,
    rows: usize,
    unique: usize,
    workers: usize,
    run: usize,
    seconds: f64,
}

pub fn run(args: BenchArgs) -> Result<()> {
    let (name, query) = adult_queries()
        .into_iter()
        .find(|(n, _)| *n == args.query)
        .ok_or_else(|| DataError(anyhow::anyhow!("unknown benchmark query `{}`", args.query)))?;
    let out: Box<dyn std::io::Write> = match &args.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut csv = csv::Writer::from_writer(out);
    let min = Duration::from_millis(args.min_time_ms);
    let grid = EpsilonGrid::default37();
    let mut medians: Vec<(usize, usize, f64)> = Vec::new();

    for &n in &args.sizes {
        let dataset = adult(n, args.seed)?;
        let projected = project_query_attributes(&dataset, &query)?;
        let unique = projected.unique_count();
        for &workers in &args.workers {
            let mut samples = Vec::with_capacity(args.runs);
            for run in 0..args.runs {
                let t = time_per_call(min, || per_instance_sensitivity(&projected, &query, Mechanism::laplace().norm(), workers));
                samples.push(t.as_secs_f64());
                csv.serialize(Row { op: "pis", query: name, rows: n, unique, workers, run, seconds: t.as_secs_f64() })?;
            }
            samples.sort_by(f64::total_cmp);
            medians.push((n, workers, samples[samples.len() / 2]));

            if args.search {
                let opts = SearchOptions { workers, sensitivity_override: None };
                for run in 0..args.runs {
                    let start = Instant::now();
                    let prepared = PreparedQuery::prepare(&dataset, &query, Mechanism::laplace(), opts)?;
                    let pref = PrivacyPreference::min_max_ratio(0.9)?;
                    find_epsilon_from_rdr(&prepared, &grid, &pref, &NoiseSource::new(run as u64, "bench"))?;
                    let rdr = start.elapsed().as_secs_f64();
                    csv.serialize(Row { op: "rdr_search", query: name, rows: n, unique, workers, run, seconds: rdr })?;

                    let start = Instant::now();
                    let prepared = PreparedQuery::prepare(&dataset, &query, Mechanism::laplace(), opts)?;
                    let cfg = SvtConfig::new(1.0, n, 1e-5)?;
                    find_and_release_epsilon(&prepared, &grid, &cfg, &NoiseSource::new(run as u64, "bench"))?;
                    let svt = start.elapsed().as_secs_f64();
                    csv.serialize(Row { op: "svt_search", query: name, rows: n, unique, workers, run, seconds: svt })?;
                }
            }
            csv.flush()?;
        }
    }

    for &workers in &args.workers {
        let points: Vec<(f64, f64)> = medians
            .iter()
            .filter(|(_, w, _)| *w == workers)
            .map(|&(n, _, t)| (n as f64, t))
            .collect();
        if points.len() >= 2 {
            eprintln!("pis log-log slope with {workers} worker(s): {:.3}", log_log_slope(&points));
        }
    }
    Ok(())
}
