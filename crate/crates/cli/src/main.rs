use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dprov_core::harness::experiment::{
    aggregate, mean_curves, read_summary, read_trace, run_experiment, write_csv_rows,
    write_outputs, ExperimentSpec, Prepared,
};
use dprov_core::harness::synthetic::{adult_like, adult_like_schema, SyntheticConfig};
use dprov_core::io::{load_dataset, read_csv_path, save_dataset, write_csv, SchemaFile};
use dprov_core::model::build_view;

#[derive(Parser)]
#[command(
    name = "dprov",
    version,
    about = "Multi-analyst private query engine and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a headed CSV into the binary dataset format.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the view declarations implied by a schema file as JSON.
    BuildViews {
        #[arg(long)]
        schema: PathBuf,
        /// Also materialize against this binary dataset and report bin counts.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment spec and write reports into a directory.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a run directory into plot-ready tables.
    Report {
        /// Directory written by `run`.
        #[arg(long)]
        input: PathBuf,
        /// Destination directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic census-like dataset as CSV plus its schema.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Ingest { csv, schema, out } => {
            let attrs = SchemaFile::load(&schema)
                .with_context(|| format!("reading schema {}", schema.display()))?
                .attributes()?;
            let data =
                read_csv_path(&csv, attrs).with_context(|| format!("reading {}", csv.display()))?;
            save_dataset(&out, &data).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "ingested {} rows x {} attributes into {}",
                data.len(),
                data.schema().len(),
                out.display()
            );
        }
        Command::BuildViews {
            schema,
            dataset,
            out,
        } => {
            let file = SchemaFile::load(&schema)
                .with_context(|| format!("reading schema {}", schema.display()))?;
            file.attributes()?;
            let specs = file.view_specs();
            let json = match dataset {
                None => serde_json::to_string_pretty(&specs)?,
                Some(path) => {
                    let data = load_dataset(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let summary = specs
                        .iter()
                        .map(|s| {
                            let v = build_view(&data, s)?;
                            Ok(serde_json::json!({
                                "id": v.id,
                                "attributes": v.attributes,
                                "bins": v.bin_count(),
                                "rows": v.total(),
                            }))
                        })
                        .collect::<dprov_core::Result<Vec<_>>>()?;
                    serde_json::to_string_pretty(&summary)?
                }
            };
            match out {
                Some(p) => {
                    fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?
                }
                None => println!("{json}"),
            }
        }
        Command::Run { spec, out } => {
            let parsed = ExperimentSpec::load(&spec)
                .with_context(|| format!("reading spec {}", spec.display()))?;
            let prepared = Prepared::new(&parsed)?;
            let results = run_experiment(&parsed, &prepared)?;
            write_outputs(&out, &parsed, &results)?;
            fs::write(out.join("spec.toml"), fs::read_to_string(&spec)?)?;
            println!(
                "{:<12} {:>7} {:>8} {:>5} {:>5} {:>9} {:>7}",
                "mechanism", "psi", "delta", "n", "seed", "answered", "ndcfg"
            );
            for r in &results {
                let c = &r.cell;
                println!(
                    "{:<12} {:>7} {:>8.0e} {:>5} {:>5} {:>9} {:>7.3}",
                    c.mechanism.name(),
                    c.table_cap,
                    c.delta,
                    c.analysts,
                    c.seed,
                    r.report.answered,
                    r.report.ndcfg
                );
            }
            println!("wrote {} cells to {}", results.len(), out.display());
        }
        Command::Report { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            fs::create_dir_all(&out)?;
            let summary = input.join("summary.csv");
            if !summary.exists() {
                bail!(
                    "{} has no summary.csv; point --input at a `run` output directory",
                    input.display()
                );
            }
            let rows = aggregate(&read_summary(&summary)?);
            write_csv_rows(&out.join("aggregate.csv"), &rows)?;
            let mut traces = Vec::new();
            let dir = input.join("traces");
            if dir.is_dir() {
                let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<std::io::Result<_>>()?;
                paths.sort();
                for p in paths
                    .iter()
                    .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                {
                    traces.push(read_trace(p).with_context(|| format!("reading {}", p.display()))?);
                }
            }
            write_csv_rows(&out.join("budget_curves.csv"), &mean_curves(&traces))?;
            println!(
                "{:<12} {:>7} {:>8} {:>5} {:>6} {:>10} {:>8} {:>10}",
                "mechanism", "psi", "delta", "n", "tau", "answered", "ndcfg", "budget"
            );
            for r in &rows {
                println!(
                    "{:<12} {:>7} {:>8.0e} {:>5} {:>6} {:>10.1} {:>8.3} {:>10.3}",
                    r.mechanism.name(),
                    r.table_cap,
                    r.delta,
                    r.analysts,
                    r.tau,
                    r.answered_mean,
                    r.ndcfg_mean,
                    r.consumed_budget_mean
                );
            }
        }
        Command::Synth {
            rows,
            skew,
            seed,
            csv,
            schema,
        } => {
            let data = adult_like(&SyntheticConfig { rows, skew, seed })?;
            write_csv(fs::File::create(&csv)?, &data)?;
            let file = SchemaFile::from_attributes(&adult_like_schema());
            fs::write(&schema, serde_json::to_string_pretty(&file)?)?;
            println!(
                "wrote {rows} rows to {} and schema to {}",
                csv.display(),
                schema.display()
            );
        }
    }
    Ok(())
}
