mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fogran::harness::{aggregate, read_raw_csv, run_scenario, write_agg_csv, write_raw_csv, AggRow, RawRow, AGG_SCHEMA, RAW_SCHEMA};
use fogran::metrics::Scheme;
use fogran::scenario::{preset, ScenarioSpec, PRESETS};

use plot::{Chart, Series};

#[derive(Parser)]
#[command(name = "fogran", version, about = "CRAN vs FogRAN downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a previous run's manifest.json).
    Run {
        scenario: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "fogran-out")]
        out: PathBuf,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Base preset, replacing the file's own `preset` key.
        #[arg(long)]
        preset: Option<String>,
        /// Skip the SVG charts.
        #[arg(long)]
        no_plots: bool,
    },
    /// List presets, or print one as a complete scenario file.
    Presets {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        scenario: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw the rate and delay charts from a raw.csv.
    Plot {
        raw: PathBuf,
        /// Directory for the SVGs (default: next to raw.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes, each with its own exit status.
enum Failure {
    Scenario(anyhow::Error),
    Run(anyhow::Error),
    Output(anyhow::Error),
    Plot(anyhow::Error),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, what, err) = match self {
            Failure::Scenario(e) => (3, "invalid scenario", e),
            Failure::Run(e) => (4, "run failed", e),
            Failure::Output(e) => (5, "cannot write outputs", e),
            Failure::Plot(e) => (6, "cannot plot", e),
        };
        eprintln!("fogran: {what}: {err:#}");
        ExitCode::from(code)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    scenario_path: Option<String>,
    preset_override: Option<String>,
    master_seed: u64,
    threads: usize,
    output_dir: String,
    started_utc: String,
    finished_utc: String,
    raw_schema: String,
    agg_schema: String,
    raw_rows: usize,
    failed_rows: usize,
    files: Vec<String>,
    /// Complete resolved scenario; running it again reproduces the CSVs.
    scenario: String,
}

fn now() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

fn load_spec(path: Option<&Path>, base: Option<&str>, seed: Option<u64>) -> anyhow::Result<ScenarioSpec> {
    let mut spec = match path {
        Some(p) if p.extension().is_some_and(|e| e == "json") => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let manifest: Manifest =
                serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", p.display()))?;
            ScenarioSpec::parse_with_preset(&manifest.scenario, base)?
        }
        Some(p) => ScenarioSpec::from_file(p, base)?,
        None => match base {
            Some(name) => preset(name)?,
            None => bail!("give a scenario file or --preset"),
        },
    };
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    spec.resolve()?;
    Ok(spec)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn fmt_variance(v: f64) -> String {
    format!("{v}")
}

/// Sweep points ordered by index, from aggregated rows.
fn categories(agg: &[AggRow]) -> Vec<(usize, f64)> {
    let mut cats: Vec<(usize, f64)> = agg.iter().map(|a| (a.sigma_index, a.error_variance)).collect();
    cats.sort_by_key(|c| c.0);
    cats.dedup_by_key(|c| c.0);
    cats
}

fn charts(raw: &[RawRow]) -> (Chart, Chart) {
    let agg = aggregate(raw);
    let cats = categories(&agg);
    let labels: Vec<String> = cats.iter().map(|c| fmt_variance(c.1)).collect();
    let mut schemes: Vec<Scheme> = agg.iter().map(|a| a.scheme).collect();
    schemes.sort();
    schemes.dedup();
    let mut packets: Vec<f64> = agg.iter().map(|a| a.packet_bits).collect();
    packets.sort_by(f64::total_cmp);
    packets.dedup();

    let point = |scheme: Scheme, packet: f64, idx: usize, f: &dyn Fn(&AggRow) -> (f64, f64)| {
        agg.iter()
            .find(|a| a.scheme == scheme && a.packet_bits == packet && a.sigma_index == idx)
            .map_or((f64::NAN, 0.0), f)
    };

    let rate = Chart {
        title: "Sum-rate vs CSI error variance".into(),
        x_label: "CSI error variance".into(),
        y_label: "mean sum-rate (Mbit/s)".into(),
        categories: labels.clone(),
        series: schemes
            .iter()
            .map(|&s| Series {
                label: s.to_string(),
                points: cats
                    .iter()
                    .map(|c| point(s, packets[0], c.0, &|a| (a.sum_rate_mean_bps / 1e6, a.sum_rate_ci95_bps / 1e6)))
                    .collect(),
            })
            .collect(),
        log_y: false,
    };
    let delay = Chart {
        title: "Mean packet delay vs CSI error variance".into(),
        x_label: "CSI error variance".into(),
        y_label: "mean delay (ms)".into(),
        categories: labels,
        series: schemes
            .iter()
            .flat_map(|&s| packets.iter().map(move |&p| (s, p)))
            .map(|(s, p)| Series {
                label: format!("{s}, {} kbit", p / 1e3),
                points: cats
                    .iter()
                    .map(|c| point(s, p, c.0, &|a| (a.mean_delay_mean_s * 1e3, a.mean_delay_ci95_s * 1e3)))
                    .collect(),
            })
            .collect(),
        log_y: true,
    };
    (rate, delay)
}

fn write_charts(raw: &[RawRow], dir: &Path) -> anyhow::Result<Vec<String>> {
    let (rate, delay) = charts(raw);
    let mut names = Vec::new();
    for (name, chart) in [("rate_sweep.svg", rate), ("delay_sweep.svg", delay)] {
        write_file(&dir.join(name), chart.to_svg().as_bytes())?;
        names.push(name.to_string());
    }
    Ok(names)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    threads: Option<usize>,
    base: Option<String>,
    no_plots: bool,
) -> Result<(), Failure> {
    let spec = load_spec(scenario.as_deref(), base.as_deref(), seed).map_err(Failure::Scenario)?;
    let resolved = spec.resolve().map_err(|e| Failure::Scenario(e.into()))?;
    let snapshot = spec.to_toml().map_err(|e| Failure::Scenario(e.into()))?;

    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Scenario(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.into()))?;
    }
    let started = now();
    eprintln!(
        "running {} scheme(s) x {} sweep point(s) x {} drop(s) on {} thread(s)",
        resolved.schemes.len(),
        resolved.sweep.len(),
        resolved.drops,
        rayon::current_num_threads()
    );
    let results = run_scenario(&resolved).map_err(|e| Failure::Run(e.into()))?;
    let finished = now();

    let write = || -> anyhow::Result<()> {
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let mut raw = Vec::new();
        write_raw_csv(&mut raw, &results.raw)?;
        write_file(&out.join("raw.csv"), &raw)?;
        let mut agg = Vec::new();
        write_agg_csv(&mut agg, &results.agg)?;
        write_file(&out.join("agg.csv"), &agg)?;
        write_file(&out.join("scenario.resolved.toml"), snapshot.as_bytes())?;
        let mut files = vec!["raw.csv".to_string(), "agg.csv".into(), "scenario.resolved.toml".into()];
        if !no_plots {
            files.extend(write_charts(&results.raw, &out)?);
        }
        files.push("manifest.json".into());
        let manifest = Manifest {
            tool: "fogran".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario_path: scenario.as_ref().map(|p| p.display().to_string()),
            preset_override: base.clone(),
            master_seed: spec.master_seed,
            threads: rayon::current_num_threads(),
            output_dir: out.display().to_string(),
            started_utc: started.clone(),
            finished_utc: finished.clone(),
            raw_schema: RAW_SCHEMA.into(),
            agg_schema: AGG_SCHEMA.into(),
            raw_rows: results.raw.len(),
            failed_rows: results.raw.iter().filter(|r| !r.ok()).count(),
            files,
            scenario: snapshot.clone(),
        };
        write_file(&out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    };
    write().map_err(Failure::Output)?;

    for a in &results.agg {
        println!(
            "{:<12} var={:<6} P={:>6.0} bit  sum-rate {:>9.2} +/- {:>7.2} Mbit/s  delay {:>10.4} +/- {:>9.4} ms{}",
            a.scheme.to_string(),
            a.error_variance,
            a.packet_bits,
            a.sum_rate_mean_bps / 1e6,
            a.sum_rate_ci95_bps / 1e6,
            a.mean_delay_mean_s * 1e3,
            a.mean_delay_ci95_s * 1e3,
            if a.failed_drops > 0 { format!("  ({} failed)", a.failed_drops) } else { String::new() }
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_presets(name: Option<String>) -> Result<(), Failure> {
    match name {
        Some(n) => {
            let spec = preset(&n).map_err(|e| Failure::Scenario(e.into()))?;
            print!("{}", spec.to_toml().map_err(|e| Failure::Scenario(e.into()))?);
        }
        None => {
            for n in PRESETS {
                let s = preset(n).expect("built-in preset");
                let t = &s.topology;
                println!(
                    "{n:<12} {} macro + {} pico APs, {} users, {} drops x {} frames, period {}",
                    t.num_macro, t.num_pico, t.num_users, s.drops, s.frames_per_drop, s.preschedule_period
                );
            }
        }
    }
    Ok(())
}

fn cmd_validate(scenario: Option<PathBuf>, base: Option<String>, seed: Option<u64>) -> Result<(), Failure> {
    let spec = load_spec(scenario.as_deref(), base.as_deref(), seed).map_err(Failure::Scenario)?;
    let s = spec.resolve().map_err(|e| Failure::Scenario(e.into()))?;
    println!(
        "ok: {} APs, {} users, {} scheme(s), sweep {:?}, {} drop(s) x {} frame(s), {} raw rows",
        s.topology.num_macro + s.topology.num_pico,
        s.topology.num_users,
        s.schemes.len(),
        s.sweep,
        s.drops,
        s.frames_per_drop,
        s.schemes.len() * s.sweep.len() * s.drops * s.packet_sizes_bits.len()
    );
    Ok(())
}

fn cmd_plot(raw: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = fs::File::open(&raw)
        .with_context(|| format!("opening {}", raw.display()))
        .map_err(Failure::Plot)?;
    let rows = read_raw_csv(file)
        .with_context(|| format!("reading {}", raw.display()))
        .map_err(Failure::Plot)?;
    if rows.is_empty() {
        return Err(Failure::Plot(anyhow::anyhow!("{} has no rows", raw.display())));
    }
    let dir = out.unwrap_or_else(|| raw.parent().map(Path::to_path_buf).unwrap_or_default());
    let names = fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .and_then(|_| write_charts(&rows, &dir))
        .map_err(Failure::Output)?;
    for n in names {
        println!("{}", dir.join(n).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            threads,
            preset,
            no_plots,
        } => cmd_run(scenario, out, seed, threads, preset, no_plots),
        Command::Presets { preset } => cmd_presets(preset),
        Command::Validate { scenario, preset, seed } => cmd_validate(scenario, preset, seed),
        Command::Plot { raw, out } => cmd_plot(raw, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
