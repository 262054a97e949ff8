use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aodforest::raster::{parse_band_file_name, RasterGrid};
use aodforest_pipeline::aqi::classify_aqi;
use aodforest_pipeline::config::PipelineConfig;
use aodforest_pipeline::evaluate::evaluate;
use aodforest_pipeline::maps::{annual_map, predict_map, write_ppm, MAPS_DIR, MAP_BAND};
use aodforest_pipeline::model::Family;
use aodforest_pipeline::prepare::prepare;
use aodforest_pipeline::synth::generate_scene;
use aodforest_pipeline::train::{train, MODEL_FILE, TEST_SPLIT_FILE};
use aodforest_pipeline::{PipelineError, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "aodforest", version, about = "Satellite AOD to PM2.5 estimation pipeline")]
struct Cli {
    /// TOML configuration file; relative paths inside it resolve against its directory.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (required for `train` and `synth` unless set in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene: stations.csv, rasters/ and truth.csv.
    Synth {
        /// Destination directory (default: the config directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Build the training table from station and raster inputs.
    Prepare {
        #[arg(long)]
        start: Option<NaiveDate>,
        #[arg(long)]
        end: Option<NaiveDate>,
        /// Use AOD / PBLH as the first feature.
        #[arg(long)]
        normalize_aod: bool,
        /// Mask AOD cells whose QA class is not best.
        #[arg(long)]
        strict_qa: bool,
    },
    /// Grid-search, fit and save a model.
    Train {
        /// Prepared dataset (default: <output_dir>/dataset.csv).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        family: Option<String>,
    },
    /// Metrics of a saved model on a dataset.
    Evaluate {
        /// Default: <output_dir>/model.bin.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Default: <output_dir>/test.csv.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Daily PM2.5 maps with kriging gap fill.
    PredictMap {
        #[arg(long, required = true, num_args = 1..)]
        date: Vec<NaiveDate>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Mean of daily maps.
    AnnualMap {
        /// Daily rasters; default: every PM25_<date>.asc under <output_dir>/maps.
        files: Vec<PathBuf>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        /// Output raster (default: <output_dir>/maps/PM25_annual.asc).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AQI category of PM2.5 values.
    Aqi {
        #[arg(required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(p)
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig {
            base_dir: absolute(Path::new(".")),
            ..PipelineConfig::default()
        },
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(o) = &cli.output_dir {
        cfg.output_dir = absolute(o);
    }
    Ok(cfg)
}

fn daily_maps(dir: &Path, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files: Vec<(NaiveDate, PathBuf)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let (band, date) = parse_band_file_name(&p)?;
            (band == MAP_BAND).then_some((date, p))
        })
        .filter(|(d, _)| from.is_none_or(|f| *d >= f) && to.is_none_or(|t| *d <= t))
        .collect();
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = load_config(&cli)?;
    let out = cfg.output_dir();
    match cli.command {
        Command::Synth { out: dest, days } => {
            let seed = cfg.require_seed()?;
            if let Some(d) = days {
                cfg.synth.n_days = d;
            }
            let dest = dest.map(|d| absolute(&d)).unwrap_or_else(|| cfg.base_dir.clone());
            let s = generate_scene(&cfg.synth, seed, &dest)?;
            println!(
                "synth: {} stations, {} days, {} hourly rows, {} rasters -> {}",
                s.stations,
                s.days,
                s.hourly_rows,
                s.raster_files,
                dest.display()
            );
        }
        Command::Prepare {
            start,
            end,
            normalize_aod,
            strict_qa,
        } => {
            cfg.data.start_date = start.or(cfg.data.start_date);
            cfg.data.end_date = end.or(cfg.data.end_date);
            cfg.preprocess.normalize_aod |= normalize_aod;
            cfg.preprocess.strict_qa |= strict_qa;
            let o = prepare(&cfg)?;
            println!(
                "prepare: {} station-days in, {} rows out, dropped {:?}",
                o.counts.rows_in, o.counts.rows_out, o.counts.dropped
            );
        }
        Command::Train { dataset, family } => {
            if let Some(f) = family {
                cfg.model.family = f.parse::<Family>()?;
            }
            let o = train(&cfg, dataset.map(|d| absolute(&d)).as_deref())?;
            let best = o.table.best_index().map(|i| &o.table.rows[i]);
            println!(
                "train: {} on {} rows, best {:?}, CV RMSE {:.4} -> {}",
                o.bundle.family(),
                o.train.len(),
                o.best.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>(),
                best.and_then(|r| r.mean_score).unwrap_or(f64::NAN),
                out.join(MODEL_FILE).display()
            );
        }
        Command::Evaluate { model, dataset } => {
            let model = model.map(|m| absolute(&m)).unwrap_or_else(|| out.join(MODEL_FILE));
            let dataset = dataset.map(|d| absolute(&d)).unwrap_or_else(|| out.join(TEST_SPLIT_FILE));
            let ev = evaluate(&model, &dataset, &out)?;
            let m = ev.overall;
            println!(
                "evaluate: n {} RMSE {:.4} MAE {:.4} R2 {} APE {}",
                m.n,
                m.rmse,
                m.mae,
                m.r2.map_or("n/a".into(), |v| format!("{v:.4}")),
                m.ape.map_or("n/a".into(), |v| format!("{:.2}%", 100.0 * v))
            );
        }
        Command::PredictMap { date, model } => {
            let model = model.map(|m| absolute(&m)).unwrap_or_else(|| out.join(MODEL_FILE));
            for d in date {
                let m = predict_map(&cfg, &model, d)?;
                println!(
                    "predict-map {d}: {} predicted, {} kriged{}",
                    m.n_predicted,
                    m.n_filled,
                    m.selection.map(|s| format!(" ({} variogram)", s.kind.name())).unwrap_or_default()
                );
            }
        }
        Command::AnnualMap { files, from, to, out: dest } => {
            let files = if files.is_empty() {
                daily_maps(&out.join(MAPS_DIR), from, to)?
            } else {
                files.iter().map(|f| absolute(f)).collect()
            };
            let grids: Vec<RasterGrid> = files
                .iter()
                .map(|f| RasterGrid::read_ascii(f).map_err(|e| PipelineError::Data(format!("{}: {e}", f.display()))))
                .collect::<Result<_>>()?;
            let annual = annual_map(&grids)?;
            let dest = dest
                .map(|d| absolute(&d))
                .unwrap_or_else(|| out.join(MAPS_DIR).join(format!("{MAP_BAND}_annual.asc")));
            if let Some(dir) = dest.parent() {
                std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
            }
            annual.write_ascii(&dest)?;
            write_ppm(&annual, cfg.map.pixel_scale, &dest.with_extension("ppm"))?;
            println!("annual-map: {} daily rasters -> {}", grids.len(), dest.display());
        }
        Command::Aqi { values } => {
            for v in values {
                let c = classify_aqi(v)?;
                println!(
                    "{v}\t{}\t{}-{}{}",
                    c.category.label,
                    c.category.index_lower,
                    c.category.index_upper,
                    if c.out_of_table { "\tout_of_table" } else { "" }
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
