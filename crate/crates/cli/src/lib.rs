//! `extruder` command-line front end.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod manifest;

#[cfg(test)]
mod tests;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;

use commands::{GenerateKind, GenerateOptions};
use config::{fit_overlay, LoadedConfig, ProjectConfig};
use error::{io_data, CliError, CliResult};
use manifest::ManifestBuilder;

#[derive(Debug, Parser)]
#[command(name = "extruder", version, about = "Reduced-order thermal models of an extruder barrel")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Project config; later files are overlays merged onto earlier ones.
    #[arg(long = "config")]
    pub config: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble the model and print its dimensions and stability.
    Build {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write the summary to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write synthetic input or measurement data.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        kind: GenerateKind,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        dt: f64,
        /// Length of the record [s].
        #[arg(long, default_value_t = 3000.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standard deviation of Gaussian sensor noise [K].
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Simulate sensor trajectories for an input record.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Resample the input to this step [s].
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Compare the FV model with the finite-element reference.
    FeCompare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        /// Per-sensor deviation report (CSV).
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        /// FE elements per FV cell and direction.
        #[arg(long, default_value_t = 4)]
        refine: usize,
        /// Also write both sensor trajectories.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Calibrate heat transfer parameters against measured sensors.
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Records with the inputs and the sensors on one time grid; several
        /// files are joined column-wise.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Overlay config with the fitted values.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Estimate barrel/granulate heat flows from a sensor stream.
    Observe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Observer step [s]; overrides `observer.dt`. Without either, the
        /// step between the first two samples is used.
        #[arg(long)]
        dt: Option<f64>,
        /// Keep reading as the input file grows.
        #[arg(long)]
        follow: bool,
        /// With --follow, stop after this many seconds without new data.
        #[arg(long)]
        idle_timeout: Option<f64>,
        /// Time of the profile snapshot; the last sample when absent.
        #[arg(long)]
        snapshot_time: Option<f64>,
    },
}

fn profile_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(".profile.csv");
    output.with_file_name(name)
}

fn with_suffix(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    output.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_data(path, e))
}

fn load(cfg: &ConfigArgs) -> CliResult<(LoadedConfig, String)> {
    let loaded = LoadedConfig::load(&cfg.config)?;
    let canonical = loaded.config.to_toml();
    Ok((loaded, canonical))
}

/// Run one command; returns the text to print on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Build { cfg, output } => {
            let (loaded, canonical) = load(cfg)?;
            let summary = commands::cmd_build(&loaded.config)?;
            let text = format!(
                "{summary}\nmax_real_eigenvalue={:e}\nmetzler={}\n",
                summary.max_real_eigenvalue, summary.metzler
            );
            if let Some(out) = output {
                let m = ManifestBuilder::start("build", &canonical, &loaded.files, &[]);
                write_text(out, &text)?;
                m.finish(std::slice::from_ref(out))?;
            }
            Ok(text)
        }
        Command::Generate {
            cfg,
            kind,
            output,
            dt,
            duration,
            seed,
            noise,
        } => {
            if *kind == GenerateKind::ReferenceConfig {
                // needs no input config; the manifest digests the written one
                let text = ProjectConfig::reference().to_toml();
                let m = ManifestBuilder::start("generate", &text, &[], &[]);
                write_text(output, &text)?;
                m.finish(std::slice::from_ref(output))?;
                return Ok(format!("wrote {}\n", output.display()));
            }
            let (loaded, canonical) = load(cfg)?;
            let m = ManifestBuilder::start("generate", &canonical, &loaded.files, &[]);
            {
                let opts = GenerateOptions {
                    dt: *dt,
                    duration: *duration,
                    seed: *seed,
                    noise: *noise,
                };
                let ts = commands::cmd_generate(&loaded.config, *kind, &opts)?;
                csvio::write_series(output, &ts)?;
            }
            m.finish(std::slice::from_ref(output))?;
            Ok(format!("wrote {}\n", output.display()))
        }
        Command::Simulate { cfg, input, output, dt } => {
            let (loaded, canonical) = load(cfg)?;
            let m = ManifestBuilder::start("simulate", &canonical, &loaded.files, std::slice::from_ref(input));
            let u = csvio::read_series(input)?;
            let y = commands::cmd_simulate(&loaded.config, u, *dt)?;
            csvio::write_series(output, &y)?;
            m.finish(std::slice::from_ref(output))?;
            Ok(format!("wrote {} samples to {}\n", y.len(), output.display()))
        }
        Command::FeCompare {
            cfg,
            input,
            output,
            dt,
            refine,
            traces,
        } => {
            let (loaded, canonical) = load(cfg)?;
            let m = ManifestBuilder::start("fe-compare", &canonical, &loaded.files, std::slice::from_ref(input));
            let u = csvio::read_series(input)?;
            let cmp = commands::cmd_fe_compare(&loaded.config, u, *dt, *refine)?;
            write_text(output, &commands::fe_report_series(&cmp))?;
            let mut outputs = vec![output.clone()];
            if let Some(path) = traces {
                let mut both = extruder_thermal::TimeSeries::new(cmp.fv.time().to_vec())?;
                for d in &cmp.sensors {
                    both.push_channel(&format!("fv_{}", d.label), cmp.fv.channel(&d.label).expect("fv").to_vec())?;
                    both.push_channel(&format!("fe_{}", d.label), cmp.fe.channel(&d.label).expect("fe").to_vec())?;
                }
                csvio::write_series(path, &both)?;
                outputs.push(path.clone());
            }
            m.finish(&outputs)?;
            Ok(format!(
                "{}max_abs_dev={:.4} K, rms_dev={:.4} K, max_sensor_rms_dev={:.4} K\n",
                commands::fe_report_series(&cmp),
                cmp.max_abs(),
                cmp.rms(),
                cmp.max_rms()
            ))
        }
        Command::Fit { cfg, input, output, dt } => {
            let (loaded, canonical) = load(cfg)?;
            let m = ManifestBuilder::start("fit", &canonical, &loaded.files, input);
            let parts = input
                .iter()
                .map(|p| Ok((p.clone(), csvio::read_series(p)?)))
                .collect::<CliResult<Vec<_>>>()?;
            let data = csvio::merge_series(parts)?;
            let (problem, result) = commands::cmd_fit(&loaded.config, data, *dt)?;
            let fitted = problem.spec_at(&result.p_hat)?;
            let overlay = fit_overlay(&fitted, &problem.params);
            let overlay_text = toml::to_string(&overlay).expect("overlay serializes");
            write_text(output, &overlay_text)?;
            let report = commands::fit_report(&problem, &result);
            let report_path = with_suffix(output, ".report.txt");
            write_text(&report_path, &report)?;
            m.finish(&[output.clone(), report_path])?;
            Ok(report)
        }
        Command::Observe {
            cfg,
            input,
            output,
            dt,
            follow,
            idle_timeout,
            snapshot_time,
        } => {
            let (loaded, canonical) = load(cfg)?;
            let m = ManifestBuilder::start("observe", &canonical, &loaded.files, std::slice::from_ref(input));
            let dt = match dt.or(loaded.config.observer.dt) {
                Some(dt) => dt,
                None => {
                    let file = File::open(input).map_err(|e| io_data(input, e))?;
                    if *follow {
                        let idle = idle_timeout.map(Duration::from_secs_f64);
                        commands::leading_dt(csvio::FollowReader::new(file, idle), input)?
                    } else {
                        commands::leading_dt(file, input)?
                    }
                }
            };
            let setup = commands::design_observer(&loaded.config, dt)?;
            info!(
                "observer: {} barrel states, {} heat flows, dt = {} s",
                setup.observer.n_c,
                setup.observer.n_q(),
                setup.observer.dt
            );
            let file = File::open(input).map_err(|e| io_data(input, e))?;
            let out = BufWriter::new(File::create(output).map_err(|e| io_data(output, e))?);
            let with_states = loaded.config.observer.with_states;
            let summary = if *follow {
                let idle = idle_timeout.map(Duration::from_secs_f64);
                let src = csvio::FollowReader::new(file, idle);
                commands::observe_stream(&setup, src, input, out, with_states, *snapshot_time)?
            } else {
                commands::observe_stream(&setup, file, input, out, with_states, *snapshot_time)?
            };
            let mut outputs = vec![output.clone()];
            if let Some((t, q)) = &summary.snapshot {
                let p = profile_path(output);
                write_text(&p, &commands::profile_snapshot(&setup, *t, q))?;
                outputs.push(p);
            }
            m.finish(&outputs)?;
            Ok(format!(
                "estimated {} samples ({} without sensor data) into {}\n",
                summary.samples,
                summary.skipped,
                output.display()
            ))
        }
    }
}

/// Map an error to its exit code after reporting it on stderr.
pub fn report_error(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}
