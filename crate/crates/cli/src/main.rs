use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use satlink::harness::presets::{preset_with, PresetRun};
use satlink::harness::{emit_csv, run_scenario, ScenarioConfig};
use satlink::Error;

#[derive(Parser)]
#[command(name = "satlink", version, about = "Precoded two-beam satellite forward link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV logs.
    Run {
        /// TOML scenario file. With --preset it overrides the preset's settings.
        #[arg(required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Output directory; presets write one subdirectory per run.
        #[arg(long)]
        out: PathBuf,
        /// Master seed, overriding run.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = ["table1", "comp", "csi"])]
        preset: Option<String>,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, out, seed, preset } = Cli::parse().command;
    match run(config.as_deref(), &out, seed, preset.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("satlink: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => 2,
                _ => 3,
            })
        }
    }
}

fn run(config: Option<&Path>, out: &Path, seed: Option<u64>, preset: Option<&str>) -> satlink::Result<()> {
    let text = match config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?,
        None => String::new(),
    };
    let adjust = |cfg: &mut ScenarioConfig| {
        cfg.apply_toml(&text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(())
    };
    let runs = match preset {
        Some(name) => preset_with(name, adjust)?.into_iter().map(|r| (out.join(&r.name), r)).collect(),
        None => {
            let mut cfg = ScenarioConfig::default();
            adjust(&mut cfg)?;
            cfg.validate()?;
            let note = match config {
                Some(p) => format!("from {}", p.display()),
                None => String::new(),
            };
            vec![(
                out.to_path_buf(),
                PresetRun {
                    name: "run".to_string(),
                    config: cfg,
                    note,
                },
            )]
        }
    };
    for (dir, r) in &runs {
        let log = run_scenario(&r.config)?;
        emit_csv(&log, dir)?;
        let mut manifest = format!("# {}\n", r.name);
        for line in r.note.lines() {
            manifest.push_str(&format!("# {line}\n"));
        }
        manifest.push_str(&r.config.to_manifest());
        fs::write(dir.join("manifest.txt"), manifest)?;
        let a = &log.aggregates;
        println!(
            "{}: sinr {:.2} / {:.2} dB, goodput {:.3} Mbps -> {}",
            r.name,
            a.mean_sinr_db[0],
            a.mean_sinr_db[1],
            a.system_goodput_mbps,
            dir.display()
        );
    }
    Ok(())
}
