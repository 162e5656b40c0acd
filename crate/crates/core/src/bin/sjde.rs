use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sjde::calibration::Calibration;
use sjde::config::ScenarioConfig;
use sjde::cost::{run_cost_study, write_cost_csv, CostStudyConfig};
use sjde::sim::{
    calibrate, run_sweep, run_trial, write_sweep_csv, Artifacts, OperatingPoint, Scenario, Scheme,
    SweepAxis, SweepSpec,
};
use sjde::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sjde",
    version,
    about = "Sequential joint detection and estimation for dynamic spectrum access"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation trial count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the long preamble.
    #[arg(long)]
    full_scale: bool,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.trials {
            cfg.trials = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Computes thresholds, quantizer ranges and tuned operating points.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulates individual frames of one scheme.
    Trial {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dsa-sjde")]
        scheme: Scheme,
        /// Calibration file from `calibrate`; computed in-process when omitted.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Sweeps one scenario parameter and reports every scheme.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; the default grid when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Restricts the schemes; all when omitted.
        #[arg(long)]
        scheme: Vec<Scheme>,
    },
    /// Compares combined cost of SJDE, SLRT&E and SPRT&E.
    CostStudy {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Evaluation frames.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn calibration_for(scn: &Scenario, path: Option<&PathBuf>) -> Result<Calibration> {
    match path {
        Some(p) => {
            let cal = Calibration::from_text(&std::fs::read_to_string(p)?)?;
            cal.check_hash(&scn.cfg.scenario_hash()?)?;
            Ok(cal)
        }
        None => Ok(calibrate(scn)?.0),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { common } => {
            let scn = Scenario::new(common.scenario()?)?;
            let (cal, results) = calibrate(&scn)?;
            for r in &results {
                eprintln!(
                    "{}: R_bar={:.4} Pm={:.4} Etau={:.1}",
                    r.scheme, r.stats.r_bar, r.stats.pm, r.stats.etau
                );
            }
            let mut w = common.writer()?;
            w.write_all(cal.to_text().as_bytes())?;
            w.flush()?;
        }
        Command::Trial {
            common,
            scheme,
            calibration,
        } => {
            let cfg = common.scenario()?;
            let scn = Scenario::new(cfg)?;
            let cal = calibration_for(&scn, calibration.as_ref())?;
            let art = Artifacts::from_calibration(&cal);
            let op = OperatingPoint::from_calibration(scheme, &cal)?;
            let mut w = csv::Writer::from_writer(common.writer()?);
            w.write_record([
                "frame",
                "scheme",
                "hypothesis",
                "tau",
                "decision",
                "selected_su",
                "power",
                "interference_1",
                "interference_2",
                "outage_1",
                "outage_2",
                "rate",
                "messages",
            ])?;
            for j in 0..scn.cfg.trials as u64 {
                let r = run_trial(&scn, &art, &op, scn.cfg.seed, j)?;
                w.write_record([
                    r.frame.to_string(),
                    r.scheme.to_string(),
                    r.hypothesis.label().to_string(),
                    r.tau.to_string(),
                    r.decision
                        .map_or("NA".to_string(), |d| (d as u8).to_string()),
                    r.selected_su.to_string(),
                    r.power.to_string(),
                    r.interference[0].to_string(),
                    r.interference[1].to_string(),
                    (r.outage[0] as u8).to_string(),
                    (r.outage[1] as u8).to_string(),
                    r.rate.to_string(),
                    r.messages.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::Sweep {
            common,
            axis,
            values,
            scheme,
        } => {
            let cfg = common.scenario()?;
            let spec = SweepSpec {
                axis,
                values: if values.is_empty() {
                    axis.default_grid()
                } else {
                    values
                },
                schemes: if scheme.is_empty() {
                    Scheme::ALL.to_vec()
                } else {
                    scheme
                },
            };
            let rows = run_sweep(&cfg, &spec)?;
            write_sweep_csv(&rows, common.writer()?)?;
        }
        Command::CostStudy { seed, trials, out } => {
            let mut cfg = CostStudyConfig {
                seed,
                ..Default::default()
            };
            if let Some(n) = trials {
                cfg.eval_frames = n;
            }
            let points = run_cost_study(&cfg)?;
            match out {
                Some(p) => write_cost_csv(&points, BufWriter::new(File::create(p)?))?,
                None => write_cost_csv(&points, io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
