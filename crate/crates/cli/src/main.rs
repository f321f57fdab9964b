use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relay_grid::experiments::{save_config, CSV_HEADER};
use relay_grid::markov::{analyze, estimate_diversity, CurvePoint, OutageCurve, SeriesSource};
use relay_grid::sim::{run_simulation, DEFAULT_WARMUP_SLOTS};
use relay_grid::state::DEFAULT_STATE_CAP;
use relay_grid::{
    load_config, run_experiment, ChannelParams, ExperimentPreset, NetworkConfig, PolicyKind,
    PowerParams, PresetName, SimulationSpec,
};

#[derive(Parser)]
#[command(
    name = "relay-grid",
    version,
    about = "Relay selection with energy harvesting: analysis and simulation"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "RELAY_GRID_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in preset or a JSON experiment file.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for CSV files and the summary.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print a built-in preset as JSON, or write it to a file.
    Preset {
        name: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact outage probability from the Markov chain.
    Analyze {
        #[command(flatten)]
        network: NetworkArgs,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        state_cap: u64,
        /// Write the transition matrix as `state_i,state_j,prob` triplets.
        #[arg(long)]
        triplets: Option<PathBuf>,
    },
    /// Monte Carlo outage probability.
    Simulate {
        #[command(flatten)]
        network: NetworkArgs,
        #[arg(long, default_value = "proposed")]
        policy: PolicyKind,
        /// Total slots including warm-up.
        #[arg(long, default_value_t = 1_000_000)]
        slots: u64,
        #[arg(long, default_value_t = DEFAULT_WARMUP_SLOTS)]
        warmup: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Diversity order between two SNR points of a curve CSV.
    Diversity {
        csv: PathBuf,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long, default_value = "simulated")]
        source: String,
        /// Restrict to rows with this many relays.
        #[arg(long)]
        relays: Option<usize>,
    },
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long = "relays", short = 'k', default_value_t = 2)]
    num_relays: usize,
    #[arg(long = "buffer", default_value_t = 3)]
    buffer_capacity: u32,
    #[arg(long = "storage", default_value_t = 2)]
    storage_capacity: u32,
    #[arg(long, default_value_t = 1.0)]
    mean_gain: f64,
    #[arg(long = "rho", default_value_t = 0.5)]
    harvest_coeff: f64,
    #[arg(long = "alpha", default_value_t = 1.0)]
    relay_coeff: f64,
    #[arg(long = "rate", default_value_t = 1.0)]
    target_rate: f64,
    #[arg(long = "snr", default_value_t = 10.0)]
    snr_db: f64,
}

impl NetworkArgs {
    fn config(&self) -> relay_grid::Result<NetworkConfig> {
        let power = PowerParams {
            source_power: 1.0,
            relay_coeff: self.relay_coeff,
            harvest_coeff: self.harvest_coeff,
            noise_power: 1.0,
            target_rate: self.target_rate,
        };
        let _ = ChannelParams::new(self.mean_gain)?;
        Ok(NetworkConfig::uniform(
            self.num_relays,
            self.buffer_capacity,
            self.storage_capacity,
            self.mean_gain,
            power,
        )?
        .with_snr_db(self.snr_db))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> relay_grid::Result<ExitCode> {
    match command {
        Command::Run {
            preset,
            config,
            out,
        } => {
            let preset = match (preset, config) {
                (_, Some(path)) => load_config(path)?,
                (Some(name), None) => builtin(&name)?,
                (None, None) => unreachable!("clap requires one of --preset/--config"),
            };
            let report = run_experiment(&preset, Some(&out))?;
            print!("{}", report.summary());
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Preset { name, output } => {
            let preset = builtin(&name)?;
            match output {
                Some(path) => save_config(&preset, path)?,
                None => println!("{}", preset.to_json()?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            network,
            state_cap,
            triplets,
        } => {
            let config = network.config()?;
            let analysis = analyze(&config, state_cap)?;
            if let Some(path) = triplets {
                let a = relay_grid::TransitionMatrix::build(&config, state_cap)?;
                let mut file = std::io::BufWriter::new(fs::File::create(path)?);
                a.write_triplets(&mut file)?;
            }
            println!("p_out {:.12}", analysis.p_out);
            if let Some(c) = analysis.p_out_closed_form {
                println!("p_out_closed_form {c:.12}");
            }
            println!("states {}", analysis.state_count);
            println!("recurrent_states {}", analysis.stationary.class.len());
            println!("method {:?}", analysis.stationary.method);
            println!("residual {:.3e}", analysis.stationary.residual);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            network,
            policy,
            slots,
            warmup,
            seed,
        } => {
            let mut spec =
                SimulationSpec::new(network.config()?, policy, network.snr_db, slots, seed);
            spec.warmup_slots = warmup;
            let r = run_simulation(&spec)?;
            println!("p_out {:.8}", r.outage_fraction);
            println!("ci95 {:.8}", r.ci_halfwidth);
            println!("measured_slots {}", r.slots);
            println!("throughput {:.8}", r.throughput);
            println!("deadlock_slots {}", r.deadlock_slots);
            println!("final_state {}", r.final_state);
            Ok(ExitCode::SUCCESS)
        }
        Command::Diversity {
            csv,
            lo,
            hi,
            source,
            relays,
        } => {
            let curve = read_curve(&fs::read_to_string(csv)?, &source, relays)?;
            let d = estimate_diversity(&curve, lo, hi)?;
            println!("{d:.6}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn builtin(name: &str) -> relay_grid::Result<ExperimentPreset> {
    let parsed: PresetName = name.parse()?;
    ExperimentPreset::builtin(parsed).ok_or_else(|| {
        relay_grid::Error::Experiment(
            "`custom` has no built-in definition; pass --config <path>".into(),
        )
    })
}

fn read_curve(text: &str, source: &str, relays: Option<usize>) -> relay_grid::Result<OutageCurve> {
    let bad = |msg: String| relay_grid::Error::Experiment(msg);
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(format!("expected header `{CSV_HEADER}`")));
    }
    let source = match source {
        "analytical" => SeriesSource::Analytical,
        "simulated" => SeriesSource::Simulated,
        other => return Err(bad(format!("unknown source `{other}`"))),
    };
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(bad(format!("line {}: expected 11 columns", n + 2)));
        }
        if cols[2] != source.name() {
            continue;
        }
        if let Some(k) = relays {
            if cols[4].parse::<usize>().ok() != Some(k) {
                continue;
            }
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| bad(format!("line {}: {e}", n + 2)))
        };
        points.push(CurvePoint {
            snr_db: num(cols[0])?,
            p_out: num(cols[1])?,
            source,
            ci_halfwidth: if cols[10].is_empty() {
                None
            } else {
                Some(num(cols[10])?)
            },
        });
    }
    Ok(OutageCurve { points })
}
