//! `lpuf`: enroll, serve, run a device, attack, evaluate.
//!
//! A device is identified by its `--seed`: the same seed always yields the
//! same simulated SRAM, so `enroll` and `device` agree without sharing files.

use std::fs::File;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_puf::attacks::{self, AttackOracle, OracleMode, Search};
use lattice_puf::device::{calibration_table, DatapathConfig, PufDevice};
use lattice_puf::eval::export::{export_crps, export_toy, ExportMode};
use lattice_puf::eval::toy::ArbiterPuf;
use lattice_puf::eval::{run_stats, PopulationSpec};
use lattice_puf::fe::{PokArray, DEFAULT_BER, POK_BITS};
use lattice_puf::sampler::{rng_stream, sample_zq_vec, PufRng};
use lattice_puf::server::{AuthPolicy, DeviceRecord, Registry};
use lattice_puf::wire::{self, Direction};
use lattice_puf::{Params, SecretKey};

/// Stream ids under one `--seed`.
const POK_STREAM: u64 = 0;
const ENROLL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Parser)]
#[command(name = "lpuf", version, about = "Lattice PUF simulator, server and attack harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct DeviceArgs {
    /// Seed of the simulated device (SRAM contents and read noise).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    device_id: u64,
    /// Parallel datapaths.
    #[arg(long, default_value_t = 1)]
    p1: usize,
    /// LFSR unroll factor per datapath.
    #[arg(long, default_value_t = 128)]
    p2: usize,
    /// SRAM bit error rate.
    #[arg(long, default_value_t = DEFAULT_BER)]
    ber: f64,
}

impl DeviceArgs {
    fn config(&self) -> Result<DatapathConfig> {
        Ok(DatapathConfig::new(self.p1, self.p2)?)
    }

    fn pok(&self) -> Result<PokArray> {
        Ok(PokArray::new(POK_BITS, self.ber, &mut rng_stream(self.seed, POK_STREAM))?)
    }

    fn device(&self) -> Result<PufDevice<PufRng>> {
        Ok(PufDevice::new(self.device_id, self.pok()?, self.config()?, rng_stream(self.seed, NOISE_STREAM)))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Enroll a device and write its CRP database.
    Enroll {
        #[command(flatten)]
        device: DeviceArgs,
        #[arg(long)]
        db: PathBuf,
        /// CRPs to pre-generate.
        #[arg(long, default_value_t = 1000)]
        batch: usize,
        #[arg(long, default_value_t = 100)]
        len: usize,
    },
    /// Authenticate devices over TCP.
    Serve {
        #[arg(long)]
        endpoint: String,
        /// One database per enrolled device.
        #[arg(long, required = true)]
        db: Vec<PathBuf>,
        /// Exit after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Run a device against a server.
    Device {
        #[arg(long)]
        endpoint: String,
        #[command(flatten)]
        device: DeviceArgs,
        /// Starting value of the device counter.
        #[arg(long, default_value_t = 0)]
        counter: u64,
    },
    /// Enroll in memory and run one loopback transaction.
    AuthOnce {
        #[command(flatten)]
        device: DeviceArgs,
        /// Print every frame in hex.
        #[arg(long)]
        trace: bool,
    },
    /// Key-recovery attacks.
    Attack {
        #[command(subcommand)]
        kind: AttackKind,
    },
    /// Population statistics.
    Stats {
        #[arg(long, default_value_t = 100)]
        devices: usize,
        #[arg(long, default_value_t = 1000)]
        challenges: usize,
        #[arg(long, default_value_t = DEFAULT_BER)]
        ber: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-device rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a CRP dataset for modeling attacks.
    Export {
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Compressed)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Modelled decrypt latency against the reference table.
    Latency {
        #[arg(long, default_value_t = 128)]
        len: usize,
    },
}

#[derive(Subcommand)]
enum AttackKind {
    /// Threshold-sweep key recovery.
    Active {
        #[arg(long, value_enum, default_value_t = AttackMode::Unprotected)]
        mode: AttackMode,
        #[arg(long, value_enum, default_value_t = SearchArg::Bisect)]
        search: SearchArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random ciphertexts for the clone comparison.
        #[arg(long, default_value_t = 100_000)]
        clone_trials: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackMode {
    Unprotected,
    Protected,
    Static,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    Scan,
    Bisect,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Compressed,
    /// 64-stage arbiter PUF in the same line format.
    Toy,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let out = &mut io::stdout().lock();
    match Cli::parse().command {
        Command::Enroll { device, db, batch, len } => {
            let policy = AuthPolicy::with_len(len)?;
            let mut rng = rng_stream(device.seed, ENROLL_STREAM);
            let record = DeviceRecord::enroll(
                device.device_id,
                device.pok()?.truth(),
                device.config()?,
                &policy,
                batch,
                Some(&db),
                &mut rng,
            )?;
            writeln!(
                out,
                "enrolled device {} {}: {} CRPs, next counter {}, database {}",
                record.device_id(),
                record.config(),
                record.remaining(),
                record.next_counter(),
                db.display()
            )?;
        }
        Command::Serve {
            endpoint,
            db,
            max_connections,
        } => {
            let registry = open_registry(&db)?;
            let listener = TcpListener::bind(&endpoint).with_context(|| format!("binding {endpoint}"))?;
            writeln!(out, "listening on {}", listener.local_addr()?)?;
            out.flush()?;
            wire::serve(Arc::new(registry), listener, max_connections)?;
        }
        Command::Device {
            endpoint,
            device,
            counter,
        } => {
            let mut dev = device.device()?.with_counter(counter);
            let verdict = match wire::connect_device(&mut dev, endpoint.as_str())? {
                Some(true) => "accepted",
                Some(false) => "rejected",
                None => "aborted",
            };
            writeln!(out, "{verdict} (counter now {})", dev.counter())?;
            if verdict != "accepted" {
                std::process::exit(1);
            }
        }
        Command::AuthOnce { device, trace } => {
            let registry = Registry::new(AuthPolicy::default());
            let mut rng = rng_stream(device.seed, ENROLL_STREAM);
            registry.enroll(device.device_id, device.pok()?.truth(), device.config()?, 1, &mut rng)?;
            let mut dev = device.device()?;
            let (decision, transcript) = wire::loopback_transaction(&registry, &mut dev)?;
            for (direction, frame) in &transcript {
                let arrow = if *direction == Direction::Sent { "server ->" } else { "server <-" };
                write!(out, "{arrow} type {} ({} bytes)", frame[4], frame.len())?;
                if trace {
                    write!(out, " {}", hex(frame))?;
                }
                writeln!(out)?;
            }
            writeln!(out, "{decision:?}")?;
        }
        Command::Attack {
            kind:
                AttackKind::Active {
                    mode,
                    search,
                    seed,
                    clone_trials,
                },
        } => attack(out, mode, search, seed, clone_trials)?,
        Command::Stats {
            devices,
            challenges,
            ber,
            seed,
            csv,
        } => {
            let report = run_stats(&PopulationSpec {
                num_devices: devices,
                challenges_per_device: challenges,
                ber,
                master_seed: seed,
                ..PopulationSpec::default()
            })?;
            writeln!(out, "{report}")?;
            if let Some(path) = csv {
                std::fs::write(&path, report.per_device_csv())?;
            }
        }
        Command::Export { count, mode, out: path, seed } => {
            let mut rng = rng_stream(seed, 0);
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            match mode {
                ModeArg::Toy => export_toy(&ArbiterPuf::new(64, &mut rng), count, file, &mut rng)?,
                ModeArg::Full | ModeArg::Compressed => {
                    let key = SecretKey::from_elems(sample_zq_vec(Params::lattice_puf().n(), &mut rng));
                    let mode = if matches!(mode, ModeArg::Full) { ExportMode::Full } else { ExportMode::Compressed };
                    export_crps(&key, count, mode, file, &mut rng)?;
                }
            }
            writeln!(out, "wrote {count} CRPs to {}", path.display())?;
        }
        Command::Latency { len } => {
            writeln!(out, "p1,p2,model_us,reference_us,relative_error")?;
            for cell in calibration_table(&Params::lattice_puf(), len) {
                if !cell.feasible {
                    writeln!(out, "{},{},NA,NA,NA", cell.p1, cell.p2)?;
                    continue;
                }
                let reference = cell.reference_us.map_or("NA".to_string(), |r| format!("{r:.0}"));
                let error = cell.relative_error().map_or("NA".to_string(), |e| format!("{e:+.3}"));
                writeln!(out, "{},{},{:.1},{reference},{error}", cell.p1, cell.p2, cell.model_us)?;
            }
        }
    }
    Ok(())
}

fn open_registry(paths: &[PathBuf]) -> Result<Registry> {
    let registry = Registry::new(AuthPolicy::default());
    for path in paths {
        let record = DeviceRecord::open(path).with_context(|| format!("opening {}", path.display()))?;
        if record.store().header().len != registry.policy().len() {
            bail!("{}: response length differs from the server policy", path.display());
        }
        registry.insert(record)?;
    }
    Ok(registry)
}

fn attack(out: &mut impl Write, mode: AttackMode, search: SearchArg, seed: u64, clone_trials: usize) -> Result<()> {
    let params = Params::lattice_puf();
    let mut rng = rng_stream(seed, 0);
    let key = SecretKey::from_elems(sample_zq_vec(params.n(), &mut rng));
    let search = match search {
        SearchArg::Scan => Search::Scan,
        SearchArg::Bisect => Search::Bisect,
    };
    match mode {
        AttackMode::Unprotected | AttackMode::Static => {
            let oracle_mode = if matches!(mode, AttackMode::Static) {
                OracleMode::StaticCounter
            } else {
                OracleMode::Unprotected
            };
            let mut oracle = AttackOracle::new(params, key.clone(), oracle_mode)?;
            let outcome = attacks::run_attack(&mut oracle, search, &mut rng)?;
            let agreement = attacks::clone_agreement(&outcome.key, &key, clone_trials, &mut rng);
            writeln!(out, "queries={}", outcome.queries)?;
            writeln!(out, "candidate_vectors={}", outcome.candidates)?;
            writeln!(out, "key_recovered={}", outcome.key == key)?;
            writeln!(out, "clone_agreement={agreement:.5}")?;
        }
        AttackMode::Protected => {
            let mut oracle = AttackOracle::new(params, key.clone(), OracleMode::Protected)?;
            let report = attacks::attack_protected(&mut oracle, &key, search, clone_trials, &mut rng)?;
            writeln!(out, "queries={}", report.queries)?;
            writeln!(out, "a_prime_changed={}", report.a_prime_changed)?;
            writeln!(out, "stream_divergence={:.4}", report.stream_divergence)?;
            writeln!(
                out,
                "repeat_thresholds={},{}",
                report.repeat_thresholds.0 .0, report.repeat_thresholds.1 .0
            )?;
            writeln!(out, "key_recovered={}", report.key_recovered)?;
            writeln!(out, "clone_agreement={:.5}", report.clone_agreement)?;
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
