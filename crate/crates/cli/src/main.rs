use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fuelsurrogate_core::error::Error;
use fuelsurrogate_core::pipeline::{CoreDataset, EvaluationReport, Pipeline, RunConfig};
use fuelsurrogate_core::{extract_qois, simulate_rod, PowerHistory, QoiId, RodSpec};

#[derive(Parser)]
#[command(name = "fuelsurr", version, about = "Fuel-rod surrogate pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to these QoIs (repeatable).
    #[arg(long, global = true)]
    qoi: Vec<QoiId>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate every configured core, or a single rod history.
    Simulate {
        /// History CSV of one rod; results go to stdout and `--out`.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, requires = "history")]
        ifba: bool,
    },
    /// Build look-up tables for both rod types.
    BuildLut,
    /// Extract features of every core, or of one exported core directory.
    ExtractFeatures {
        #[arg(long)]
        core: Option<PathBuf>,
    },
    /// Draw the space-filling training design from the training cores.
    Design,
    /// Label the design with the simulator and train one model per QoI.
    Train,
    /// Score the models on the held-out cores.
    Evaluate,
    /// Flag PCI-vulnerable rods in the held-out cores or an exported core.
    ScreenCore {
        #[arg(long)]
        core: Option<PathBuf>,
    },
    /// Time the surrogates against the simulator.
    Benchmark,
    /// Every stage in order.
    Run,
}

impl Cmd {
    fn stage(&self) -> &'static str {
        match self {
            Cmd::Simulate { .. } => "simulate",
            Cmd::BuildLut => "build-lut",
            Cmd::ExtractFeatures { .. } => "extract-features",
            Cmd::Design => "design",
            Cmd::Train => "train",
            Cmd::Evaluate => "evaluate",
            Cmd::ScreenCore { .. } => "screen-core",
            Cmd::Benchmark => "benchmark",
            Cmd::Run => "run",
        }
    }
}

struct Failure {
    stage: String,
    err: anyhow::Error,
}

trait Tag<T> {
    fn tag(self, stage: &str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|e| {
            let err: anyhow::Error = e.into();
            // pipeline errors know which stage failed
            let stage = match err.downcast_ref::<Error>() {
                Some(Error::Stage { stage, .. }) => stage.clone(),
                _ => stage.to_string(),
            };
            Failure { stage, err }
        })
    }
}

fn load_config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if !c.qoi.is_empty() {
        cfg.qois = c.qoi.clone();
        cfg.lut.augmented_qois.retain(|q| c.qoi.contains(q));
    }
    Ok(cfg)
}

fn print_report(r: &EvaluationReport) {
    println!("held-out cores: {}   training samples: {}", r.test_cores.join(", "), r.n_train_samples);
    for q in &r.qois {
        for c in &q.cores {
            let r2 = if c.surrogate.r2.is_finite() {
                format!("{:.4}", c.surrogate.r2)
            } else {
                "n/a".into()
            };
            println!(
                "  {:<24} {:<10} {:<8} R² {:>8}  RMSE {:.4e}",
                q.qoi.as_str(),
                q.model,
                c.core,
                r2,
                c.surrogate.rmse
            );
        }
    }
}

fn simulate_single(p: &Pipeline, history: &Path, ifba: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let h = PowerHistory::load_csv(history)?;
    let spec = RodSpec::of_type(ifba);
    let trace = simulate_rod(&spec, &h, &p.sim)?;
    let q = extract_qois(&trace, &p.engine)?;
    let json = serde_json::to_string_pretty(&q)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let f = std::fs::File::create(dir.join("trace.csv"))?;
        trace.write_csv(std::io::BufWriter::new(f))?;
        std::fs::write(dir.join("qois.json"), &json)?;
    }
    println!("{json}");
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let stage = cli.cmd.stage();
    let cfg = load_config(&cli.common).tag("config")?;
    let p = Pipeline::new(cfg).tag("config")?;
    match cli.cmd {
        Cmd::Simulate { history: Some(h), ifba } => simulate_single(&p, &h, ifba, cli.common.out.as_deref()).tag(stage)?,
        Cmd::ExtractFeatures { core: Some(dir) } => {
            let core = CoreDataset::load_dir(&dir, &p.cfg.schedule).tag(stage)?;
            let luts = p.load_luts().unwrap_or_default();
            let ds = p.core_features(&core, None, &luts).tag(stage)?;
            let out = p.out_dir().join("features");
            std::fs::create_dir_all(&out).tag(stage)?;
            ds.save(&out, &core.name).tag(stage)?;
            println!("{} rods -> {}", ds.len(), out.join(format!("{}.csv", core.name)).display());
        }
        Cmd::ScreenCore { core: Some(dir) } => {
            let core = CoreDataset::load_dir(&dir, &p.cfg.schedule).tag(stage)?;
            let set = p.surrogate_set().tag(stage)?;
            let (summary, path) = p.screen_core(&set, &core, &core.name, None).tag(stage)?;
            println!("{} of {} rods flagged -> {}", summary.predicted_vulnerable, summary.n_rods, path.display());
        }
        Cmd::Run => {
            let (report, runtime) = p.run_all().tag(stage)?;
            print_report(&report);
            println!("simulator {:.3e} s/rod", runtime.simulator_seconds_per_rod);
        }
        Cmd::Evaluate => print_report(&p.run_evaluate().tag(stage)?),
        Cmd::Benchmark => {
            let r = p.run_benchmark().tag(stage)?;
            println!("simulator {:.3e} s/rod", r.simulator_seconds_per_rod);
            for s in &r.surrogates {
                println!("  {:<24} {:.3e} s/rod  {:.0}x", s.name, s.seconds_per_rod, s.speedup);
            }
        }
        cmd => {
            p.run_stage(cmd.stage()).tag(stage)?;
            println!("{} done -> {}", cmd.stage(), p.out_dir().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {:#}", f.stage, f.err);
            ExitCode::FAILURE
        }
    }
}
