mod config;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use padloop_core::data::files::{load_feature_rows, predictions_to_string, Prediction};
use padloop_core::data::io::write_atomic;
use padloop_core::data::{
    generate_elicitation, generate_induction, generate_unlabeled, load_elicitation, load_induction, load_trace,
    save_elicitation, save_features, save_induction, save_trace, DbnBundle, PadGpBundle, PerfGpBundle,
    TraceSidecar,
};
use padloop_core::gp::{prob_q_at_least, qot_posterior};
use padloop_core::pipeline::{fit_pad_gp, train_dbn_with, train_perf_model};
use padloop_core::signal::FeatureMode;
use padloop_core::sim::{run_closed_loop, LoopModels};
use padloop_core::{Error, ExecMode};

use config::RunConfig;

const DBN_FILE: &str = "dbn.json";
const PAD_GP_FILE: &str = "pad_gp.json";
const PERF_GP_FILE: &str = "perf_gp.json";

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERICAL: u8 = 4;

    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: msg.into(),
        }
    }

    fn io(msg: impl Into<String>) -> Self {
        Self {
            code: Self::IO,
            message: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) => Self::USAGE,
            Error::Parse { .. } | Error::Version { .. } | Error::Io { .. } => Self::IO,
            Error::Degenerate(_) | Error::Numerical(_) => Self::NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "padloop", version, about = "EEG-driven affect control loop: data, training, prediction, simulation")]
struct Cli {
    /// Run configuration (TOML). Defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; overrides the config file and the PADLOOP_SEED variable.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Feature mode; overrides the config file.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Eeg,
    Bands,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Eeg => FeatureMode::Eeg,
            ModeArg::Bands => FeatureMode::Bands,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    /// Labeled windows at stratified PAD states.
    Elicitation,
    /// Open-loop session with QoT per trial.
    Induction,
    /// Unlabeled feature rows for network pretraining.
    Pretrain,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Dbn,
    PadGp,
    PerfGp,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        out: PathBuf,
        /// Rows to generate; defaults to the config count for the kind.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one stage of the model and write its bundle.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
        /// Elicitation data (dbn, pad-gp) or induction data (perf-gp).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Unlabeled rows for pretraining (dbn stage).
        #[arg(long)]
        pretrain_data: Option<PathBuf>,
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// PAD and QoT posteriors for each feature row.
    Predict {
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long)]
        features_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the closed loop and write its trace.
    Simulate {
        #[arg(long, value_enum)]
        control: Option<OnOff>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize one trace, or compare two.
    Report {
        #[arg(long = "trace", required = true, num_args = 1)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-step table for plotting.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn kv(key: &str, value: impl fmt::Display) {
    println!("{key}={value}");
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(format!("missing {what}: {}", path.display())))
    }
}

fn gen_data(cfg: &RunConfig, kind: DataKind, out: &Path, count: Option<usize>) -> CliResult<()> {
    let p = cfg.pipeline();
    let mode = ExecMode::default();
    ensure_parent(out)?;
    let rows = match kind {
        DataKind::Elicitation => {
            let n = count.unwrap_or(cfg.elicitation_count);
            save_elicitation(out, &generate_elicitation(&cfg.sim, &p.features, n, cfg.seed, mode)?)?;
            n
        }
        DataKind::Induction => {
            let n = count.unwrap_or(cfg.induction_count);
            save_induction(out, &generate_induction(&cfg.sim, &p.features, n, cfg.seed, mode)?)?;
            n
        }
        DataKind::Pretrain => {
            let n = count.unwrap_or(cfg.pretrain_count);
            save_features(out, &generate_unlabeled(&cfg.sim, &p.features, n, cfg.seed, mode)?)?;
            n
        }
    };
    kv("mode", p.features.mode);
    kv("rows", rows);
    kv("out", out.display());
    Ok(())
}

fn train(
    cfg: &RunConfig,
    stage: Stage,
    data: Option<PathBuf>,
    pretrain_data: Option<PathBuf>,
    model_dir: &Path,
) -> CliResult<()> {
    let p = cfg.pipeline();
    std::fs::create_dir_all(model_dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", model_dir.display())))?;
    match stage {
        Stage::Dbn => {
            let path = data.unwrap_or_else(|| cfg.paths.elicitation.clone());
            require(&path, "elicitation data")?;
            let el = load_elicitation(&path)?;
            let unlabeled = if cfg.pretrain_count > 0 || pretrain_data.is_some() {
                let pre = pretrain_data.unwrap_or_else(|| cfg.paths.pretrain.clone());
                require(&pre, "pretraining data")?;
                let t = load_feature_rows(&pre)?;
                if t.mode != p.features.mode {
                    return Err(CliError::usage(format!(
                        "pretraining data is {} mode, run is {} mode",
                        t.mode, p.features.mode
                    )));
                }
                Some(t.features)
            } else {
                None
            };
            let bundle = train_dbn_with(&el, unlabeled.as_ref(), &p)?;
            let out = model_dir.join(DBN_FILE);
            bundle.save(&out)?;
            let arch: Vec<String> = bundle.feature_map.dbn.architecture.iter().map(|w| w.to_string()).collect();
            kv("stage", "dbn");
            kv("architecture", arch.join("-"));
            kv("pretrain_rows", unlabeled.as_ref().map_or(0, |u| u.nrows()));
            if let Some(r) = bundle.free_energy_ratio {
                kv("free_energy_ratio", r);
            }
            kv("finetune_initial_loss", bundle.finetune.initial_train_loss);
            kv("train_mse", bundle.finetune.final_train_loss);
            kv("validation_mse", bundle.finetune.best_validation_loss);
            kv("best_epoch", bundle.finetune.best_epoch);
            kv("out", out.display());
        }
        Stage::PadGp => {
            let path = data.unwrap_or_else(|| cfg.paths.elicitation.clone());
            require(&path, "elicitation data")?;
            let dbn_path = model_dir.join(DBN_FILE);
            require(&dbn_path, "DBN bundle")?;
            let el = load_elicitation(&path)?;
            let dbn = DbnBundle::load(&dbn_path)?;
            let (bundle, _) = fit_pad_gp(&el, &dbn, &p)?;
            let out = model_dir.join(PAD_GP_FILE);
            bundle.save(&out)?;
            kv("stage", "pad-gp");
            kv("train_mse", bundle.train_mse);
            if let Some(v) = bundle.validation_mse {
                kv("validation_mse", v);
            }
            kv("out", out.display());
        }
        Stage::PerfGp => {
            let path = data.unwrap_or_else(|| cfg.paths.induction.clone());
            require(&path, "induction data")?;
            let pad_path = model_dir.join(PAD_GP_FILE);
            require(&pad_path, "PAD GP bundle")?;
            let ind = load_induction(&path)?;
            let pad = PadGpBundle::load(&pad_path)?.model()?;
            let trained = train_perf_model(&ind, &pad, &p, ExecMode::default())?;
            let out = model_dir.join(PERF_GP_FILE);
            trained.bundle.save(&out)?;
            kv("stage", "perf-gp");
            kv("alpha", trained.bundle.kernel.alpha);
            kv("beta", trained.bundle.kernel.beta);
            kv("train_mse", trained.bundle.train_mse);
            if let Some(v) = trained.bundle.validation_mse {
                kv("validation_mse", v);
            }
            kv("out", out.display());
        }
    }
    Ok(())
}

fn load_models(model_dir: &Path) -> CliResult<(PadGpBundle, PerfGpBundle)> {
    let pad_path = model_dir.join(PAD_GP_FILE);
    let perf_path = model_dir.join(PERF_GP_FILE);
    require(&pad_path, "PAD GP bundle")?;
    require(&perf_path, "performance GP bundle")?;
    Ok((PadGpBundle::load(&pad_path)?, PerfGpBundle::load(&perf_path)?))
}

fn predict(cfg: &RunConfig, model_dir: &Path, features_file: &Path, out: &Path) -> CliResult<()> {
    require(features_file, "features file")?;
    let (pad_b, perf_b) = load_models(model_dir)?;
    let rows = load_feature_rows(features_file)?;
    if rows.mode != pad_b.features.mode {
        return Err(CliError::usage(format!(
            "features file has {} features per row, the model expects {}",
            rows.mode.dim(),
            pad_b.features.mode.dim()
        )));
    }
    let (pad, perf) = (pad_b.model()?, perf_b.model()?);
    let q_r = cfg.controller.q_r;
    let preds = (0..rows.ids.len())
        .map(|r| {
            let e: Vec<f64> = rows.features.row(r).iter().copied().collect();
            let pp = pad.posterior_values(&e)?;
            let qp = qot_posterior(&perf, &pp)?;
            Ok(Prediction {
                id: rows.ids[r].clone(),
                pad: pp,
                qot: qp,
                prob: prob_q_at_least(&qp, q_r),
            })
        })
        .collect::<padloop_core::Result<Vec<_>>>()?;
    ensure_parent(out)?;
    write_atomic(out, predictions_to_string(&preds, q_r)?.as_bytes())?;
    kv("rows", preds.len());
    kv("out", out.display());
    Ok(())
}

fn simulate(cfg: &RunConfig, control: bool, horizon: usize, model_dir: &Path, out: &Path) -> CliResult<()> {
    let (pad_b, perf_b) = load_models(model_dir)?;
    let (pad, perf) = (pad_b.model()?, perf_b.model()?);
    let models = LoopModels {
        pad_gp: &pad,
        perf_gp: &perf,
        features: &pad_b.features,
    };
    let trace = run_closed_loop(models, &cfg.sim, &cfg.controller, horizon, control, cfg.seed)?;
    let configs = serde_json::json!({
        "sim": cfg.sim,
        "controller": cfg.controller,
    });
    let sidecar = TraceSidecar {
        meta: trace.meta.clone(),
        q_r: cfg.controller.q_r,
        beta_r: cfg.controller.beta_r,
        configs,
    };
    ensure_parent(out)?;
    save_trace(out, &trace, &sidecar)?;
    kv("steps", trace.steps.len());
    kv("control", if control { "on" } else { "off" });
    kv("mean_q", trace.mean_q());
    kv("frac_q_at_least", trace.frac_at_least(cfg.controller.q_r));
    kv("stimuli", trace.stimulus_count());
    kv("out", out.display());
    if let Some(reason) = &trace.meta.aborted {
        return Err(CliError {
            code: CliError::NUMERICAL,
            message: format!("loop aborted at step {}: {reason}", trace.steps.len()),
        });
    }
    Ok(())
}

fn report_cmd(traces: &[PathBuf], out: &Path, table: Option<&Path>) -> CliResult<()> {
    if traces.len() > 2 {
        return Err(CliError::usage("report takes one or two traces"));
    }
    let mut loaded = Vec::new();
    for path in traces {
        require(path, "trace")?;
        let (t, side) = load_trace(path)?;
        loaded.push((path.display().to_string(), t, side.q_r));
    }
    let summaries: Vec<_> = loaded.iter().map(|(n, t, q_r)| report::summarize(n, t, *q_r)).collect();
    ensure_parent(out)?;
    write_atomic(out, report::summary_csv(&summaries)?.as_bytes())?;
    if let Some(tp) = table {
        let named: Vec<_> = loaded.iter().map(|(n, t, _)| (n.clone(), t)).collect();
        ensure_parent(tp)?;
        write_atomic(tp, report::steps_csv(&named)?.as_bytes())?;
    }
    for (i, s) in summaries.iter().enumerate() {
        let p = if summaries.len() == 1 { String::new() } else { format!("trace{}_", i + 1) };
        kv(&format!("{p}steps"), s.steps);
        kv(&format!("{p}mean_q"), s.mean_q);
        kv(&format!("{p}frac_q_at_least"), s.frac_q_at_least);
        kv(&format!("{p}stimuli_nonnull"), s.stimuli_nonnull);
    }
    if summaries.len() == 2 {
        let d = report::paired(&summaries[0], &summaries[1]);
        kv("diff_mean_q", d.mean_q);
        kv("diff_frac_q_at_least", d.frac_q_at_least);
    }
    kv("out", out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    if let Some(m) = cli.mode {
        cfg.mode = m.into();
    }
    cfg.validate()?;
    match cli.command {
        Command::GenData { kind, out, count } => gen_data(&cfg, kind, &out, count),
        Command::Train {
            stage,
            data,
            pretrain_data,
            model_dir,
        } => {
            let dir = model_dir.unwrap_or_else(|| cfg.paths.model_dir.clone());
            train(&cfg, stage, data, pretrain_data, &dir)
        }
        Command::Predict {
            model_dir,
            features_file,
            out,
        } => {
            let dir = model_dir.unwrap_or_else(|| cfg.paths.model_dir.clone());
            predict(&cfg, &dir, &features_file, &out)
        }
        Command::Simulate {
            control,
            horizon,
            model_dir,
            out,
        } => {
            let dir = model_dir.unwrap_or_else(|| cfg.paths.model_dir.clone());
            let control = control.map_or(cfg.control_enabled, |c| matches!(c, OnOff::On));
            let horizon = horizon.unwrap_or(cfg.horizon);
            if horizon == 0 {
                return Err(CliError::usage("horizon must be >= 1"));
            }
            let out = out.unwrap_or_else(|| cfg.paths.trace.clone());
            simulate(&cfg, control, horizon, &dir, &out)
        }
        Command::Report { traces, out, table } => report_cmd(&traces, &out, table.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
