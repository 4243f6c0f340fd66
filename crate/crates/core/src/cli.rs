//! Command-line workflows: dataset generation, stage training, evaluation,
//! ablation sweeps and embedding dumps.
//!
//! Every command is a pure function of its config file and input files. A
//! single master seed in the config derives a dedicated stream per stage
//! (`derive_seed(master, tag)` with the tags listed in [`DerivedSeeds`]),
//! so rerunning a command reproduces its datasets, checkpoints and reports
//! byte for byte. Exit codes are part of the contract: 0 success, 2 config
//! error, 3 I/O error, 4 artifact mismatch.

use crate::data::{
    export_csv, generate_synthetic, load_dataset, save_dataset, split_query_gallery, DataError,
    GenConfig, SplitTag,
};
use crate::eval::{
    dump_embeddings, embed_dataset, evaluate, EvalError, EvalReport, FeatureSource, FusionVariant,
    Metric,
};
use crate::losses::{MseVariant, TripletConfig};
use crate::model::{
    load_checkpoint, replug_wcvl, save_checkpoint, ArchConfig, Checkpoint, CheckpointMeta,
    ModelError, StageTag,
};
use crate::numerics::{derive_seed, SeededRng};
use crate::trainer::{
    train_beta_single_module, train_main, train_wcvl, ScheduleConfig, StageConfig, StageKind,
    TrainError, TrainLog, WcvlMode,
};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// A failed command, carrying the exit code the process should return.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_IO,
            message: message.into(),
        }
    }

    fn mismatch(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_MISMATCH,
            message: message.into(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match &e {
            DataError::Io(_) => Self::io(e.to_string()),
            DataError::FormatVersionMismatch { .. } | DataError::CorruptRecord(_) => {
                Self::mismatch(e.to_string())
            }
            _ => Self::config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::Io(_) => Self::io(e.to_string()),
            ModelError::InvalidArch(_) => Self::config(e.to_string()),
            _ => Self::mismatch(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::EpochOutOfRange { .. } => {
                Self::config(e.to_string())
            }
            TrainError::Io(err) => Self::io(err.to_string()),
            TrainError::Data(err) => err.into(),
            TrainError::Model(err) => err.into(),
            TrainError::StageMismatch(_) => Self::mismatch(e.to_string()),
            TrainError::Loss(_) => Self::mismatch(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match &e {
            EvalError::Io(_) => Self::io(e.to_string()),
            _ => Self::mismatch(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

/// Data section of the run config: generator parameters plus the
/// query/gallery split fraction. The generator's world seed is derived from
/// the master seed, not stored here.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub num_identities: u32,
    pub views_per_id: usize,
    pub obs_dim: usize,
    pub id_scale: f64,
    pub view_scale: f64,
    pub noise_scale: f64,
    pub query_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainStageSection {
    pub schedule: ScheduleConfig,
    pub identities_per_batch: usize,
    pub samples_per_identity: usize,
    pub triplet: TripletConfig,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcvlStageSection {
    pub schedule: ScheduleConfig,
    pub identities_per_batch: usize,
    pub samples_per_identity: usize,
    pub mse_variant: MseVariant,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub variant: FusionVariant,
    pub metric: Metric,
}

/// The whole run in one document. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub arch: ArchConfig,
    pub train_main: MainStageSection,
    pub train_wcvl: WcvlStageSection,
    pub eval: EvalSection,
    pub beta_sweep: Vec<f64>,
    pub shared_depth_sweep: Vec<usize>,
}

/// Every derived stream, by role tag.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DerivedSeeds {
    /// `world`: projection matrices of the synthetic generator.
    pub world: u64,
    /// `train-draw`: identities/angles/noise of the train split.
    pub train_draw: u64,
    /// `test-draw`: fresh identities for the evaluation pool.
    pub test_draw: u64,
    /// `split`: query/gallery partition.
    pub split: u64,
    /// `stage-main`: main-stage init and sampling.
    pub stage_main: u64,
    /// `stage-wcvl`: cross-view stage sampling.
    pub stage_wcvl: u64,
}

impl RunConfig {
    /// The reference run used throughout the regression suite.
    pub fn reference(out_dir: PathBuf) -> Self {
        let data_ref = GenConfig::reference();
        Self {
            master_seed: data_ref.seed,
            out_dir,
            data: DataSection {
                num_identities: data_ref.num_identities,
                views_per_id: data_ref.views_per_id,
                obs_dim: data_ref.obs_dim,
                id_scale: data_ref.id_scale,
                view_scale: data_ref.view_scale,
                noise_scale: data_ref.noise_scale,
                query_fraction: 0.25,
            },
            arch: ArchConfig::reference(data_ref.obs_dim),
            train_main: MainStageSection {
                schedule: ScheduleConfig::desk_main(),
                identities_per_batch: 16,
                samples_per_identity: 4,
                triplet: TripletConfig::default(),
            },
            train_wcvl: WcvlStageSection {
                schedule: ScheduleConfig::desk_wcvl(),
                identities_per_batch: 16,
                samples_per_identity: 4,
                mse_variant: MseVariant::AsWritten,
            },
            eval: EvalSection {
                variant: FusionVariant::Na,
                metric: Metric::Euclidean,
            },
            beta_sweep: vec![1.0, 1.5, 2.0, 6.0],
            shared_depth_sweep: vec![1, 2, 3, 5],
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            num_identities: self.data.num_identities,
            views_per_id: self.data.views_per_id,
            obs_dim: self.data.obs_dim,
            id_scale: self.data.id_scale,
            view_scale: self.data.view_scale,
            noise_scale: self.data.noise_scale,
            seed: self.seeds().world,
        }
    }

    pub fn seeds(&self) -> DerivedSeeds {
        DerivedSeeds {
            world: derive_seed(self.master_seed, "world"),
            train_draw: derive_seed(self.master_seed, "train-draw"),
            test_draw: derive_seed(self.master_seed, "test-draw"),
            split: derive_seed(self.master_seed, "split"),
            stage_main: derive_seed(self.master_seed, "stage-main"),
            stage_wcvl: derive_seed(self.master_seed, "stage-wcvl"),
        }
    }

    /// One seed for every β cell: the sweep isolates the re-weighting
    /// factor, so init and batch draws must coincide across cells.
    pub fn beta_seed(&self) -> u64 {
        derive_seed(self.master_seed, "stage-beta")
    }

    pub fn replug_seed(&self, shared_depth: usize) -> u64 {
        derive_seed(self.master_seed, &format!("replug-{shared_depth}"))
    }

    pub fn main_stage_config(&self) -> StageConfig {
        StageConfig {
            kind: StageKind::Main,
            schedule: self.train_main.schedule.clone(),
            identities_per_batch: self.train_main.identities_per_batch,
            samples_per_identity: self.train_main.samples_per_identity,
            triplet: self.train_main.triplet,
            mse_variant: self.train_wcvl.mse_variant,
            seed: self.seeds().stage_main,
        }
    }

    pub fn wcvl_stage_config(&self, mode: WcvlMode) -> StageConfig {
        StageConfig {
            kind: StageKind::Wcvl { mode },
            schedule: self.train_wcvl.schedule.clone(),
            identities_per_batch: self.train_wcvl.identities_per_batch,
            samples_per_identity: self.train_wcvl.samples_per_identity,
            triplet: self.train_main.triplet,
            mse_variant: self.train_wcvl.mse_variant,
            seed: self.seeds().stage_wcvl,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.gen_config()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if !(self.data.query_fraction > 0.0 && self.data.query_fraction < 1.0) {
            return Err(CliError::config(format!(
                "query_fraction must lie in (0, 1), got {}",
                self.data.query_fraction
            )));
        }
        self.arch
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.arch.obs_dim != self.data.obs_dim {
            return Err(CliError::config(format!(
                "arch obs_dim {} does not match data obs_dim {}",
                self.arch.obs_dim, self.data.obs_dim
            )));
        }
        self.main_stage_config()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.wcvl_stage_config(WcvlMode::Pluggable)
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        for b in &self.beta_sweep {
            if !(b.is_finite() && *b >= 1.0) {
                return Err(CliError::config(format!(
                    "beta sweep values must be >= 1, got {b}"
                )));
            }
        }
        for d in &self.shared_depth_sweep {
            if *d > self.arch.trunk_layers.len() {
                return Err(CliError::config(format!(
                    "shared depth {d} exceeds trunk depth {}",
                    self.arch.trunk_layers.len()
                )));
            }
        }
        Ok(())
    }
}

/// Canonical artifact locations inside the run directory.
pub struct RunPaths {
    pub out_dir: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn train_ds(&self) -> PathBuf {
        self.out_dir.join("train.xvds")
    }

    pub fn query_ds(&self) -> PathBuf {
        self.out_dir.join("query.xvds")
    }

    pub fn gallery_ds(&self) -> PathBuf {
        self.out_dir.join("gallery.xvds")
    }

    pub fn manifest(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }

    pub fn main_ckpt(&self) -> PathBuf {
        self.out_dir.join("main.xvck")
    }

    pub fn wcvl_ckpt(&self, mode: WcvlMode) -> PathBuf {
        self.out_dir.join(format!("wcvl-{mode}.xvck"))
    }

    pub fn train_log(&self, stem: &str) -> PathBuf {
        self.out_dir.join(format!("{stem}.trainlog.csv"))
    }

    pub fn report(&self, variant: &str, metric: Metric) -> PathBuf {
        self.out_dir.join(format!("report-{variant}-{metric}.json"))
    }

    pub fn report_csv(&self, variant: &str, metric: Metric) -> PathBuf {
        self.out_dir.join(format!("report-{variant}-{metric}.csv"))
    }

    pub fn ablation_csv(&self, which: &str) -> PathBuf {
        self.out_dir.join(format!("ablate-{which}.csv"))
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

/// Generates train/query/gallery datasets plus a manifest echoing the
/// resolved config and derived seeds.
pub fn cmd_gen_data(
    config: &RunConfig,
    out_dir: Option<&Path>,
    with_csv: bool,
) -> Result<(), CliError> {
    let out = out_dir.unwrap_or(&config.out_dir);
    ensure_out_dir(out)?;
    let paths = RunPaths::new(out);
    let seeds = config.seeds();
    let gen = config.gen_config();

    let train = generate_synthetic(&gen, seeds.train_draw)?;
    let pool = generate_synthetic(&gen, seeds.test_draw)?;
    let mut split_rng = SeededRng::new(seeds.split);
    let (query, gallery) = split_query_gallery(&pool, config.data.query_fraction, &mut split_rng)?;

    save_dataset(&train, &paths.train_ds())?;
    save_dataset(&query, &paths.query_ds())?;
    save_dataset(&gallery, &paths.gallery_ds())?;
    if with_csv {
        export_csv(&train, &paths.train_ds().with_extension("csv"))?;
        export_csv(&query, &paths.query_ds().with_extension("csv"))?;
        export_csv(&gallery, &paths.gallery_ds().with_extension("csv"))?;
    }

    let manifest = serde_json::json!({
        "config": config,
        "seeds": seeds,
        "records": {
            "train": train.records.len(),
            "query": query.records.len(),
            "gallery": gallery.records.len(),
        },
    });
    std::fs::write(
        paths.manifest(),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    println!(
        "wrote {} train / {} query / {} gallery records under {}",
        train.records.len(),
        query.records.len(),
        gallery.records.len(),
        out.display()
    );
    Ok(())
}

fn print_log(log: &TrainLog) {
    for e in &log.epochs {
        println!(
            "epoch {:>3}  lr {:<10.3e} ce {:<9.4} tri {:<9.4} mse {:<9.4} {:.2}s",
            e.epoch, e.lr, e.loss_ce, e.loss_tri, e.loss_mse, e.seconds
        );
    }
}

/// Trains one stage. Main stage reads the train dataset and writes a fresh
/// checkpoint; the cross-view stage additionally needs the main checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    config: &RunConfig,
    stage: &str,
    mode: Option<&str>,
    data_path: Option<&Path>,
    input_ckpt: Option<&Path>,
    output_ckpt: Option<&Path>,
) -> Result<(), CliError> {
    ensure_out_dir(&config.out_dir)?;
    let paths = RunPaths::new(&config.out_dir);
    let train_path = data_path.map(Path::to_path_buf).unwrap_or(paths.train_ds());
    let ds = load_dataset(&train_path, SplitTag::Train)?;

    match stage {
        "main" => {
            if mode.is_some() {
                return Err(CliError::config("--mode only applies to the wcvl stage"));
            }
            let out = output_ckpt.map(Path::to_path_buf).unwrap_or(paths.main_ckpt());
            let (ckpt, log) = train_main(&ds, &config.arch, &config.main_stage_config())?;
            save_checkpoint(&ckpt, &out)?;
            log.write_csv(&paths.train_log(
                out.file_stem().and_then(|s| s.to_str()).unwrap_or("main"),
            ))?;
            print_log(&log);
            println!("wrote {}", out.display());
        }
        "wcvl" => {
            let mode = match mode.unwrap_or("pluggable") {
                "pluggable" => WcvlMode::Pluggable,
                "end_to_end" => WcvlMode::EndToEnd,
                other => {
                    return Err(CliError::config(format!("unknown wcvl mode {other:?}")));
                }
            };
            let main_path = input_ckpt.map(Path::to_path_buf).unwrap_or(paths.main_ckpt());
            if !main_path.exists() {
                return Err(CliError::mismatch(format!(
                    "the wcvl stage needs a completed main checkpoint; {} does not exist",
                    main_path.display()
                )));
            }
            let main_ckpt = load_checkpoint(&main_path)?;
            let out = output_ckpt
                .map(Path::to_path_buf)
                .unwrap_or(paths.wcvl_ckpt(mode));
            let (ckpt, log) = train_wcvl(&main_ckpt, &ds, &config.wcvl_stage_config(mode))?;
            save_checkpoint(&ckpt, &out)?;
            log.write_csv(&paths.train_log(
                out.file_stem().and_then(|s| s.to_str()).unwrap_or("wcvl"),
            ))?;
            print_log(&log);
            println!("wrote {}", out.display());
        }
        other => {
            return Err(CliError::config(format!(
                "unknown stage {other:?} (expected main or wcvl)"
            )));
        }
    }
    Ok(())
}

/// Evaluates a checkpoint pair and writes the report as JSON plus a
/// one-row CSV.
#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    config: &RunConfig,
    main_ckpt_path: Option<&Path>,
    wcvl_ckpt_path: Option<&Path>,
    variant: Option<FusionVariant>,
    metric: Option<Metric>,
    query_path: Option<&Path>,
    gallery_path: Option<&Path>,
    out_json: Option<&Path>,
) -> Result<(), CliError> {
    ensure_out_dir(&config.out_dir)?;
    let paths = RunPaths::new(&config.out_dir);
    let variant = variant.unwrap_or(config.eval.variant);
    let metric = metric.unwrap_or(config.eval.metric);

    let main_ckpt = load_checkpoint(
        &main_ckpt_path
            .map(Path::to_path_buf)
            .unwrap_or(paths.main_ckpt()),
    )?;
    let wcvl_ckpt = wcvl_ckpt_path.map(load_checkpoint).transpose()?;
    let query = load_dataset(
        &query_path.map(Path::to_path_buf).unwrap_or(paths.query_ds()),
        SplitTag::Query,
    )?;
    let gallery = load_dataset(
        &gallery_path
            .map(Path::to_path_buf)
            .unwrap_or(paths.gallery_ds()),
        SplitTag::Gallery,
    )?;

    let report = evaluate(&main_ckpt, wcvl_ckpt.as_ref(), &query, &gallery, variant, metric)?;
    let json_path = out_json
        .map(Path::to_path_buf)
        .unwrap_or(paths.report(&report.variant, metric));
    report.write_json(&json_path)?;
    report.write_csv(&paths.report_csv(&report.variant, metric))?;
    println!(
        "cmc1 {:.4}  cmc5 {:.4}  cmc10 {:.4}  mAP {:.4}  CSC {:.4} ({})",
        report.cmc1, report.cmc5, report.cmc10, report.map, report.csc.value, report.variant
    );
    println!("wrote {}", json_path.display());
    Ok(())
}

fn eval_row(report: &EvalReport) -> String {
    format!(
        "{},{},{},{},{}",
        report.map, report.cmc1, report.cmc5, report.cmc10, report.csc.value
    )
}

const ABLATE_METRICS_HEADER: &str = "map,cmc1,cmc5,cmc10,csc";

/// Runs one of the named sweeps and writes an aggregated CSV, one row per
/// cell in deterministic order.
pub fn cmd_ablate(config: &RunConfig, which: &str) -> Result<(), CliError> {
    ensure_out_dir(&config.out_dir)?;
    let paths = RunPaths::new(&config.out_dir);
    let train = load_dataset(&paths.train_ds(), SplitTag::Train)?;
    let query = load_dataset(&paths.query_ds(), SplitTag::Query)?;
    let gallery = load_dataset(&paths.gallery_ds(), SplitTag::Gallery)?;

    let load_or_train_main = |paths: &RunPaths| -> Result<Checkpoint, CliError> {
        if paths.main_ckpt().exists() {
            Ok(load_checkpoint(&paths.main_ckpt())?)
        } else {
            let (ckpt, _) = train_main(&train, &config.arch, &config.main_stage_config())?;
            save_checkpoint(&ckpt, &paths.main_ckpt())?;
            Ok(ckpt)
        }
    };

    let out_path = paths.ablation_csv(which);
    let mut rows: Vec<String> = Vec::new();
    match which {
        // Single-module re-weighting: each β cell retrains from scratch.
        "beta" => {
            rows.push(format!("beta,{ABLATE_METRICS_HEADER}"));
            for &beta in &config.beta_sweep {
                let mut cfg = config.main_stage_config();
                cfg.seed = config.beta_seed();
                let (ckpt, _) = train_beta_single_module(&train, &config.arch, beta, &cfg)?;
                let report = evaluate(
                    &ckpt,
                    None,
                    &query,
                    &gallery,
                    config.eval.variant,
                    config.eval.metric,
                )?;
                rows.push(format!("{beta},{}", eval_row(&report)));
            }
        }
        // Fusion variants × distance metrics over one trained pair.
        "fusion" => {
            let main_ckpt = load_or_train_main(&paths)?;
            let (wcvl_ckpt, _) = train_wcvl(
                &main_ckpt,
                &train,
                &config.wcvl_stage_config(WcvlMode::Pluggable),
            )?;
            rows.push(format!("variant,metric,{ABLATE_METRICS_HEADER}"));
            for metric in [Metric::Euclidean, Metric::Dot] {
                for variant in [FusionVariant::An, FusionVariant::Na, FusionVariant::Nan] {
                    let report =
                        evaluate(&main_ckpt, Some(&wcvl_ckpt), &query, &gallery, variant, metric)?;
                    rows.push(format!("{variant},{metric},{}", eval_row(&report)));
                }
            }
        }
        // Cross-view branch replugged at each shared depth.
        "shared-depth" => {
            let main_ckpt = load_or_train_main(&paths)?;
            rows.push(format!("shared_depth,{ABLATE_METRICS_HEADER}"));
            for &depth in &config.shared_depth_sweep {
                let arch = ArchConfig {
                    shared_depth: depth,
                    ..config.arch.clone()
                };
                let mut rng = SeededRng::new(config.replug_seed(depth));
                let params = replug_wcvl(&main_ckpt.params, &arch, &mut rng)?;
                let replugged = Checkpoint {
                    arch,
                    meta: CheckpointMeta {
                        stage: StageTag::Main,
                        epoch: main_ckpt.meta.epoch,
                        seed: main_ckpt.meta.seed,
                        loss_history: main_ckpt.meta.loss_history.clone(),
                    },
                    params,
                };
                let (wcvl_ckpt, _) = train_wcvl(
                    &replugged,
                    &train,
                    &config.wcvl_stage_config(WcvlMode::Pluggable),
                )?;
                let report = evaluate(
                    &replugged,
                    Some(&wcvl_ckpt),
                    &query,
                    &gallery,
                    config.eval.variant,
                    config.eval.metric,
                )?;
                rows.push(format!("{depth},{}", eval_row(&report)));
            }
        }
        // Gradient cut-off versus end-to-end training of the same head.
        "mode" => {
            let main_ckpt = load_or_train_main(&paths)?;
            rows.push(format!("mode,{ABLATE_METRICS_HEADER}"));
            let mut maps = Vec::new();
            for mode in [WcvlMode::Pluggable, WcvlMode::EndToEnd] {
                let (wcvl_ckpt, _) =
                    train_wcvl(&main_ckpt, &train, &config.wcvl_stage_config(mode))?;
                let report = evaluate(
                    &main_ckpt,
                    Some(&wcvl_ckpt),
                    &query,
                    &gallery,
                    config.eval.variant,
                    config.eval.metric,
                )?;
                maps.push(report.map);
                rows.push(format!("{mode},{}", eval_row(&report)));
            }
            println!(
                "mAP difference (pluggable - end_to_end): {:+.4}",
                maps[0] - maps[1]
            );
        }
        other => {
            return Err(CliError::config(format!(
                "unknown ablation {other:?} (expected beta, fusion, shared-depth or mode)"
            )));
        }
    }

    let mut file = std::io::BufWriter::new(std::fs::File::create(&out_path)?);
    for row in &rows {
        writeln!(file, "{row}")?;
    }
    file.flush()?;
    println!("wrote {} ({} cells)", out_path.display(), rows.len() - 1);
    Ok(())
}

/// Dumps raw embeddings for every available source as CSV.
pub fn cmd_dump_embeddings(
    config: &RunConfig,
    main_ckpt_path: Option<&Path>,
    wcvl_ckpt_path: Option<&Path>,
    data_path: Option<&Path>,
    variant: Option<FusionVariant>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    ensure_out_dir(&config.out_dir)?;
    let paths = RunPaths::new(&config.out_dir);
    let variant = variant.unwrap_or(config.eval.variant);
    let main_ckpt = load_checkpoint(
        &main_ckpt_path
            .map(Path::to_path_buf)
            .unwrap_or(paths.main_ckpt()),
    )?;
    let wcvl_ckpt = wcvl_ckpt_path.map(load_checkpoint).transpose()?;
    let ds = load_dataset(
        &data_path.map(Path::to_path_buf).unwrap_or(paths.gallery_ds()),
        SplitTag::Gallery,
    )?;

    let mut sets = vec![embed_dataset(
        &main_ckpt,
        &ds,
        FeatureSource::Baseline,
        variant,
    )?];
    if let Some(w) = &wcvl_ckpt {
        sets.push(embed_dataset(w, &ds, FeatureSource::CrossView, variant)?);
        sets.push(embed_dataset(w, &ds, FeatureSource::Fused, variant)?);
    }
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or(config.out_dir.join("embeddings.csv"));
    dump_embeddings(&sets, &out_path)?;
    println!("wrote {}", out_path.display());
    Ok(())
}
