use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use segkit::augment::{apply_augmentation, apply_spatial_to_label, expansion_plan, reduce_tumor_signal, AugmentationKind, AugmentationSpec};
use segkit::ensemble::{argmax_labels, ensemble_probs};
use segkit::losses::{combined_loss, cross_entropy_loss, dice_loss, LossInput, LossWeights};
use segkit::metrics::{evaluate_case, feature_stats, frechet_distance, summarize};
use segkit::pipeline::{
    assemble_round, lr_at_epoch, prediction_manifest, run_model, schedule, CasePools, DatasetManifest, PoolCase, RunMode,
    RunnerConfig, ScheduleSpec,
};
use segkit::postprocess::keep_largest_component;
use segkit::preprocess::{preprocess_image, preprocess_label, ResampleSpec};
use segkit::volume::{read_label_volume, read_probability_map, read_volume, write_class_map, write_nifti, write_probability_map};

#[derive(Parser)]
#[command(name = "segkit", version, about = "Preprocessing, augmentation, metrics and self-training bookkeeping for 3D segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample to isotropic spacing, crop/pad in-plane, optionally z-score.
    Preprocess(PreprocessArgs),
    /// Apply one seeded augmentation.
    Augment(AugmentArgs),
    /// Scale the intensity of the tumour (class 1) voxels.
    ReduceTumor(ReduceTumorArgs),
    /// Evaluate a loss between a probability map and a label volume.
    Loss(LossArgs),
    /// Dice and ASSD per class, written as a JSON report.
    Metrics(MetricsArgs),
    /// Frechet distance between two feature matrices (CSV, one row per sample).
    Fid(FidArgs),
    /// Keep only the largest connected component of one class.
    Postprocess(PostprocessArgs),
    /// Average probability maps and take the argmax.
    Ensemble(EnsembleArgs),
    /// Self-training manifests and the external model runner.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Learning rate of the translation network at an epoch.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Treat the input as a label volume (nearest-neighbour resampling).
    #[arg(long)]
    label: bool,
    /// Target spacing in mm: one value or three, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    spacing: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    xy: Vec<usize>,
    /// Z-score the result (images only). Applied after crop/pad.
    #[arg(long)]
    normalize: bool,
    /// Image interpolation order: 0, 1 or 3.
    #[arg(long, default_value_t = 3)]
    order: u8,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    kind: AugmentationKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Label volume to warp with the same transform (spatial kinds only).
    #[arg(long)]
    label: Option<PathBuf>,
    #[arg(long, requires = "label")]
    label_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceTumorArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    label: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    factor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossKind {
    Dice,
    Ce,
    Combined,
}

#[derive(Args)]
struct LossArgs {
    /// 4D probability map.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum, default_value_t = LossKind::Combined)]
    kind: LossKind,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    dice_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    ce_weight: f64,
    /// Write the gradient as a 4D float32 volume.
    #[arg(long)]
    gradient: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Predicted label volumes, one per case.
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    /// Reference label volumes in the same order.
    #[arg(long, num_args = 1.., required = true)]
    truth: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    classes: Vec<u8>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FidArgs {
    #[arg(long)]
    features_a: PathBuf,
    #[arg(long)]
    features_b: PathBuf,
    /// The CSV files start with a header row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "class", default_value_t = segkit::CLASS_VS)]
    class_id: u8,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long, num_args = 1.., required = true)]
    probs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Class whose largest component alone is kept after the argmax.
    #[arg(long)]
    keep_largest: Option<u8>,
    /// Also write the averaged probability map.
    #[arg(long)]
    probs_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Build the manifest of a self-training round from the case pools.
    Assemble(AssembleArgs),
    /// Build the manifest of real images to pseudo-label, optionally with
    /// their eight augmented copies.
    Targets(TargetsArgs),
    /// Run the external model on a manifest.
    Run(RunArgs),
}

#[derive(Args)]
struct TargetsArgs {
    /// Round of the model that will make the predictions.
    #[arg(long)]
    round: u32,
    #[arg(long)]
    pools: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    created: Option<String>,
    /// Write augmented copies of every real image here and list them too.
    #[arg(long)]
    augment_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AssembleArgs {
    #[arg(long)]
    round: u32,
    #[arg(long)]
    pools: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// RFC 3339 creation time; defaults to now. Fix it for reproducible files.
    #[arg(long)]
    created: Option<String>,
    /// Extra `key=value` annotations stored verbatim.
    #[arg(long = "meta")]
    metadata: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Shell command; `{manifest}`, `{outdir}` and `{mode}` are substituted.
    #[arg(long)]
    runner: String,
    #[arg(long, value_enum)]
    mode: CliRunMode,
    #[arg(long, default_value = "runs")]
    outdir: PathBuf,
    /// Keep raw argmax labels instead of the largest-VS-component cleanup.
    #[arg(long)]
    no_postprocess: bool,
    /// Pools file to extend with the derived pseudo-labels.
    #[arg(long)]
    update_pools: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliRunMode {
    Train,
    Predict,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    stage: u8,
    /// Zero-based epoch; prints the whole schedule when omitted.
    #[arg(long)]
    epoch: Option<usize>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Preprocess(a) => preprocess(a),
        Command::Augment(a) => augment(a),
        Command::ReduceTumor(a) => reduce_tumor(a),
        Command::Loss(a) => loss(a),
        Command::Metrics(a) => metrics(a),
        Command::Fid(a) => fid(a),
        Command::Postprocess(a) => postprocess(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Pipeline(PipelineCommand::Assemble(a)) => assemble(a),
        Command::Pipeline(PipelineCommand::Targets(a)) => targets(a),
        Command::Pipeline(PipelineCommand::Run(a)) => run(a),
        Command::Schedule(a) => lr(a),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let spacing = match a.spacing.as_slice() {
        &[s] => [s; 3],
        &[x, y, z] => [x, y, z],
        other => bail!("--spacing takes 1 or 3 values, got {}", other.len()),
    };
    let &[nx, ny] = a.xy.as_slice() else {
        bail!("--xy takes 2 values, got {}", a.xy.len());
    };
    let spec = ResampleSpec {
        target_spacing: spacing,
        image_order: a.order,
        ..ResampleSpec::default()
    };
    if a.label {
        ensure!(!a.normalize, "--normalize does not apply to label volumes");
        let lbl = read_label_volume(&a.input)?;
        write_nifti(&preprocess_label(&lbl, &spec, [nx, ny])?, &a.out)?;
    } else {
        let vol = read_volume(&a.input)?;
        write_nifti(&preprocess_image(&vol, &spec, [nx, ny], a.normalize)?, &a.out)?;
    }
    Ok(())
}

fn augment(a: AugmentArgs) -> Result<()> {
    let spec = AugmentationSpec::new(a.kind, a.seed);
    let vol = read_volume(&a.input)?;
    write_nifti(&apply_augmentation(&vol, &spec)?, &a.out)?;
    if let (Some(label), Some(out)) = (&a.label, &a.label_out) {
        let lbl = read_label_volume(label)?;
        write_nifti(&apply_spatial_to_label(&lbl, &spec)?, out)?;
    } else if a.label.is_some() {
        bail!("--label needs --label-out");
    }
    print_json(&serde_json::to_value(&spec)?)
}

fn reduce_tumor(a: ReduceTumorArgs) -> Result<()> {
    let vol = read_volume(&a.image)?;
    let lbl = read_label_volume(&a.label)?;
    write_nifti(&reduce_tumor_signal(&vol, &lbl, a.factor)?, &a.out)?;
    Ok(())
}

fn loss(a: LossArgs) -> Result<()> {
    let pred = read_probability_map(&a.pred)?;
    let target = read_label_volume(&a.target)?;
    let input = LossInput::from_maps(&pred, &target, a.epsilon)?;
    let (name, out) = match a.kind {
        LossKind::Dice => ("dice", dice_loss(&input)),
        LossKind::Ce => ("ce", cross_entropy_loss(&input)),
        LossKind::Combined => (
            "combined",
            combined_loss(&input, LossWeights { dice: a.dice_weight, ce: a.ce_weight })?,
        ),
    };
    if let Some(path) = &a.gradient {
        let grad: Vec<f32> = out.gradient.iter().map(|&g| g as f32).collect();
        write_class_map(pred.num_classes(), pred.dims(), pred.spacing(), &grad, path)?;
    }
    print_json(&serde_json::json!({ "kind": name, "epsilon": a.epsilon, "value": out.value }))
}

fn case_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.trim_end_matches(".gz").trim_end_matches(".nii").to_string()
}

fn metrics(a: MetricsArgs) -> Result<()> {
    ensure!(
        a.pred.len() == a.truth.len(),
        "{} predictions but {} references",
        a.pred.len(),
        a.truth.len()
    );
    let mut cases = Vec::with_capacity(a.pred.len());
    for (p, t) in a.pred.iter().zip(&a.truth) {
        let pred = read_label_volume(p)?;
        let truth = read_label_volume(t)?;
        cases.push(evaluate_case(&case_id(p), &pred, &truth, &a.classes).with_context(|| format!("evaluating {}", p.display()))?);
    }
    let report = summarize(cases);
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn read_features(path: &Path, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} row {}: not a number", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

fn fid(a: FidArgs) -> Result<()> {
    let sa = feature_stats(&read_features(&a.features_a, a.header)?)?;
    let sb = feature_stats(&read_features(&a.features_b, a.header)?)?;
    println!("{}", frechet_distance(&sa, &sb)?);
    Ok(())
}

fn postprocess(a: PostprocessArgs) -> Result<()> {
    let lbl = read_label_volume(&a.input)?;
    write_nifti(&keep_largest_component(&lbl, a.class_id)?, &a.out)?;
    Ok(())
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    let maps = a
        .probs
        .iter()
        .map(|p| read_probability_map(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let merged = ensemble_probs(&maps, a.weights.as_deref())?;
    if let Some(path) = &a.probs_out {
        write_probability_map(&merged, path)?;
    }
    let mut labels = argmax_labels(&merged)?;
    if let Some(c) = a.keep_largest {
        labels = keep_largest_component(&labels, c)?;
    }
    write_nifti(&labels, &a.out)?;
    Ok(())
}

fn created_or_now(created: Option<String>) -> String {
    created.unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn assemble(a: AssembleArgs) -> Result<()> {
    let pools = CasePools::load(&a.pools)?;
    let created = created_or_now(a.created);
    let mut manifest = assemble_round(a.round, &pools, &created)?;
    for kv in &a.metadata {
        let (k, v) = kv.split_once('=').with_context(|| format!("--meta `{kv}` is not key=value"))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
        manifest.metadata.insert(k.to_string(), value);
    }
    manifest.save(&a.out)?;
    eprintln!(
        "round {}: {} entries ({})",
        manifest.round,
        manifest.len(),
        manifest
            .composition
            .iter()
            .map(|(p, n)| format!("{} {n}", p.name()))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn targets(a: TargetsArgs) -> Result<()> {
    let pools = CasePools::load(&a.pools)?;
    ensure!(!pools.real_hrt2.is_empty(), "no real_hrT2 cases in {}", a.pools.display());
    let mut images: Vec<(PoolCase, Option<AugmentationSpec>)> =
        pools.real_hrt2.iter().map(|c| (c.clone(), None)).collect();
    if let Some(dir) = &a.augment_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut current = None;
        for (i, spec) in expansion_plan(pools.real_hrt2.len(), &AugmentationSpec::default_set(a.seed))? {
            let case = &pools.real_hrt2[i];
            if current.as_ref().map(|(j, _)| *j) != Some(i) {
                current = Some((i, read_volume(&case.image)?));
            }
            let vol = &current.as_ref().unwrap().1;
            let path = dir.join(format!("{}-{}.nii.gz", case.case_id, spec.kind()));
            write_nifti(&apply_augmentation(vol, &spec)?, &path)?;
            let image = path.to_string_lossy().into_owned();
            images.push((PoolCase { case_id: case.case_id.clone(), image, label: None }, Some(spec)));
        }
    }
    let manifest = prediction_manifest(a.round, &created_or_now(a.created), &images)?;
    manifest.save(&a.out)?;
    eprintln!("round {}: {} images to predict", manifest.round, manifest.len());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mode = match a.mode {
        CliRunMode::Train => RunMode::Train,
        CliRunMode::Predict => RunMode::Predict,
    };
    let mut config = RunnerConfig::new(a.runner, a.outdir);
    config.postprocess = !a.no_postprocess;
    let artifacts = run_model(&manifest, &config, mode)?;
    if !artifacts.output.is_empty() {
        eprint!("{}", artifacts.output);
    }
    if let Some(path) = &a.update_pools {
        let mut pools = CasePools::load(path)?;
        let (plain, augmented) = artifacts.pool_records(&manifest);
        pools.pseudo_labels.extend(plain);
        pools.augmented_pseudo.extend(augmented);
        pools.save(path)?;
    }
    let labels: Vec<_> = artifacts
        .pseudo_labels
        .iter()
        .map(|p| serde_json::json!({ "id": p.entry_id, "prediction": p.prediction, "label": p.label }))
        .collect();
    print_json(&serde_json::json!({
        "mode": mode.name(),
        "manifest": artifacts.manifest_path,
        "outdir": artifacts.outdir,
        "pseudo_labels": labels,
    }))
}

fn lr(a: ScheduleArgs) -> Result<()> {
    let spec = ScheduleSpec::for_stage(a.stage)?;
    match a.epoch {
        Some(e) => println!("{}", lr_at_epoch(&spec, e)?),
        None => {
            for (e, v) in schedule(&spec)?.into_iter().enumerate() {
                println!("{e}\t{v}");
            }
        }
    }
    Ok(())
}
