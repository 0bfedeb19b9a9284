//! File-based contract with an external training/inference program.
//!
//! The runner is a shell command template. `{manifest}`, `{outdir}` and
//! `{mode}` are replaced with shell-quoted values before the command is run
//! through `sh -c`. In predict mode the program must leave one probability
//! map per manifest entry at `<outdir>/<entry id>.nii.gz` (or `.nii`).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{AugmentedCase, DatasetManifest, ManifestEntry, Provenance, PseudoLabel};
use crate::ensemble::argmax_labels;
use crate::error::{Error, Result};
use crate::postprocess::postprocess_vs;
use crate::volume::{read_nifti, read_probability_map, write_nifti, LabelVolume};
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Train,
    Predict,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Train => "train",
            RunMode::Predict => "predict",
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(RunMode::Train),
            "predict" => Ok(RunMode::Predict),
            other => Err(Error::Parameter(format!("unknown run mode `{other}`"))),
        }
    }
}

/// Quotes `s` for POSIX `sh`.
pub fn shell_quote(s: &str) -> String {
    if !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"-_./=:,+@%".contains(&b))
    {
        return s.to_string();
    }
    format!("'{}'", s.replace('\'', r"'\''"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunnerConfig {
    pub command: String,
    pub outdir: PathBuf,
    /// Keep only the largest VS component in derived pseudo-labels.
    pub postprocess: bool,
}

impl RunnerConfig {
    pub fn new(command: impl Into<String>, outdir: impl Into<PathBuf>) -> Self {
        Self {
            command: command.into(),
            outdir: outdir.into(),
            postprocess: true,
        }
    }

    pub fn render(&self, manifest: &Path, mode: RunMode) -> String {
        self.command
            .replace("{manifest}", &shell_quote(&manifest.to_string_lossy()))
            .replace("{outdir}", &shell_quote(&self.outdir.to_string_lossy()))
            .replace("{mode}", mode.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedLabel {
    pub entry_id: String,
    pub prediction: PathBuf,
    pub label: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub mode: RunMode,
    pub manifest_path: PathBuf,
    pub outdir: PathBuf,
    /// Runner stdout followed by stderr.
    pub output: String,
    /// Empty in train mode.
    pub pseudo_labels: Vec<PredictedLabel>,
}

impl RunArtifacts {
    /// Converts labels derived for real target images into pool records
    /// attributed to the manifest's round. Entries with an augmentation
    /// become augmented cases; other provenances are skipped.
    pub fn pool_records(
        &self,
        manifest: &DatasetManifest,
    ) -> (Vec<PseudoLabel>, Vec<AugmentedCase>) {
        let mut plain = Vec::new();
        let mut augmented = Vec::new();
        for p in &self.pseudo_labels {
            let Some(entry) = manifest
                .entries
                .iter()
                .find(|e| e.id == p.entry_id && e.provenance == Provenance::RealHrT2)
            else {
                continue;
            };
            let label = p.label.to_string_lossy().into_owned();
            match &entry.augmentation {
                Some(spec) => augmented.push(AugmentedCase {
                    case_id: entry.source_case_id.clone(),
                    image: entry.image_path.clone(),
                    label,
                    augmentation: spec.clone(),
                    round: manifest.round,
                }),
                None => plain.push(PseudoLabel {
                    case_id: entry.source_case_id.clone(),
                    label,
                    round: manifest.round,
                }),
            }
        }
        (plain, augmented)
    }
}

fn prediction_path(outdir: &Path, id: &str) -> Option<PathBuf> {
    ["nii.gz", "nii"]
        .iter()
        .map(|ext| outdir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

fn validation(entry: &ManifestEntry, reason: impl fmt::Display) -> Error {
    Error::Validation {
        case: entry.id.clone(),
        reason: reason.to_string(),
    }
}

fn derive_label(entry: &ManifestEntry, outdir: &Path, postprocess: bool) -> Result<(PathBuf, LabelVolume)> {
    let path = prediction_path(outdir, &entry.id)
        .ok_or_else(|| validation(entry, format!("no prediction `{}.nii.gz` in {}", entry.id, outdir.display())))?;
    let map = read_probability_map(&path).map_err(|e| validation(entry, e))?;
    if map.num_classes() != NUM_CLASSES {
        return Err(validation(
            entry,
            format!("{} classes, expected {NUM_CLASSES}", map.num_classes()),
        ));
    }
    let image = read_nifti(&entry.image_path).map_err(|e| validation(entry, e))?.into_volume();
    if image.dims() != map.dims() {
        return Err(validation(
            entry,
            format!("prediction dims {:?} differ from image dims {:?}", map.dims(), image.dims()),
        ));
    }
    let mut label = argmax_labels(&map)?;
    if postprocess {
        label = postprocess_vs(&label)?;
    }
    Ok((path, label.with_geometry(image.geometry().clone())))
}

/// Writes the manifest into the output directory, runs the external program
/// and, in predict mode, turns its probability maps into pseudo-labels under
/// `<outdir>/pseudo_labels/`.
///
/// Nothing is written to `pseudo_labels/` unless the program succeeds and
/// every prediction validates.
pub fn run_model(manifest: &DatasetManifest, config: &RunnerConfig, mode: RunMode) -> Result<RunArtifacts> {
    manifest.validate()?;
    let outdir = &config.outdir;
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    if mode == RunMode::Predict {
        if let Some(e) = manifest.entries.iter().find(|e| !Path::new(&e.image_path).is_file()) {
            return Err(validation(e, format!("image {} does not exist", e.image_path)));
        }
    }
    let manifest_path = outdir.join(format!("manifest_round{}_{mode}.json", manifest.round));
    manifest.save(&manifest_path)?;

    let cmd = config.render(&manifest_path, mode);
    log::info!("running model: {cmd}");
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::Runner {
            status: "not started".into(),
            output: e.to_string(),
        })?;
    let mut output = String::from_utf8_lossy(&out.stdout).into_owned();
    output.push_str(&String::from_utf8_lossy(&out.stderr));
    if !out.status.success() {
        return Err(Error::Runner {
            status: out.status.to_string(),
            output,
        });
    }

    let mut artifacts = RunArtifacts {
        mode,
        manifest_path,
        outdir: outdir.clone(),
        output,
        pseudo_labels: Vec::new(),
    };
    if mode == RunMode::Train {
        return Ok(artifacts);
    }

    let derived = manifest
        .entries
        .par_iter()
        .map(|e| derive_label(e, outdir, config.postprocess))
        .collect::<Result<Vec<_>>>()?;

    let label_dir = outdir.join("pseudo_labels");
    fs::create_dir_all(&label_dir).map_err(|e| Error::io(&label_dir, e))?;
    for (entry, (prediction, label)) in manifest.entries.iter().zip(derived) {
        let path = label_dir.join(format!("{}_pseudo.nii.gz", entry.id));
        write_nifti(&label, &path)?;
        artifacts.pseudo_labels.push(PredictedLabel {
            entry_id: entry.id.clone(),
            prediction,
            label: path,
        });
    }
    Ok(artifacts)
}
