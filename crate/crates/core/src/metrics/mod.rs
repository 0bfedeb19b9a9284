//! Evaluation metrics: dice overlap, ASSD, Fréchet distance, and a
//! per-class report in the layout of the usual segmentation results table.

mod frechet;
mod surface;

pub use frechet::{feature_stats, frechet_distance, FeatureStats, EIG_TOL};
pub use surface::{assd, boundary_mask, extract_surface, squared_distance_transform, SurfaceSet};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// `2 |P n G| / (|P| + |G|)` for one class; 1 when both are empty.
pub fn dice_score(pred: &LabelVolume, truth: &LabelVolume, class_id: u8) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction dims {:?} != reference dims {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(truth.data()) {
        let (p, g) = (p == class_id, g == class_id);
        np += p as usize;
        ng += g as usize;
        inter += (p && g) as usize;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + ng) as f64)
}

/// Scores of one case for one class. `assd` is `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub dice: f64,
    pub assd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    /// Keyed by class id.
    pub classes: BTreeMap<u8, ClassScore>,
    /// Mean dice over the evaluated classes.
    pub score: f64,
}

/// Mean and population standard deviation over the defined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Number of cases contributing.
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: None,
                std: None,
                n: 0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean: Some(mean),
            std: Some(var.sqrt()),
            n: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub name: String,
    pub dice: MeanStd,
    pub assd: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cases: Vec<CaseReport>,
    pub score: MeanStd,
    pub classes: BTreeMap<u8, ClassSummary>,
}

fn fmt_mean_std(m: &MeanStd) -> String {
    match (m.mean, m.std) {
        (Some(mean), Some(std)) => format!("{mean:.4} ± {std:.4}"),
        _ => "n/a".into(),
    }
}

impl MetricsReport {
    /// Tab-separated header and one row: dice and ASSD per class, then the
    /// overall score.
    pub fn to_table(&self) -> String {
        let mut head = Vec::new();
        let mut row = Vec::new();
        for c in self.classes.values() {
            head.push(format!("{} dice", c.name));
            row.push(fmt_mean_std(&c.dice));
            head.push(format!("{} ASSD (mm)", c.name));
            row.push(fmt_mean_std(&c.assd));
        }
        head.push("score".into());
        row.push(fmt_mean_std(&self.score));
        format!("{}\n{}\n", head.join("\t"), row.join("\t"))
    }
}

pub fn class_name(class_id: u8) -> String {
    match class_id {
        0 => "background".into(),
        1 => "VS".into(),
        2 => "cochlea".into(),
        c => format!("class {c}"),
    }
}

pub fn evaluate_case(case_id: &str, pred: &LabelVolume, truth: &LabelVolume, classes: &[u8]) -> Result<CaseReport> {
    if classes.is_empty() {
        return Err(Error::Parameter("no classes to evaluate".into()));
    }
    let mut out = BTreeMap::new();
    for &c in classes {
        let dice = dice_score(pred, truth, c)?;
        let assd = match assd(pred, truth, c) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        out.insert(c, ClassScore { dice, assd });
    }
    let score = out.values().map(|s| s.dice).sum::<f64>() / out.len() as f64;
    Ok(CaseReport {
        case_id: case_id.to_string(),
        classes: out,
        score,
    })
}

/// Aggregates per-case reports into mean +- std per class.
pub fn summarize(cases: Vec<CaseReport>) -> MetricsReport {
    let mut classes = BTreeMap::new();
    let ids: Vec<u8> = cases
        .iter()
        .flat_map(|c| c.classes.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for id in ids {
        let dice: Vec<f64> = cases.iter().filter_map(|c| c.classes.get(&id)).map(|s| s.dice).collect();
        let assd: Vec<f64> = cases
            .iter()
            .filter_map(|c| c.classes.get(&id))
            .filter_map(|s| s.assd)
            .collect();
        classes.insert(
            id,
            ClassSummary {
                name: class_name(id),
                dice: MeanStd::of(&dice),
                assd: MeanStd::of(&assd),
            },
        );
    }
    let scores: Vec<f64> = cases.iter().map(|c| c.score).collect();
    MetricsReport {
        score: MeanStd::of(&scores),
        classes,
        cases,
    }
}
