//! Dataset manifests: the declarative record of every training image, its
//! label, and where both came from, for each self-training round.
//!
//! Round composition:
//!
//! | round | entries                                            |
//! |-------|----------------------------------------------------|
//! | 1     | fake hrT2 + AT copies                              |
//! | 2     | round 1 + real hrT2 with pseudo-labels             |
//! | 3     | round 1 + eight augmented copies of every real     |
//! |       | hrT2 case with pseudo-labels                       |
//!
//! With 210 cases per pool this gives 420, 630 and 2100 entries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationKind, AugmentationSpec};
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Highest round [`assemble_round`] knows how to build.
pub const FINAL_ROUND: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    /// Synthetic target-domain image translated from a labelled source scan.
    #[serde(rename = "fake_hrT2")]
    FakeHrT2,
    /// Fake image with the tumour signal halved.
    #[serde(rename = "AT")]
    At,
    /// Unlabelled real target-domain image.
    #[serde(rename = "real_hrT2")]
    RealHrT2,
    /// Real image with a model-predicted label.
    #[serde(rename = "pseudo_labeled")]
    PseudoLabeled,
    /// Augmented real image with a model-predicted label.
    #[serde(rename = "augmented_pseudo")]
    AugmentedPseudo,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::FakeHrT2 => "fake_hrT2",
            Provenance::At => "AT",
            Provenance::RealHrT2 => "real_hrT2",
            Provenance::PseudoLabeled => "pseudo_labeled",
            Provenance::AugmentedPseudo => "augmented_pseudo",
        }
    }

    pub fn is_pseudo(self) -> bool {
        matches!(self, Provenance::PseudoLabeled | Provenance::AugmentedPseudo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Unique within the manifest; also the file stem of predictions.
    pub id: String,
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<String>,
    pub provenance: Provenance,
    pub source_case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentationSpec>,
    /// Round whose model produced the pseudo-label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_round: Option<u32>,
}

impl ManifestEntry {
    fn sort_key(&self) -> (Provenance, &str, Option<AugmentationKind>) {
        (
            self.provenance,
            self.source_case_id.as_str(),
            self.augmentation.as_ref().map(|a| a.kind()),
        )
    }
}

pub fn entry_id(provenance: Provenance, case_id: &str, kind: Option<AugmentationKind>) -> String {
    match kind {
        Some(k) => format!("{}-{case_id}-{k}", provenance.name()),
        None => format!("{}-{case_id}", provenance.name()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub round: u32,
    /// RFC 3339 timestamp supplied by the caller.
    pub created: String,
    /// Declared entry count per provenance.
    pub composition: BTreeMap<Provenance, usize>,
    pub entries: Vec<ManifestEntry>,
    /// Free-form annotations (e.g. training epochs); never interpreted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn count_by_provenance(entries: &[ManifestEntry]) -> BTreeMap<Provenance, usize> {
    let mut out = BTreeMap::new();
    for e in entries {
        *out.entry(e.provenance).or_insert(0) += 1;
    }
    out
}

impl DatasetManifest {
    /// Builds a manifest with entries in canonical order and the composition
    /// taken from the entries.
    pub fn new(round: u32, created: impl Into<String>, mut entries: Vec<ManifestEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let m = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            round,
            created: created.into(),
            composition: count_by_provenance(&entries),
            entries,
            metadata: BTreeMap::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.composition.get(&provenance).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "schema version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate entry id `{}`", e.id)));
            }
            if e.provenance.is_pseudo() {
                if e.label_path.is_none() {
                    return Err(Error::Manifest(format!(
                        "entry `{}` ({}) has no pseudo-label path",
                        e.id,
                        e.provenance.name()
                    )));
                }
                match e.label_round {
                    Some(r) if r < self.round => {}
                    Some(r) => {
                        return Err(Error::Manifest(format!(
                            "entry `{}` uses a pseudo-label from round {r} in round {}",
                            e.id, self.round
                        )))
                    }
                    None => {
                        return Err(Error::Manifest(format!(
                            "entry `{}` does not record which round produced its pseudo-label",
                            e.id
                        )))
                    }
                }
            }
            if e.provenance == Provenance::AugmentedPseudo && e.augmentation.is_none() {
                return Err(Error::Manifest(format!(
                    "augmented entry `{}` lacks its augmentation spec",
                    e.id
                )));
            }
        }
        let counted = count_by_provenance(&self.entries);
        if counted != self.composition {
            return Err(Error::Manifest(format!(
                "declared composition {:?} does not match entries {counted:?}",
                self.composition
            )));
        }
        Ok(())
    }

    /// Pretty JSON with a trailing newline; identical manifests give
    /// identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// A labelled or unlabelled image in a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolCase {
    pub case_id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A pseudo-label for a real case, produced by the model of `round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub case_id: String,
    pub label: String,
    pub round: u32,
}

/// An augmented real image with its pseudo-label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCase {
    pub case_id: String,
    pub image: String,
    pub label: String,
    pub augmentation: AugmentationSpec,
    pub round: u32,
}

/// Everything available for assembling rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CasePools {
    #[serde(default, rename = "fake_hrT2")]
    pub fake_hrt2: Vec<PoolCase>,
    #[serde(default, rename = "AT")]
    pub at: Vec<PoolCase>,
    #[serde(default, rename = "real_hrT2")]
    pub real_hrt2: Vec<PoolCase>,
    #[serde(default)]
    pub pseudo_labels: Vec<PseudoLabel>,
    #[serde(default)]
    pub augmented_pseudo: Vec<AugmentedCase>,
}

impl CasePools {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

fn missing(provenance: Provenance, reason: impl Into<String>) -> Error {
    Error::Dependency {
        provenance: provenance.name().to_string(),
        reason: reason.into(),
    }
}

fn labelled_entries(pool: &[PoolCase], provenance: Provenance) -> Result<Vec<ManifestEntry>> {
    pool.iter()
        .map(|c| {
            let label = c.label.clone().ok_or_else(|| {
                missing(provenance, format!("case `{}` has no label", c.case_id))
            })?;
            Ok(ManifestEntry {
                id: entry_id(provenance, &c.case_id, None),
                image_path: c.image.clone(),
                label_path: Some(label),
                provenance,
                source_case_id: c.case_id.clone(),
                augmentation: None,
                label_round: None,
            })
        })
        .collect()
}

fn base_entries(pools: &CasePools) -> Result<Vec<ManifestEntry>> {
    if pools.fake_hrt2.is_empty() {
        return Err(missing(Provenance::FakeHrT2, "pool is empty"));
    }
    let at_cases: BTreeSet<&str> = pools.at.iter().map(|c| c.case_id.as_str()).collect();
    if let Some(c) = pools.fake_hrt2.iter().find(|c| !at_cases.contains(c.case_id.as_str())) {
        return Err(missing(Provenance::At, format!("no AT copy of fake case `{}`", c.case_id)));
    }
    let mut entries = labelled_entries(&pools.fake_hrt2, Provenance::FakeHrT2)?;
    entries.extend(labelled_entries(&pools.at, Provenance::At)?);
    Ok(entries)
}

fn real_cases(pools: &CasePools, needed_by: Provenance) -> Result<Vec<&str>> {
    if pools.real_hrt2.is_empty() {
        return Err(missing(
            Provenance::RealHrT2,
            format!("pool is empty but {} entries need it", needed_by.name()),
        ));
    }
    let mut ids: Vec<&str> = pools.real_hrt2.iter().map(|c| c.case_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

/// Builds the manifest of a self-training round (1, 2 or 3).
///
/// Only pseudo-labels produced by an earlier round are eligible; when several
/// exist for the same image, the most recent eligible one is used.
pub fn assemble_round(round: u32, pools: &CasePools, created: &str) -> Result<DatasetManifest> {
    if !(1..=FINAL_ROUND).contains(&round) {
        return Err(Error::Range {
            what: "round",
            value: round as i64,
            range: format!("1..={FINAL_ROUND}"),
        });
    }
    let mut entries = base_entries(pools)?;

    match round {
        2 => {
            let images: BTreeMap<&str, &PoolCase> =
                pools.real_hrt2.iter().map(|c| (c.case_id.as_str(), c)).collect();
            for case in real_cases(pools, Provenance::PseudoLabeled)? {
                let label = pools
                    .pseudo_labels
                    .iter()
                    .filter(|p| p.case_id == case && p.round < round)
                    .max_by_key(|p| p.round)
                    .ok_or_else(|| {
                        missing(
                            Provenance::PseudoLabeled,
                            format!("no pseudo-label from before round {round} for case `{case}`"),
                        )
                    })?;
                entries.push(ManifestEntry {
                    id: entry_id(Provenance::PseudoLabeled, case, None),
                    image_path: images[case].image.clone(),
                    label_path: Some(label.label.clone()),
                    provenance: Provenance::PseudoLabeled,
                    source_case_id: case.to_string(),
                    augmentation: None,
                    label_round: Some(label.round),
                });
            }
        }
        3 => {
            for case in real_cases(pools, Provenance::AugmentedPseudo)? {
                for kind in AugmentationKind::ALL {
                    let aug = pools
                        .augmented_pseudo
                        .iter()
                        .filter(|a| a.case_id == case && a.augmentation.kind() == kind && a.round < round)
                        .max_by_key(|a| a.round)
                        .ok_or_else(|| {
                            missing(
                                Provenance::AugmentedPseudo,
                                format!("no pseudo-labelled `{kind}` augmentation of case `{case}`"),
                            )
                        })?;
                    entries.push(ManifestEntry {
                        id: entry_id(Provenance::AugmentedPseudo, case, Some(kind)),
                        image_path: aug.image.clone(),
                        label_path: Some(aug.label.clone()),
                        provenance: Provenance::AugmentedPseudo,
                        source_case_id: case.to_string(),
                        augmentation: Some(aug.augmentation.clone()),
                        label_round: Some(aug.round),
                    });
                }
            }
        }
        _ => {}
    }
    DatasetManifest::new(round, created, entries)
}

/// Manifest of unlabelled images to run a model on. Augmented images carry
/// their spec so predictions can be traced back.
pub fn prediction_manifest(
    round: u32,
    created: &str,
    images: &[(PoolCase, Option<AugmentationSpec>)],
) -> Result<DatasetManifest> {
    let entries = images
        .iter()
        .map(|(c, aug)| ManifestEntry {
            id: entry_id(Provenance::RealHrT2, &c.case_id, aug.as_ref().map(|a| a.kind())),
            image_path: c.image.clone(),
            label_path: None,
            provenance: Provenance::RealHrT2,
            source_case_id: c.case_id.clone(),
            augmentation: aug.clone(),
            label_round: None,
        })
        .collect();
    DatasetManifest::new(round, created, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pools(n: usize) -> CasePools {
        let case = |p: &str, i: usize, label: bool| PoolCase {
            case_id: format!("case{i:03}"),
            image: format!("{p}/case{i:03}.nii.gz"),
            label: label.then(|| format!("{p}/case{i:03}_label.nii.gz")),
        };
        CasePools {
            fake_hrt2: (0..n).map(|i| case("fake", i, true)).collect(),
            at: (0..n).map(|i| case("at", i, true)).collect(),
            real_hrt2: (0..n).map(|i| case("real", i, false)).collect(),
            pseudo_labels: (0..n)
                .map(|i| PseudoLabel {
                    case_id: format!("case{i:03}"),
                    label: format!("pl/case{i:03}.nii.gz"),
                    round: 1,
                })
                .collect(),
            augmented_pseudo: (0..n)
                .flat_map(|i| {
                    AugmentationSpec::default_set(i as u64).into_iter().map(move |spec| AugmentedCase {
                        case_id: format!("case{i:03}"),
                        image: format!("aug/case{i:03}_{}.nii.gz", spec.kind()),
                        label: format!("aug/case{i:03}_{}_pl.nii.gz", spec.kind()),
                        augmentation: spec,
                        round: 1,
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn round_sizes() {
        let p = pools(5);
        let r1 = assemble_round(1, &p, "t").unwrap();
        assert_eq!(r1.len(), 10);
        let r2 = assemble_round(2, &p, "t").unwrap();
        assert_eq!(r2.len(), 15);
        assert_eq!(r2.count(Provenance::PseudoLabeled), 5);
        let r3 = assemble_round(3, &p, "t").unwrap();
        assert_eq!(r3.len(), 50);
        assert_eq!(r3.count(Provenance::AugmentedPseudo), 40);
    }

    #[test]
    fn missing_pools_are_named() {
        let mut p = pools(2);
        p.pseudo_labels.clear();
        let err = assemble_round(2, &p, "t").unwrap_err();
        assert!(matches!(err, Error::Dependency { ref provenance, .. } if provenance == "pseudo_labeled"));

        let mut p = pools(2);
        p.at.pop();
        let err = assemble_round(1, &p, "t").unwrap_err();
        assert!(matches!(err, Error::Dependency { ref provenance, .. } if provenance == "AT"));

        let p = CasePools::default();
        let err = assemble_round(1, &p, "t").unwrap_err();
        assert!(matches!(err, Error::Dependency { ref provenance, .. } if provenance == "fake_hrT2"));

        let mut p = pools(2);
        p.augmented_pseudo.retain(|a| a.augmentation.kind() != AugmentationKind::FlipY);
        let err = assemble_round(3, &p, "t").unwrap_err();
        assert!(matches!(err, Error::Dependency { ref provenance, .. } if provenance == "augmented_pseudo"));

        assert!(matches!(assemble_round(4, &pools(1), "t"), Err(Error::Range { .. })));
    }

    #[test]
    fn same_round_labels_are_not_eligible() {
        let mut p = pools(2);
        for pl in &mut p.pseudo_labels {
            pl.round = 2;
        }
        assert!(assemble_round(2, &p, "t").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut m = assemble_round(2, &pools(2), "t").unwrap();
        let json = m.to_json().unwrap();
        assert_eq!(DatasetManifest::from_json(&json).unwrap(), m);

        m.entries[5].label_path = None;
        assert!(m.validate().is_err());

        let mut m = assemble_round(2, &pools(2), "t").unwrap();
        m.composition.insert(Provenance::At, 7);
        assert!(m.validate().is_err());

        let mut m = assemble_round(2, &pools(2), "t").unwrap();
        m.entries[5].label_round = Some(2);
        assert!(m.validate().is_err());
    }

    #[test]
    fn json_names() {
        let m = assemble_round(1, &pools(1), "2024-01-01T00:00:00Z").unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["entries"][0]["provenance"], "fake_hrT2");
        assert_eq!(v["entries"][1]["provenance"], "AT");
        assert_eq!(v["composition"]["AT"], 1);
    }
}
