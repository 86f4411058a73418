use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{bce_train, build_training_set, CropMode, FeatureLogisticDetector, TrainConfig, TrainReport};
use super::metrics::{accuracy_at, auroc, auroc_null_std, macro_f1_at};
use super::SegmentDetector;
use crate::error::{Error, Result};
use crate::rng;
use crate::token::{segments_for_spec, SegmentSpec, TokenSequence};

/// The five detector slots, by resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BankMember {
    #[serde(rename = "m10")]
    M10,
    #[serde(rename = "m25")]
    M25,
    #[serde(rename = "m50")]
    M50,
    #[serde(rename = "m50_25")]
    M50From25,
    #[serde(rename = "m50_10")]
    M50From10,
}

impl BankMember {
    pub const ALL: [BankMember; 5] = [
        BankMember::M50,
        BankMember::M25,
        BankMember::M10,
        BankMember::M50From25,
        BankMember::M50From10,
    ];

    pub fn spec(self) -> SegmentSpec {
        match self {
            BankMember::M10 => SegmentSpec { length: 10, stride: 1 },
            BankMember::M25 => SegmentSpec { length: 25, stride: 1 },
            BankMember::M50 => SegmentSpec { length: 50, stride: 1 },
            BankMember::M50From25 => SegmentSpec { length: 25, stride: 2 },
            BankMember::M50From10 => SegmentSpec { length: 10, stride: 5 },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BankMember::M10 => "m10",
            BankMember::M25 => "m25",
            BankMember::M50 => "m50",
            BankMember::M50From25 => "m50_25",
            BankMember::M50From10 => "m50_10",
        }
    }

    fn file_name(self) -> String {
        format!("{}.json", self.name())
    }
}

impl fmt::Display for BankMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Contiguous detectors over 10, 25 and 50 tokens plus two skip-sampled
/// views of a 50-token window (every 2nd and every 5th token).
#[derive(Debug, Clone)]
pub struct DetectorBank<D> {
    pub m10: D,
    pub m25: D,
    pub m50: D,
    pub m50_25: D,
    pub m50_10: D,
}

impl<D: SegmentDetector> DetectorBank<D> {
    /// Checks that every member carries the spec of its slot.
    pub fn new(m10: D, m25: D, m50: D, m50_25: D, m50_10: D) -> Result<Self> {
        let bank = Self { m10, m25, m50, m50_25, m50_10 };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        for m in BankMember::ALL {
            let got = self.get(m).spec();
            if got != m.spec() {
                return Err(Error::invalid(format!(
                    "bank slot {m} expects spec {} but detector has {got}",
                    m.spec()
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, member: BankMember) -> &D {
        match member {
            BankMember::M10 => &self.m10,
            BankMember::M25 => &self.m25,
            BankMember::M50 => &self.m50,
            BankMember::M50From25 => &self.m50_25,
            BankMember::M50From10 => &self.m50_10,
        }
    }

    pub fn from_fn(mut make: impl FnMut(BankMember) -> D) -> Self {
        Self {
            m10: make(BankMember::M10),
            m25: make(BankMember::M25),
            m50: make(BankMember::M50),
            m50_25: make(BankMember::M50From25),
            m50_10: make(BankMember::M50From10),
        }
    }
}

impl DetectorBank<FeatureLogisticDetector> {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in BankMember::ALL {
            self.get(m).save(dir.join(m.file_name()))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |m: BankMember| FeatureLogisticDetector::load(dir.join(m.file_name()));
        Self::new(
            load(BankMember::M10)?,
            load(BankMember::M25)?,
            load(BankMember::M50)?,
            load(BankMember::M50From25)?,
            load(BankMember::M50From10)?,
        )
    }
}

pub type TrainedBank = (DetectorBank<FeatureLogisticDetector>, Vec<(BankMember, TrainReport)>);

/// Trains all five members in parallel. Member `m` shuffles with a seed
/// derived from `cfg.seed` and its slot, so results do not depend on
/// thread scheduling.
pub fn train_bank(
    real: &[TokenSequence],
    fake: &[TokenSequence],
    mode: CropMode,
    cfg: &TrainConfig,
) -> Result<TrainedBank> {
    let trained: Vec<(BankMember, FeatureLogisticDetector, TrainReport)> = BankMember::ALL
        .par_iter()
        .map(|&m| {
            let seed = rng::derive(cfg.seed, m as u64 + 1);
            let set = build_training_set(real, fake, m.spec(), mode, seed)?;
            let member_cfg = TrainConfig { seed, ..*cfg };
            let (det, report) = bce_train(&set.examples, m.spec(), &member_cfg)?;
            Ok((m, det, report))
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut slots: Vec<Option<FeatureLogisticDetector>> = vec![None; 5];
    for (m, det, report) in trained {
        slots[m as usize] = Some(det);
        reports.push((m, report));
    }
    let mut take = |m: BankMember| slots[m as usize].take().expect("every member trained");
    let bank = DetectorBank::new(
        take(BankMember::M10),
        take(BankMember::M25),
        take(BankMember::M50),
        take(BankMember::M50From25),
        take(BankMember::M50From10),
    )?;
    Ok((bank, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEval {
    pub member: BankMember,
    pub spec: SegmentSpec,
    pub auroc: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n_real: usize,
    pub n_fake: usize,
    /// Standard deviation of AUROC under the label-permutation null.
    pub null_std: f64,
}

/// Scores non-overlapping windows of held-out real and fake sequences.
pub fn evaluate_detector<D: SegmentDetector>(
    member: BankMember,
    detector: &D,
    real: &[TokenSequence],
    fake: &[TokenSequence],
) -> Result<DetectorEval> {
    let spec = detector.spec();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (seqs, label) in [(real, true), (fake, false)] {
        for s in seqs {
            for seg in segments_for_spec(s, spec, spec.window()) {
                scores.push(detector.score(&seg.tokens)?);
                labels.push(label);
            }
        }
    }
    let n_real = labels.iter().filter(|&&l| l).count();
    let n_fake = labels.len() - n_real;
    if n_real == 0 || n_fake == 0 {
        return Err(Error::InsufficientData {
            spec: spec.to_string(),
            message: "evaluation needs windows from both corpora".into(),
        });
    }
    Ok(DetectorEval {
        member,
        spec,
        auroc: auroc(&scores, &labels)?,
        accuracy: accuracy_at(&scores, &labels, 0.5)?,
        macro_f1: macro_f1_at(&scores, &labels, 0.5)?,
        n_real,
        n_fake,
        null_std: auroc_null_std(n_real, n_fake),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::ConstantDetector;

    #[test]
    fn member_specs() {
        assert_eq!(BankMember::M50From25.spec().window(), 50);
        assert_eq!(BankMember::M50From10.spec().window(), 50);
        assert_eq!(BankMember::M25.spec().window(), 25);
    }

    #[test]
    fn bank_rejects_misplaced_detector() {
        let c = |m: BankMember| ConstantDetector { spec: m.spec(), value: 0.5 };
        assert!(DetectorBank::new(
            c(BankMember::M25),
            c(BankMember::M25),
            c(BankMember::M50),
            c(BankMember::M50From25),
            c(BankMember::M50From10)
        )
        .is_err());
        let ok = DetectorBank::from_fn(c);
        assert!(ok.validate().is_ok());
    }
}
