//! Subjects, datasets, on-disk formats, synthetic generation and
//! stratified splitting.

mod format;
mod split;
mod synth;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::ClassCounts;
use crate::nn::ChannelMap;

pub use format::{
    import_csv, load_any, load_dataset, read_feature_file, write_csv, write_dataset,
    write_feature_file, Manifest, ManifestEntry, FEATURE_FORMAT_VERSION, FEATURE_MAGIC,
    MANIFEST_FILE, MANIFEST_FORMAT_VERSION,
};
pub use split::{stratified_kfold, FoldSplit};
pub use synth::{synth_generate, synth_generate_with_means, SyntheticSpec};

pub const NUM_CLASSES: usize = 3;
pub const NUM_EMOTIONS: usize = 6;

/// One expression's extracted feature: `d` channels by `S` positions.
pub type FeatureMap = ChannelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "i64")]
pub enum ClassLabel {
    NonPd = 0,
    EarlyPd = 1,
    MidLatePd = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::NonPd,
        ClassLabel::EarlyPd,
        ClassLabel::MidLatePd,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        ClassLabel::try_from(i as i64)
    }
}

impl TryFrom<i64> for ClassLabel {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            0 => Ok(ClassLabel::NonPd),
            1 => Ok(ClassLabel::EarlyPd),
            2 => Ok(ClassLabel::MidLatePd),
            other => Err(Error::UnknownLabel(other)),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(l: ClassLabel) -> u8 {
        l as u8
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::NonPd => "NonPD",
            ClassLabel::EarlyPd => "EarlyPD",
            ClassLabel::MidLatePd => "MidLatePD",
        })
    }
}

/// Canonical emotion order; channel block `k` of the fused input is emotion `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emotion {
    Happiness,
    Sadness,
    Surprise,
    Fear,
    Anger,
    Disgust,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] = [
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Fear,
        Emotion::Anger,
        Emotion::Disgust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Fear => "fear",
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
        }
    }

    pub fn canonical_names() -> [&'static str; NUM_EMOTIONS] {
        Emotion::ALL.map(Emotion::name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSample {
    pub subject_id: String,
    /// One map per emotion, in [`Emotion::ALL`] order.
    pub maps: [FeatureMap; NUM_EMOTIONS],
    pub label: ClassLabel,
}

impl SubjectSample {
    /// `(d, S)` shared by all six maps, or an error if they disagree.
    pub fn shape(&self) -> Result<(usize, usize)> {
        let (d, s) = (self.maps[0].channels(), self.maps[0].spatial());
        if self
            .maps
            .iter()
            .any(|m| m.channels() != d || m.spatial() != s)
        {
            return Err(Error::ShapeInconsistent(format!(
                "subject {:?} has maps of differing shapes",
                self.subject_id
            )));
        }
        Ok((d, s))
    }
}

/// Shape-homogeneous collection of subjects with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    spatial: usize,
    samples: Vec<SubjectSample>,
}

impl Dataset {
    pub fn new(d: usize, spatial: usize, samples: Vec<SubjectSample>) -> Result<Self> {
        if d == 0 || spatial == 0 {
            return Err(Error::ShapeInconsistent(format!(
                "d and S must be >= 1, got {d} and {spatial}"
            )));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.shape()? != (d, spatial) {
                return Err(Error::ShapeInconsistent(format!(
                    "subject {:?} is {:?}, dataset is {d}x{spatial}",
                    s.subject_id,
                    s.shape()?
                )));
            }
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::DuplicateSubject(s.subject_id.clone()));
            }
        }
        Ok(Dataset {
            d,
            spatial,
            samples,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn spatial(&self) -> usize {
        self.spatial
    }

    pub fn samples(&self) -> &[SubjectSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::from_labels(self.samples.iter().map(|s| &s.label))
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            d: self.d,
            spatial: self.spatial,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// Per-class tallies of a dataset.
pub fn class_counts(dataset: &Dataset) -> ClassCounts {
    dataset.class_counts()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, d: usize, s: usize, label: ClassLabel) -> SubjectSample {
        SubjectSample {
            subject_id: id.into(),
            maps: std::array::from_fn(|_| ChannelMap::zeros(d, s)),
            label,
        }
    }

    #[test]
    fn label_conversions() {
        for (i, l) in ClassLabel::ALL.into_iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(ClassLabel::from_index(i).unwrap(), l);
        }
        assert!(matches!(
            ClassLabel::try_from(3),
            Err(Error::UnknownLabel(3))
        ));
        assert!(matches!(
            ClassLabel::try_from(-1),
            Err(Error::UnknownLabel(-1))
        ));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let samples = vec![
            sample("a", 2, 1, ClassLabel::NonPd),
            sample("a", 2, 1, ClassLabel::EarlyPd),
        ];
        assert!(matches!(
            Dataset::new(2, 1, samples),
            Err(Error::DuplicateSubject(_))
        ));
    }

    #[test]
    fn rejects_mixed_shapes() {
        let samples = vec![
            sample("a", 2, 1, ClassLabel::NonPd),
            sample("b", 3, 1, ClassLabel::EarlyPd),
        ];
        assert!(matches!(
            Dataset::new(2, 1, samples),
            Err(Error::ShapeInconsistent(_))
        ));

        let mut odd = sample("c", 2, 1, ClassLabel::NonPd);
        odd.maps[4] = ChannelMap::zeros(2, 2);
        assert!(matches!(
            Dataset::new(2, 1, vec![odd]),
            Err(Error::ShapeInconsistent(_))
        ));
    }

    #[test]
    fn counts_and_subset() {
        use ClassLabel::*;
        let labels = [NonPd, NonPd, EarlyPd, MidLatePd, MidLatePd, MidLatePd];
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| sample(&format!("s{i}"), 1, 1, l))
            .collect();
        let ds = Dataset::new(1, 1, samples).unwrap();
        assert_eq!(class_counts(&ds), ClassCounts([2, 1, 3]));
        let sub = ds.subset(&[5, 0]);
        assert_eq!(sub.labels(), vec![MidLatePd, NonPd]);
        assert_eq!(
            class_counts(&Dataset::new(1, 1, vec![]).unwrap()),
            ClassCounts([0, 0, 0])
        );
    }
}
