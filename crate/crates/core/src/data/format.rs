//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.json` plus one binary feature file per
//! subject. Feature file layout, all little-endian:
//!
//! ```text
//! "PDFE"  u16 version  u32 d  u32 S  f64[6 * d * S]
//! ```
//!
//! Values are emotion-major, then channel, then spatial position.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassLabel, Dataset, Emotion, FeatureMap, SubjectSample, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::nn::ChannelMap;

pub const FEATURE_MAGIC: &[u8; 4] = b"PDFE";
pub const FEATURE_FORMAT_VERSION: u16 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub d: usize,
    #[serde(rename = "S")]
    pub spatial: usize,
    pub emotion_order: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub subject_id: String,
    /// Kept as a raw integer so out-of-range values get a dedicated error.
    pub label: i64,
    /// Path relative to the manifest's directory.
    pub feature_file: String,
}

pub fn write_feature_file(path: &Path, maps: &[FeatureMap; NUM_EMOTIONS]) -> Result<()> {
    let (d, s) = (maps[0].channels(), maps[0].spatial());
    if maps.iter().any(|m| m.channels() != d || m.spatial() != s) {
        return Err(Error::ShapeInconsistent(
            "feature maps of differing shapes".into(),
        ));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * NUM_EMOTIONS * d * s);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_field(d, "d")?.to_le_bytes());
    buf.extend_from_slice(&u32_field(s, "S")?.to_le_bytes());
    for v in maps.iter().flat_map(|m| m.values()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<[FeatureMap; NUM_EMOTIONS]> {
    let bytes = read_existing(path)?;
    let truncated = |reason: String| Error::Truncated {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "PDFE",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version.into(),
            supported: FEATURE_FORMAT_VERSION.into(),
        });
    }
    let d = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let s = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if d == 0 || s == 0 {
        return Err(Error::ShapeInconsistent(format!(
            "{}: d={d}, S={s}",
            path.display()
        )));
    }
    let expected = (NUM_EMOTIONS * d * s)
        .checked_mul(8)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| truncated("declared shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(truncated(format!(
            "expected {expected} bytes for d={d}, S={s}, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let block = d * s;
    let mut maps = values
        .chunks_exact(block)
        .map(|c| ChannelMap::new(d, s, c.to_vec()));
    let mut next = || maps.next().expect("length checked above");
    Ok([next()?, next()?, next()?, next()?, next()?, next()?])
}

/// Reads a dataset from a manifest path, or a directory containing one.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest_path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_FILE)
    } else {
        manifest_path.to_path_buf()
    };
    let text = String::from_utf8(read_existing(&manifest_path)?)
        .map_err(|_| Error::Manifest("manifest is not UTF-8".into()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            supported: MANIFEST_FORMAT_VERSION,
        });
    }
    if manifest.emotion_order != Emotion::canonical_names() {
        return Err(Error::Manifest(format!(
            "emotion_order must be {:?}, found {:?}",
            Emotion::canonical_names(),
            manifest.emotion_order
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let label = ClassLabel::try_from(entry.label)?;
        let maps = read_feature_file(&base.join(&entry.feature_file))?;
        if (maps[0].channels(), maps[0].spatial()) != (manifest.d, manifest.spatial) {
            return Err(Error::ShapeInconsistent(format!(
                "{} is {}x{}, manifest declares {}x{}",
                entry.feature_file,
                maps[0].channels(),
                maps[0].spatial(),
                manifest.d,
                manifest.spatial
            )));
        }
        samples.push(SubjectSample {
            subject_id: entry.subject_id.clone(),
            maps,
            label,
        });
    }
    Dataset::new(manifest.d, manifest.spatial, samples)
}

/// Writes `dir/manifest.json` and `dir/features/*.pdfe`. Returns the
/// manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path, force: bool) -> Result<PathBuf> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("write_dataset"));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(Error::AlreadyExists(manifest_path));
    }
    fs::create_dir_all(dir.join("features"))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, sample) in dataset.samples().iter().enumerate() {
        let rel = format!("features/{i:06}.pdfe");
        write_feature_file(&dir.join(&rel), &sample.maps)?;
        entries.push(ManifestEntry {
            subject_id: sample.subject_id.clone(),
            label: sample.label.index() as i64,
            feature_file: rel,
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        d: dataset.d(),
        spatial: dataset.spatial(),
        emotion_order: Emotion::canonical_names().map(String::from).to_vec(),
        samples: entries,
    };
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest_path)
}

/// Imports `S = 1` features from CSV with header
/// `subject_id,label,happiness_0,..,happiness_{d-1},sadness_0,..,disgust_{d-1}`.
///
/// Values pass through a decimal rendering, so they are exact only if the
/// producer wrote round-trippable (shortest or 17-digit) decimals.
pub fn import_csv(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let n_features = header.len().saturating_sub(2);
    if header.get(0) != Some("subject_id") || header.get(1) != Some("label") || n_features == 0 {
        return Err(Error::Manifest(
            "csv header must start with subject_id,label".into(),
        ));
    }
    if n_features % NUM_EMOTIONS != 0 {
        return Err(Error::ShapeInconsistent(format!(
            "{n_features} feature columns is not a multiple of {NUM_EMOTIONS}"
        )));
    }
    let d = n_features / NUM_EMOTIONS;
    for (k, name) in csv_feature_columns(d).iter().enumerate() {
        if header.get(k + 2) != Some(name.as_str()) {
            return Err(Error::Manifest(format!(
                "csv column {} should be {name:?}, found {:?}",
                k + 2,
                header.get(k + 2)
            )));
        }
    }
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::Manifest(format!("csv row {}: {what}", row + 1));
        let label: i64 = record[1]
            .trim()
            .parse()
            .map_err(|_| bad("label is not an integer"))?;
        let values = record
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("non-numeric feature"))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite feature"));
        }
        let mut maps = values
            .chunks_exact(d)
            .map(|c| ChannelMap::new(d, 1, c.to_vec()));
        let mut next = || maps.next().expect("column count checked");
        samples.push(SubjectSample {
            subject_id: record[0].to_string(),
            maps: [next()?, next()?, next()?, next()?, next()?, next()?],
            label: ClassLabel::try_from(label)?,
        });
    }
    Dataset::new(d, 1, samples)
}

/// Writes an `S = 1` dataset in the layout read by [`import_csv`].
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.spatial() != 1 {
        return Err(Error::ShapeInconsistent("csv export needs S = 1".into()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["subject_id".to_string(), "label".to_string()];
    header.extend(csv_feature_columns(dataset.d()));
    writer.write_record(&header)?;
    for s in dataset.samples() {
        let mut row = vec![s.subject_id.clone(), s.label.index().to_string()];
        row.extend(
            s.maps
                .iter()
                .flat_map(|m| m.values())
                .map(|v| format!("{v:?}")),
        );
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Dispatches on extension: `.csv` is imported, anything else is a manifest
/// (or dataset directory).
pub fn load_any(path: &Path) -> Result<Dataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => import_csv(path),
        _ => load_dataset(path),
    }
}

fn csv_feature_columns(d: usize) -> Vec<String> {
    Emotion::ALL
        .iter()
        .flat_map(|e| (0..d).map(move |j| format!("{}_{j}", e.name())))
        .collect()
}

fn u32_field(v: usize, name: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{name} = {v} does not fit in u32")))
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}
