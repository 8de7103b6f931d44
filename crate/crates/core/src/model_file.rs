//! Versioned JSON persistence for unit-cell models.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{UnitCellGeometry, UnitCellModel};
use crate::error::{Error, Result};
use crate::varactor::VaractorModel;

pub const SCHEMA_VERSION: u32 = 1;

/// The calibrated model shipped with the crate.
pub const SHIPPED_MODEL_JSON: &str = include_str!("../data/calibrated_model.json");
/// Starting point used to produce the shipped model.
pub const SEED_MODEL_JSON: &str = include_str!("../data/seed_model.json");
/// Example varactor parameter sheet; the values are placeholders.
pub const VARACTOR_EXAMPLE_JSON: &str = include_str!("../data/varactor_smv2023_example.json");

/// A varactor parameter set with a note on where its numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaractorSheet {
    pub part: String,
    pub status: String,
    #[serde(default)]
    pub notes: Vec<String>,
    pub varactor: VaractorModel,
}

impl VaractorSheet {
    pub fn from_json(text: &str) -> Result<Self> {
        let sheet: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        sheet.varactor.validate()?;
        Ok(sheet)
    }

    pub fn example() -> Self {
        Self::from_json(VARACTOR_EXAMPLE_JSON).expect("example varactor sheet is valid")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// How the parameters were obtained.
    pub source: String,
    /// Path of the calibration report, relative to the model file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_report: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: UnitCellModel,
    #[serde(default)]
    pub geometry: UnitCellGeometry,
    #[serde(default)]
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn new(model: UnitCellModel, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model,
            geometry: UnitCellGeometry::default(),
            provenance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate()?;
        self.geometry.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_MODEL_JSON).expect("shipped model file is valid")
    }

    pub fn shipped_seed() -> Self {
        Self::from_json(SEED_MODEL_JSON).expect("shipped seed file is valid")
    }
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_loads() {
        let f = ModelFile::shipped();
        assert_eq!(f.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn example_varactor_sheet_matches_the_shipped_capacitance_law() {
        let sheet = VaractorSheet::example();
        let m = ModelFile::shipped().model;
        for d in [m.d1, m.d2] {
            for v in [0.0, 1.0, 7.5, 20.0] {
                assert_eq!(sheet.varactor.capacitance(v).unwrap(), d.capacitance(v).unwrap());
            }
        }
        let span = (
            sheet.varactor.bias_for_capacitance(5e-12).unwrap(),
            sheet.varactor.bias_for_capacitance(0.5e-12).unwrap(),
        );
        assert!(span.0 >= sheet.varactor.v_min && span.1 <= sheet.varactor.v_max, "{span:?}");
    }

    #[test]
    fn shipped_seed_loads() {
        assert_eq!(ModelFile::shipped_seed().schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempdir();
        let path = dir.join("m.json");
        let f = ModelFile::shipped();
        f.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), f);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_field_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(SHIPPED_MODEL_JSON).unwrap();
        v["model"]["branch1"]["q"] = serde_json::json!(1.0);
        let e = ModelFile::from_json(&v.to_string()).unwrap_err();
        assert!(e.to_string().contains("unknown field `q`"), "{e}");
    }

    #[test]
    fn wrong_version_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(SHIPPED_MODEL_JSON).unwrap();
        v["schema_version"] = serde_json::json!(99);
        assert!(matches!(ModelFile::from_json(&v.to_string()), Err(Error::Schema(_))));
    }

    #[test]
    fn nested_invariants_enforced() {
        let mut v: serde_json::Value = serde_json::from_str(SHIPPED_MODEL_JSON).unwrap();
        v["model"]["l0"] = serde_json::json!(-1.0);
        assert!(ModelFile::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempdir();
        let target = dir.join("missing").join("m.json");
        assert!(write_atomic(&target, b"x").is_err());
        assert!(!target.exists());
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempdir() -> std::path::PathBuf {
        use std::sync::atomic::{AtomicUsize, Ordering};
        static N: AtomicUsize = AtomicUsize::new(0);
        let d = std::env::temp_dir().join(format!(
            "riscell-mf-{}-{}",
            std::process::id(),
            N.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&d).unwrap();
        d
    }
}
