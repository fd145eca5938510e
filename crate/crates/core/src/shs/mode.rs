//! Mode set of the randomly switched linear system, with directory
//! serialization.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matio;
use crate::ss::StateSpaceModel;

/// Contingency class of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    Normal,
    Physical,
    Measurement,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::Physical => 1,
            ClassLabel::Measurement => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::Normal),
            1 => Some(ClassLabel::Physical),
            2 => Some(ClassLabel::Measurement),
            _ => None,
        }
    }

    pub const COUNT: usize = 3;
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Physical => "physical",
            ClassLabel::Measurement => "measurement",
        };
        f.write_str(s)
    }
}

/// One operational scenario: a state-space triple tagged with id and class.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub id: u32,
    pub class_label: ClassLabel,
    pub model: StateSpaceModel,
    pub description: String,
}

/// Ordered mode set sharing state/input dimensions, with one Normal base mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLibrary {
    modes: Vec<Mode>,
    base_id: u32,
}

impl ModeLibrary {
    pub fn new(modes: Vec<Mode>, base_id: u32) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Validation("mode library is empty".into()));
        }
        let n = modes[0].model.n();
        let m = modes[0].model.m();
        let mut seen = std::collections::BTreeSet::new();
        let mut base_count = 0;
        for mode in &modes {
            mode.model.validate()?;
            if !seen.insert(mode.id) {
                return Err(Error::Validation(format!("duplicate mode id {}", mode.id)));
            }
            if mode.model.n() != n || mode.model.m() != m {
                return Err(Error::Dimension(format!(
                    "mode {} has dimensions ({}, {}), expected ({n}, {m})",
                    mode.id,
                    mode.model.n(),
                    mode.model.m()
                )));
            }
            if mode.id == base_id {
                base_count += 1;
                if mode.class_label != ClassLabel::Normal {
                    return Err(Error::Validation(format!(
                        "base mode {base_id} must be Normal, is {}",
                        mode.class_label
                    )));
                }
            }
        }
        if base_count != 1 {
            return Err(Error::Validation(format!(
                "library must contain exactly one base mode with id {base_id}"
            )));
        }
        Ok(Self { modes, base_id })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn base(&self) -> &Mode {
        self.get(self.base_id).expect("base mode present")
    }

    pub fn base_id(&self) -> u32 {
        self.base_id
    }

    pub fn get(&self, id: u32) -> Option<&Mode> {
        self.modes.iter().find(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestMode {
    id: u32,
    class: String,
    description: String,
    a_file: String,
    b_file: String,
    c_file: String,
    state_names: Vec<String>,
    input_names: Vec<String>,
    output_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    base_id: u32,
    modes: Vec<ManifestMode>,
}

/// Write a library as a directory: `manifest.toml` plus one text matrix file
/// per mode matrix. Round-trips f64 values exactly.
pub fn save_library(dir: &Path, library: &ModeLibrary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        base_id: library.base_id,
        modes: Vec::new(),
    };
    for mode in library.modes() {
        let a_file = format!("mode{:03}_a.txt", mode.id);
        let b_file = format!("mode{:03}_b.txt", mode.id);
        let c_file = format!("mode{:03}_c.txt", mode.id);
        matio::write_matrix_file(&dir.join(&a_file), &mode.model.a)?;
        matio::write_matrix_file(&dir.join(&b_file), &mode.model.b)?;
        matio::write_matrix_file(&dir.join(&c_file), &mode.model.c)?;
        manifest.modes.push(ManifestMode {
            id: mode.id,
            class: mode.class_label.to_string(),
            description: mode.description.clone(),
            a_file,
            b_file,
            c_file,
            state_names: mode.model.state_names.clone(),
            input_names: mode.model.input_names.clone(),
            output_names: mode.model.output_names.clone(),
        });
    }
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

pub fn load_library(dir: &Path) -> Result<ModeLibrary> {
    let text = std::fs::read_to_string(dir.join("manifest.toml"))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut modes = Vec::new();
    for entry in manifest.modes {
        let class = match entry.class.as_str() {
            "normal" => ClassLabel::Normal,
            "physical" => ClassLabel::Physical,
            "measurement" => ClassLabel::Measurement,
            other => return Err(Error::Parse(format!("unknown class {other:?}"))),
        };
        let model = StateSpaceModel::new(
            matio::read_matrix_file(&dir.join(&entry.a_file))?,
            matio::read_matrix_file(&dir.join(&entry.b_file))?,
            matio::read_matrix_file(&dir.join(&entry.c_file))?,
            entry.state_names,
            entry.input_names,
            entry.output_names,
        )?;
        modes.push(Mode {
            id: entry.id,
            class_label: class,
            model,
            description: entry.description,
        });
    }
    ModeLibrary::new(modes, manifest.base_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    pub(crate) fn scalar_mode(id: u32, class: ClassLabel, a: f64) -> Mode {
        Mode {
            id,
            class_label: class,
            model: StateSpaceModel::new(
                DMatrix::from_element(1, 1, a),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
                vec!["x".into()],
                vec!["u".into()],
                vec!["y".into()],
            )
            .unwrap(),
        description: format!("a = {a}"),
        }
    }

    #[test]
    fn library_invariants() {
        let modes = vec![
            scalar_mode(0, ClassLabel::Normal, -1.0),
            scalar_mode(1, ClassLabel::Physical, -2.0),
        ];
        let lib = ModeLibrary::new(modes.clone(), 0).unwrap();
        assert_eq!(lib.base().id, 0);

        // duplicate id
        let dup = vec![modes[0].clone(), modes[0].clone()];
        assert!(ModeLibrary::new(dup, 0).is_err());

        // base must be Normal
        assert!(ModeLibrary::new(modes, 1).is_err());
    }

    #[test]
    fn directory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let modes = vec![
            scalar_mode(0, ClassLabel::Normal, -1.0 / 3.0),
            scalar_mode(5, ClassLabel::Measurement, 0.1 + 0.2),
        ];
        let lib = ModeLibrary::new(modes, 0).unwrap();
        save_library(dir.path(), &lib).unwrap();
        let back = load_library(dir.path()).unwrap();
        assert_eq!(lib, back);
    }
}
