use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MaterialModel;
use crate::{rng, Error, Result};

/// Material points per segment (one per quadrant of the cross-section).
pub const QUADRANTS: usize = 4;

/// Seed of the built-in 27 steel / 13 aluminum layout.
pub const DEFAULT_LAYOUT_SEED: u64 = 2023;

/// Composite bar: `n_segments` in series, each made of [`QUADRANTS`]
/// equal-area cubes in parallel.
#[derive(Clone, Debug, PartialEq)]
pub struct BarModel {
    pub materials: Vec<MaterialModel>,
    /// Material index per material point, row-major `(segment, quadrant)`.
    pub cubes: Vec<usize>,
    /// mm
    pub segment_length: f64,
    /// mm^2
    pub cross_section_area: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BarFile {
    n_segments: usize,
    materials: BTreeMap<String, MaterialModel>,
    cubes: Vec<Vec<String>>,
    #[serde(default = "default_segment_length")]
    segment_length: f64,
    #[serde(default = "default_area")]
    cross_section_area: f64,
}

fn default_segment_length() -> f64 {
    50.0
}

fn default_area() -> f64 {
    100.0 * 100.0
}

impl Default for BarModel {
    fn default() -> Self {
        BarModel::random_layout(10, 27, DEFAULT_LAYOUT_SEED).expect("default layout is valid")
    }
}

impl BarModel {
    /// Two-material bar with `n_steel` steel cubes placed by a seeded shuffle;
    /// the remaining cubes are aluminum.
    pub fn random_layout(n_segments: usize, n_steel: usize, seed: u64) -> Result<Self> {
        let total = n_segments * QUADRANTS;
        if n_segments == 0 || n_steel > total {
            return Err(Error::invalid(format!(
                "cannot place {n_steel} steel cubes in {total} slots"
            )));
        }
        let mut cubes: Vec<usize> = (0..total).map(|i| usize::from(i >= n_steel)).collect();
        cubes.shuffle(&mut rng::seeded(seed));
        Self::from_parts(
            vec![MaterialModel::stainless_steel(), MaterialModel::aluminum()],
            cubes,
        )
    }

    pub fn homogeneous(material: MaterialModel, n_segments: usize) -> Result<Self> {
        Self::from_parts(vec![material], vec![0; n_segments * QUADRANTS])
    }

    pub fn from_parts(materials: Vec<MaterialModel>, cubes: Vec<usize>) -> Result<Self> {
        let bar = BarModel {
            materials,
            cubes,
            segment_length: default_segment_length(),
            cross_section_area: default_area(),
        };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cubes.is_empty() || self.cubes.len() % QUADRANTS != 0 {
            return Err(Error::invalid(format!(
                "cube count {} is not a positive multiple of {QUADRANTS}",
                self.cubes.len()
            )));
        }
        for m in &self.materials {
            m.validate()?;
        }
        if let Some(bad) = self.cubes.iter().find(|&&c| c >= self.materials.len()) {
            return Err(Error::invalid(format!("cube references undefined material {bad}")));
        }
        if !(self.segment_length > 0.0 && self.cross_section_area > 0.0) {
            return Err(Error::invalid("bar dimensions must be positive"));
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        self.cubes.len() / QUADRANTS
    }

    pub fn n_points(&self) -> usize {
        self.cubes.len()
    }

    pub fn material_of(&self, point: usize) -> &MaterialModel {
        &self.materials[self.cubes[point]]
    }

    pub fn segment_materials(&self, segment: usize) -> &[usize] {
        &self.cubes[segment * QUADRANTS..(segment + 1) * QUADRANTS]
    }

    /// Number of cubes made of each material, by material index.
    pub fn material_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.materials.len()];
        for &c in &self.cubes {
            counts[c] += 1;
        }
        counts
    }

    /// Each segment split into `k` consecutive copies of itself.
    pub fn subdivide(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("refinement multiplier must be at least 1"));
        }
        let cubes = (0..self.n_segments())
            .flat_map(|s| std::iter::repeat_n(self.segment_materials(s), k).flatten().copied())
            .collect();
        Ok(BarModel {
            materials: self.materials.clone(),
            cubes,
            segment_length: self.segment_length / k as f64,
            cross_section_area: self.cross_section_area,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BarFile {
            n_segments: self.n_segments(),
            materials: self
                .materials
                .iter()
                .map(|m| (m.name.clone(), m.clone()))
                .collect(),
            cubes: self
                .cubes
                .chunks(QUADRANTS)
                .map(|row| row.iter().map(|&c| self.materials[c].name.clone()).collect())
                .collect(),
            segment_length: self.segment_length,
            cross_section_area: self.cross_section_area,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BarFile = serde_json::from_str(text)?;
        if file.cubes.len() != file.n_segments {
            return Err(Error::invalid(format!(
                "layout has {} rows but n_segments = {}",
                file.cubes.len(),
                file.n_segments
            )));
        }
        let materials: Vec<MaterialModel> = file
            .materials
            .into_iter()
            .map(|(name, mut m)| {
                m.name = name;
                m
            })
            .collect();
        let mut cubes = Vec::with_capacity(file.n_segments * QUADRANTS);
        for (s, row) in file.cubes.iter().enumerate() {
            if row.len() != QUADRANTS {
                return Err(Error::invalid(format!(
                    "segment {s} lists {} cubes, expected {QUADRANTS}",
                    row.len()
                )));
            }
            for name in row {
                let idx = materials
                    .iter()
                    .position(|m| &m.name == name)
                    .ok_or_else(|| Error::invalid(format!("cube references undefined material `{name}`")))?;
                cubes.push(idx);
            }
        }
        let bar = BarModel {
            materials,
            cubes,
            segment_length: file.segment_length,
            cross_section_area: file.cross_section_area,
        };
        bar.validate()?;
        Ok(bar)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn layout_hash(&self) -> String {
        let json = self.to_json().expect("bar serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
