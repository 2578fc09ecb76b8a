//! Pairs load and simulation files and writes train/test dataset directories.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dno_core::dno::{Dataset, DatasetManifest, SplitDataset};
use dno_core::incremental::{ElementInfo, ElementSet};
use dno_core::oracle::{BarModel, SimulationResult, QUADRANTS};
use dno_core::{LoadSignal, TimeGrid};
use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{CliError, Context, Result};

/// What the dataset outputs are.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Reaction force, MN.
    Force,
    /// Stress of one material point, MPa.
    Element(usize),
    /// One dataset per material point, sharing the split.
    Elements,
}

impl FromStr for Target {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "force" => Ok(Target::Force),
            "elements" => Ok(Target::Elements),
            _ => s
                .strip_prefix("element:")
                .and_then(|id| id.parse().ok())
                .map(Target::Element)
                .ok_or_else(|| CliError::config(format!("unknown target `{s}` (force, element:<id> or elements)"))),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Force => f.write_str("force"),
            Target::Element(id) => write!(f, "element:{id}"),
            Target::Elements => f.write_str("elements"),
        }
    }
}

fn csv_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::missing(dir, "directory does not exist"));
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if stem != "refinement" {
                    out.insert(stem.to_string(), path);
                }
            }
        }
    }
    Ok(out)
}

/// Load/simulation file pairs matched by file stem, sorted by name.
pub fn pair_files(load_dir: &Path, sim_dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let loads = csv_stems(load_dir)?;
    let sims = csv_stems(sim_dir)?;
    let orphan_loads: Vec<String> = loads.keys().filter(|k| !sims.contains_key(*k)).cloned().collect();
    let orphan_sims: Vec<String> = sims.keys().filter(|k| !loads.contains_key(*k)).cloned().collect();
    if !orphan_loads.is_empty() || !orphan_sims.is_empty() {
        return Err(CliError::Pairing {
            orphan_loads,
            orphan_sims,
        });
    }
    if loads.is_empty() {
        return Err(CliError::missing(load_dir, "no load files"));
    }
    Ok(loads
        .into_iter()
        .map(|(k, l)| {
            let s = sims[&k].clone();
            (k, l, s)
        })
        .collect())
}

/// Loaded pairs: sample names, the strain matrix, and every simulation.
pub struct Pairs {
    pub names: Vec<String>,
    pub grid: TimeGrid,
    pub inputs: Array2<f64>,
    pub sims: Vec<SimulationResult>,
}

pub fn read_pairs(load_dir: &Path, sim_dir: &Path) -> Result<Pairs> {
    let files = pair_files(load_dir, sim_dir)?;
    let mut names = Vec::with_capacity(files.len());
    let mut loads = Vec::with_capacity(files.len());
    let mut sims = Vec::with_capacity(files.len());
    for (name, lp, sp) in files {
        let load = LoadSignal::read_csv(&lp).context(|| format!("reading {}", lp.display()))?;
        let sim = SimulationResult::read_csv(&sp).context(|| format!("reading {}", sp.display()))?;
        if sim.force.len() != load.strain.len() {
            return Err(CliError::Other(format!(
                "{name}: load has {} samples but simulation {}",
                load.strain.len(),
                sim.force.len()
            )));
        }
        names.push(name);
        loads.push(load);
        sims.push(sim);
    }
    let grid = loads[0].grid;
    if let Some(l) = loads.iter().find(|l| l.grid != grid) {
        return Err(CliError::Other(format!("loads use different grids: {:?} and {:?}", grid, l.grid)));
    }
    let mut inputs = Array2::zeros((loads.len(), grid.n_points));
    for (i, l) in loads.iter().enumerate() {
        inputs.row_mut(i).assign(&ArrayView1::from(&l.strain));
    }
    Ok(Pairs {
        names,
        grid,
        inputs,
        sims,
    })
}

/// Splits `(inputs, outputs)` with a seeded shuffle and fits the normalization on the training rows.
#[allow(clippy::too_many_arguments)]
pub fn build_split(
    names: &[String],
    grid: TimeGrid,
    inputs: &Array2<f64>,
    outputs: Array2<f64>,
    target: &str,
    output_units: &str,
    train_fraction: f64,
    seed: u64,
    load_seeds: &BTreeMap<String, u64>,
    bar_hash: Option<String>,
) -> Result<SplitDataset> {
    let (tr, te) = Dataset::split_indices(names.len(), train_fraction, seed).context(|| "splitting".into())?;
    let all = Dataset::new(grid, inputs.clone(), outputs).context(|| "assembling dataset".into())?;
    let train = all.subset(&tr);
    let test = all.subset(&te);
    let pick = |idx: &[usize]| idx.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    let manifest = DatasetManifest {
        grid,
        target: target.to_string(),
        input_units: "strain".into(),
        output_units: output_units.into(),
        train_fraction,
        split_seed: seed,
        train_samples: pick(&tr),
        test_samples: pick(&te),
        load_seeds: names.iter().filter_map(|n| load_seeds.get(n).copied()).collect(),
        bar_hash,
        norm: train.norm_stats(),
        train_hash: train.content_hash(),
        test_hash: test.content_hash(),
    };
    Ok(SplitDataset { train, test, manifest })
}

pub fn element_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("element_{id:02}"))
}

/// Writes the dataset(s) for `target` under `out`. `Elements` writes one
/// `element_<id>` subdirectory per point plus a copy of the bar layout.
/// Returns the written directories.
pub fn dataset_build(
    pairs: &Pairs,
    bar: Option<&BarModel>,
    target: Target,
    train_fraction: f64,
    seed: u64,
    load_seeds: &BTreeMap<String, u64>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let bar_hash = bar.map(|b| b.layout_hash());
    let n_points = pairs.sims[0].n_points();
    let stress_rows = |id: usize| -> Result<Array2<f64>> {
        if id >= n_points {
            return Err(CliError::config(format!("element {id} is not in the bar ({n_points} points)")));
        }
        let rows: Vec<_> = pairs.sims.iter().map(|s| s.stress.row(id)).collect();
        Ok(ndarray::stack(Axis(0), &rows).expect("equal lengths"))
    };
    let write = |dir: &Path, outputs: Array2<f64>, name: &str, units: &str| -> Result<PathBuf> {
        let split = build_split(
            &pairs.names,
            pairs.grid,
            &pairs.inputs,
            outputs,
            name,
            units,
            train_fraction,
            seed,
            load_seeds,
            bar_hash.clone(),
        )?;
        split.save(dir).context(|| format!("writing {}", dir.display()))?;
        Ok(dir.to_path_buf())
    };
    match target {
        Target::Force => {
            let rows: Vec<_> = pairs.sims.iter().map(|s| ArrayView1::from(&s.force)).collect();
            let outputs = ndarray::stack(Axis(0), &rows).expect("equal lengths");
            Ok(vec![write(out, outputs, "force", "MN")?])
        }
        Target::Element(id) => Ok(vec![write(out, stress_rows(id)?, &target.to_string(), "MPa")?]),
        Target::Elements => {
            let bar = bar.ok_or_else(|| CliError::missing("bar.json", "an elements dataset needs the bar layout"))?;
            std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
            bar.save(&out.join("bar.json")).context(|| "writing bar.json".into())?;
            (0..n_points)
                .map(|id| {
                    write(
                        &element_dir(out, id),
                        stress_rows(id)?,
                        &Target::Element(id).to_string(),
                        "MPa",
                    )
                })
                .collect()
        }
    }
}

/// Reads an `elements` dataset into training and test element sets.
pub fn read_element_sets(dir: &Path) -> Result<(ElementSet, ElementSet, BarModel)> {
    let bar_path = dir.join("bar.json");
    if !bar_path.exists() {
        return Err(CliError::missing(&bar_path, "build the dataset with target `elements`"));
    }
    let bar = BarModel::load(&bar_path).context(|| format!("reading {}", bar_path.display()))?;
    let mut infos = Vec::new();
    let mut train_out = Vec::new();
    let mut test_out = Vec::new();
    let mut first: Option<SplitDataset> = None;
    for id in 0..bar.n_points() {
        let d = element_dir(dir, id);
        if !d.exists() {
            continue;
        }
        let split = SplitDataset::load(&d).context(|| format!("reading {}", d.display()))?;
        if let Some(f) = &first {
            if f.train.inputs != split.train.inputs || f.test.inputs != split.test.inputs {
                return Err(CliError::Other(format!("{} uses a different split", d.display())));
            }
        }
        infos.push(ElementInfo {
            id,
            segment: id / QUADRANTS,
            quadrant: id % QUADRANTS,
            material: bar.material_of(id).name.clone(),
        });
        train_out.push(split.train.outputs.clone());
        test_out.push(split.test.outputs.clone());
        first.get_or_insert(split);
    }
    let first = first.ok_or_else(|| CliError::missing(dir, "no element_<id> directories"))?;
    let train = ElementSet::new(first.train.grid, first.train.inputs.clone(), infos.clone(), train_out)
        .context(|| "assembling training elements".into())?;
    let test = ElementSet::new(first.test.grid, first.test.inputs.clone(), infos, test_out)
        .context(|| "assembling test elements".into())?;
    Ok((train, test, bar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_parse_and_print() {
        for s in ["force", "element:7", "elements"] {
            assert_eq!(s.parse::<Target>().unwrap().to_string(), s);
        }
        assert!("element:x".parse::<Target>().is_err());
        assert!("stress".parse::<Target>().is_err());
    }

    #[test]
    fn orphans_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let (l, s) = (dir.path().join("loads"), dir.path().join("sims"));
        std::fs::create_dir_all(&l).unwrap();
        std::fs::create_dir_all(&s).unwrap();
        for n in ["a", "b"] {
            std::fs::write(l.join(format!("{n}.csv")), "").unwrap();
        }
        for n in ["b", "c"] {
            std::fs::write(s.join(format!("{n}.csv")), "").unwrap();
        }
        match pair_files(&l, &s) {
            Err(CliError::Pairing {
                orphan_loads,
                orphan_sims,
            }) => {
                assert_eq!(orphan_loads, vec!["a"]);
                assert_eq!(orphan_sims, vec!["c"]);
            }
            other => panic!("{:?}", other.map(|v| v.len())),
        }
        assert_eq!(pair_files(&l, &dir.path().join("none")).unwrap_err().exit_code(), 3);
    }
}
