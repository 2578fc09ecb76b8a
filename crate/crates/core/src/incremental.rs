//! Per-element incremental training: one model per material point, each
//! starting from the final parameters of the previous point on a route.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dno::{train, Dataset, DnoModel, LossRecord, ModelSpec, NormStats, TrainConfig};
use crate::eval::quantile;
use crate::oracle::{BarModel, SimulationResult, QUADRANTS};
use crate::rng::derive_seed;
use crate::signal::{fmt_f64, TimeGrid};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementInfo {
    /// Material-point index, `segment * 4 + quadrant`.
    pub id: usize,
    pub segment: usize,
    pub quadrant: usize,
    pub material: String,
}

/// Stress-history datasets of several material points driven by the same loads.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementSet {
    pub grid: TimeGrid,
    /// Shared strain inputs, one load per row.
    pub inputs: Array2<f64>,
    pub elements: Vec<ElementInfo>,
    /// Stress histories per element, same row order as `inputs`.
    pub outputs: Vec<Array2<f64>>,
}

impl ElementSet {
    pub fn new(grid: TimeGrid, inputs: Array2<f64>, elements: Vec<ElementInfo>, outputs: Vec<Array2<f64>>) -> Result<Self> {
        if elements.is_empty() || elements.len() != outputs.len() {
            return Err(Error::invalid("need one output matrix per element and at least one element"));
        }
        let ids: BTreeSet<usize> = elements.iter().map(|e| e.id).collect();
        if ids.len() != elements.len() {
            return Err(Error::invalid("element ids must be unique"));
        }
        for o in &outputs {
            Dataset::new(grid, inputs.clone(), o.clone())?;
        }
        Ok(ElementSet {
            grid,
            inputs,
            elements,
            outputs,
        })
    }

    /// Element datasets from simulations of `loads` (rows of `inputs`) on `bar`.
    /// `ids` selects material points; `None` takes all of them.
    pub fn from_simulations(
        bar: &BarModel,
        grid: TimeGrid,
        inputs: Array2<f64>,
        sims: &[SimulationResult],
        ids: Option<&[usize]>,
    ) -> Result<Self> {
        if sims.len() != inputs.nrows() {
            return Err(Error::shape(format!("{} simulations for {} loads", sims.len(), inputs.nrows())));
        }
        let all: Vec<usize> = (0..bar.n_points()).collect();
        let ids = ids.unwrap_or(&all);
        let mut elements = Vec::with_capacity(ids.len());
        let mut outputs = Vec::with_capacity(ids.len());
        for &id in ids {
            if id >= bar.n_points() {
                return Err(Error::invalid(format!("element {id} does not exist")));
            }
            elements.push(ElementInfo {
                id,
                segment: id / QUADRANTS,
                quadrant: id % QUADRANTS,
                material: bar.material_of(id).name.clone(),
            });
            let mut out = Array2::zeros((sims.len(), grid.n_points));
            for (i, s) in sims.iter().enumerate() {
                if s.stress.ncols() != grid.n_points || s.n_points() != bar.n_points() {
                    return Err(Error::shape(format!("simulation {i} does not match the bar and grid")));
                }
                out.row_mut(i).assign(&s.stress.row(id));
            }
            outputs.push(out);
        }
        ElementSet::new(grid, inputs, elements, outputs)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn position(&self, id: usize) -> Option<usize> {
        self.elements.iter().position(|e| e.id == id)
    }

    pub fn info(&self, id: usize) -> Option<&ElementInfo> {
        self.position(id).map(|k| &self.elements[k])
    }

    pub fn dataset(&self, id: usize) -> Result<Dataset> {
        let k = self
            .position(id)
            .ok_or_else(|| Error::invalid(format!("element {id} is not in the set")))?;
        Dataset::new(self.grid, self.inputs.clone(), self.outputs[k].clone())
    }

    /// Only the listed elements, in the listed order.
    pub fn select(&self, ids: &[usize]) -> Result<ElementSet> {
        let mut elements = Vec::new();
        let mut outputs = Vec::new();
        for &id in ids {
            let k = self
                .position(id)
                .ok_or_else(|| Error::invalid(format!("element {id} is not in the set")))?;
            elements.push(self.elements[k].clone());
            outputs.push(self.outputs[k].clone());
        }
        ElementSet::new(self.grid, self.inputs.clone(), elements, outputs)
    }

    /// Only the first `n` load rows.
    pub fn head(&self, n: usize) -> ElementSet {
        let n = n.min(self.inputs.nrows());
        let rows: Vec<usize> = (0..n).collect();
        ElementSet {
            grid: self.grid,
            inputs: self.inputs.select(Axis(0), &rows),
            elements: self.elements.clone(),
            outputs: self.outputs.iter().map(|o| o.select(Axis(0), &rows)).collect(),
        }
    }

    /// One normalization for every element: the inputs and the pooled stresses.
    pub fn shared_norm(&self) -> NormStats {
        let views: Vec<_> = self.outputs.iter().map(|o| o.view()).collect();
        let pooled = ndarray::concatenate(Axis(0), &views).expect("outputs share a width");
        NormStats::fit(self.inputs.view(), pooled.view())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteStrategy {
    /// Segment-major, then quadrant.
    Default,
    /// Greedy: same material first, then nearest segment, lowest id on ties.
    Similarity,
    Explicit(Vec<usize>),
}

impl RouteStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            RouteStrategy::Default => "default",
            RouteStrategy::Similarity => "similarity",
            RouteStrategy::Explicit(_) => "explicit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteOrder {
    pub strategy: RouteStrategy,
    /// Element ids in visiting order.
    pub order: Vec<usize>,
}

pub fn build_route(elements: &ElementSet, strategy: &RouteStrategy) -> Result<RouteOrder> {
    if elements.is_empty() {
        return Err(Error::invalid("cannot route an empty element set"));
    }
    let order = match strategy {
        RouteStrategy::Default => {
            let mut e: Vec<&ElementInfo> = elements.elements.iter().collect();
            e.sort_by_key(|e| (e.segment, e.quadrant, e.id));
            e.into_iter().map(|e| e.id).collect()
        }
        RouteStrategy::Similarity => similarity_route(&elements.elements),
        RouteStrategy::Explicit(order) => {
            let given: BTreeSet<usize> = order.iter().copied().collect();
            let have: BTreeSet<usize> = elements.elements.iter().map(|e| e.id).collect();
            if order.len() != elements.len() || given != have {
                return Err(Error::invalid(format!(
                    "explicit route {order:?} is not a permutation of the element ids"
                )));
            }
            order.clone()
        }
    };
    Ok(RouteOrder {
        strategy: strategy.clone(),
        order,
    })
}

fn similarity_route(elements: &[ElementInfo]) -> Vec<usize> {
    let mut remaining: Vec<&ElementInfo> = elements.iter().collect();
    remaining.sort_by_key(|e| e.id);
    // largest material group; ties go to the group holding the lowest id
    let mut groups: Vec<(&str, usize, usize)> = Vec::new();
    for e in &remaining {
        match groups.iter_mut().find(|g| g.0 == e.material) {
            Some(g) => g.1 += 1,
            None => groups.push((&e.material, 1, e.id)),
        }
    }
    let start_material = groups
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|g| g.0.to_string())
        .expect("non-empty");
    let first = remaining
        .iter()
        .position(|e| e.material == start_material)
        .expect("group is non-empty");
    let mut current = remaining.remove(first);
    let mut order = vec![current.id];
    while !remaining.is_empty() {
        let nearest = |same: bool| {
            remaining
                .iter()
                .enumerate()
                .filter(|(_, e)| !same || e.material == current.material)
                .min_by_key(|(_, e)| (e.segment.abs_diff(current.segment), e.id))
                .map(|(k, _)| k)
        };
        let k = nearest(true).or_else(|| nearest(false)).expect("non-empty");
        current = remaining.remove(k);
        order.push(current.id);
    }
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMode {
    /// Fixed budget per element.
    Iterations,
    /// Train each element until its loss reaches the threshold (capped by `max_threshold_iters`).
    Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncrementalSchedule {
    pub first_element_iters: usize,
    pub subsequent_iters: usize,
    pub loss_threshold_first: f64,
    pub loss_threshold_rest: f64,
    pub passes: usize,
    pub stop_mode: StopMode,
    /// Safety cap per element in threshold mode.
    pub max_threshold_iters: usize,
}

impl Default for IncrementalSchedule {
    fn default() -> Self {
        IncrementalSchedule {
            first_element_iters: 50_000,
            subsequent_iters: 5_000,
            loss_threshold_first: 5e-4,
            loss_threshold_rest: 5e-4,
            passes: 1,
            stop_mode: StopMode::Iterations,
            max_threshold_iters: 200_000,
        }
    }
}

impl IncrementalSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.first_element_iters == 0 || self.subsequent_iters == 0 || self.max_threshold_iters == 0 {
            return Err(Error::invalid("iteration budgets must be positive"));
        }
        if self.passes == 0 {
            return Err(Error::invalid("at least one pass is required"));
        }
        if self.stop_mode == StopMode::Threshold && !(self.loss_threshold_first > 0.0 && self.loss_threshold_rest > 0.0)
        {
            return Err(Error::invalid("threshold mode needs positive thresholds"));
        }
        Ok(())
    }

    fn element_config(&self, base: &TrainConfig, first: bool, seed: u64) -> TrainConfig {
        let (iters, threshold) = match (self.stop_mode, first) {
            (StopMode::Iterations, true) => (self.first_element_iters, 0.0),
            (StopMode::Iterations, false) => (self.subsequent_iters, 0.0),
            (StopMode::Threshold, true) => (self.max_threshold_iters, self.loss_threshold_first),
            (StopMode::Threshold, false) => (self.max_threshold_iters, self.loss_threshold_rest),
        };
        TrainConfig {
            max_iterations: iters,
            loss_threshold: threshold,
            seed,
            ..base.clone()
        }
    }
}

/// Outcome of training one element in one pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRun {
    pub element: usize,
    pub pass: usize,
    pub warm_started: bool,
    /// Id whose parameters initialized this run, if any.
    pub started_from: Option<usize>,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub reached_threshold: bool,
    pub wall_time_secs: f64,
    pub initial_fingerprint: String,
    pub final_fingerprint: String,
    pub history: Vec<LossRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementalReport {
    pub route: RouteOrder,
    pub schedule: IncrementalSchedule,
    pub norm: NormStats,
    /// In training order, all passes.
    pub runs: Vec<ElementRun>,
    pub total_iterations: usize,
    /// Sum of the per-element optimization times.
    pub wall_time_secs: f64,
    /// Including loss evaluations and bookkeeping.
    pub elapsed_secs: f64,
}

impl IncrementalReport {
    /// `element,pass,iteration,global_iteration,loss` rows.
    pub fn write_loss_curves(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["element", "pass", "iteration", "global_iteration", "loss"])?;
        let mut offset = 0;
        for r in &self.runs {
            for h in &r.history {
                w.write_record([
                    r.element.to_string(),
                    r.pass.to_string(),
                    h.iteration.to_string(),
                    (offset + h.iteration).to_string(),
                    fmt_f64(h.loss),
                ])?;
            }
            offset += r.iterations;
        }
        w.flush()?;
        Ok(())
    }
}

/// Final model of every element, in route order.
pub struct IncrementalModels {
    pub ids: Vec<usize>,
    pub models: Vec<DnoModel>,
}

impl IncrementalModels {
    pub fn get(&self, id: usize) -> Option<&DnoModel> {
        self.ids.iter().position(|&i| i == id).map(|k| &self.models[k])
    }
}

/// Trains every element along `route`. The first element starts from a fresh
/// model built from `spec`; each later element starts from an exact copy of
/// the previous element's final parameters with fresh optimizer moments.
/// Later passes restart each element from its own latest model.
pub fn train_incremental(
    elements: &ElementSet,
    route: &RouteOrder,
    schedule: &IncrementalSchedule,
    base: &TrainConfig,
    spec: &ModelSpec,
) -> Result<(IncrementalModels, IncrementalReport)> {
    schedule.validate()?;
    build_route(elements, &RouteStrategy::Explicit(route.order.clone()))?;
    let started = Instant::now();
    let norm = elements.shared_norm();
    let datasets: Vec<Dataset> = route
        .order
        .iter()
        .map(|&id| elements.dataset(id))
        .collect::<Result<_>>()?;
    let mut models: Vec<Option<DnoModel>> = vec![None; route.order.len()];
    let mut runs = Vec::new();
    let mut previous: Option<(usize, DnoModel)> = None;

    for pass in 0..schedule.passes {
        for (k, &id) in route.order.iter().enumerate() {
            let (init, started_from) = match (&models[k], &previous) {
                (Some(own), _) => (own.clone(), Some(id)),
                (None, Some((prev_id, prev))) => {
                    let mut m = spec.build(elements.grid, norm)?;
                    m.copy_params_from(prev)?;
                    (m, Some(*prev_id))
                }
                (None, None) => (spec.build(elements.grid, norm)?, None),
            };
            let first = pass == 0 && k == 0;
            let cfg = schedule.element_config(base, first, derive_seed(base.seed, (pass * 1_000_003 + id) as u64));
            let (model, rep) = train(&init, &datasets[k], &cfg).map_err(|e| Error::Element {
                element: id,
                source: Box::new(e),
            })?;
            runs.push(ElementRun {
                element: id,
                pass,
                warm_started: started_from.is_some(),
                started_from,
                iterations: rep.iterations,
                initial_loss: rep.initial_loss,
                final_loss: rep.final_loss,
                reached_threshold: rep.reached_threshold,
                wall_time_secs: rep.wall_time_secs,
                initial_fingerprint: init.fingerprint(),
                final_fingerprint: model.fingerprint(),
                history: rep.history,
            });
            previous = Some((id, model.clone()));
            models[k] = Some(model);
        }
    }

    let report = IncrementalReport {
        route: route.clone(),
        schedule: schedule.clone(),
        norm,
        total_iterations: runs.iter().map(|r| r.iterations).sum(),
        wall_time_secs: runs.iter().map(|r| r.wall_time_secs).sum(),
        elapsed_secs: started.elapsed().as_secs_f64(),
        runs,
    };
    Ok((
        IncrementalModels {
            ids: route.order.clone(),
            models: models.into_iter().map(|m| m.expect("every element trained")).collect(),
        },
        report,
    ))
}

/// Loss change across one element hand-over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub material_boundary: bool,
    /// Initial loss of `to` minus final loss of `from`.
    pub jump: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteRow {
    pub strategy: String,
    pub order: Vec<usize>,
    pub total_iterations: usize,
    pub wall_time_secs: f64,
    pub transitions: Vec<Transition>,
    pub median_boundary_jump: Option<f64>,
    pub median_within_jump: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

/// Transitions of the first pass.
pub fn transitions(elements: &ElementSet, report: &IncrementalReport) -> Vec<Transition> {
    let first: Vec<&ElementRun> = report.runs.iter().filter(|r| r.pass == 0).collect();
    first
        .windows(2)
        .map(|w| {
            let material = |id| elements.info(id).map(|e| e.material.as_str());
            Transition {
                from: w[0].element,
                to: w[1].element,
                material_boundary: material(w[0].element) != material(w[1].element),
                jump: w[1].initial_loss - w[0].final_loss,
            }
        })
        .collect()
}

/// Threshold-mode incremental training under each strategy with identical seeds.
pub fn route_comparison(
    elements: &ElementSet,
    schedule: &IncrementalSchedule,
    base: &TrainConfig,
    spec: &ModelSpec,
    strategies: &[RouteStrategy],
) -> Result<Vec<RouteRow>> {
    if strategies.len() < 2 {
        return Err(Error::invalid("a route comparison needs at least two strategies"));
    }
    let schedule = IncrementalSchedule {
        stop_mode: StopMode::Threshold,
        ..schedule.clone()
    };
    strategies
        .iter()
        .map(|s| {
            let route = build_route(elements, s)?;
            let (_, report) = train_incremental(elements, &route, &schedule, base, spec)?;
            let tr = transitions(elements, &report);
            let pick = |boundary: bool| {
                median(
                    tr.iter()
                        .filter(|t| t.material_boundary == boundary)
                        .map(|t| t.jump)
                        .collect(),
                )
            };
            Ok(RouteRow {
                strategy: s.name().to_string(),
                order: route.order.clone(),
                total_iterations: report.total_iterations,
                wall_time_secs: report.wall_time_secs,
                median_boundary_jump: pick(true),
                median_within_jump: pick(false),
                transitions: tr,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dno::CombineMode;
    use crate::oracle::{simulate, MaterialModel};
    use crate::signal::{GpLoadParams, GpSampler};

    fn element_set(bar: &BarModel, n_loads: usize, ids: Option<&[usize]>) -> ElementSet {
        let grid = TimeGrid::new(0.0, 1.0, 21).unwrap();
        let gp = GpSampler::new(GpLoadParams::default(), grid).unwrap();
        let mut inputs = Array2::zeros((n_loads, 21));
        let mut sims = Vec::new();
        for i in 0..n_loads {
            let l = gp.sample(i as u64);
            sims.push(simulate(bar, &l).unwrap());
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&l.strain));
        }
        ElementSet::from_simulations(bar, grid, inputs, &sims, ids).unwrap()
    }

    fn info(id: usize, material: &str) -> ElementInfo {
        ElementInfo {
            id,
            segment: id / 4,
            quadrant: id % 4,
            material: material.into(),
        }
    }

    fn fake_set(infos: Vec<ElementInfo>) -> ElementSet {
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let n = infos.len();
        ElementSet::new(grid, Array2::zeros((1, 3)), infos, vec![Array2::zeros((1, 3)); n]).unwrap()
    }

    fn spec() -> ModelSpec {
        ModelSpec {
            mode: CombineMode::Hadamard,
            arch: "12".parse().unwrap(),
            latent: 4,
            seed: 3,
        }
    }

    #[test]
    fn single_element_routes() {
        let s = fake_set(vec![info(5, "steel")]);
        for st in [RouteStrategy::Default, RouteStrategy::Similarity, RouteStrategy::Explicit(vec![5])] {
            assert_eq!(build_route(&s, &st).unwrap().order, vec![5]);
        }
        assert!(build_route(&s, &RouteStrategy::Explicit(vec![4])).is_err());
    }

    #[test]
    fn homogeneous_similarity_equals_default() {
        let s = fake_set((0..40).map(|i| info(i, "steel")).collect());
        let d = build_route(&s, &RouteStrategy::Default).unwrap().order;
        assert_eq!(d, (0..40).collect::<Vec<_>>());
        assert_eq!(build_route(&s, &RouteStrategy::Similarity).unwrap().order, d);
    }

    #[test]
    fn default_layout_groups_materials() {
        let bar = BarModel::default();
        let infos: Vec<ElementInfo> = (0..40).map(|i| info(i, &bar.material_of(i).name)).collect();
        let s = fake_set(infos);
        let r = build_route(&s, &RouteStrategy::Similarity).unwrap();
        let mats: Vec<&str> = r.order.iter().map(|&i| bar.material_of(i).name.as_str()).collect();
        assert!(mats[..27].iter().all(|m| *m == "steel"));
        assert!(mats[27..].iter().all(|m| *m == "aluminum"));
        // a permutation, reproducible
        let mut sorted = r.order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..40).collect::<Vec<_>>());
        assert_eq!(build_route(&s, &RouteStrategy::Similarity).unwrap(), r);
    }

    #[test]
    fn similarity_breaks_ties_by_id() {
        let s = fake_set(vec![info(9, "a"), info(0, "a"), info(4, "b"), info(1, "a"), info(8, "b")]);
        assert_eq!(build_route(&s, &RouteStrategy::Similarity).unwrap().order, vec![0, 1, 9, 8, 4]);
    }

    #[test]
    fn warm_start_copies_parameters_exactly() {
        let bar = BarModel::default();
        let set = element_set(&bar, 12, Some(&[0, 1, 2]));
        let route = build_route(&set, &RouteStrategy::Default).unwrap();
        let schedule = IncrementalSchedule {
            first_element_iters: 60,
            subsequent_iters: 20,
            passes: 2,
            ..Default::default()
        };
        let base = TrainConfig {
            batch_size: 4,
            log_interval: 10,
            ..Default::default()
        };
        let (models, rep) = train_incremental(&set, &route, &schedule, &base, &spec()).unwrap();
        assert_eq!(rep.runs.len(), 6);
        assert!(!rep.runs[0].warm_started);
        for w in rep.runs.windows(2).take(2) {
            assert_eq!(w[1].initial_fingerprint, w[0].final_fingerprint);
        }
        // second pass restarts each element from its own model
        for k in 0..3 {
            assert_eq!(rep.runs[3 + k].initial_fingerprint, rep.runs[k].final_fingerprint);
            assert_eq!(rep.runs[3 + k].started_from, Some(rep.runs[k].element));
        }
        assert_eq!(rep.runs[0].iterations, 60);
        assert_eq!(rep.runs[1].iterations, 20);
        assert_eq!(rep.total_iterations, rep.runs.iter().map(|r| r.iterations).sum::<usize>());
        assert_eq!(models.get(2).unwrap().fingerprint(), rep.runs[5].final_fingerprint);
        let dir = tempfile::tempdir().unwrap();
        rep.write_loss_curves(&dir.path().join("curves.csv")).unwrap();
    }

    #[test]
    fn identical_elements_transfer_their_loss() {
        let steel = BarModel::homogeneous(MaterialModel::stainless_steel(), 2).unwrap();
        let set = element_set(&steel, 10, Some(&[0, 1]));
        assert_eq!(set.outputs[0], set.outputs[1]);
        let route = build_route(&set, &RouteStrategy::Default).unwrap();
        let schedule = IncrementalSchedule {
            first_element_iters: 50,
            subsequent_iters: 10,
            ..Default::default()
        };
        let base = TrainConfig {
            batch_size: 5,
            ..Default::default()
        };
        let (_, rep) = train_incremental(&set, &route, &schedule, &base, &spec()).unwrap();
        assert!((rep.runs[1].initial_loss - rep.runs[0].final_loss).abs() <= 1e-12);
    }

    #[test]
    fn comparison_is_deterministic() {
        let bar = BarModel::default();
        let set = element_set(&bar, 10, Some(&[0, 1, 2, 3]));
        let schedule = IncrementalSchedule {
            loss_threshold_first: 0.3,
            loss_threshold_rest: 0.3,
            max_threshold_iters: 500,
            ..Default::default()
        };
        let base = TrainConfig {
            batch_size: 5,
            log_interval: 10,
            ..Default::default()
        };
        let rows = route_comparison(
            &set,
            &schedule,
            &base,
            &spec(),
            &[RouteStrategy::Default, RouteStrategy::Default],
        )
        .unwrap();
        assert_eq!(rows[0].total_iterations, rows[1].total_iterations);
        assert_eq!(rows[0].transitions.len(), 3);
        assert!(route_comparison(&set, &schedule, &base, &spec(), &[RouteStrategy::Default]).is_err());
    }

    #[test]
    fn element_set_projects_stress_rows() {
        let bar = BarModel::default();
        let set = element_set(&bar, 3, None);
        assert_eq!(set.len(), 40);
        let grid = set.grid;
        let gp = GpSampler::new(GpLoadParams::default(), grid).unwrap();
        let sim = simulate(&bar, &gp.sample(1)).unwrap();
        let d = set.dataset(7).unwrap();
        assert_eq!(d.outputs.row(1), sim.stress.row(7));
        assert_eq!(set.info(7).unwrap().segment, 1);
        assert!(set.dataset(40).is_err());
    }
}
