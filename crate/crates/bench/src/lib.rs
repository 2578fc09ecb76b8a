//! Shared fixtures for the benchmarks.

use dno_core::dno::{Dataset, DnoModel, ModelSpec};
use dno_core::oracle::{simulate, BarModel};
use dno_core::signal::{GpLoadParams, GpSampler};
use dno_core::TimeGrid;
use ndarray::{Array2, ArrayView1};

/// `n` GP loads on the default grid and their simulated forces.
pub fn force_dataset(n: usize) -> Dataset {
    let grid = TimeGrid::default();
    let gp = GpSampler::new(GpLoadParams::default(), grid).expect("default GP");
    let bar = BarModel::default();
    let mut x = Array2::zeros((n, grid.n_points));
    let mut y = Array2::zeros((n, grid.n_points));
    for i in 0..n {
        let l = gp.sample(i as u64);
        let s = simulate(&bar, &l).expect("default loads simulate");
        x.row_mut(i).assign(&ArrayView1::from(&l.strain));
        y.row_mut(i).assign(&ArrayView1::from(&s.force));
    }
    Dataset::new(grid, x, y).expect("consistent shapes")
}

pub fn model_for(spec: &ModelSpec, data: &Dataset) -> DnoModel {
    spec.build(data.grid, data.norm_stats()).expect("valid spec")
}
