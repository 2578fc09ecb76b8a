use std::path::{Path, PathBuf};
use std::process::Command;

use dno_cli::dataset_build::{dataset_build, read_element_sets, read_pairs, Target};
use dno_cli::pipeline::RunLayout;
use dno_cli::{run_pipeline, PipelineConfig, RunManifest, RunOptions, Stage};
use dno_core::dno::{DnoModel, SplitDataset};
use dno_core::oracle::{BarModel, SimulationResult};

fn smoke_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.grid.n_points = 41;
    c.loads.count = 10;
    c.dataset.train_fraction = 0.8;
    c.model.arch = "16x2".parse().unwrap();
    c.model.latent = 8;
    c.train.max_iterations = 100;
    c.train.batch_size = 4;
    c.train.log_interval = 25;
    c.incremental.schedule.first_element_iters = 20;
    c.incremental.schedule.subsequent_iters = 5;
    c
}

fn quiet() -> RunOptions {
    RunOptions {
        workers: 2,
        ..Default::default()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn smoke_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = smoke_config();
    let out = run_pipeline(&cfg, &Stage::ALL, root, &quiet()).unwrap();
    assert_eq!(out.len(), 5);
    assert!(out.iter().all(|o| !o.skipped));
    let l = RunLayout::new(root, Target::Force);
    for d in [l.loads(), l.sims(), l.dataset(), l.models(), l.reports()] {
        assert!(d.join("manifest.json").exists(), "{}", d.display());
    }
    assert_eq!(std::fs::read_dir(l.loads()).unwrap().count(), 11);
    assert!(l.sims().join("bar.json").exists());
    for f in ["train.csv", "test.csv", "dataset.json"] {
        assert!(l.dataset().join(f).exists());
    }
    for f in ["model.json", "train_report.json", "losscurve.csv"] {
        assert!(l.models().join(f).exists());
    }
    for f in ["accuracy.csv", "error_profile.csv", "summary.json"] {
        assert!(l.reports().join(f).exists());
    }
    let m = RunManifest::read(&l.loads()).unwrap();
    assert_eq!(m.seeds.len(), 10);
    assert_eq!(m.config, cfg);
    let sims = RunManifest::read(&l.sims()).unwrap();
    assert_eq!(sims.bar_hash, Some(BarModel::default().layout_hash()));
    // manifest hashes are recomputable
    assert_eq!(m.outputs, dno_cli::manifest::hash_outputs(&l.loads()).unwrap());
}

#[test]
fn rerun_skips_and_force_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = smoke_config();
    run_pipeline(&cfg, &Stage::ALL, root, &quiet()).unwrap();
    let model = root.join("models/force/model.json");
    let before = read(&model);
    let again = run_pipeline(&cfg, &Stage::ALL, root, &quiet()).unwrap();
    assert!(again.iter().all(|o| o.skipped));
    assert_eq!(read(&model), before);

    // a changed training recipe reruns training and evaluation only
    let mut changed = cfg.clone();
    changed.train.max_iterations = 50;
    let out = run_pipeline(&changed, &Stage::ALL, root, &quiet()).unwrap();
    let skipped: Vec<bool> = out.iter().map(|o| o.skipped).collect();
    assert_eq!(skipped, vec![true, true, true, false, false]);

    // tampering with an output invalidates the stage
    std::fs::write(root.join("loads/gp_00003.csv"), "t,strain\n").unwrap();
    let out = run_pipeline(&changed, &[Stage::Generate], root, &quiet()).unwrap();
    assert!(!out[0].skipped);

    let forced = RunOptions { force: true, ..quiet() };
    let out = run_pipeline(&changed, &[Stage::Generate], root, &forced).unwrap();
    assert!(!out[0].skipped);
}

#[test]
fn manifest_config_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&smoke_config(), &Stage::ALL, &a, &quiet()).unwrap();
    let recorded = RunManifest::read(&a.join("models/force")).unwrap().config;
    let single = RunOptions { workers: 1, ..quiet() };
    run_pipeline(&recorded, &Stage::ALL, &b, &single).unwrap();
    for f in [
        "loads/gp_00007.csv",
        "sims/gp_00007.csv",
        "datasets/force/train.csv",
        "datasets/force/test.csv",
        "datasets/force/dataset.json",
        "models/force/model.json",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
}

fn generated_pairs(root: &Path) -> (PathBuf, PathBuf) {
    let mut cfg = smoke_config();
    cfg.grid.n_points = 21;
    run_pipeline(&cfg, &[Stage::Generate, Stage::Simulate], root, &quiet()).unwrap();
    (root.join("loads"), root.join("sims"))
}

#[test]
fn dataset_split_and_projections() {
    let dir = tempfile::tempdir().unwrap();
    let (loads, sims) = generated_pairs(dir.path());
    let pairs = read_pairs(&loads, &sims).unwrap();
    assert_eq!(pairs.names.len(), 10);
    let seeds = RunManifest::read(&loads).unwrap().seeds;

    let force_dir = dir.path().join("force");
    dataset_build(&pairs, None, Target::Force, 0.8, 3, &seeds, &force_dir).unwrap();
    let force = SplitDataset::load(&force_dir).unwrap();
    assert_eq!((force.train.len(), force.test.len()), (8, 2));
    assert_eq!(force.train.outputs.ncols(), 21);
    assert_eq!(force.manifest.load_seeds.len(), 10);

    let el_dir = dir.path().join("el7");
    dataset_build(&pairs, None, Target::Element(7), 0.8, 3, &seeds, &el_dir).unwrap();
    let el = SplitDataset::load(&el_dir).unwrap();
    assert_eq!(el.manifest.train_samples, force.manifest.train_samples);
    for (row, name) in el.train.outputs.rows().into_iter().zip(&el.manifest.train_samples) {
        let sim = SimulationResult::read_csv(&sims.join(format!("{name}.csv"))).unwrap();
        assert_eq!(row, sim.stress.row(7));
    }
    assert!(dataset_build(&pairs, None, Target::Element(40), 0.8, 3, &seeds, &dir.path().join("x")).is_err());
    assert!(dataset_build(&pairs, None, Target::Elements, 0.8, 3, &seeds, &dir.path().join("y")).is_err());

    let bar = BarModel::load(&sims.join("bar.json")).unwrap();
    let all_dir = dir.path().join("all");
    let written = dataset_build(&pairs, Some(&bar), Target::Elements, 0.8, 3, &seeds, &all_dir).unwrap();
    assert_eq!(written.len(), 40);
    let (train, test, back) = read_element_sets(&all_dir).unwrap();
    assert_eq!(back, bar);
    assert_eq!((train.len(), train.inputs.nrows(), test.inputs.nrows()), (40, 8, 2));
    assert_eq!(train.dataset(7).unwrap().outputs, el.train.outputs);
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = smoke_config();
    run_pipeline(&cfg, &Stage::ALL, root, &quiet()).unwrap();
    let model_path = root.join("models/force/model.json");
    let model = DnoModel::load(&model_path).unwrap();
    let copy = root.join("copy.json");
    model.save(&copy).unwrap();
    assert_eq!(DnoModel::load(&copy).unwrap(), model);
    assert_eq!(read(&copy), read(&model_path));

    let data = SplitDataset::load(&root.join("datasets/force")).unwrap();
    data.save(&root.join("copy_ds")).unwrap();
    assert_eq!(SplitDataset::load(&root.join("copy_ds")).unwrap(), data);

    let toml_path = root.join("cfg.toml");
    std::fs::write(&toml_path, cfg.to_toml()).unwrap();
    assert_eq!(PipelineConfig::load(&toml_path).unwrap(), cfg);
    let json_path = root.join("cfg.json");
    std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(PipelineConfig::load(&json_path).unwrap(), cfg);

    let sim_path = root.join("sims/gp_00002.csv");
    let sim = SimulationResult::read_csv(&sim_path).unwrap();
    sim.write_csv(&root.join("sim_copy.csv")).unwrap();
    assert_eq!(read(&root.join("sim_copy.csv")), read(&sim_path));
}

fn dno(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dno")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let good = d.join("good.toml");
    std::fs::write(&good, smoke_config().to_toml()).unwrap();
    assert_eq!(dno(&["pipeline", "--stages", "none", "--config", &s(&good), "--out", &s(d)]).0, 0);

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "[train]\nlearning_rat = 1\n").unwrap();
    let (code, err) = dno(&["pipeline", "--stages", "none", "--config", &s(&bad), "--out", &s(d)]);
    assert_eq!(code, 2, "{err}");

    let invalid = d.join("invalid.toml");
    std::fs::write(&invalid, "[train]\nbatch_size = 0\n").unwrap();
    assert_eq!(dno(&["pipeline", "--config", &s(&invalid), "--out", &s(d)]).0, 2);

    let (code, err) = dno(&["pipeline", "--stages", "train", "--config", &s(&good), "--out", &s(&d.join("run"))]);
    assert_eq!(code, 3, "{err}");
    assert_eq!(dno(&["train", "--data", &s(&d.join("nowhere")), "--out", &s(&d.join("m.json"))]).0, 3);
}

#[test]
fn binary_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: PathBuf| p.to_str().unwrap().to_string();
    let ok = |args: &[&str]| {
        let (code, err) = dno(args);
        assert_eq!(code, 0, "{args:?}: {err}");
    };
    ok(&["generate", "--kind", "gp", "--n", "21", "--count", "6", "--seed", "9", "--out", &s(d.join("loads"))]);
    ok(&["generate", "--kind", "sin", "--n", "41", "--t-end", "2", "--out", &s(d.join("extra"))]);
    ok(&["simulate", "--loads", &s(d.join("loads")), "--out", &s(d.join("sims")), "--refine", "1,2", "--workers", "2"]);
    assert!(d.join("sims/refinement.csv").exists());
    ok(&["dataset", "--loads", &s(d.join("loads")), "--sims", &s(d.join("sims")), "--train-fraction", "0.5", "--out", &s(d.join("ds"))]);
    let ds = SplitDataset::load(&d.join("ds")).unwrap();
    assert_eq!((ds.train.len(), ds.test.len()), (3, 3));
    ok(&[
        "train", "--data", &s(d.join("ds")), "--arch", "12x2", "--mode", "dot", "--latent", "6", "--train-mode", "point",
        "--batch", "2", "--lr", "0.001", "--max-iter", "30", "--threshold", "0", "--out", &s(d.join("m/model.json")),
    ]);
    assert!(d.join("m/manifest.json").exists());
    ok(&["predict", "--model", &s(d.join("m/model.json")), "--load", &s(d.join("extra/sin_00000.csv")), "--out", &s(d.join("pred.csv"))]);
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().count(), 22);
    ok(&["evaluate", "--model", &s(d.join("m/model.json")), "--data", &s(d.join("ds")), "--out", &s(d.join("rep"))]);
    assert!(d.join("rep/summary.json").exists());

    ok(&["dataset", "--loads", &s(d.join("loads")), "--sims", &s(d.join("sims")), "--target", "elements", "--out", &s(d.join("els"))]);
    let cfg = d.join("inc.toml");
    let mut c = smoke_config();
    c.model.arch = "8".parse().unwrap();
    c.train.batch_size = 2;
    std::fs::write(&cfg, c.to_toml()).unwrap();
    ok(&[
        "train-incremental", "--config", &s(cfg.clone()), "--data", &s(d.join("els")), "--route", "similarity",
        "--first-iters", "10", "--rest-iters", "2", "--out", &s(d.join("inc")),
    ]);
    for f in ["route.json", "losscurves.csv", "model_0.json", "model_39.json", "manifest.json"] {
        assert!(d.join("inc").join(f).exists(), "{f}");
    }
}
