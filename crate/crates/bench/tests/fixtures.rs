use dno_bench::{force_dataset, model_for};
use dno_core::dno::ModelSpec;

#[test]
fn fixtures_are_deterministic() {
    let a = force_dataset(3);
    assert_eq!(a, force_dataset(3));
    assert_eq!(a.inputs.dim(), (3, 101));
    let spec = ModelSpec {
        arch: "8".parse().unwrap(),
        ..Default::default()
    };
    let m = model_for(&spec, &a);
    assert_eq!(m.predict_batch(a.inputs.view()).unwrap().dim(), (3, 101));
}
