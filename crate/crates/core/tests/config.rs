use std::path::Path;

use cim_core::coupling::OperatorSpec;
use cim_core::harness::{ExperimentSpec, GraphSpec};
use cim_core::machine::{PumpSpec, RunConfig};
use cim_core::{GraphFamily, GraphParams};
use proptest::prelude::*;

fn spec_with(op: Option<OperatorSpec>, multiple: f64, noise: f64, seeds: Vec<u64>) -> ExperimentSpec {
    let mut run = RunConfig::new(PumpSpec::ThresholdMultiple(multiple));
    run.noise_amp = noise;
    let mut spec = ExperimentSpec::new(
        "prop",
        GraphSpec::generate(GraphParams::reference(GraphFamily::Complete), 8, 0),
        run,
        seeds,
    );
    spec.coupling.operator = op;
    spec
}

fn pair() -> impl Strategy<Value = [f64; 2]> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| [a, b])
}

fn operator() -> impl Strategy<Value = OperatorSpec> {
    prop_oneof![
        proptest::collection::vec(pair(), 8).prop_map(|kernel| OperatorSpec::Circulant { kernel, allow_active: true }),
        proptest::collection::vec(pair(), 64).prop_map(|entries| OperatorSpec::Dense { n: 8, entries, allow_active: false }),
    ]
}

proptest! {
    #[test]
    fn experiment_toml_round_trips(
        op in proptest::option::of(operator()),
        multiple in 0.0..3.0f64,
        noise in 1e-6..1.0f64,
        seeds in proptest::collection::vec(any::<u64>(), 1..6),
    ) {
        let spec = spec_with(op, multiple, noise, seeds);
        let text = spec.to_toml().unwrap();
        let back = ExperimentSpec::from_toml(&text, Path::new(".")).unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn explicit_operator_drives_the_run() {
    let kernel = vec![[0.9, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
    let mut spec = spec_with(Some(OperatorSpec::Circulant { kernel, allow_active: false }), 1.2, 1e-3, vec![0]);
    spec.run.n_round_trips = 50;
    let bundle = cim_core::harness::run_experiment(&spec, &Default::default()).unwrap();
    assert!((bundle.rho - 0.9).abs() < 1e-12);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let spec = ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!spec.seeds.is_empty());
    }
}
