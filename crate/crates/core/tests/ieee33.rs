//! End-to-end checks of the shipped IEEE 33-bus cases.

use shsd_core::grid::network::load_network_file;
use shsd_core::grid::params::load_params_file;
use shsd_core::grid::SystemBuilder;
use shsd_core::scenario::{default_features, default_input, generate_dataset, ContingencyCatalog};
use shsd_core::shs::{momi_check, observability, DetectionSchedule, InputSignal, NoiseSpec};
use shsd_core::tsformer::ModelConfig;

use std::path::Path;

fn data(file: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
}

fn catalog(net: &str) -> ContingencyCatalog {
    let network = load_network_file(&data(net)).unwrap();
    let params = load_params_file(&data("params.toml")).unwrap();
    ContingencyCatalog::build(SystemBuilder::new(network, params).unwrap()).unwrap()
}

#[test]
fn radial_case_builds_and_is_hurwitz() {
    let cat = catalog("ieee33.net");
    let model = &cat.base.model;
    // 17 converter states + 3 generators x 2 states
    assert_eq!(model.n(), 23);
    assert_eq!(model.p(), 2);
    assert!(model.is_hurwitz(), "abscissa {}", model.spectral_abscissa());
    // Purely radial feeder: the only outages that keep every dynamic bus
    // tied to the slack are on the load-only branch (buses 19-22), and
    // dropping pure loads leaves the reduced dynamics untouched, so they are
    // degenerate. No Physical contingency exists on this case.
    assert!(cat.admissible_lines.is_empty());
    assert!(cat
        .modes()
        .iter()
        .all(|m| !matches!(m.class_label, shsd_core::shs::ClassLabel::Physical)));
}

#[test]
fn meshed_case_has_admissible_outages_that_change_dynamics() {
    let cat = catalog("ieee33-mesh.net");
    assert!(
        cat.admissible_lines.len() >= 30,
        "only {} admissible outages",
        cat.admissible_lines.len()
    );
    // Every admissible outage must be Hurwitz and at least one must move A.
    let base_a = &cat.base.model.a;
    let mut max_shift = 0.0f64;
    for mode in cat.modes() {
        assert!(
            mode.model.is_hurwitz(),
            "mode {} ({}) unstable",
            mode.id,
            mode.description
        );
        max_shift = max_shift.max((&mode.model.a - base_a).amax());
    }
    assert!(max_shift > 1e-3, "outages barely change the dynamics");
}

#[test]
fn default_input_passes_momi_and_model_is_observable() {
    let cat = catalog("ieee33-mesh.net");
    let input = default_input(&cat.base.model, 0.5).unwrap();
    let rational = match &input {
        InputSignal::Rational(r) => r.clone(),
        other => panic!("unexpected input {other:?}"),
    };
    let verdict = momi_check(&rational, &cat.library().unwrap()).unwrap();
    assert!(verdict.is_accept(), "{verdict:?}");

    let (obs, rank) = observability(&cat.base);
    // Two sensors over a stiff 23-state model: powers of A span many
    // decades, so the numerical rank is far below n. The report is still
    // well defined and bounded.
    assert_eq!(obs.nrows(), 2 * cat.base.model.n());
    assert!(rank >= 4 && rank <= cat.base.model.n(), "rank {rank}");
}

#[test]
fn small_dataset_generates_with_reference_features() {
    let cat = catalog("ieee33-mesh.net");
    let features = default_features(&cat.base.model);
    assert_eq!(features.len(), 22);
    let config = shsd_core::scenario::GenConfig {
        counts: [3, 3, 3],
        schedule: DetectionSchedule::default(),
        noise: NoiseSpec::default(),
        input: default_input(&cat.base.model, 0.5).unwrap(),
        features,
        base_seed: 17,
    };
    let (mut ds, records) = generate_dataset(&cat, &config).unwrap();
    assert_eq!(ds.windows.len(), 9);
    assert_eq!(ds.s, 30);
    assert_eq!(ds.m, 22);
    assert_eq!(records.len(), 9);
    ds.split(0.8, 0).unwrap();
    // reference architecture accepts these dimensions
    ModelConfig::reference(ds.s, ds.m, ds.n_classes)
        .validate()
        .unwrap();
}
