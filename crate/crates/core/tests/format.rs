mod common;

use dfn::format::{load_network, parse_network, save_network, to_json, FormatError, Units};
use dfn::gas::pressure_to_potential;

#[test]
fn example_network_shape() {
    let inst = load_network(common::example_network_path()).unwrap();
    assert_eq!(inst.network.num_nodes(), 16);
    assert_eq!(inst.network.num_edges(), 18);
    assert_eq!(inst.units, Units::Potential);
    assert_eq!(inst.network.slack_potential(), 5.0);
    // the slack's box and every other node share the sweep floor
    assert!(inst.scenario.pi_lo.iter().all(|&v| v == 0.5));
}

#[test]
fn save_and_load_round_trip() {
    let inst = load_network(common::example_network_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    save_network(&path, &inst).unwrap();
    assert_eq!(load_network(&path).unwrap(), inst);
}

const PRESSURE: &str = r#"{
  "meta": {"units": "pressure", "name": "line"},
  "nodes": [
    {"id": "source", "slack": true, "value": 60.0, "upper": 60.0, "x_min": 0.0, "x_max": 100.0},
    {"id": "mid", "lower": 30.0, "upper": 60.0, "injection": 0.0},
    {"id": "town", "lower": 30.0, "upper": 60.0, "x_min": -5.0, "x_max": 0.0, "cost": 1.0, "injection": -2.0}
  ],
  "edges": [
    {"id": "a", "from": "source", "to": "mid", "delta": 0.4},
    {"id": "b", "from": "mid", "to": "town", "delta": 0.6, "b_min": 0.0, "b_max": 200.0}
  ]
}"#;

#[test]
fn pressures_become_squared_potentials() {
    let inst = parse_network(PRESSURE).unwrap();
    assert_eq!(inst.units, Units::Pressure);
    assert_eq!(inst.network.slack_potential(), pressure_to_potential(60.0));
    let town = inst.network.node_id("town").unwrap();
    assert_eq!(inst.scenario.pi_lo[town], pressure_to_potential(30.0));
    assert_eq!(inst.scenario.b_hi[1], 200.0);
    assert_eq!(inst.injections.as_ref().unwrap().get(town), -2.0);
}

#[test]
fn pressure_files_round_trip() {
    let inst = parse_network(PRESSURE).unwrap();
    let again = parse_network(&to_json(&inst)).unwrap();
    assert_eq!(again.units, Units::Pressure);
    assert_eq!(again.network.num_edges(), 2);
    for (a, b) in inst.scenario.pi_hi.iter().zip(&again.scenario.pi_hi) {
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }
    assert_eq!(again.scenario.b_lo, inst.scenario.b_lo);
}

#[test]
fn rejects_duplicate_ids() {
    let text = PRESSURE.replace("\"id\": \"mid\"", "\"id\": \"town\"");
    assert!(matches!(parse_network(&text), Err(FormatError::DuplicateId { what: "node", .. })));
}

#[test]
fn rejects_unknown_fields() {
    let text = PRESSURE.replace("\"delta\": 0.4", "\"delta\": 0.4, \"length\": 3");
    let err = parse_network(&text).unwrap_err();
    assert!(err.is_parse(), "{err}");
}

#[test]
fn slack_needs_a_value() {
    let text = PRESSURE.replace("\"value\": 60.0, ", "");
    assert!(matches!(parse_network(&text), Err(FormatError::Invalid(_))));
}
