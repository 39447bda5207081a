use super::{Branch, Bus, FlexUnit, Generator, GridError, Network};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

/// JSON Schema of the network file format.
pub const NETWORK_SCHEMA: &str = include_str!("../../schema/network.schema.json");

const CASE33: &str = include_str!("../../data/case33.json");

/// Networks shipped with the library, addressable by name.
pub fn bundled_network(name: &str) -> Option<Network> {
    match name {
        "case33" => Some(network_from_json(CASE33, "case33").expect("bundled case33 is valid")),
        _ => None,
    }
}

/// The bundled 33-bus feeder.
pub fn case33() -> Network {
    bundled_network("case33").expect("bundled")
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    base_mva: f64,
    base_kv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_voltage: Option<f64>,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    flex_units: Vec<FlexUnit>,
}

fn validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: serde_json::Value =
            serde_json::from_str(NETWORK_SCHEMA).expect("bundled schema is valid JSON");
        jsonschema::validator_for(&schema).expect("bundled schema compiles")
    })
}

/// Parses, schema-checks and validates a network document.
pub fn network_from_json(text: &str, default_name: &str) -> Result<Network, GridError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
    let problems: Vec<String> = validator()
        .iter_errors(&value)
        .map(|e| {
            let at = e.instance_path().to_string();
            format!("{}: {}", if at.is_empty() { "/" } else { at.as_str() }, e)
        })
        .collect();
    if !problems.is_empty() {
        return Err(GridError::Schema(problems));
    }
    let f: NetworkFile =
        serde_json::from_value(value).map_err(|e| GridError::Parse(e.to_string()))?;
    Network::new(
        f.name.unwrap_or_else(|| default_name.to_string()),
        f.base_mva,
        f.base_kv,
        f.ref_voltage,
        f.buses,
        f.branches,
        f.generators,
        f.flex_units,
    )
}

/// Loads a network file; the file stem names the network unless the document does.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("network");
    network_from_json(&text, stem)
}

/// Serializes the network's data (branch states revert to their normal state on reload).
pub fn network_to_json(net: &Network) -> String {
    let f = NetworkFile {
        name: Some(net.name.clone()),
        base_mva: net.base_mva,
        base_kv: net.base_kv,
        ref_voltage: Some(net.ref_voltage),
        buses: net.buses.clone(),
        branches: net.branches.clone(),
        generators: net.generators.clone(),
        flex_units: net.flex_units.clone(),
    };
    serde_json::to_string_pretty(&f).expect("network data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "base_mva": 1, "base_kv": 0.4,
        "buses": [
            {"id": 1, "demand_p": 0, "demand_q": 0, "v_min": 0.9, "v_max": 1.1, "is_reference": true},
            {"id": 2, "demand_p": 50, "demand_q": 20, "v_min": 0.9, "v_max": 1.1, "is_reference": false}
        ],
        "branches": [{"from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.01, "s_max": 500, "normally_open": false}],
        "generators": [], "flex_units": []
    }"#;

    #[test]
    fn parses_minimal_document() {
        let n = network_from_json(TWO_BUS, "two").unwrap();
        assert_eq!(n.name, "two");
        assert_eq!(n.buses.len(), 2);
        assert_eq!(n.ref_voltage, 1.0);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let bad = TWO_BUS.replace(
            "\"v_min\": 0.9, \"v_max\": 1.1, \"is_reference\": false",
            "\"v_max\": 1.1, \"is_reference\": false",
        );
        match network_from_json(&bad, "x").unwrap_err() {
            GridError::Schema(msgs) => assert!(
                msgs.iter()
                    .any(|m| m.contains("/buses/1") && m.contains("v_min")),
                "{msgs:?}"
            ),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            network_from_json("{", "x"),
            Err(GridError::Parse(_))
        ));
    }

    #[test]
    fn bundled_case33_counts() {
        let n = case33();
        assert_eq!(n.buses.len(), 33);
        assert_eq!(n.in_service_branches().count(), 32);
        let mut buses: Vec<i64> = n.flex_units.iter().map(|u| u.bus).collect();
        buses.sort_unstable();
        assert_eq!(buses, vec![6, 18, 22, 25, 33]);
        let (p, q) = n.total_demand();
        assert_eq!((p, q), (3715.0, 2300.0));
    }

    #[test]
    fn json_round_trip_preserves_data() {
        let n = network_from_json(TWO_BUS, "two").unwrap();
        let again = network_from_json(&network_to_json(&n), "other").unwrap();
        assert_eq!(n, again);
    }
}
