//! JSON interchange.
//!
//! ```text
//! { "version": 1,
//!   "nodes":    [ { "id": 1, "mode_labels": [..], "shape": [..], "data": "<base64 f64 LE>" } ],
//!   "bonds":    [ { "label": "j_1", "a": 1, "b": 2, "rank": 6 } ],
//!   "physical": { "1": { "label": "s_1", "dim": 10 } } }
//! ```
//!
//! `data` may also be a plain array of numbers. Node tensors may list their
//! modes in any order; they are permuted into canonical order on load.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{NodeId, PhysicalMode, TensorNetwork};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FileNetwork {
    version: u32,
    nodes: Vec<FileNode>,
    bonds: Vec<FileBond>,
    physical: BTreeMap<String, FilePhysical>,
}

#[derive(Serialize, Deserialize)]
struct FileNode {
    id: u32,
    mode_labels: Vec<String>,
    shape: Vec<usize>,
    data: FileData,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FileData {
    Base64(String),
    Numbers(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
struct FileBond {
    label: String,
    a: u32,
    b: u32,
    rank: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FilePhysical {
    One(PhysicalMode),
    Many(Vec<PhysicalMode>),
}

fn parse_error(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { location: location.into(), message: message.into() }
}

fn encode(data: &[f64]) -> String {
    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| format!("invalid base64: {e}"))?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Writes a network as pretty-printed JSON. Output depends only on the
/// network contents, so equal networks serialize to identical bytes.
pub fn serialize(net: &TensorNetwork) -> String {
    let nodes = net
        .nodes()
        .map(|(id, t)| FileNode {
            id: id.0,
            mode_labels: t.labels().to_vec(),
            shape: t.shape().to_vec(),
            data: FileData::Base64(encode(t.data())),
        })
        .collect();
    let mut bonds: Vec<FileBond> = net
        .bonds()
        .map(|b| FileBond { label: b.label.clone(), a: b.a.0, b: b.b.0, rank: b.rank })
        .collect();
    bonds.sort_by(|x, y| x.label.cmp(&y.label));
    let physical = net
        .physical
        .iter()
        .map(|(id, p)| {
            let entry = match p.as_slice() {
                [one] => FilePhysical::One(one.clone()),
                many => FilePhysical::Many(many.to_vec()),
            };
            (id.0.to_string(), entry)
        })
        .collect();
    let file = FileNetwork { version: FORMAT_VERSION, nodes, bonds, physical };
    serde_json::to_string_pretty(&file).expect("network JSON is always serializable")
}

/// Reads a network written by [`serialize`] and checks it.
pub fn deserialize(text: &str) -> Result<TensorNetwork> {
    let file: FileNetwork = serde_json::from_str(text)
        .map_err(|e| parse_error(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(parse_error("version", format!("unsupported format version {}", file.version)));
    }

    let mut physical: BTreeMap<u32, Vec<PhysicalMode>> = BTreeMap::new();
    for (key, entry) in file.physical {
        let id: u32 = key
            .parse()
            .map_err(|_| parse_error(format!("physical.{key}"), "key is not a node id"))?;
        let modes = match entry {
            FilePhysical::One(p) => vec![p],
            FilePhysical::Many(ps) => ps,
        };
        physical.insert(id, modes);
    }

    let mut net = TensorNetwork::new();
    for (i, node) in file.nodes.into_iter().enumerate() {
        let at = format!("nodes[{i}]");
        let data = match node.data {
            FileData::Base64(s) => decode(&s).map_err(|m| parse_error(&at, m))?,
            FileData::Numbers(v) => v,
        };
        let tensor =
            DenseTensor::new(node.mode_labels, node.shape, data).map_err(|e| parse_error(&at, e.to_string()))?;
        let phys = physical.remove(&node.id).unwrap_or_default();
        net.add_node(NodeId(node.id), tensor, phys)
            .map_err(|_| parse_error(&at, format!("duplicate node id {}", node.id)))?;
    }
    if let Some(id) = physical.keys().next() {
        return Err(parse_error(format!("physical.{id}"), "no node with this id"));
    }

    let mut labels = BTreeSet::new();
    for (i, b) in file.bonds.into_iter().enumerate() {
        let at = format!("bonds[{i}]");
        if !labels.insert(b.label.clone()) {
            return Err(parse_error(at, format!("duplicate bond label {}", b.label)));
        }
        net.add_bond(b.label, NodeId(b.a), NodeId(b.b), b.rank)
            .map_err(|e| parse_error(at, e.to_string()))?;
    }

    if let Err(violations) = net.validate() {
        let message = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(parse_error("network", message));
    }
    let ids: Vec<NodeId> = net.node_ids().collect();
    for id in ids {
        net.canonicalize(id)?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_uniform, Fill, Topology};

    #[test]
    fn round_trip_is_exact() {
        let net = build_uniform(&Topology::Grid { rows: 2, cols: 3 }, 3, 2, Fill::SeededRandom(5)).unwrap();
        let text = serialize(&net);
        let back = deserialize(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(serialize(&back), text);
    }

    #[test]
    fn numeric_data_and_any_mode_order() {
        let text = r#"{"version":1,
            "nodes":[{"id":1,"mode_labels":["s_1","j_1"],"shape":[2,1],"data":[1.0,2.0]},
                     {"id":2,"mode_labels":["j_1","s_2"],"shape":[1,2],"data":[3.0,4.0]}],
            "bonds":[{"label":"j_1","a":1,"b":2,"rank":1}],
            "physical":{"1":{"label":"s_1","dim":2},"2":{"label":"s_2","dim":2}}}"#;
        let net = deserialize(text).unwrap();
        assert_eq!(net.tensor(NodeId(1)).unwrap().labels(), &["j_1", "s_1"]);
    }

    fn error_location(text: &str) -> String {
        match deserialize(text) {
            Err(Error::Parse { location, .. }) => location,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_locations() {
        assert!(error_location("{\n  \"version\": 1,\n  oops").starts_with("line 3"));
        let base = r#"{"version":1,
            "nodes":[{"id":1,"mode_labels":["j_1","s_1"],"shape":[1,2],"data":[1.0,2.0]},
                     {"id":2,"mode_labels":["j_1","s_2"],"shape":[1,2],"data":[3.0,4.0]}],
            "bonds":[BONDS],
            "physical":{"1":{"label":"s_1","dim":2},"2":{"label":"s_2","dim":2}}}"#;
        let unknown = base.replace("BONDS", r#"{"label":"j_1","a":1,"b":2,"rank":1},{"label":"j_2","a":1,"b":9,"rank":1}"#);
        assert_eq!(error_location(&unknown), "bonds[1]");
        let dup = base.replace("BONDS", r#"{"label":"j_1","a":1,"b":2,"rank":1},{"label":"j_1","a":1,"b":2,"rank":1}"#);
        assert_eq!(error_location(&dup), "bonds[1]");
        let short = base
            .replace("BONDS", r#"{"label":"j_1","a":1,"b":2,"rank":1}"#)
            .replace("[3.0,4.0]", "[3.0]");
        assert_eq!(error_location(&short), "nodes[1]");
        let rank = base.replace("BONDS", r#"{"label":"j_1","a":1,"b":2,"rank":2}"#);
        assert_eq!(error_location(&rank), "network");
        let version = base
            .replace("BONDS", r#"{"label":"j_1","a":1,"b":2,"rank":1}"#)
            .replace("\"version\":1", "\"version\":7");
        assert_eq!(error_location(&version), "version");
    }
}
