//! JSON instance files.
//!
//! Two shapes are accepted:
//!
//! ```json
//! {"rho": 2, "elements": [{"id": "v1", "weight": 1, "covers": ["a", "b"]}],
//!  "item_weights": {"a": 2.0}}
//! ```
//!
//! and a dominating-set graph, where a node covers its closed neighbourhood so
//! that `f(S) = |N[S]|`:
//!
//! ```json
//! {"graph": {"nodes": ["a", "b"], "edges": [["a", "b"]]}, "weights": {"a": 2}}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CoverageFunction, Objective};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum InstanceFile {
    Coverage {
        rho: f64,
        elements: Vec<ElementSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        item_weights: Option<BTreeMap<String, f64>>,
    },
    Graph {
        graph: GraphSpec,
        #[serde(default)]
        weights: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ElementSpec {
    pub id: String,
    pub weight: f64,
    pub covers: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphSpec {
    pub nodes: Vec<Value>,
    #[serde(default)]
    pub edges: Vec<[Value; 2]>,
}

fn node_name(v: &Value) -> std::result::Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("node id must be a string or number, got {other}")),
    }
}

impl InstanceFile {
    pub fn into_objective(self) -> std::result::Result<Objective, String> {
        match self {
            InstanceFile::Coverage {
                rho,
                elements,
                item_weights,
            } => {
                let mut b = CoverageFunction::builder();
                for el in &elements {
                    b.push(&el.id, el.weight, &el.covers);
                }
                for (item, w) in item_weights.unwrap_or_default() {
                    b = b.item_weight(&item, w);
                }
                b.build(rho).map_err(|e| e.to_string())
            }
            InstanceFile::Graph {
                graph,
                weights,
                rho,
            } => {
                let nodes = graph
                    .nodes
                    .iter()
                    .map(node_name)
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut closed: BTreeMap<&str, BTreeSet<&str>> = nodes
                    .iter()
                    .map(|n| (n.as_str(), BTreeSet::from([n.as_str()])))
                    .collect();
                let names: Vec<[String; 2]> = graph
                    .edges
                    .iter()
                    .map(|[u, v]| Ok([node_name(u)?, node_name(v)?]))
                    .collect::<std::result::Result<_, String>>()?;
                for [u, v] in &names {
                    for (a, b) in [(u, v), (v, u)] {
                        closed
                            .get_mut(a.as_str())
                            .ok_or_else(|| format!("edge references unknown node `{a}`"))?
                            .insert(b.as_str());
                    }
                }
                for name in weights.keys() {
                    if !closed.contains_key(name.as_str()) {
                        return Err(format!("weight given for unknown node `{name}`"));
                    }
                }
                let rho = rho.unwrap_or_else(|| weights.values().copied().fold(1.0, f64::max));
                let mut b = CoverageFunction::builder();
                for n in &nodes {
                    let w = weights.get(n).copied().unwrap_or(1.0);
                    b.push(n, w, &closed[n.as_str()]);
                }
                b.build(rho).map_err(|e| e.to_string())
            }
        }
    }
}

pub fn parse_instance(text: &str) -> std::result::Result<Objective, String> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    file.into_objective()
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Objective> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text).map_err(|msg| Error::parse(path, msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_form() {
        let obj = parse_instance(
            r#"{"rho": 2, "elements": [
                {"id": "v1", "weight": 1, "covers": ["a", "b"]},
                {"id": "v2", "weight": 2, "covers": ["b", "c"]}]}"#,
        )
        .unwrap();
        let all: Vec<_> = obj.ground().ids().collect();
        assert_eq!(obj.evaluate(&all).unwrap(), 3.0);
        assert_eq!(obj.ground().rho(), 2.0);
        assert_eq!(obj.ground().weight(obj.ground().lookup("v2").unwrap()), 2.0);
    }

    #[test]
    fn graph_form_is_closed_neighbourhood() {
        // path a - b - c plus isolated d
        let obj = parse_instance(
            r#"{"graph": {"nodes": ["a", "b", "c", 4], "edges": [["a", "b"], ["b", "c"]]},
                "weights": {"b": 3}}"#,
        )
        .unwrap();
        let g = obj.ground();
        let id = |n| g.lookup(n).unwrap();
        assert_eq!(obj.evaluate(&[id("b")]).unwrap(), 3.0);
        assert_eq!(obj.evaluate(&[id("a")]).unwrap(), 2.0);
        assert_eq!(obj.evaluate(&[id("4")]).unwrap(), 1.0);
        assert_eq!(g.weight(id("b")), 3.0);
        assert_eq!(g.rho(), 3.0);
    }

    #[test]
    fn rejects_weight_outside_range() {
        let err =
            parse_instance(r#"{"rho": 1, "elements": [{"id": "v1", "weight": 2, "covers": []}]}"#)
                .unwrap_err();
        assert!(err.contains("outside"), "{err}");
    }

    #[test]
    fn rejects_unknown_edge_endpoint() {
        assert!(parse_instance(r#"{"graph": {"nodes": ["a"], "edges": [["a", "z"]]}}"#).is_err());
    }

    #[test]
    fn load_reports_path() {
        let err = load_instance("/definitely/not/here.json").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.json"));
    }
}
