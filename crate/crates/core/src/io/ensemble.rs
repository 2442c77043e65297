//! JSON-lines ensemble files: one network record per line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::graph::{AttrColumn, AttrValue, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrEntry {
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MissingSpec {
    List(Vec<[usize; 2]>),
    /// `"egocentric:<node>"`.
    Rule(String),
}

impl Default for MissingSpec {
    fn default() -> Self {
        MissingSpec::List(Vec::new())
    }
}

impl MissingSpec {
    fn is_empty(&self) -> bool {
        matches!(self, MissingSpec::List(v) if v.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub net_id: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub node_attrs: BTreeMap<String, Vec<AttrEntry>>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "MissingSpec::is_empty")]
    pub missing_dyads: MissingSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub net_covariates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

/// Networks with their raw covariates and tags, before a model is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleData {
    pub networks: Vec<Network>,
    pub net_covariates: Vec<BTreeMap<String, f64>>,
    pub tags: Vec<Vec<String>>,
}

impl EnsembleData {
    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn with_networks(&self, networks: Vec<Network>) -> Self {
        EnsembleData { networks, net_covariates: self.net_covariates.clone(), tags: self.tags.clone() }
    }
}

fn schema(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Schema { line, msg: msg.into() }
}

/// Builds a network from one record; `line` is 1-based for messages.
pub fn record_to_network(rec: &NetworkRecord, line: usize) -> Result<Network, IoError> {
    let mut net = Network::new(rec.net_id.clone(), rec.n).map_err(|e| schema(line, e.to_string()))?;
    let dyad = |net: &Network, [i, j]: [usize; 2]| {
        if i >= rec.n || j >= rec.n {
            return Err(IoError::DyadOutOfRange { line, i, j, n: rec.n });
        }
        net.dyad(i, j).map_err(|e| schema(line, e.to_string()))
    };
    for &e in &rec.edges {
        let d = dyad(&net, e)?;
        net.set_edge(d, true);
    }
    match &rec.missing_dyads {
        MissingSpec::List(list) => {
            for &m in list {
                let d = dyad(&net, m)?;
                if net.has_edge(d) {
                    return Err(IoError::Overlap { line, i: d.i, j: d.j });
                }
                net.set_missing(d, true);
            }
        }
        MissingSpec::Rule(rule) => {
            let ego = rule
                .strip_prefix("egocentric:")
                .and_then(|k| k.trim().parse::<usize>().ok())
                .ok_or_else(|| schema(line, format!("unknown missing-dyad rule `{rule}`")))?;
            if ego >= rec.n {
                return Err(schema(line, format!("egocentric node {ego} out of range for n = {}", rec.n)));
            }
            for d in net.dyads().collect::<Vec<_>>() {
                if d.i != ego && d.j != ego {
                    if net.has_edge(d) {
                        return Err(IoError::Overlap { line, i: d.i, j: d.j });
                    }
                    net.set_missing(d, true);
                }
            }
        }
    }
    for (name, values) in &rec.node_attrs {
        if values.len() != rec.n {
            return Err(schema(line, format!("attribute `{name}` has {} values for {} nodes", values.len(), rec.n)));
        }
        let col = if values.iter().all(|v| matches!(v, AttrEntry::Str(_))) {
            let s: Vec<&str> = values.iter().map(|v| if let AttrEntry::Str(s) = v { s.as_str() } else { "" }).collect();
            AttrColumn::categorical(&s)
        } else if values.iter().all(|v| matches!(v, AttrEntry::Num(_))) {
            AttrColumn::Real(values.iter().map(|v| if let AttrEntry::Num(x) = v { *x } else { 0.0 }).collect())
        } else {
            return Err(schema(line, format!("attribute `{name}` mixes numbers and strings")));
        };
        net.set_attr(name.clone(), col).map_err(|e| schema(line, e.to_string()))?;
    }
    Ok(net)
}

/// Canonical record: sorted edges and an explicit missing-dyad list.
pub fn network_to_record(net: &Network, covariates: &BTreeMap<String, f64>, tags: &[String]) -> NetworkRecord {
    let node_attrs = net
        .attrs()
        .iter()
        .map(|(name, col)| {
            let values = (0..net.n())
                .map(|v| match col.value(v) {
                    AttrValue::Category(s) => AttrEntry::Str(s.to_string()),
                    AttrValue::Real(x) => AttrEntry::Num(x),
                })
                .collect();
            (name.clone(), values)
        })
        .collect();
    NetworkRecord {
        net_id: net.id().to_string(),
        n: net.n(),
        node_attrs,
        // edge values under missing dyads are not data
        edges: net.edges().into_iter().filter(|&d| !net.is_missing(d)).map(|d| [d.i, d.j]).collect(),
        missing_dyads: MissingSpec::List(net.free_dyads().into_iter().map(|d| [d.i, d.j]).collect()),
        net_covariates: covariates.clone(),
        tags: tags.to_vec(),
    }
}

pub fn parse_ensemble(text: &str) -> Result<EnsembleData, IoError> {
    let mut data = EnsembleData { networks: Vec::new(), net_covariates: Vec::new(), tags: Vec::new() };
    let mut seen = HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: NetworkRecord = serde_json::from_str(raw).map_err(|e| schema(line, e.to_string()))?;
        if !seen.insert(rec.net_id.clone()) {
            return Err(IoError::DuplicateId { line, id: rec.net_id });
        }
        data.networks.push(record_to_network(&rec, line)?);
        data.net_covariates.push(rec.net_covariates);
        data.tags.push(rec.tags);
    }
    if data.networks.is_empty() {
        return Err(schema(0, "ensemble file contains no networks"));
    }
    Ok(data)
}

pub fn load_ensemble(path: &Path) -> Result<EnsembleData, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_ensemble(&text)
}

pub fn serialize_ensemble(data: &EnsembleData) -> String {
    let mut out = String::new();
    for ((net, cov), tags) in data.networks.iter().zip(&data.net_covariates).zip(&data.tags) {
        let rec = network_to_record(net, cov, tags);
        out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_ensemble(path: &Path, data: &EnsembleData) -> Result<(), IoError> {
    fs::write(path, serialize_ensemble(data)).map_err(|e| IoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn egocentric_expands() {
        let d = parse_ensemble(r#"{"net_id":"h","n":4,"edges":[[0,1]],"missing_dyads":"egocentric:0"}"#).unwrap();
        let net = &d.networks[0];
        let free: Vec<(usize, usize)> = net.free_dyads().iter().map(|d| (d.i, d.j)).collect();
        assert_eq!(free, vec![(1, 2), (1, 3), (2, 3)]);
        let d = parse_ensemble(r#"{"net_id":"p","n":2,"missing_dyads":"egocentric:0"}"#).unwrap();
        assert_eq!(d.networks[0].free_count(), 0);
    }

    #[test]
    fn edges_normalized() {
        let d = parse_ensemble(r#"{"net_id":"a","n":3,"edges":[[2,1]]}"#).unwrap();
        assert!(d.networks[0].is_edge(1, 2));
        let out = serialize_ensemble(&d);
        assert!(out.contains("[[1,2]]"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "{\"net_id\":\"a\",\"n\":3}\n{\"net_id\":\"a\",\"n\":3}\n";
        assert!(matches!(parse_ensemble(text), Err(IoError::DuplicateId { line: 2, .. })));
        let text = "{\"net_id\":\"a\",\"n\":3,\"edges\":[[0,5]]}";
        assert!(matches!(parse_ensemble(text), Err(IoError::DyadOutOfRange { line: 1, j: 5, .. })));
        let text = "{\"net_id\":\"a\",\"n\":3,\"edges\":[[0,1]],\"missing_dyads\":[[1,0]]}";
        assert!(matches!(parse_ensemble(text), Err(IoError::Overlap { line: 1, .. })));
        let text = "\n{\"net_id\":\"a\",\"nodes\":3}";
        assert!(matches!(parse_ensemble(text), Err(IoError::Schema { line: 2, .. })));
    }

    #[test]
    fn round_trip() {
        let text = concat!(
            r#"{"net_id":"x","n":4,"node_attrs":{"age":[30,41.5,7,7],"sex":["F","M","M","F"]},"edges":[[0,1],[3,0]],"#,
            r#""missing_dyads":"egocentric:0","net_covariates":{"pop":2.5},"tags":["E"]}"#,
            "\n",
            r#"{"net_id":"y","n":2,"edges":[[0,1]],"tags":["H","urban"]}"#
        );
        let a = parse_ensemble(text).unwrap();
        let b = parse_ensemble(&serialize_ensemble(&a)).unwrap();
        assert_eq!(a, b);
        assert_eq!(serialize_ensemble(&a), serialize_ensemble(&b));
    }
}
