//! Aggregate file format.
//!
//! ```json
//! {"sites":[[x1,x2],...],"edges":[[[x1,x2],[x1,x2]],...],"includes_floor":true}
//! ```
//!
//! Sites are written in `(x2, x1)` order and edges in `(from, to)` order, so
//! equal aggregates serialize to identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Aggregate;
use crate::harmonic::AggregateSet;
use crate::lattice::{DirectedEdge, Site};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{path}: {field}: {msg}")]
    Invalid { path: String, field: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateFile {
    pub sites: Vec<[i32; 2]>,
    #[serde(default)]
    pub edges: Vec<[[i32; 2]; 2]>,
    #[serde(default = "yes")]
    pub includes_floor: bool,
}

fn yes() -> bool {
    true
}

fn site(p: [i32; 2]) -> Site {
    Site { x1: p[0], x2: p[1] }
}

fn pair(s: Site) -> [i32; 2] {
    [s.x1, s.x2]
}

impl AggregateFile {
    pub fn from_aggregate(a: &Aggregate) -> Self {
        AggregateFile {
            sites: a.v.iter().map(|&s| pair(s)).collect(),
            edges: a.e.iter().map(|e| [pair(e.from), pair(e.to)]).collect(),
            includes_floor: true,
        }
    }

    pub fn from_set(b: &AggregateSet) -> Self {
        AggregateFile {
            sites: b.sites.iter().map(|&s| pair(s)).collect(),
            edges: Vec::new(),
            includes_floor: b.includes_floor,
        }
    }

    /// Canonical single-line JSON with a trailing newline.
    pub fn to_canonical_string(&self) -> String {
        let mut canon = self.clone();
        canon.sites.sort_by_key(|p| (p[1], p[0]));
        canon.sites.dedup();
        canon.edges.sort_by_key(|e| (site(e[0]), site(e[1])));
        canon.edges.dedup();
        let mut s = serde_json::to_string(&canon).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, FormatError> {
        let file: AggregateFile = serde_json::from_str(text).map_err(|e| FormatError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        file.validate(path)?;
        Ok(file)
    }

    fn validate(&self, path: &str) -> Result<(), FormatError> {
        let invalid = |field: String, msg: String| FormatError::Invalid {
            path: path.to_string(),
            field,
            msg,
        };
        for (i, p) in self.sites.iter().enumerate() {
            if p[1] < 0 {
                return Err(invalid(format!("sites[{i}]"), format!("height {} below the floor", p[1])));
            }
        }
        let sites: BTreeSet<Site> = self.sites.iter().map(|&p| site(p)).collect();
        let mut heads = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e[0][1] < 0 || e[1][1] < 0 {
                return Err(invalid(format!("edges[{i}]"), "endpoint below the floor".into()));
            }
            let (a, b) = (site(e[0]), site(e[1]));
            if DirectedEdge::new(a, b).is_none() {
                return Err(invalid(format!("edges[{i}]"), format!("{a} and {b} are not neighbours")));
            }
            if !sites.contains(&a) || !sites.contains(&b) {
                return Err(invalid(format!("edges[{i}]"), "endpoint not listed in sites".into()));
            }
            if !heads.insert(b) {
                return Err(invalid(format!("edges[{i}]"), format!("{b} has two incoming edges")));
            }
        }
        Ok(())
    }

    pub fn to_set(&self) -> AggregateSet {
        AggregateSet {
            sites: self.sites.iter().map(|&p| site(p)).collect(),
            includes_floor: self.includes_floor,
        }
    }

    /// Rebuilds the forest; seed sites are those without an incoming edge.
    pub fn to_aggregate(&self) -> Aggregate {
        let v: BTreeSet<Site> = self.sites.iter().map(|&p| site(p)).collect();
        let e: BTreeSet<DirectedEdge> = self
            .edges
            .iter()
            .map(|x| DirectedEdge {
                from: site(x[0]),
                to: site(x[1]),
            })
            .collect();
        let parent: BTreeMap<Site, Site> = e.iter().map(|x| (x.to, x.from)).collect();
        let seed = v.iter().filter(|s| !parent.contains_key(s)).copied().collect();
        Aggregate {
            v,
            e,
            t: 0.0,
            parent,
            seed,
        }
    }
}

pub fn load(path: &Path) -> Result<AggregateFile, FormatError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: name.clone(),
        source,
    })?;
    AggregateFile::parse(&text, &name)
}

pub fn save(file: &AggregateFile, path: &Path) -> Result<(), FormatError> {
    fs::write(path, file.to_canonical_string()).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serialized snapshot of an aggregate.
pub fn snapshot(a: &Aggregate) -> String {
    AggregateFile::from_aggregate(a).to_canonical_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_only_has_empty_edges() {
        let a = Aggregate::from_seed(&Aggregate::floor_segment(1)).unwrap();
        assert_eq!(
            snapshot(&a),
            "{\"sites\":[[-1,0],[0,0],[1,0]],\"edges\":[],\"includes_floor\":true}\n"
        );
    }

    #[test]
    fn parse_error_has_position() {
        let err = AggregateFile::parse("{\"sites\": [[0,0],\n [1,]]}", "x.json").unwrap_err();
        match err {
            FormatError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        let err = AggregateFile::parse("{\"sites\":[[0,0],[0,2]],\"edges\":[[[0,0],[0,2]]]}", "f").unwrap_err();
        assert!(err.to_string().contains("edges[0]"), "{err}");
        let err = AggregateFile::parse("{\"sites\":[[0,-1]]}", "f").unwrap_err();
        assert!(err.to_string().contains("sites[0]"), "{err}");
    }

    #[test]
    fn one_attachment_round_trips() {
        let mut a = Aggregate::from_seed(&Aggregate::floor_segment(0)).unwrap();
        let e = DirectedEdge::new(Site::new(0, 0), Site::new(0, 1)).unwrap();
        a.v.insert(e.to);
        a.e.insert(e);
        a.parent.insert(e.to, e.from);
        let text = snapshot(&a);
        let back = AggregateFile::parse(&text, "mem").unwrap().to_aggregate();
        assert_eq!(back.v, a.v);
        assert_eq!(back.e, a.e);
        assert_eq!(back.parent, a.parent);
        assert_eq!(back.seed, a.seed);
    }
}
