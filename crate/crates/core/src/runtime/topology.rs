//! `topology_v1`: the declarative description of one benchmark scenario.
//!
//! A topology is a TOML file. Every node process receives its path as the
//! sole positional argument; `NGB_DOMAIN` in the environment overrides the
//! domain id. See `docs/topology.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::TypeTag;
use crate::inter::{EndpointKind, SLOTS_PER_DOMAIN};
use crate::model::{DomainId, ModelError, QoSProfile, Reliability, TopicName};
use crate::runtime::executor::ExecutorKind;

pub const SCHEMA: &str = "topology_v1";
pub const DOMAIN_ENV: &str = "NGB_DOMAIN";

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("unsupported schema {0:?} (expected {SCHEMA:?})")]
    Schema(String),
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot read topology {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse topology: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize topology: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Standalone,
    ComposedNoipc,
    ComposedIpc,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Standalone, Mode::ComposedNoipc, Mode::ComposedIpc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standalone => "standalone",
            Mode::ComposedNoipc => "composed-noipc",
            Mode::ComposedIpc => "composed-ipc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgType {
    Image,
    Imu,
    JointState,
    GameState,
}

impl MsgType {
    pub fn tag(self) -> TypeTag {
        match self {
            MsgType::Image => TypeTag::Image,
            MsgType::Imu => TypeTag::Imu,
            MsgType::JointState => TypeTag::JointState,
            MsgType::GameState => TypeTag::GameState,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDecl {
    pub name: TopicName,
    #[serde(rename = "type")]
    pub msg_type: MsgType,
    pub slot: u32,
    pub reliability: Reliability,
    pub depth: usize,
    pub transport: EndpointKind,
}

impl TopicDecl {
    pub fn qos(&self) -> Result<QoSProfile, ModelError> {
        QoSProfile::new(self.reliability, self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
    #[serde(default)]
    pub publishes: Vec<TopicName>,
    #[serde(default)]
    pub subscribes: Vec<TopicName>,
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
}

impl NodeDecl {
    pub fn param_u64(&self, key: &str) -> Option<u64> {
        self.params.get(key).and_then(|v| v.as_integer()).map(|v| v as u64)
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| match v {
            toml::Value::Float(f) => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => None,
        })
    }

    pub fn param_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(|v| v.as_str())
    }

    pub fn param_bool(&self, key: &str) -> Option<bool> {
        self.params.get(key).and_then(|v| v.as_bool())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Intra,
    Inter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub schema: String,
    pub scenario: String,
    pub domain: DomainId,
    pub mode: Mode,
    pub executor: ExecutorKind,
    pub sample_target: u64,
    pub warmup_discard: u64,
    #[serde(default)]
    pub ipc_topics: Vec<TopicName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    pub topics: Vec<TopicDecl>,
    pub nodes: Vec<NodeDecl>,
}

impl Topology {
    pub fn from_toml(text: &str) -> Result<Self, TopologyError> {
        let t: Topology = toml::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_toml(&self) -> Result<String, TopologyError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Reads a topology file, applying the `NGB_DOMAIN` override if set.
    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut t = Self::from_toml(&text)?;
        if let Ok(raw) = std::env::var(DOMAIN_ENV) {
            let id: u32 = raw
                .trim()
                .parse()
                .map_err(|_| TopologyError::Invalid(format!("{DOMAIN_ENV}={raw:?} is not an integer")))?;
            t.domain = DomainId::new(id)?;
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| TopologyError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let invalid = |m: String| Err(TopologyError::Invalid(m));
        if self.schema != SCHEMA {
            return Err(TopologyError::Schema(self.schema.clone()));
        }
        if let ExecutorKind::MultiThreaded(0) = self.executor {
            return invalid("multi-threaded executor needs at least one thread".into());
        }
        let mut names = BTreeSet::new();
        for t in &self.topics {
            if !names.insert(&t.name) {
                return invalid(format!("topic {} declared twice", t.name));
            }
            t.qos()?;
        }
        let mut slots: Vec<u32> = self.topics.iter().map(|t| t.slot).collect();
        slots.sort_unstable();
        if slots.iter().enumerate().any(|(i, &s)| s != i as u32) {
            return invalid(format!("topic slots must be dense from 0, got {slots:?}"));
        }
        if self.topics.len() > SLOTS_PER_DOMAIN as usize {
            return invalid(format!("at most {SLOTS_PER_DOMAIN} topics per domain"));
        }
        let mut node_names = BTreeSet::new();
        for n in &self.nodes {
            if !node_names.insert(n.name.as_str()) {
                return invalid(format!("node name {} is not unique", n.name));
            }
            for t in n.publishes.iter().chain(&n.subscribes) {
                if !names.contains(t) {
                    return invalid(format!("node {} uses undeclared topic {t}", n.name));
                }
            }
            if let Some(r) = n.rate_hz {
                if !(r > 0.0 && r.is_finite()) {
                    return invalid(format!("node {} has non-positive rate {r}", n.name));
                }
            }
        }
        for t in &self.ipc_topics {
            if !names.contains(t) {
                return invalid(format!("ipc topic {t} is not declared"));
            }
        }
        for t in &self.topics {
            if t.msg_type == MsgType::Image && t.transport == EndpointKind::UdpBestEffort {
                return invalid(format!("image topic {} cannot use datagrams", t.name));
            }
            // A derived port can only be bound by one process.
            if self.mode == Mode::Standalone {
                let subs = self.subscribers_of(&t.name).count();
                if subs > 1 {
                    return invalid(format!(
                        "topic {} has {subs} subscriber processes in standalone mode",
                        t.name
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn topic(&self, name: &TopicName) -> Option<&TopicDecl> {
        self.topics.iter().find(|t| &t.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn publishers_of<'a>(&'a self, topic: &'a TopicName) -> impl Iterator<Item = &'a NodeDecl> {
        self.nodes.iter().filter(move |n| n.publishes.contains(topic))
    }

    pub fn subscribers_of<'a>(&'a self, topic: &'a TopicName) -> impl Iterator<Item = &'a NodeDecl> {
        self.nodes.iter().filter(move |n| n.subscribes.contains(topic))
    }

    pub fn is_ipc_topic(&self, topic: &TopicName) -> bool {
        self.ipc_topics.contains(topic)
    }

    /// How `topic` travels inside a process hosting `local_nodes`.
    ///
    /// Intra-process only in composed-ipc mode, for IPC-enabled topics whose
    /// publisher and subscriber both live in this process.
    pub fn route(&self, local_nodes: &BTreeSet<String>, topic: &TopicName) -> Route {
        if self.mode != Mode::ComposedIpc || !self.is_ipc_topic(topic) {
            return Route::Inter;
        }
        let local_pub = self.publishers_of(topic).any(|n| local_nodes.contains(&n.name));
        let local_sub = self.subscribers_of(topic).any(|n| local_nodes.contains(&n.name));
        if local_pub && local_sub {
            Route::Intra
        } else {
            Route::Inter
        }
    }

    pub fn all_node_names(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }
}
