//! Nodes, executors, containers and the process launcher.

pub mod executor;
pub mod launch;
pub mod node;
pub mod topology;

use std::collections::BTreeSet;
use std::sync::atomic::Ordering;
use std::sync::Arc;

pub use executor::{ExecStats, ExecutorKind, ShutdownHandle};
pub use node::{Container, Node, Participant, Publisher, RuntimeError};
pub use topology::{Mode, Route, Topology};

use crate::nodes::sink::SinkState;
use crate::nodes::{build_node, NodeProbes};

/// Exit status of a node process: everything went fine.
pub const EXIT_OK: i32 = 0;
/// Exit status of a node process: configuration or runtime failure.
pub const EXIT_ERROR: i32 = 1;
/// Exit status of a node process hosting a sink that stopped receiving frames.
pub const EXIT_SINK_TIMEOUT: i32 = 4;

/// Which nodes of a topology one process hosts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeSelection {
    All,
    One(String),
}

impl NodeSelection {
    pub fn resolve(&self, topology: &Topology) -> Result<BTreeSet<String>, RuntimeError> {
        match self {
            NodeSelection::All => Ok(topology.all_node_names()),
            NodeSelection::One(name) => match topology.node(name) {
                Some(_) => Ok(BTreeSet::from([name.clone()])),
                None => Err(RuntimeError::Node(name.clone(), "not declared in the topology".into())),
            },
        }
    }
}

pub struct BuiltContainer {
    pub container: Container,
    pub probes: NodeProbes,
}

/// Builds one process worth of nodes from `topology`.
pub fn build_container(topology: Arc<Topology>, selection: &NodeSelection) -> Result<BuiltContainer, RuntimeError> {
    let local = selection.resolve(&topology)?;
    let participant = Participant::new(topology.clone(), local.clone());
    let mut container = Container::new(participant.clone(), topology.executor);
    let mut probes = NodeProbes::default();
    for decl in topology.nodes.iter().filter(|n| local.contains(&n.name)) {
        container.add_node(build_node(&participant, decl, &mut probes)?);
    }
    Ok(BuiltContainer { container, probes })
}

/// Builds, spins and tears down one process worth of nodes. Sink samples are
/// written to the topology's run directory whatever the outcome. Returns the
/// process exit status.
pub fn run_process(topology: Topology, selection: &NodeSelection) -> i32 {
    let topology = Arc::new(topology);
    let BuiltContainer { mut container, probes } = match build_container(topology.clone(), selection) {
        Ok(b) => b,
        Err(e) => {
            log::error!("{e}");
            return EXIT_ERROR;
        }
    };
    let result = container.spin();
    for (topic, c) in container.participant().endpoint_counters() {
        log::info!("{topic}: {c:?}");
    }
    container.participant().close();
    if let Err(e) = &result {
        log::error!("{e}");
    }
    let violations = container.stats().reentrancy_violations.load(Ordering::Relaxed);
    if violations > 0 {
        log::error!("{violations} reentrant callback invocations");
    }
    if let Some(sink) = &probes.sink {
        if let Some(dir) = &topology.run_dir {
            if let Err(e) = sink.write_files(dir) {
                log::error!("writing samples to {}: {e}", dir.display());
                return EXIT_ERROR;
            }
        }
        if sink.status().state == SinkState::TimedOut {
            return EXIT_SINK_TIMEOUT;
        }
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(_) => EXIT_ERROR,
    }
}
