//! Spawning node processes and supervising them.

use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::runtime::topology::{Mode, Topology, DOMAIN_ENV};

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("failed to spawn {node}: {source}")]
    SpawnFailed {
        node: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} did not finish within {1:?}")]
    Timeout(String, Duration),
    #[error("topology mode is {0}, expected {1}")]
    WrongMode(Mode, Mode),
    #[error("no process named {0}")]
    UnknownProcess(String),
    #[error("waiting on {0}: {1}")]
    Wait(String, std::io::Error),
}

/// A spawned node process. Killed on drop if still running.
pub struct NodeProcess {
    pub name: String,
    child: Child,
}

impl NodeProcess {
    pub fn id(&self) -> u32 {
        self.child.id()
    }

    pub fn try_wait(&mut self) -> Result<Option<ExitStatus>, LaunchError> {
        self.child.try_wait().map_err(|e| LaunchError::Wait(self.name.clone(), e))
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Polls until the process exits or `deadline` passes.
    pub fn wait_until(&mut self, deadline: Instant) -> Result<ExitStatus, LaunchError> {
        loop {
            if let Some(status) = self.try_wait()? {
                return Ok(status);
            }
            if Instant::now() >= deadline {
                return Err(LaunchError::Timeout(self.name.clone(), Duration::ZERO));
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for NodeProcess {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            self.kill();
        }
    }
}

/// How to start the node executable.
#[derive(Debug, Clone)]
pub struct Launcher {
    pub program: PathBuf,
    /// Optional domain override passed through the environment.
    pub domain_override: Option<u32>,
    /// Where child stderr goes; inherited when `None`.
    pub log_dir: Option<PathBuf>,
}

impl Launcher {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            domain_override: None,
            log_dir: None,
        }
    }

    fn spawn(&self, name: &str, args: &[&str], topology_path: &Path) -> Result<NodeProcess, LaunchError> {
        let mut cmd = Command::new(&self.program);
        cmd.args(args).arg(topology_path).stdin(Stdio::null()).stdout(Stdio::null());
        if let Some(d) = self.domain_override {
            cmd.env(DOMAIN_ENV, d.to_string());
        }
        match &self.log_dir {
            Some(dir) => {
                let file = std::fs::File::create(dir.join(format!("{name}.log")))
                    .map_err(|source| LaunchError::SpawnFailed { node: name.to_string(), source })?;
                cmd.stderr(file);
            }
            None => {
                cmd.stderr(Stdio::inherit());
            }
        }
        let child = cmd
            .spawn()
            .map_err(|source| LaunchError::SpawnFailed { node: name.to_string(), source })?;
        Ok(NodeProcess {
            name: name.to_string(),
            child,
        })
    }

    /// One process per node, each reading the topology file at `topology_path`.
    pub fn launch_standalone(&self, topology: &Topology, topology_path: &Path) -> Result<Vec<NodeProcess>, LaunchError> {
        if topology.mode != Mode::Standalone {
            return Err(LaunchError::WrongMode(topology.mode, Mode::Standalone));
        }
        let mut procs = Vec::with_capacity(topology.nodes.len());
        // Subscribers first, so their endpoints are bound before publishers start.
        let mut order: Vec<_> = topology.nodes.iter().collect();
        order.sort_by_key(|n| n.subscribes.is_empty());
        for node in order {
            procs.push(self.spawn(&node.name, &["--node", &node.name], topology_path)?);
        }
        Ok(procs)
    }

    /// One process hosting every node.
    pub fn launch_composed(&self, topology: &Topology, topology_path: &Path) -> Result<NodeProcess, LaunchError> {
        if topology.mode == Mode::Standalone {
            return Err(LaunchError::WrongMode(topology.mode, Mode::ComposedIpc));
        }
        self.spawn(&topology.scenario, &["--all"], topology_path)
    }
}

/// Waits for the process named `sink` to exit, then stops every other one.
/// On timeout all processes are killed.
pub fn await_sink(procs: &mut [NodeProcess], sink: &str, timeout: Duration) -> Result<ExitStatus, LaunchError> {
    let deadline = Instant::now() + timeout;
    let idx = procs
        .iter()
        .position(|p| p.name == sink)
        .ok_or_else(|| LaunchError::UnknownProcess(sink.to_string()))?;
    let result = procs[idx].wait_until(deadline);
    for p in procs.iter_mut() {
        p.kill();
    }
    result.map_err(|e| match e {
        LaunchError::Timeout(name, _) => LaunchError::Timeout(name, timeout),
        other => other,
    })
}
