//! Runs one node, or every node, of a topology file in this process.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};
use ngb_core::runtime::{run_process, NodeSelection, Topology, EXIT_ERROR};

#[derive(Parser, Debug)]
#[command(name = "ngb-node", version, about = "Host nodes of a topology_v1 file")]
#[command(group(ArgGroup::new("which").required(true).args(["node", "all"])))]
struct Args {
    /// Host only the named node.
    #[arg(long)]
    node: Option<String>,
    /// Host every node of the topology in one container.
    #[arg(long)]
    all: bool,
    /// Topology file (topology_v1). NGB_DOMAIN overrides its domain id.
    topology: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let topology = match Topology::load(&args.topology) {
        Ok(t) => t,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let selection = match args.node {
        Some(name) => NodeSelection::One(name),
        None => NodeSelection::All,
    };
    ExitCode::from(run_process(topology, &selection) as u8)
}
