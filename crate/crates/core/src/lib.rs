//! A miniature data-centric publish-subscribe middleware with intra-process
//! zero-copy routing, plus the robot node graph and latency harness used to
//! compare stand-alone and composed deployments.
//!
//! * [`model`]: time, topic names, QoS profiles and the four payload types.
//! * [`codec`]: the binary payload encoding and wire framing.
//! * [`intra`]: in-process channels that hand over payload objects.
//! * [`inter`]: UDP and TCP loopback transports with domain filtering.
//! * [`runtime`]: nodes, executors, containers and the process launcher.
//! * [`nodes`]: camera, Sobel sink, CM-730 simulator, IMU fusion and friends.
//! * [`gamecontroller`]: the 24-byte GameController packet and its bridge.
//! * [`bench`]: running scenarios, statistics and reports.

pub mod bench;
pub mod codec;
pub mod gamecontroller;
pub mod inter;
pub mod intra;
pub mod model;
pub mod nodes;
pub mod runtime;
