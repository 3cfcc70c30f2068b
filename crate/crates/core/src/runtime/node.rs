use std::any::Any;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::codec::Payload;
use crate::inter::{port_for, DropCountersSnapshot, Endpoint, FrameHandler, Sender, SendOutcome, TransportError};
use crate::intra::{IntraChannel, IntraError, IntraSubscription, DEFAULT_BACKPRESSURE_TIMEOUT};
use crate::model::{DomainId, ModelError, TopicName};
use crate::runtime::executor::{
    spin_entities, CallbackError, CallbackResult, Entity, ExecError, ExecStats, ExecutorKind,
    ShutdownHandle, SubscriptionExec, TimerExec, WaitSet,
};
use crate::runtime::topology::{Route, Topology, TopicDecl};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("topic {0} is not declared in the topology")]
    UnknownTopic(TopicName),
    #[error("topic {topic} carries {declared:?}, not {requested:?}")]
    TypeMismatch {
        topic: TopicName,
        declared: crate::codec::TypeTag,
        requested: crate::codec::TypeTag,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("node {0}: {1}")]
    Node(String, String),
}

#[derive(Debug, Error)]
pub enum PublishError {
    #[error(transparent)]
    Intra(#[from] IntraError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

enum PubRoute<M> {
    Intra(IntraChannel<M>),
    Inter(Arc<Sender>),
}

impl<M> Clone for PubRoute<M> {
    fn clone(&self) -> Self {
        match self {
            PubRoute::Intra(c) => PubRoute::Intra(c.clone()),
            PubRoute::Inter(s) => PubRoute::Inter(s.clone()),
        }
    }
}

/// Typed publisher for one topic. Cheap to clone; clones share a sequence counter.
pub struct Publisher<M> {
    topic: TopicName,
    route: PubRoute<M>,
    seq: Arc<AtomicU64>,
}

impl<M> Clone for Publisher<M> {
    fn clone(&self) -> Self {
        Self {
            topic: self.topic.clone(),
            route: self.route.clone(),
            seq: self.seq.clone(),
        }
    }
}

impl<M: Payload> Publisher<M> {
    pub fn topic(&self) -> &TopicName {
        &self.topic
    }

    pub fn route(&self) -> Route {
        match self.route {
            PubRoute::Intra(_) => Route::Intra,
            PubRoute::Inter(_) => Route::Inter,
        }
    }

    /// Publishes a uniquely owned message. Intra-process routes hand the
    /// object itself to subscribers; inter-process routes serialize it.
    pub fn publish(&self, msg: M) -> Result<(), PublishError> {
        let seq = self.seq.fetch_add(1, Ordering::Relaxed);
        match &self.route {
            PubRoute::Intra(ch) => Ok(ch.publish_unique(msg)?),
            PubRoute::Inter(sender) => match sender.send(seq, &msg)? {
                SendOutcome::Sent | SendOutcome::NoPeer => Ok(()),
            },
        }
    }
}

/// Per-process view of a topology: creates publishers and subscriptions and
/// owns the channels and endpoints behind them.
pub struct Participant {
    topology: Arc<Topology>,
    local_nodes: BTreeSet<String>,
    waitset: Arc<WaitSet>,
    shutdown: ShutdownHandle,
    backpressure_timeout: Duration,
    channels: Mutex<HashMap<TopicName, Box<dyn Any + Send + Sync>>>,
    endpoints: Mutex<BTreeMap<TopicName, Endpoint>>,
    senders: Mutex<HashMap<TopicName, Arc<Sender>>>,
}

impl Participant {
    pub fn new(topology: Arc<Topology>, local_nodes: BTreeSet<String>) -> Arc<Self> {
        let waitset = Arc::new(WaitSet::default());
        Arc::new(Self {
            topology,
            local_nodes,
            shutdown: ShutdownHandle::new(waitset.clone()),
            waitset,
            backpressure_timeout: DEFAULT_BACKPRESSURE_TIMEOUT,
            channels: Mutex::new(HashMap::new()),
            endpoints: Mutex::new(BTreeMap::new()),
            senders: Mutex::new(HashMap::new()),
        })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn domain(&self) -> DomainId {
        self.topology.domain
    }

    pub fn local_nodes(&self) -> &BTreeSet<String> {
        &self.local_nodes
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.shutdown.clone()
    }

    pub fn route(&self, topic: &TopicName) -> Route {
        self.topology.route(&self.local_nodes, topic)
    }

    fn decl<M: Payload>(&self, topic: &TopicName) -> Result<TopicDecl, RuntimeError> {
        let decl = self
            .topology
            .topic(topic)
            .ok_or_else(|| RuntimeError::UnknownTopic(topic.clone()))?;
        if decl.msg_type.tag() != M::TAG {
            return Err(RuntimeError::TypeMismatch {
                topic: topic.clone(),
                declared: decl.msg_type.tag(),
                requested: M::TAG,
            });
        }
        Ok(decl.clone())
    }

    /// The process-local channel for `topic`, created on first use.
    fn channel<M: Payload>(&self, decl: &TopicDecl) -> Result<IntraChannel<M>, RuntimeError> {
        let mut channels = self.channels.lock().unwrap();
        if let Some(ch) = channels.get(&decl.name) {
            return Ok(ch
                .downcast_ref::<IntraChannel<M>>()
                .expect("channel type fixed by topic declaration")
                .clone());
        }
        let ch = IntraChannel::<M>::with_timeout(decl.name.clone(), decl.qos()?, self.backpressure_timeout);
        channels.insert(decl.name.clone(), Box::new(ch.clone()));
        Ok(ch)
    }

    pub fn create_publisher<M: Payload>(&self, topic: &TopicName) -> Result<Publisher<M>, RuntimeError> {
        let decl = self.decl::<M>(topic)?;
        let route = match self.route(topic) {
            Route::Intra => PubRoute::Intra(self.channel::<M>(&decl)?),
            Route::Inter => {
                let mut senders = self.senders.lock().unwrap();
                let sender = match senders.get(topic) {
                    Some(s) => s.clone(),
                    None => {
                        let port = port_for(self.domain(), decl.slot)?;
                        let s = Arc::new(Sender::new(decl.transport, self.domain(), topic.clone(), port)?);
                        senders.insert(topic.clone(), s.clone());
                        s
                    }
                };
                PubRoute::Inter(sender)
            }
        };
        Ok(Publisher {
            topic: topic.clone(),
            route,
            seq: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Subscribes to `topic`. Inter-process topics get an endpoint on the
    /// derived port whose reader decodes into the local channel.
    pub fn create_subscription<M: Payload>(&self, topic: &TopicName) -> Result<IntraSubscription<M>, RuntimeError> {
        let decl = self.decl::<M>(topic)?;
        let ch = self.channel::<M>(&decl)?;
        let sub = ch.subscribe_with_notify(Some(self.waitset.clone()));
        if self.route(topic) == Route::Inter {
            let mut endpoints = self.endpoints.lock().unwrap();
            if !endpoints.contains_key(topic) {
                let port = port_for(self.domain(), decl.slot)?;
                let counters_slot: Arc<Mutex<Option<Arc<crate::inter::DropCounters>>>> = Arc::default();
                let handler: FrameHandler = {
                    let ch = ch.clone();
                    let counters_slot = counters_slot.clone();
                    Arc::new(move |frame| {
                        let counters = counters_slot.lock().unwrap().clone();
                        match frame.decode::<M>() {
                            Ok(msg) => match ch.publish_unique_counted(msg) {
                                Ok(0) => {}
                                Ok(evicted) => {
                                    if let Some(c) = counters {
                                        c.queue_full.fetch_add(evicted as u64, Ordering::Relaxed);
                                    }
                                }
                                Err(e) => {
                                    log::warn!("{e}");
                                    if let Some(c) = counters {
                                        c.queue_full.fetch_add(1, Ordering::Relaxed);
                                    }
                                }
                            },
                            Err(e) => {
                                log::warn!("undecodable frame on {}: {e}", frame.topic);
                                if let Some(c) = counters {
                                    c.malformed.fetch_add(1, Ordering::Relaxed);
                                }
                            }
                        }
                    })
                };
                let ep = Endpoint::bind_with_handler(decl.transport, self.domain(), topic.clone(), port, handler)?;
                *counters_slot.lock().unwrap() = Some(ep.counters().clone());
                endpoints.insert(topic.clone(), ep);
            }
        }
        Ok(sub)
    }

    /// Drop counters of every inbound endpoint in this process.
    pub fn endpoint_counters(&self) -> BTreeMap<TopicName, DropCountersSnapshot> {
        self.endpoints
            .lock()
            .unwrap()
            .iter()
            .map(|(t, ep)| (t.clone(), ep.counters().snapshot()))
            .collect()
    }

    /// Closes all inbound endpoints and outbound connections.
    pub fn close(&self) {
        self.endpoints.lock().unwrap().clear();
        self.senders.lock().unwrap().clear();
    }
}

type Task = Box<dyn FnOnce(ShutdownHandle) -> CallbackResult + Send>;

/// A named set of timers, subscriptions and background tasks.
pub struct Node {
    name: String,
    entities: Vec<Arc<Entity>>,
    tasks: Vec<Task>,
}

impl Node {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entities: Vec::new(),
            tasks: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn add_timer(
        &mut self,
        period: Duration,
        callback: impl FnMut() -> CallbackResult + Send + 'static,
    ) {
        let label = format!("timer[{:?}]", period);
        self.entities.push(Arc::new(Entity::new(
            &self.name,
            label,
            Box::new(TimerExec::new(period, Box::new(callback))),
        )));
    }

    pub fn add_subscription<M: Payload>(
        &mut self,
        sub: IntraSubscription<M>,
        callback: impl FnMut(Arc<M>) -> CallbackResult + Send + 'static,
    ) {
        let label = "subscription".to_string();
        let queue = sub.queue().clone();
        self.entities.push(Arc::new(Entity::new(
            &self.name,
            label,
            Box::new(SubscriptionExec::new(queue, Box::new(sub), Box::new(callback))),
        )));
    }

    /// Runs `task` on its own thread while the container spins. The task
    /// must return once the shutdown handle reports a request.
    pub fn add_background(&mut self, task: impl FnOnce(ShutdownHandle) -> CallbackResult + Send + 'static) {
        self.tasks.push(Box::new(task));
    }

    pub fn entities(&self) -> &[Arc<Entity>] {
        &self.entities
    }
}

/// Nodes sharing one process, one executor and one participant.
pub struct Container {
    participant: Arc<Participant>,
    nodes: Vec<Node>,
    executor: ExecutorKind,
    stats: Arc<ExecStats>,
}

impl Container {
    pub fn new(participant: Arc<Participant>, executor: ExecutorKind) -> Self {
        Self {
            participant,
            nodes: Vec::new(),
            executor,
            stats: Arc::new(ExecStats::default()),
        }
    }

    pub fn add_node(&mut self, node: Node) {
        self.nodes.push(node);
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn participant(&self) -> &Arc<Participant> {
        &self.participant
    }

    pub fn executor(&self) -> ExecutorKind {
        self.executor
    }

    pub fn stats(&self) -> &Arc<ExecStats> {
        &self.stats
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.participant.shutdown_handle()
    }

    pub fn route(&self, topic: &TopicName) -> Route {
        self.participant.route(topic)
    }

    /// Runs every callback until shutdown. A failing or panicking callback
    /// or background task stops the whole container and is returned.
    pub fn spin(&mut self) -> Result<(), RuntimeError> {
        let shutdown = self.shutdown_handle();
        let mut handles: Vec<(String, JoinHandle<CallbackResult>)> = Vec::new();
        for node in &mut self.nodes {
            for task in node.tasks.drain(..) {
                let sd = shutdown.clone();
                let name = node.name.clone();
                let h = std::thread::Builder::new()
                    .name(format!("{name}-bg"))
                    .spawn(move || {
                        let fail = sd.clone();
                        let r = task(sd);
                        if let Err(e) = &r {
                            fail.fail(ExecError::TaskFailed {
                                node: name,
                                message: e.to_string(),
                            });
                        }
                        r
                    })
                    .map_err(|e| RuntimeError::Node(node.name.clone(), e.to_string()))?;
                handles.push((node.name.clone(), h));
            }
        }
        let entities: Vec<Arc<Entity>> = self.nodes.iter().flat_map(|n| n.entities.iter().cloned()).collect();
        let result = spin_entities(&entities, self.executor, &shutdown, &self.stats);
        shutdown.request();
        for (name, h) in handles {
            if h.join().is_err() {
                let err = ExecError::TaskFailed {
                    node: name,
                    message: "panicked".into(),
                };
                shutdown.fail(err.clone());
                return Err(err.into());
            }
        }
        result?;
        match shutdown.error() {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

pub fn callback_error(msg: impl Into<String>) -> CallbackError {
    msg.into().into()
}
