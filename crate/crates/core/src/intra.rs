//! In-process topic channels. Payloads are moved into an `Arc` once and every
//! subscriber receives a handle to that same allocation, so no payload bytes
//! are ever duplicated on this path.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{QoSProfile, Reliability, TopicName};

/// Default bound on how long a RELIABLE publisher waits for queue space.
pub const DEFAULT_BACKPRESSURE_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntraError {
    #[error("backpressure timeout on {topic} after {waited:?}")]
    BackpressureTimeout { topic: String, waited: Duration },
}

/// Something to poke when a queue gains a message.
pub trait Notify: Send + Sync {
    fn notify(&self);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Queued,
    /// The queue was full and the oldest message was evicted (KEEP_LAST).
    EvictedOldest,
}

/// Bounded per-subscriber FIFO with KEEP_LAST or blocking semantics.
pub struct MessageQueue<T> {
    qos: QoSProfile,
    items: Mutex<VecDeque<Arc<T>>>,
    not_full: Condvar,
    not_empty: Condvar,
    notify: Option<Arc<dyn Notify>>,
}

impl<T> MessageQueue<T> {
    pub fn new(qos: QoSProfile, notify: Option<Arc<dyn Notify>>) -> Self {
        Self {
            qos,
            items: Mutex::new(VecDeque::with_capacity(qos.history_depth())),
            not_full: Condvar::new(),
            not_empty: Condvar::new(),
            notify,
        }
    }

    pub fn qos(&self) -> QoSProfile {
        self.qos
    }

    /// Enqueues `msg`. Best-effort queues evict their oldest entry when full;
    /// reliable queues wait up to `timeout` for space and hand the message
    /// back on expiry.
    pub fn push(&self, msg: Arc<T>, timeout: Duration) -> Result<PushOutcome, Arc<T>> {
        let depth = self.qos.history_depth();
        let mut items = self.items.lock().unwrap();
        let outcome = match self.qos.reliability {
            Reliability::BestEffort => {
                if items.len() >= depth {
                    items.pop_front();
                    PushOutcome::EvictedOldest
                } else {
                    PushOutcome::Queued
                }
            }
            Reliability::Reliable => {
                let deadline = Instant::now() + timeout;
                while items.len() >= depth {
                    let now = Instant::now();
                    if now >= deadline {
                        return Err(msg);
                    }
                    items = self.not_full.wait_timeout(items, deadline - now).unwrap().0;
                }
                PushOutcome::Queued
            }
        };
        items.push_back(msg);
        drop(items);
        self.not_empty.notify_one();
        if let Some(n) = &self.notify {
            n.notify();
        }
        Ok(outcome)
    }

    pub fn take(&self) -> Option<Arc<T>> {
        let item = self.items.lock().unwrap().pop_front();
        if item.is_some() {
            self.not_full.notify_one();
        }
        item
    }

    pub fn take_timeout(&self, timeout: Duration) -> Option<Arc<T>> {
        let deadline = Instant::now() + timeout;
        let mut items = self.items.lock().unwrap();
        loop {
            if let Some(item) = items.pop_front() {
                drop(items);
                self.not_full.notify_one();
                return Some(item);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            items = self.not_empty.wait_timeout(items, deadline - now).unwrap().0;
        }
    }

    pub fn len(&self) -> usize {
        self.items.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct ChannelInner<T> {
    topic: TopicName,
    qos: QoSProfile,
    timeout: Duration,
    subscribers: RwLock<Vec<Arc<MessageQueue<T>>>>,
}

/// A topic channel living inside one process.
pub struct IntraChannel<T> {
    inner: Arc<ChannelInner<T>>,
}

impl<T> Clone for IntraChannel<T> {
    fn clone(&self) -> Self {
        Self {
            inner: self.inner.clone(),
        }
    }
}

impl<T: Send + Sync + 'static> IntraChannel<T> {
    pub fn new(topic: TopicName, qos: QoSProfile) -> Self {
        Self::with_timeout(topic, qos, DEFAULT_BACKPRESSURE_TIMEOUT)
    }

    pub fn with_timeout(topic: TopicName, qos: QoSProfile, timeout: Duration) -> Self {
        Self {
            inner: Arc::new(ChannelInner {
                topic,
                qos,
                timeout,
                subscribers: RwLock::new(Vec::new()),
            }),
        }
    }

    pub fn topic(&self) -> &TopicName {
        &self.inner.topic
    }

    pub fn qos(&self) -> QoSProfile {
        self.inner.qos
    }

    pub fn subscribe(&self) -> IntraSubscription<T> {
        self.subscribe_with_notify(None)
    }

    pub fn subscribe_with_notify(&self, notify: Option<Arc<dyn Notify>>) -> IntraSubscription<T> {
        let queue = Arc::new(MessageQueue::new(self.inner.qos, notify));
        self.inner.subscribers.write().unwrap().push(queue.clone());
        IntraSubscription {
            channel: Arc::downgrade(&self.inner),
            queue,
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.subscribers.read().unwrap().len()
    }

    /// Publishes a message the caller gives up ownership of.
    ///
    /// With one subscriber the subscriber gets the very same object; with
    /// several they share one immutable allocation; with none it is dropped.
    pub fn publish_unique(&self, msg: T) -> Result<(), IntraError> {
        self.publish_shared(Arc::new(msg)).map(|_| ())
    }

    /// Like [`IntraChannel::publish_unique`], returning how many queued
    /// messages were evicted to make room.
    pub fn publish_unique_counted(&self, msg: T) -> Result<usize, IntraError> {
        self.publish_shared(Arc::new(msg))
    }

    pub fn publish_shared(&self, msg: Arc<T>) -> Result<usize, IntraError> {
        let subs = self.inner.subscribers.read().unwrap().clone();
        let Some((last, rest)) = subs.split_last() else {
            return Ok(0);
        };
        let mut evicted = 0;
        let mut push = |q: &MessageQueue<T>, m: Arc<T>| match q.push(m, self.inner.timeout) {
            Ok(PushOutcome::Queued) => Ok(()),
            Ok(PushOutcome::EvictedOldest) => {
                evicted += 1;
                Ok(())
            }
            Err(_) => Err(self.timeout_error()),
        };
        for q in rest {
            push(q, msg.clone())?;
        }
        // The final push moves the caller's handle so a sole subscriber ends
        // up holding the only reference.
        push(last, msg)?;
        Ok(evicted)
    }

    fn timeout_error(&self) -> IntraError {
        IntraError::BackpressureTimeout {
            topic: self.inner.topic.to_string(),
            waited: self.inner.timeout,
        }
    }
}

/// One subscriber's view of an [`IntraChannel`]. Unsubscribes on drop.
pub struct IntraSubscription<T> {
    channel: std::sync::Weak<ChannelInner<T>>,
    queue: Arc<MessageQueue<T>>,
}

impl<T> IntraSubscription<T> {
    pub fn take(&self) -> Option<Arc<T>> {
        self.queue.take()
    }

    pub fn take_timeout(&self, timeout: Duration) -> Option<Arc<T>> {
        self.queue.take_timeout(timeout)
    }

    pub fn queue(&self) -> &Arc<MessageQueue<T>> {
        &self.queue
    }
}

impl<T> Drop for IntraSubscription<T> {
    fn drop(&mut self) {
        if let Some(ch) = self.channel.upgrade() {
            ch.subscribers
                .write()
                .unwrap()
                .retain(|q| !Arc::ptr_eq(q, &self.queue));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reliable_qos, Encoding, Header, Image, Time};
    use std::thread;

    fn topic() -> TopicName {
        TopicName::new("/t").unwrap()
    }

    fn qos(r: Reliability, depth: usize) -> QoSProfile {
        QoSProfile::new(r, depth).unwrap()
    }

    fn image(stamp: i64) -> Image {
        Image::new(Header::new(Time::from_nanos(stamp), "cam"), 4, 4, Encoding::Mono8, vec![stamp as u8; 16])
            .unwrap()
    }

    #[test]
    fn single_subscriber_gets_the_same_object() {
        let ch = IntraChannel::new(topic(), reliable_qos());
        let sub = ch.subscribe();
        let img = image(1);
        let data_ptr = img.data().as_ptr();
        ch.publish_unique(img).unwrap();
        let got = sub.take().unwrap();
        assert_eq!(got.diag().deep_copy_count(), 0);
        assert_eq!(got.data().as_ptr(), data_ptr);
        let owned = Arc::into_inner(got).expect("sole owner");
        assert_eq!(owned.diag().deep_copy_count(), 0);
    }

    #[test]
    fn shared_view_for_many_subscribers() {
        let ch = IntraChannel::new(topic(), reliable_qos());
        let subs: Vec<_> = (0..3).map(|_| ch.subscribe()).collect();
        ch.publish_unique(image(9)).unwrap();
        let got: Vec<_> = subs.iter().map(|s| s.take().unwrap()).collect();
        for g in &got {
            assert_eq!(g.diag().deep_copy_count(), 0);
            assert_eq!(g.data(), got[0].data());
            assert!(Arc::ptr_eq(g, &got[0]));
        }
    }

    #[test]
    fn no_subscribers_drops_silently() {
        let ch = IntraChannel::new(topic(), reliable_qos());
        ch.publish_unique(image(1)).unwrap();
        let sub = ch.subscribe();
        assert!(sub.take().is_none());
    }

    #[test]
    fn keep_last_one_keeps_newest() {
        // Hand-simulated KEEP_LAST(1): [] -> [A] -> [B] -> [C]
        let ch = IntraChannel::new(topic(), qos(Reliability::BestEffort, 1));
        let sub = ch.subscribe();
        for s in [1, 2, 3] {
            ch.publish_unique(image(s)).unwrap();
        }
        assert_eq!(sub.take().unwrap().header.stamp.nanos, 3);
        assert!(sub.take().is_none());
    }

    #[test]
    fn fifo_and_empty() {
        let ch = IntraChannel::new(topic(), qos(Reliability::BestEffort, 4));
        let sub = ch.subscribe();
        assert!(sub.take().is_none());
        ch.publish_unique(1u32).unwrap();
        ch.publish_unique(2u32).unwrap();
        assert_eq!(*sub.take().unwrap(), 1);
        assert_eq!(*sub.take().unwrap(), 2);
        assert!(sub.take().is_none());
    }

    #[test]
    fn reliable_full_queue_times_out() {
        let ch = IntraChannel::with_timeout(topic(), qos(Reliability::Reliable, 1), Duration::from_millis(30));
        let _sub = ch.subscribe();
        ch.publish_unique(1u32).unwrap();
        let start = Instant::now();
        let err = ch.publish_unique(2u32).unwrap_err();
        assert!(start.elapsed() >= Duration::from_millis(30));
        assert!(matches!(err, IntraError::BackpressureTimeout { .. }));
    }

    #[test]
    fn concurrent_take_unblocks_reliable_publisher() {
        let ch = IntraChannel::with_timeout(topic(), qos(Reliability::Reliable, 2), Duration::from_secs(5));
        let sub = ch.subscribe();
        ch.publish_unique(1u32).unwrap();
        ch.publish_unique(2u32).unwrap();
        let publisher = {
            let ch = ch.clone();
            thread::spawn(move || ch.publish_unique(3u32))
        };
        // Let the third publish block on the full queue before taking.
        while sub.queue().len() < 2 {
            thread::yield_now();
        }
        thread::sleep(Duration::from_millis(50));
        assert!(!publisher.is_finished());
        assert_eq!(*sub.take().unwrap(), 1);
        publisher.join().unwrap().unwrap();
        assert_eq!(sub.queue().len(), 2);
        assert_eq!(*sub.take().unwrap(), 2);
        assert_eq!(*sub.take().unwrap(), 3);
    }

    #[test]
    fn dropping_subscription_unsubscribes() {
        let ch = IntraChannel::<u32>::new(topic(), reliable_qos());
        let sub = ch.subscribe();
        assert_eq!(ch.subscriber_count(), 1);
        drop(sub);
        assert_eq!(ch.subscriber_count(), 0);
    }

    proptest::proptest! {
        #[test]
        fn keep_last_retains_tail(n in 0usize..40, depth in 1usize..8) {
            let ch = IntraChannel::new(topic(), qos(Reliability::BestEffort, depth));
            let sub = ch.subscribe();
            for i in 0..n {
                ch.publish_unique(i).unwrap();
            }
            let got: Vec<usize> = std::iter::from_fn(|| sub.take().map(|v| *v)).collect();
            let expected: Vec<usize> = (n.saturating_sub(depth)..n).collect();
            proptest::prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn reliable_never_drops_under_concurrency() {
        let ch = IntraChannel::with_timeout(topic(), qos(Reliability::Reliable, 3), Duration::from_secs(10));
        let sub = ch.subscribe();
        let producers: Vec<_> = (0..4u64)
            .map(|p| {
                let ch = ch.clone();
                thread::spawn(move || {
                    for i in 0..500u64 {
                        ch.publish_unique(p * 1000 + i).unwrap();
                    }
                })
            })
            .collect();
        let mut seen = Vec::new();
        let mut last_per_producer = [None::<u64>; 4];
        while seen.len() < 2000 {
            if let Some(v) = sub.take_timeout(Duration::from_secs(5)) {
                let p = (*v / 1000) as usize;
                if let Some(prev) = last_per_producer[p] {
                    assert!(*v > prev, "per-producer FIFO");
                }
                last_per_producer[p] = Some(*v);
                seen.push(*v);
            } else {
                panic!("stalled at {}", seen.len());
            }
        }
        for p in producers {
            p.join().unwrap();
        }
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 2000);
    }
}
