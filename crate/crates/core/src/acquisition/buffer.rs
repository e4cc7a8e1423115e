//! Bounded fan-out of records to any number of readers.
//!
//! The writer never blocks. Each subscription holds its own cursor into an
//! absolute record index; when a reader falls more than `capacity` records
//! behind, the oldest records are gone for it and the shortfall is added to
//! its drop count.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::record::{SampleRecord, Sink, SinkError};

struct Ring {
    items: VecDeque<Arc<SampleRecord>>,
    // Absolute index of items[0].
    first: u64,
    closed: bool,
}

impl Ring {
    fn end(&self) -> u64 {
        self.first + self.items.len() as u64
    }
}

pub struct RecordBuffer {
    ring: Mutex<Ring>,
    cond: Condvar,
    capacity: usize,
}

impl RecordBuffer {
    pub fn new(capacity: usize) -> Arc<Self> {
        assert!(capacity > 0, "buffer capacity must be > 0");
        Arc::new(RecordBuffer {
            ring: Mutex::new(Ring {
                items: VecDeque::with_capacity(capacity.min(4096)),
                first: 0,
                closed: false,
            }),
            cond: Condvar::new(),
            capacity,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Ring> {
        self.ring.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn publish(&self, record: SampleRecord) {
        let mut ring = self.lock();
        if ring.items.len() == self.capacity {
            ring.items.pop_front();
            ring.first += 1;
        }
        ring.items.push_back(Arc::new(record));
        self.cond.notify_all();
    }

    /// Total records ever published.
    pub fn published(&self) -> u64 {
        self.lock().end()
    }

    /// Marks the end of the stream; subscribers drain what is left and stop.
    pub fn close(&self) {
        self.lock().closed = true;
        self.cond.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Subscribes to records published from now on.
    pub fn subscribe(self: &Arc<Self>) -> Subscription {
        let cursor = self.lock().end();
        Subscription {
            buffer: Arc::clone(self),
            cursor,
            dropped: 0,
        }
    }

    /// Subscribes starting at the oldest retained record.
    pub fn subscribe_from_oldest(self: &Arc<Self>) -> Subscription {
        let cursor = self.lock().first;
        Subscription {
            buffer: Arc::clone(self),
            cursor,
            dropped: 0,
        }
    }
}

/// Free-function form of [`RecordBuffer::subscribe`].
pub fn subscribe(buffer: &Arc<RecordBuffer>) -> Subscription {
    buffer.subscribe()
}

impl Sink for Arc<RecordBuffer> {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        self.publish(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Next {
    Record(Arc<SampleRecord>),
    Timeout,
    Closed,
}

/// A reader's position in a [`RecordBuffer`].
pub struct Subscription {
    buffer: Arc<RecordBuffer>,
    cursor: u64,
    dropped: u64,
}

impl Subscription {
    /// Records this subscriber lost to ring overflow so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    fn take(&mut self, ring: &Ring) -> Option<Arc<SampleRecord>> {
        if self.cursor < ring.first {
            self.dropped += ring.first - self.cursor;
            self.cursor = ring.first;
        }
        let rec = ring.items.get((self.cursor - ring.first) as usize)?;
        self.cursor += 1;
        Some(Arc::clone(rec))
    }

    pub fn try_next(&mut self) -> Option<Arc<SampleRecord>> {
        let buffer = Arc::clone(&self.buffer);
        let ring = buffer.lock();
        self.take(&ring)
    }

    /// Waits up to `timeout` for the next record.
    pub fn next_timeout(&mut self, timeout: Duration) -> Next {
        let deadline = Instant::now() + timeout;
        let buffer = Arc::clone(&self.buffer);
        let mut ring = buffer.lock();
        loop {
            if let Some(r) = self.take(&ring) {
                return Next::Record(r);
            }
            if ring.closed {
                return Next::Closed;
            }
            let now = Instant::now();
            if now >= deadline {
                return Next::Timeout;
            }
            ring = buffer
                .cond
                .wait_timeout(ring, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

/// Blocks for each record; ends once the buffer is closed and drained.
impl Iterator for Subscription {
    type Item = Arc<SampleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let buffer = Arc::clone(&self.buffer);
        let mut ring = buffer.lock();
        loop {
            if let Some(r) = self.take(&ring) {
                return Some(r);
            }
            if ring.closed {
                return None;
            }
            ring = buffer.cond.wait(ring).unwrap_or_else(|e| e.into_inner());
        }
    }
}
