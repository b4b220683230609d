//! Nonblocking point-to-point messaging between ranks.
//!
//! [`Communicator`] is the contract the execution modes are written against.
//! [`LocalTransport`] implements it for ranks living as threads in one
//! process. Its timing behavior is configurable: a synthetic bandwidth turns
//! every message into a transfer of known duration, and the asynchronous
//! progress switch decides whether that transfer runs in the background or
//! only while both owners sit inside [`Communicator::wait_all`].

mod local;
mod probe;

pub use local::{Endpoint, LocalTransport};
pub use probe::{busy_work, overlap_ratio, probe_overlap, Direction, ProbeParams, ProbeSample};

use crate::error::{contract, Result};

pub type Rank = usize;
pub type Tag = u32;

/// Default cut-over from eager to rendezvous delivery.
pub const DEFAULT_EAGER_THRESHOLD: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportConfig {
    /// Transfers progress in the background between posting and waiting.
    pub async_progress: bool,
    /// GB/s (decimal). A message of `m` bytes takes `m / bandwidth` to
    /// arrive. `None` delivers instantly.
    pub synthetic_bandwidth: Option<f64>,
    /// Messages shorter than this many bytes are sent eagerly: the send
    /// completes at once and delivery needs no progress from either side.
    pub eager_threshold: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            async_progress: false,
            synthetic_bandwidth: None,
            eager_threshold: DEFAULT_EAGER_THRESHOLD,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(bw) = self.synthetic_bandwidth {
            contract!(
                bw > 0.0 && bw.is_finite(),
                "synthetic bandwidth must be positive, got {bw}"
            );
        }
        Ok(())
    }

    /// Emulated transfer time for a message of `bytes` bytes.
    pub fn transfer_time(&self, bytes: usize) -> std::time::Duration {
        match self.synthetic_bandwidth {
            Some(bw) => std::time::Duration::from_secs_f64(bytes as f64 / (bw * 1e9)),
            None => std::time::Duration::ZERO,
        }
    }

    pub fn is_eager(&self, bytes: usize) -> bool {
        bytes == 0 || bytes < self.eager_threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestKind {
    Send,
    Recv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestState {
    Pending,
    Complete,
}

/// Handle to a posted send or receive.
///
/// Completion is monotone. A completed receive holds the delivered data
/// until [`Request::take_data`] is called.
#[derive(Debug)]
pub struct Request<T> {
    pub(crate) id: u64,
    pub(crate) owner: (u64, Rank),
    pub(crate) kind: RequestKind,
    pub(crate) peer: Rank,
    pub(crate) tag: Tag,
    pub(crate) state: RequestState,
    pub(crate) data: Option<Vec<T>>,
}

impl<T> Request<T> {
    pub fn kind(&self) -> RequestKind {
        self.kind
    }

    pub fn state(&self) -> RequestState {
        self.state
    }

    pub fn is_complete(&self) -> bool {
        self.state == RequestState::Complete
    }

    pub fn peer(&self) -> Rank {
        self.peer
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }

    /// Received payload of a completed receive.
    pub fn take_data(&mut self) -> Option<Vec<T>> {
        self.data.take()
    }
}

/// Point-to-point operations every backend provides.
///
/// Buffers move by value: a send hands its buffer to the transport, and a
/// completed receive hands the delivered buffer back through the request.
pub trait Communicator<T>: Send {
    fn rank(&self) -> Rank;

    fn size(&self) -> usize;

    /// Posts a receive from `source` for at most `capacity` elements.
    fn post_recv(&mut self, source: Rank, tag: Tag, capacity: usize) -> Result<Request<T>>;

    fn post_send(&mut self, dest: Rank, tag: Tag, data: Vec<T>) -> Result<Request<T>>;

    /// Blocks until every request is complete.
    fn wait_all(&mut self, requests: &mut [Request<T>]) -> Result<()>;

    fn barrier(&mut self) -> Result<()>;
}
