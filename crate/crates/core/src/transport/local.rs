use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Barrier, Condvar, Mutex, MutexGuard};
use std::time::Instant;

use super::{Communicator, Rank, Request, RequestKind, RequestState, Tag, TransportConfig};
use crate::error::{contract, Error, Result};

static NEXT_FABRIC: AtomicU64 = AtomicU64::new(1);

/// (source, dest, tag)
type Channel = (Rank, Rank, Tag);

/// One message from posting to delivery. Completion time is derived from
/// the post/ready timestamps, so no agent has to move data in the background.
struct Transfer<T> {
    channel: Channel,
    data: Option<Vec<T>>,
    bytes: usize,
    eager: bool,
    capacity: usize,
    send_posted: Option<Instant>,
    recv_posted: Option<Instant>,
    /// First time the owner entered `wait_all` with this request.
    send_ready: Option<Instant>,
    recv_ready: Option<Instant>,
    send_done: bool,
    recv_done: bool,
}

impl<T> Transfer<T> {
    fn new(channel: Channel) -> Self {
        Self {
            channel,
            data: None,
            bytes: 0,
            eager: false,
            capacity: 0,
            send_posted: None,
            recv_posted: None,
            send_ready: None,
            recv_ready: None,
            send_done: false,
            recv_done: false,
        }
    }

    fn completion(&self, cfg: &TransportConfig) -> Option<Instant> {
        let (sp, rp) = (self.send_posted?, self.recv_posted?);
        let start = if self.eager || cfg.async_progress {
            sp.max(rp)
        } else {
            self.send_ready?.max(self.recv_ready?)
        };
        Some(start + cfg.transfer_time(self.bytes))
    }
}

struct State<T> {
    next_id: u64,
    transfers: HashMap<u64, Transfer<T>>,
    unmatched_sends: HashMap<Channel, VecDeque<u64>>,
    unmatched_recvs: HashMap<Channel, VecDeque<u64>>,
    /// (owner, kind, peer, tag) of every incomplete request.
    pending: HashSet<(Rank, RequestKind, Rank, Tag)>,
}

struct Fabric<T> {
    id: u64,
    size: usize,
    config: TransportConfig,
    state: Mutex<State<T>>,
    progress: Condvar,
    barrier: Barrier,
}

impl<T> Fabric<T> {
    fn lock(&self) -> MutexGuard<'_, State<T>> {
        // A panicking rank poisons the lock; the state itself stays coherent.
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Factory for the endpoints of one in-process transport instance.
pub struct LocalTransport;

impl LocalTransport {
    /// Creates `size` connected endpoints, one per rank, in rank order.
    pub fn create<T: Send>(size: usize, config: TransportConfig) -> Result<Vec<Endpoint<T>>> {
        contract!(size >= 1, "a transport needs at least one rank");
        config.validate()?;
        let fabric = Arc::new(Fabric {
            id: NEXT_FABRIC.fetch_add(1, Ordering::Relaxed),
            size,
            config,
            state: Mutex::new(State {
                next_id: 0,
                transfers: HashMap::new(),
                unmatched_sends: HashMap::new(),
                unmatched_recvs: HashMap::new(),
                pending: HashSet::new(),
            }),
            progress: Condvar::new(),
            barrier: Barrier::new(size),
        });
        Ok((0..size)
            .map(|rank| Endpoint {
                rank,
                fabric: Arc::clone(&fabric),
            })
            .collect())
    }
}

/// One rank's view of a [`LocalTransport`].
pub struct Endpoint<T> {
    rank: Rank,
    fabric: Arc<Fabric<T>>,
}

impl<T> std::fmt::Debug for Endpoint<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("rank", &self.rank)
            .field("size", &self.fabric.size)
            .field("config", &self.fabric.config)
            .finish()
    }
}

impl<T: Send> Endpoint<T> {
    pub fn config(&self) -> &TransportConfig {
        &self.fabric.config
    }

    fn check_peer(&self, peer: Rank) -> Result<()> {
        contract!(
            peer < self.fabric.size,
            "rank {peer} outside transport of {} ranks",
            self.fabric.size
        );
        Ok(())
    }

    fn request(&self, id: u64, kind: RequestKind, peer: Rank, tag: Tag, complete: bool) -> Request<T> {
        Request {
            id,
            owner: (self.fabric.id, self.rank),
            kind,
            peer,
            tag,
            state: if complete {
                RequestState::Complete
            } else {
                RequestState::Pending
            },
            data: None,
        }
    }

    fn claim_pair(&self, st: &mut State<T>, kind: RequestKind, peer: Rank, tag: Tag) -> Result<()> {
        contract!(
            st.pending.insert((self.rank, kind, peer, tag)),
            "rank {} already has a pending {kind:?} with peer {peer} and tag {tag}",
            self.rank
        );
        Ok(())
    }

    /// Nonblocking completion check. Never advances a transfer that needs
    /// progress from this rank.
    pub fn test(&mut self, req: &mut Request<T>) -> Result<bool> {
        self.check_owner(req)?;
        if req.is_complete() {
            return Ok(true);
        }
        let mut st = self.fabric.lock();
        let done = st
            .transfers
            .get(&req.id)
            .and_then(|t| t.completion(&self.fabric.config))
            .is_some_and(|t| t <= Instant::now());
        if done {
            self.finish(&mut st, req)?;
        }
        Ok(done)
    }

    fn check_owner(&self, req: &Request<T>) -> Result<()> {
        contract!(
            req.owner == (self.fabric.id, self.rank),
            "request belongs to rank {} of transport {}, not rank {} of transport {}",
            req.owner.1,
            req.owner.0,
            self.rank,
            self.fabric.id
        );
        Ok(())
    }

    fn finish(&self, st: &mut State<T>, req: &mut Request<T>) -> Result<()> {
        let t = st
            .transfers
            .get_mut(&req.id)
            .ok_or_else(|| Error::Internal(format!("request {} has no transfer", req.id)))?;
        match req.kind {
            RequestKind::Send => t.send_done = true,
            RequestKind::Recv => {
                t.recv_done = true;
                let data = t.data.take().unwrap_or_default();
                req.data = Some(data);
            }
        }
        let remove = t.send_done && t.recv_done;
        let (src, dst, tag) = t.channel;
        let overflow = req.kind == RequestKind::Recv && t.bytes > t.capacity * std::mem::size_of::<T>();
        let (bytes, capacity) = (t.bytes, t.capacity);
        if remove {
            st.transfers.remove(&req.id);
        }
        let peer = if req.kind == RequestKind::Send { dst } else { src };
        st.pending.remove(&(self.rank, req.kind, peer, tag));
        req.state = RequestState::Complete;
        contract!(
            !overflow,
            "message of {bytes} bytes from rank {src} overflows a receive of {capacity} elements"
        );
        Ok(())
    }
}

impl<T: Send> Communicator<T> for Endpoint<T> {
    fn rank(&self) -> Rank {
        self.rank
    }

    fn size(&self) -> usize {
        self.fabric.size
    }

    fn post_recv(&mut self, source: Rank, tag: Tag, capacity: usize) -> Result<Request<T>> {
        self.check_peer(source)?;
        let mut st = self.fabric.lock();
        self.claim_pair(&mut st, RequestKind::Recv, source, tag)?;
        let channel = (source, self.rank, tag);
        let now = Instant::now();
        let matched = st.unmatched_sends.get_mut(&channel).and_then(VecDeque::pop_front);
        let id = match matched {
            Some(id) => id,
            None => {
                let id = st.next_id;
                st.next_id += 1;
                st.transfers.insert(id, Transfer::new(channel));
                st.unmatched_recvs.entry(channel).or_default().push_back(id);
                id
            }
        };
        let t = st.transfers.get_mut(&id).expect("transfer just registered");
        t.recv_posted = Some(now);
        t.capacity = capacity;
        drop(st);
        self.fabric.progress.notify_all();
        Ok(self.request(id, RequestKind::Recv, source, tag, false))
    }

    fn post_send(&mut self, dest: Rank, tag: Tag, data: Vec<T>) -> Result<Request<T>> {
        self.check_peer(dest)?;
        let bytes = data.len() * std::mem::size_of::<T>();
        let eager = self.fabric.config.is_eager(bytes);
        let mut st = self.fabric.lock();
        if !eager {
            self.claim_pair(&mut st, RequestKind::Send, dest, tag)?;
        }
        let channel = (self.rank, dest, tag);
        let now = Instant::now();
        let matched = st.unmatched_recvs.get_mut(&channel).and_then(VecDeque::pop_front);
        let id = match matched {
            Some(id) => id,
            None => {
                let id = st.next_id;
                st.next_id += 1;
                st.transfers.insert(id, Transfer::new(channel));
                st.unmatched_sends.entry(channel).or_default().push_back(id);
                id
            }
        };
        let t = st.transfers.get_mut(&id).expect("transfer just registered");
        t.send_posted = Some(now);
        t.bytes = bytes;
        t.eager = eager;
        t.data = Some(data);
        t.send_done = eager;
        drop(st);
        self.fabric.progress.notify_all();
        Ok(self.request(id, RequestKind::Send, dest, tag, eager))
    }

    fn wait_all(&mut self, requests: &mut [Request<T>]) -> Result<()> {
        for r in requests.iter() {
            self.check_owner(r)?;
        }
        let cfg = self.fabric.config;
        let mut st = self.fabric.lock();
        let entered = Instant::now();
        for r in requests.iter().filter(|r| !r.is_complete()) {
            let t = st
                .transfers
                .get_mut(&r.id)
                .ok_or_else(|| Error::Internal(format!("request {} has no transfer", r.id)))?;
            let ready = match r.kind {
                RequestKind::Send => &mut t.send_ready,
                RequestKind::Recv => &mut t.recv_ready,
            };
            ready.get_or_insert(entered);
        }
        self.fabric.progress.notify_all();
        loop {
            let mut latest = Some(entered);
            for r in requests.iter().filter(|r| !r.is_complete()) {
                let done = st.transfers.get(&r.id).and_then(|t| t.completion(&cfg));
                latest = match (latest, done) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
            match latest {
                None => {
                    st = self
                        .fabric
                        .progress
                        .wait(st)
                        .unwrap_or_else(|p| p.into_inner());
                }
                Some(deadline) => {
                    let now = Instant::now();
                    if now >= deadline {
                        break;
                    }
                    drop(st);
                    std::thread::sleep(deadline - now);
                    st = self.fabric.lock();
                }
            }
        }
        let mut first_err = None;
        for r in requests.iter_mut().filter(|r| !r.is_complete()) {
            if let Err(e) = self.finish(&mut st, r) {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    fn barrier(&mut self) -> Result<()> {
        self.fabric.barrier.wait();
        Ok(())
    }
}
