//! Overlap probe: does a nonblocking transfer progress while the posting
//! rank computes?
//!
//! Rank 0 posts one large nonblocking operation, spins on register-only
//! arithmetic for a configurable time, then waits. Rank 1 performs the
//! matching operation and blocks on it. With background progress the total stays at
//! the transfer time until the work exceeds it; without, work and transfer
//! add up.

use std::sync::mpsc;
use std::time::{Duration, Instant};

use super::{Communicator, Endpoint};
use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Rank 0 posts the nonblocking receive.
    Recv,
    /// Rank 0 posts the nonblocking send.
    Send,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recv" => Ok(Self::Recv),
            "send" => Ok(Self::Send),
            other => Err(Error::Contract(format!("unknown direction {other:?}, expected send|recv"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeParams {
    pub message_bytes: usize,
    pub direction: Direction,
    pub work: Vec<Duration>,
    /// Runs per work value; the median total is reported.
    pub repetitions: usize,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            message_bytes: 80_000_000,
            direction: Direction::Recv,
            work: [0, 1, 2, 4, 8, 16, 32].map(Duration::from_millis).to_vec(),
            repetitions: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSample {
    /// Requested busy-work, seconds.
    pub work: f64,
    /// Post to wait-return on rank 0, seconds.
    pub total: f64,
}

/// Spins on floating-point arithmetic for `duration` without touching memory.
pub fn busy_work(duration: Duration) -> f64 {
    let start = Instant::now();
    let mut acc = 1.0f64;
    loop {
        for _ in 0..256 {
            acc = std::hint::black_box(acc * 1.000_000_1 + 1e-9);
        }
        if start.elapsed() >= duration {
            return acc;
        }
    }
}

fn reuse(spare: &mut Option<Vec<f64>>, returned: &mpsc::Receiver<Vec<f64>>) -> Result<Vec<f64>> {
    match spare.take() {
        Some(buf) => Ok(buf),
        None => returned
            .recv()
            .map_err(|_| Error::Internal("probe payload was not returned".into())),
    }
}

/// Runs the probe over exactly two endpoints of one transport.
pub fn probe_overlap(endpoints: Vec<Endpoint<f64>>, params: &ProbeParams) -> Result<Vec<ProbeSample>> {
    contract!(
        endpoints.len() == 2,
        "the probe needs a two-rank transport, got {} endpoints",
        endpoints.len()
    );
    contract!(params.repetitions >= 1, "the probe needs at least one repetition");
    contract!(!params.work.is_empty(), "the probe needs at least one work value");
    let elements = params.message_bytes.div_ceil(std::mem::size_of::<f64>());
    let mut eps = endpoints.into_iter();
    let (mut ep0, mut ep1) = (eps.next().expect("two endpoints"), eps.next().expect("two endpoints"));
    let direction = params.direction;
    let reps = params.repetitions;
    // One discarded warm-up run, then `reps` runs per work value.
    let warmup = params.work.first().copied().into_iter();
    let runs: Vec<Duration> = warmup
        .chain(params.work.iter().flat_map(|&w| std::iter::repeat_n(w, reps)))
        .collect();
    let runs = &runs;

    // One payload travels back and forth so no sample pays for allocation.
    let (to_peer, from_rank0) = mpsc::channel::<Vec<f64>>();
    let (to_rank0, from_peer) = mpsc::channel::<Vec<f64>>();
    let payload = Some(vec![0.0; elements]);
    let (mut peer_spare, mut rank0_spare) = match direction {
        Direction::Recv => (payload, None),
        Direction::Send => (None, payload),
    };

    std::thread::scope(|s| {
        let peer = s.spawn(move || -> Result<()> {
            for tag in 0..runs.len() as u32 {
                // Posted before the barrier so the peer is never late on a shared core.
                let mut req = match direction {
                    Direction::Recv => ep1.post_send(0, tag, reuse(&mut peer_spare, &from_rank0)?)?,
                    Direction::Send => ep1.post_recv(0, tag, elements)?,
                };
                ep1.barrier()?;
                ep1.wait_all(std::slice::from_mut(&mut req))?;
                if let Some(data) = req.take_data() {
                    let _ = to_rank0.send(data);
                }
            }
            ep1.barrier()
        });
        let mut totals = Vec::with_capacity(runs.len());
        for (tag, &w) in runs.iter().enumerate() {
            let tag = tag as u32;
            let payload = match direction {
                Direction::Send => Some(reuse(&mut rank0_spare, &from_peer)?),
                Direction::Recv => None,
            };
            ep0.barrier()?;
            let start = Instant::now();
            let mut req = match payload {
                Some(data) => ep0.post_send(1, tag, data)?,
                None => ep0.post_recv(1, tag, elements)?,
            };
            std::hint::black_box(busy_work(w));
            ep0.wait_all(std::slice::from_mut(&mut req))?;
            totals.push(start.elapsed().as_secs_f64());
            if let Some(data) = req.take_data() {
                let _ = to_peer.send(data);
            }
        }
        ep0.barrier()?;
        peer.join()
            .map_err(|_| Error::Internal("probe peer panicked".into()))??;
        Ok(params
            .work
            .iter()
            .zip(totals[1..].chunks_mut(reps))
            .map(|(w, t)| {
                t.sort_by(f64::total_cmp);
                ProbeSample {
                    work: w.as_secs_f64(),
                    total: t[t.len() / 2],
                }
            })
            .collect())
    })
}

/// Fraction of the shorter of (work, transfer) that was hidden, averaged
/// over samples: 1 means full overlap, 0 fully serialized.
pub fn overlap_ratio(samples: &[ProbeSample], transfer_seconds: f64) -> Result<f64> {
    contract!(samples.len() >= 2, "need at least two samples, got {}", samples.len());
    contract!(transfer_seconds > 0.0, "transfer time must be positive");
    contract!(
        samples.iter().any(|s| s.work < transfer_seconds),
        "no sample has work shorter than the transfer"
    );
    let ratios: Vec<f64> = samples
        .iter()
        .filter(|s| s.work > 0.0)
        .map(|s| {
            let hi = s.work.max(transfer_seconds);
            let lo = s.work.min(transfer_seconds);
            1.0 - (s.total - hi) / lo
        })
        .collect();
    contract!(!ratios.is_empty(), "every sample has zero work");
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(mean.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{LocalTransport, TransportConfig};

    fn samples(total: impl Fn(f64) -> f64) -> Vec<ProbeSample> {
        [0.001, 0.002, 0.004, 0.016]
            .iter()
            .map(|&w| ProbeSample { work: w, total: total(w) })
            .collect()
    }

    #[test]
    fn ratio_extremes_and_midpoint() {
        let t = 0.008;
        assert_eq!(overlap_ratio(&samples(|w| w.max(t)), t).unwrap(), 1.0);
        assert_eq!(overlap_ratio(&samples(|w| w + t), t).unwrap(), 0.0);
        let half = overlap_ratio(&samples(|w| w.max(t) + 0.5 * w.min(t)), t).unwrap();
        assert!((half - 0.5).abs() < 0.05, "{half}");
    }

    #[test]
    fn ratio_rejects_degenerate_input() {
        let one = [ProbeSample { work: 0.001, total: 0.008 }];
        assert!(overlap_ratio(&one, 0.008).is_err());
        let zero = [ProbeSample { work: 0.0, total: 0.008 }; 3];
        assert!(overlap_ratio(&zero, 0.008).is_err());
        let long = [ProbeSample { work: 0.1, total: 0.1 }; 3];
        assert!(overlap_ratio(&long, 0.008).is_err());
    }

    #[test]
    fn probe_needs_two_ranks() {
        let eps = LocalTransport::create::<f64>(1, TransportConfig::default()).unwrap();
        assert!(matches!(probe_overlap(eps, &ProbeParams::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn probe_runs_without_bandwidth_model() {
        let eps = LocalTransport::create::<f64>(2, TransportConfig::default()).unwrap();
        let params = ProbeParams {
            message_bytes: 1 << 20,
            direction: Direction::Send,
            work: vec![Duration::ZERO, Duration::from_micros(200)],
            repetitions: 1,
        };
        let out = probe_overlap(eps, &params).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[1].total >= 0.0002);
    }

    #[test]
    fn direction_parses() {
        assert_eq!("send".parse::<Direction>().unwrap(), Direction::Send);
        assert_eq!("recv".parse::<Direction>().unwrap(), Direction::Recv);
        assert!("both".parse::<Direction>().is_err());
    }
}
