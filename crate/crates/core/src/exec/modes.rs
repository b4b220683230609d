use std::ops::Range;
use std::sync::{mpsc, Barrier, RwLock};
use std::time::Instant;

use super::{Phase, PhaseTimings, RankRun, RunOptions};
use crate::error::{contract, Error, Result};
use crate::partition::{CommPlan, RankWorkset, WorksetMatrix};
use crate::sparse::{chunk_by_nonzeros, spmv_rows, spmv_threaded, ChunkPlan, CrsMatrix};
use crate::transport::{Communicator, Rank, Request, Tag};

/// Halo exchange in local coordinates.
struct Exchange {
    /// Source rank and the halo segment its message fills.
    recv: Vec<(Rank, Range<usize>)>,
    /// Destination rank and the owned-slice offsets to gather.
    send: Vec<(Rank, Vec<usize>)>,
}

fn exchange_layout(ws: &RankWorkset, plan: &CommPlan) -> Result<Exchange> {
    contract!(
        plan.rank() == ws.rank() && plan.halo_size() == ws.halo_size(),
        "plan of rank {} does not match workset of rank {}",
        plan.rank(),
        ws.rank()
    );
    let rows = ws.rows();
    let recv = plan
        .recv_from()
        .keys()
        .map(|&q| (q, plan.recv_segment(q).expect("listed source")))
        .collect();
    let mut send = Vec::with_capacity(plan.send_to().len());
    for (&q, list) in plan.send_to() {
        contract!(
            list.iter().all(|g| rows.contains(g)),
            "send list to rank {q} names rows rank {} does not own",
            ws.rank()
        );
        send.push((q, list.iter().map(|g| g - rows.start).collect()));
    }
    Ok(Exchange { recv, send })
}

fn iteration_tag(iteration: usize) -> Tag {
    iteration as Tag
}

fn timed<R>(t: &mut PhaseTimings, phase: Phase, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let r = f();
    t.set(phase, start.elapsed().as_secs_f64());
    r
}

fn post_recvs<C: Communicator<f64>>(ep: &mut C, ex: &Exchange, tag: Tag) -> Result<Vec<Request<f64>>> {
    let mut reqs = Vec::with_capacity(ex.recv.len() + ex.send.len());
    for (q, seg) in &ex.recv {
        reqs.push(ep.post_recv(*q, tag, seg.len())?);
    }
    Ok(reqs)
}

fn gather(x_local: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| x_local[i]).collect()
}

/// Moves the received messages (the first `ex.recv.len()` requests) into the halo.
fn copy_halo(reqs: &mut [Request<f64>], ex: &Exchange, halo: &mut [f64]) -> Result<()> {
    for (req, (q, seg)) in reqs.iter_mut().zip(&ex.recv) {
        let data = req
            .take_data()
            .ok_or_else(|| Error::Internal(format!("receive from rank {q} completed without data")))?;
        if data.len() != seg.len() {
            return Err(Error::Internal(format!(
                "rank {q} sent {} halo entries, expected {}",
                data.len(),
                seg.len()
            )));
        }
        halo[seg.clone()].copy_from_slice(&data);
    }
    Ok(())
}

fn chunks_for(a: &CrsMatrix, workers: usize) -> Result<ChunkPlan> {
    if a.n_rows() == 0 {
        return Ok(ChunkPlan::single(0));
    }
    chunk_by_nonzeros(a, workers.min(a.n_rows()))
}

/// Exchanges the halo, then multiplies the whole local block.
///
/// `x_local` is the rank's owned slice of the RHS.
pub fn run_vector_noovl<C: Communicator<f64>>(
    ws: &mut RankWorkset,
    plan: &CommPlan,
    ep: &mut C,
    x_local: &[f64],
    opts: &RunOptions,
) -> Result<RankRun> {
    opts.validate()?;
    contract!(!ws.is_split(), "vector mode without overlap needs an unsplit workset");
    let ex = exchange_layout(ws, plan)?;
    ws.load_x(x_local)?;
    let (rank, n) = (ws.rank(), ws.n_local());
    let (matrix, x, y) = ws.parts_mut();
    let WorksetMatrix::Full(a) = matrix else {
        unreachable!("checked above")
    };
    let chunks = chunks_for(a, opts.workers)?;

    let mut run = RankRun::with_capacity(opts.iterations);
    for it in 0..opts.iterations {
        let tag = iteration_tag(it);
        let mut t = PhaseTimings::new(rank, it);
        ep.barrier()?;
        let start = Instant::now();
        let mut reqs = timed(&mut t, Phase::RecvPost, || post_recvs(ep, &ex, tag))?;
        let bufs: Vec<Vec<f64>> = timed(&mut t, Phase::BufferAssembly, || {
            ex.send.iter().map(|(_, idx)| gather(&x[..n], idx)).collect()
        });
        timed(&mut t, Phase::SendPost, || -> Result<()> {
            for ((q, _), buf) in ex.send.iter().zip(bufs) {
                reqs.push(ep.post_send(*q, tag, buf)?);
            }
            Ok(())
        })?;
        timed(&mut t, Phase::WaitAll, || -> Result<()> {
            ep.wait_all(&mut reqs)?;
            copy_halo(&mut reqs, &ex, &mut x[n..])
        })?;
        timed(&mut t, Phase::FullCompute, || spmv_threaded(a, x, y, &chunks, false))?;
        t.iteration_seconds = start.elapsed().as_secs_f64();
        run.record(t, y);
    }
    run.y = y.clone();
    Ok(run)
}

/// Posts the exchange, multiplies the local part, waits, then adds the
/// remote part.
pub fn run_vector_naive<C: Communicator<f64>>(
    ws: &mut RankWorkset,
    plan: &CommPlan,
    ep: &mut C,
    x_local: &[f64],
    opts: &RunOptions,
) -> Result<RankRun> {
    opts.validate()?;
    contract!(ws.is_split(), "naive overlap needs a split workset");
    let ex = exchange_layout(ws, plan)?;
    ws.load_x(x_local)?;
    let (rank, n) = (ws.rank(), ws.n_local());
    let (matrix, x, y) = ws.parts_mut();
    let WorksetMatrix::Split { local, remote } = matrix else {
        unreachable!("checked above")
    };
    let local_chunks = chunks_for(local, opts.workers)?;
    let remote_chunks = chunks_for(remote, opts.workers)?;

    let mut run = RankRun::with_capacity(opts.iterations);
    for it in 0..opts.iterations {
        let tag = iteration_tag(it);
        let mut t = PhaseTimings::new(rank, it);
        ep.barrier()?;
        let start = Instant::now();
        let mut reqs = timed(&mut t, Phase::RecvPost, || post_recvs(ep, &ex, tag))?;
        let bufs: Vec<Vec<f64>> = timed(&mut t, Phase::BufferAssembly, || {
            ex.send.iter().map(|(_, idx)| gather(&x[..n], idx)).collect()
        });
        timed(&mut t, Phase::SendPost, || -> Result<()> {
            for ((q, _), buf) in ex.send.iter().zip(bufs) {
                reqs.push(ep.post_send(*q, tag, buf)?);
            }
            Ok(())
        })?;
        timed(&mut t, Phase::LocalCompute, || {
            spmv_threaded(local, &x[..n], y, &local_chunks, false)
        })?;
        timed(&mut t, Phase::WaitAll, || -> Result<()> {
            ep.wait_all(&mut reqs)?;
            copy_halo(&mut reqs, &ex, &mut x[n..])
        })?;
        timed(&mut t, Phase::NonlocalCompute, || {
            spmv_threaded(remote, &x[n..], y, &remote_chunks, true)
        })?;
        t.iteration_seconds = start.elapsed().as_secs_f64();
        run.record(t, y);
    }
    run.y = y.clone();
    Ok(run)
}

/// Per-worker durations of one iteration: assembly, local, nonlocal.
type WorkerTimes = [f64; 3];

/// The calling thread acts as the communication agent; `opts.workers`
/// scoped threads assemble send buffers and compute.
///
/// Destination `d` (in rank order) is assembled by worker `d % workers` and
/// handed to the agent as soon as it is full. Each worker owns one
/// contiguous chunk of rows with near-equal local nonzeros and runs both
/// the local and, after the agent has filled the halo, the remote part of
/// those rows.
pub fn run_task_mode<C: Communicator<f64>>(
    ws: &mut RankWorkset,
    plan: &CommPlan,
    ep: &mut C,
    x_local: &[f64],
    opts: &RunOptions,
) -> Result<RankRun> {
    opts.validate()?;
    contract!(ws.is_split(), "task mode needs a split workset");
    let ex = exchange_layout(ws, plan)?;
    ws.load_x(x_local)?;
    let (rank, n) = (ws.rank(), ws.n_local());
    let nw = opts.workers;
    let (matrix, x, y) = ws.parts_mut();
    let WorksetMatrix::Split { local, remote } = matrix else {
        unreachable!("checked above")
    };
    let mut rows: Vec<Range<usize>> = chunks_for(local, nw)?.chunks().collect();
    rows.resize(nw, n..n);
    let assigned: Vec<Vec<usize>> = (0..nw)
        .map(|w| (w..ex.send.len()).step_by(nw).collect())
        .collect();

    let mut run = RankRun::with_capacity(opts.iterations);
    for it in 0..opts.iterations {
        let tag = iteration_tag(it);
        let mut t = PhaseTimings::new(rank, it);
        ep.barrier()?;
        let start = Instant::now();

        let (x_own, halo) = x.split_at_mut(n);
        let x_own: &[f64] = x_own;
        let halo = RwLock::new(halo);
        let mut y_parts = Vec::with_capacity(nw);
        let mut rest: &mut [f64] = &mut y[..];
        for r in &rows {
            let (head, tail) = rest.split_at_mut(r.len());
            y_parts.push(head);
            rest = tail;
        }
        let gate = Barrier::new(nw + 1);
        let (tx, rx) = mpsc::channel::<(usize, Vec<f64>)>();

        let region = Instant::now();
        let (agent, workers) = std::thread::scope(|s| {
            let handles: Vec<_> = y_parts
                .into_iter()
                .zip(&rows)
                .zip(&assigned)
                .map(|((y_rows, r), dests)| {
                    let (tx, gate, halo, ex) = (tx.clone(), &gate, &halo, &ex);
                    s.spawn(move || -> WorkerTimes {
                        let t0 = Instant::now();
                        for &d in dests {
                            // A closed channel means the agent failed; it still meets us at the gate.
                            let _ = tx.send((d, gather(x_own, &ex.send[d].1)));
                        }
                        drop(tx);
                        let ca = t0.elapsed().as_secs_f64();
                        // Let the agent post the sends if it shares our core.
                        std::thread::yield_now();
                        let t1 = Instant::now();
                        spmv_rows(local, x_own, y_rows, r.clone(), false);
                        let lc = t1.elapsed().as_secs_f64();
                        gate.wait();
                        let t2 = Instant::now();
                        let h = halo.read().unwrap_or_else(|e| e.into_inner());
                        spmv_rows(remote, &h, y_rows, r.clone(), true);
                        [ca, lc, t2.elapsed().as_secs_f64()]
                    })
                })
                .collect();
            drop(tx);

            let agent = (|| -> Result<[f64; 3]> {
                let t0 = Instant::now();
                let mut reqs = post_recvs(ep, &ex, tag)?;
                let ir = t0.elapsed().as_secs_f64();
                let mut is = 0.0;
                for _ in 0..ex.send.len() {
                    let (d, buf) = rx
                        .recv()
                        .map_err(|_| Error::Internal("compute worker stopped before handing over a buffer".into()))?;
                    let t1 = Instant::now();
                    reqs.push(ep.post_send(ex.send[d].0, tag, buf)?);
                    is += t1.elapsed().as_secs_f64();
                }
                let t2 = Instant::now();
                ep.wait_all(&mut reqs)?;
                {
                    let mut h = halo.write().unwrap_or_else(|e| e.into_inner());
                    copy_halo(&mut reqs, &ex, &mut h)?;
                }
                Ok([ir, is, t2.elapsed().as_secs_f64()])
            })();
            gate.wait();
            let workers: Vec<_> = handles.into_iter().map(|h| h.join()).collect();
            (agent, workers)
        });
        let pr = region.elapsed().as_secs_f64();

        let [ir, is, wa] = agent?;
        let mut worst = [0.0f64; 3];
        for w in workers {
            let w = w.map_err(|_| Error::Internal("compute worker panicked".into()))?;
            for (m, v) in worst.iter_mut().zip(w) {
                *m = m.max(v);
            }
        }
        t.set(Phase::RecvPost, ir);
        t.set(Phase::SendPost, is);
        t.set(Phase::WaitAll, wa);
        t.set(Phase::BufferAssembly, worst[0]);
        t.set(Phase::LocalCompute, worst[1]);
        t.set(Phase::NonlocalCompute, worst[2]);
        t.set(Phase::ParallelRegion, pr);
        t.iteration_seconds = start.elapsed().as_secs_f64();
        run.record(t, y);
    }
    run.y = y.clone();
    Ok(run)
}
