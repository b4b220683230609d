//! Wall-clock assertions. Tests share one lock so they never compete for cores.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use spmv_core::exec::check_against_serial;
use spmv_core::model::{measure_triad_bandwidth, TriadConfig};
use spmv_core::transport::{busy_work, probe_overlap, Direction, ProbeParams};
use spmv_core::*;

static CLOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    CLOCK.lock().unwrap_or_else(|p| p.into_inner())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over iterations of the slowest (or, with `fastest`, quickest) rank's phase time.
fn phase_median(out: &DistRun, phase: Phase, fastest: bool) -> f64 {
    let iters = out.iteration_seconds.len();
    let per_iteration: Vec<f64> = (0..iters)
        .map(|it| {
            let v = out.timings.iter().filter(|t| t.iteration == it).filter_map(|t| t.get(phase));
            if fastest {
                v.fold(f64::MAX, f64::min)
            } else {
                v.fold(0.0, f64::max)
            }
        })
        .collect();
    median(per_iteration)
}

fn config(async_progress: bool, bandwidth: f64) -> TransportConfig {
    TransportConfig {
        async_progress,
        synthetic_bandwidth: Some(bandwidth),
        eager_threshold: 0,
    }
}

/// Rank 0 posts a receive, works for `work`, then waits; returns the wait duration.
fn wait_after_work(cfg: TransportConfig, elements: usize, work: Duration) -> f64 {
    let mut eps = LocalTransport::create::<f64>(2, cfg).unwrap();
    let mut sender = eps.pop().unwrap();
    let mut receiver = eps.pop().unwrap();
    let payload = vec![1.0; elements];
    std::thread::scope(|s| {
        s.spawn(move || {
            sender.barrier().unwrap();
            let mut r = sender.post_send(0, 0, payload).unwrap();
            sender.wait_all(std::slice::from_mut(&mut r)).unwrap();
        });
        receiver.barrier().unwrap();
        let mut r = receiver.post_recv(1, 0, elements).unwrap();
        busy_work(work);
        let t = Instant::now();
        receiver.wait_all(std::slice::from_mut(&mut r)).unwrap();
        let waited = t.elapsed().as_secs_f64();
        assert_eq!(r.take_data().unwrap().len(), elements);
        waited
    })
}

#[test]
fn async_progress_hides_transfer_behind_work() {
    let _g = serial();
    // 8 MB at 1 GB/s: 8 ms.
    let waited = wait_after_work(config(true, 1.0), 1_000_000, Duration::from_millis(16));
    assert!(waited < 0.1 * 0.008, "waited {waited}");
}

#[test]
fn no_async_progress_transfers_only_inside_wait() {
    let _g = serial();
    let waited = wait_after_work(config(false, 1.0), 1_000_000, Duration::from_millis(16));
    assert!(waited >= 0.008 - 2e-4, "waited {waited}");
    assert!(waited < 0.008 * 1.2, "waited {waited}");
}

#[test]
fn eager_messages_need_no_progress() {
    let _g = serial();
    let cfg = TransportConfig {
        eager_threshold: 1 << 20,
        ..config(false, 1.0)
    };
    // 80 kB at 1 GB/s: 80 us, delivered during the work.
    let waited = wait_after_work(cfg, 10_000, Duration::from_millis(2));
    assert!(waited < 8e-6 + 1e-4, "waited {waited}");
}

#[test]
fn probe_shape_follows_progress_setting() {
    let _g = serial();
    let t_msg = 0.008;
    let work: Vec<Duration> = [1u64, 4, 8, 16].map(Duration::from_millis).to_vec();
    for (async_progress, direction) in [(true, Direction::Recv), (false, Direction::Send), (false, Direction::Recv)] {
        let eps = LocalTransport::create::<f64>(2, config(async_progress, 1.0)).unwrap();
        let params = ProbeParams {
            message_bytes: 8_000_000,
            direction,
            work: work.clone(),
            repetitions: 3,
        };
        for s in probe_overlap(eps, &params).unwrap() {
            let expect = if async_progress { s.work.max(t_msg) } else { s.work + t_msg };
            assert!(
                (s.total - expect).abs() <= 0.2 * expect,
                "async={async_progress} {direction:?} work={} total={} expect={expect}",
                s.work,
                s.total
            );
        }
    }
}

/// Banded instance whose two ranks exchange a few thousand halo entries.
fn two_rank_instance() -> &'static (CrsMatrix, Vec<f64>) {
    static INSTANCE: OnceLock<(CrsMatrix, Vec<f64>)> = OnceLock::new();
    INSTANCE.get_or_init(|| {
        let a = generate(&GenSpec::banded(600_000, 15.0, 3000, 5)).unwrap();
        let x = (0..a.n_rows()).map(|i| (i % 17) as f64 * 0.1).collect();
        (a, x)
    })
}

fn run(a: &CrsMatrix, x: &[f64], mode: Mode, transport: TransportConfig, iterations: usize) -> DistRun {
    let cfg = DistConfig {
        ranks: 2,
        policy: BalancePolicy::Rows,
        mode,
        run: RunOptions { iterations, workers: 1 },
        transport,
    };
    run_distributed(a, x, &cfg).unwrap()
}

#[test]
fn naive_overlap_hides_nothing_without_async_progress() {
    let _g = serial();
    let (a, x) = two_rank_instance();
    let bytes = run(a, x, Mode::VectorNaive, TransportConfig::default(), 1).volume.max_recv_bytes;
    let t_comm = 0.010;
    let bw = bytes as f64 / t_comm / 1e9;
    let out = run(a, x, Mode::VectorNaive, config(false, bw), 15);
    check_against_serial(a, x, &out.y, false).unwrap();
    // The rank that reaches the wait last still waits for the whole transfer.
    let wa = phase_median(&out, Phase::WaitAll, true);
    assert!((wa - t_comm).abs() <= 0.2 * t_comm, "wait {wa}, transfer {t_comm}");
}

#[test]
fn task_mode_overlaps_without_async_progress() {
    let _g = serial();
    let (a, x) = two_rank_instance();
    let plain = run(a, x, Mode::Task, TransportConfig::default(), 10);
    let t_lc = phase_median(&plain, Phase::LocalCompute, false);
    let t_comm = 0.5 * t_lc;
    let bw = plain.volume.max_recv_bytes as f64 / t_comm / 1e9;

    let task = run(a, x, Mode::Task, config(false, bw), 21);
    check_against_serial(a, x, &task.y, false).unwrap();
    let predicted = t_comm.max(phase_median(&task, Phase::LocalCompute, false)) + phase_median(&task, Phase::NonlocalCompute, false);
    let measured = median(task.iteration_seconds.clone());
    assert!((measured - predicted).abs() <= 0.25 * predicted, "measured {measured}, predicted {predicted}");

    let naive = run(a, x, Mode::VectorNaive, config(false, bw), 21);
    let naive_median = median(naive.iteration_seconds.clone());
    assert!(measured < naive_median, "task {measured} vs naive {naive_median}");
}

#[test]
#[ignore = "host property: needs a machine with steady memory bandwidth"]
fn triad_best_of_five_is_stable() {
    let _g = serial();
    let cfg = TriadConfig {
        array_length: 1 << 23,
        repetitions: 5,
        ..TriadConfig::default()
    };
    let runs: Vec<f64> = (0..5).map(|_| measure_triad_bandwidth(&cfg).unwrap().bandwidth).collect();
    let center = median(runs.clone());
    assert!(
        runs.iter().all(|r| (r - center).abs() < 0.10 * center),
        "triad bandwidths {runs:?}, median {center}"
    );
}
