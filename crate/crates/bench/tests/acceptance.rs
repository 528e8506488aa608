//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line; run
//! with `--nocapture` to see them all.

use std::sync::Mutex;
use std::time::Instant;

use knn_bench::{emit_report, format_scale_up, run_on_workload, scale_up, ReportFormat, Workload};
use knn_dataflow::data_io::{
    generate_synthetic, generate_synthetic_queries, load_fvecs, mips_to_l2, partition_dataset,
    write_fvecs,
};
use knn_dataflow::distance::{direct_sq_l2, staged_distance};
use knn_dataflow::engine::{
    run_fdsq_collect, run_fqsd_batches, run_fqsd_traced, validate_budget, Phase, StreamTrace,
};
use knn_dataflow::oracle::match_distances;
use knn_dataflow::{
    brute_force_knn, DistanceStagingParams, EngineConfig, EngineError, KnnResult, NeighborPair,
    Query, TopKQueue, VectorId, VectorRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Timing-sensitive criteria must not share the CPU with the others.
static SERIAL: Mutex<()> = Mutex::new(());

const REL_TOL: f32 = 1e-5;

fn report(n: u32, name: &str, failures: &[String], detail: &str) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} {name} ({detail})");
    for f in failures.iter().take(10) {
        println!("    {f}");
    }
    assert!(
        failures.is_empty(),
        "criterion {n} failed with {} violations",
        failures.len()
    );
}

#[test]
fn criterion_1_oracle_equivalence_sweep() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut configs = 0;
    for (n, d, seed) in [(100, 4, 1u64), (10_000, 769, 2), (10_000, 960, 3)] {
        let vectors = generate_synthetic(n, d, seed);
        let queries = generate_synthetic_queries(20, d, seed + 100);
        let full: Vec<KnnResult> = queries
            .iter()
            .map(|q| brute_force_knn(&vectors, q, 1024).unwrap())
            .collect();
        for capacity in [1, 7, 4096] {
            let dataset = partition_dataset(&vectors, capacity, d).unwrap();
            for k in [1, 10, 64, 1024] {
                let oracle: Vec<KnnResult> = full
                    .iter()
                    .map(|r| KnnResult {
                        query_id: r.query_id,
                        neighbors: r.neighbors[..k.min(n)].to_vec(),
                    })
                    .collect();
                for workers in [1, 4, 16] {
                    for (w, m) in [(1, 1), (16, 8)] {
                        let staging = DistanceStagingParams::new(w, m).unwrap();
                        let fq = EngineConfig::fqsd(k, workers)
                            .with_partition_capacity(capacity)
                            .with_staging(staging);
                        let fd = EngineConfig::fdsq(k, workers)
                            .with_partition_capacity(capacity)
                            .with_staging(staging);
                        let runs = [
                            ("fqsd", run_fqsd_batches(&queries, &dataset, &fq)),
                            ("fdsq", run_fdsq_collect(&dataset, &queries, &fd)),
                        ];
                        for (mode, got) in runs {
                            configs += 1;
                            let tag = format!("{mode} n={n} d={d} k={k} workers={workers} cap={capacity} w={w} m={m}");
                            let got = match got {
                                Ok(got) => got,
                                Err(e) => {
                                    failures.push(format!("{tag}: {e}"));
                                    continue;
                                }
                            };
                            if got.len() != oracle.len() {
                                failures.push(format!("{tag}: {} results", got.len()));
                                continue;
                            }
                            for (g, o) in got.iter().zip(&oracle) {
                                if let Err(e) = g
                                    .check_invariants(k, n)
                                    .and_then(|_| match_distances(g, o, REL_TOL))
                                {
                                    failures.push(format!("{tag}: {e}"));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 300.0 {
        failures.push(format!("sweep took {secs:.0} s, limit 300 s"));
    }
    report(
        1,
        "oracle equivalence sweep",
        &failures,
        &format!("{configs} configurations x 20 queries in {secs:.1} s"),
    );
}

fn sorted_distances(mut v: Vec<f32>) -> Vec<f32> {
    v.sort_by(f32::total_cmp);
    v
}

#[test]
fn criterion_2_queue_matches_sort_truncate() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for k in [1usize, 2, 7, 64, 1024] {
        for trial in 0..1000 {
            let len = match trial {
                0 => 0,
                1 => k - 1,
                2 => k,
                _ => rng.gen_range(0..=3 * k + 16),
            };
            // Every third multiset draws from a small integer range to force ties.
            let tied = trial % 3 == 0;
            let dists: Vec<f32> = (0..len)
                .map(|_| {
                    if tied {
                        rng.gen_range(0..8) as f32
                    } else {
                        rng.gen::<f32>() * 100.0
                    }
                })
                .collect();
            let mut queue = TopKQueue::new(k).unwrap();
            for (i, &d) in dists.iter().enumerate() {
                queue
                    .push(NeighborPair::new(d, VectorId(i as u32)))
                    .unwrap();
            }
            let mut simulated = queue.clone();
            let out = queue.flush().unwrap();
            let (tokens, _) = simulated.flush_lanes_traced().unwrap();
            let got: Vec<f32> = out.iter().map(|p| p.distance).collect();
            let mut want = sorted_distances(dists);
            want.truncate(k);
            let ascending = got.windows(2).all(|w| w[0] <= w[1]);
            if got != want || !ascending || got.len() != k.min(len) || tokens != [out] {
                failures.push(format!(
                    "k={k} |S|={len}: got {:?}.., want {:?}..",
                    &got[..got.len().min(4)],
                    &want[..want.len().min(4)]
                ));
            }
        }
    }
    report(
        2,
        "queue vs sort-truncate",
        &failures,
        "1000 multisets per k in {1,2,7,64,1024}, direct and token-level flush",
    );
}

#[test]
fn criterion_3_lane_independence() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 1024;
    let mut failures = Vec::new();
    let trials = 20;
    for lanes in [2usize, 16, 64] {
        let lane_k = k / lanes;
        for trial in 0..trials {
            let mut shared = TopKQueue::new(k).unwrap();
            shared.partition(lanes).unwrap();
            let mut independent: Vec<TopKQueue> = (0..lanes)
                .map(|_| TopKQueue::new(lane_k).unwrap())
                .collect();
            let pushes = rng.gen_range(0..=4 * k);
            for i in 0..pushes {
                let lane = rng.gen_range(0..lanes);
                let d = if trial % 2 == 0 {
                    rng.gen_range(0..16) as f32
                } else {
                    rng.gen::<f32>()
                };
                let pair = NeighborPair::new(d, VectorId(i as u32));
                shared.push_lane(lane, pair).unwrap();
                independent[lane].push(pair).unwrap();
            }
            let got = shared.flush_lanes().unwrap();
            for (lane, (g, q)) in got.iter().zip(&mut independent).enumerate() {
                let want = q.flush().unwrap();
                if *g != want {
                    failures.push(format!(
                        "M={lanes} trial {trial} lane {lane}: {} vs {} pairs",
                        g.len(),
                        want.len()
                    ));
                }
            }
        }
    }
    report(
        3,
        "queue lane independence",
        &failures,
        &format!("k=1024, M in {{2,16,64}}, {trials} interleavings each"),
    );
}

#[test]
fn criterion_4_staged_distance_tolerance() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = [1usize, 3, 4, 769, 960];
    let mut failures = Vec::new();
    for trial in 0..10_000 {
        let d = dims[trial % dims.len()];
        let w = rng.gen_range(1..=64);
        let m = rng.gen_range(1..=16);
        let scale = [0.01f32, 1.0, 10.0][rng.gen_range(0..3)];
        let q: Vec<f32> = (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
        let x: Vec<f32> = (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
        let params = DistanceStagingParams::new(w, m).unwrap();
        let staged = staged_distance(&q, &x, params).unwrap();
        let direct = direct_sq_l2(&q, &x).unwrap();
        if (staged - direct).abs() > 1e-5 * direct.max(1.0) {
            failures.push(format!(
                "d={d} w={w} m={m}: staged {staged} direct {direct}"
            ));
        }
    }
    report(
        4,
        "staged distance tolerance",
        &failures,
        "10000 trials over d in {1,3,4,769,960}",
    );
}

#[test]
fn criterion_5_double_buffer_overlap() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (capacity, d, lanes) = (4096, 960, 4);
    let vectors = generate_synthetic(8 * capacity, d, 5);
    let queries = generate_synthetic_queries(lanes, d, 50);
    let dataset = partition_dataset(&vectors, capacity, d).unwrap();
    let config = EngineConfig::fqsd(16, lanes).with_partition_capacity(capacity);
    let trace = StreamTrace::new();
    let results = run_fqsd_traced(&queries, &dataset, &config, &trace).unwrap();

    let mut failures = Vec::new();
    if trace.count(Phase::Fill) != 8 || trace.count(Phase::Scan) != 8 {
        failures.push(format!(
            "{} fills and {} scans recorded, expected 8 each",
            trace.count(Phase::Fill),
            trace.count(Phase::Scan)
        ));
    }
    for i in trace.missing_overlaps() {
        let fill = trace.event(Phase::Fill, i + 1);
        let scan = trace.event(Phase::Scan, i);
        failures.push(format!(
            "fill({}) does not overlap scan({i}): {fill:?} {scan:?}",
            i + 1
        ));
    }
    for (a, b) in trace.slot_conflicts() {
        failures.push(format!("slot used concurrently by partitions {a} and {b}"));
    }
    for (q, got) in queries.iter().zip(&results) {
        let want = brute_force_knn(&vectors, q, 16).unwrap();
        if let Err(e) = match_distances(got, &want, REL_TOL) {
            failures.push(e);
        }
    }
    report(
        5,
        "double-buffer overlap",
        &failures,
        "8 partitions of 4096 x 960, 4 lanes",
    );
}

fn inner(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn sq_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum()
}

/// The augmented-L2 ascending order must be a descending inner-product order,
/// where inner products closer than the rounding of the appended component
/// count as one tie group.
fn mips_rank_violation(docs: &[VectorRecord], query: &Query) -> Option<String> {
    let (aug, augq) = mips_to_l2(docs, std::slice::from_ref(query)).ok()?;
    let q = &augq[0];
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| {
        sq_l2(&q.values, &aug[a].values).total_cmp(&sq_l2(&q.values, &aug[b].values))
    });
    let scale = docs
        .iter()
        .map(|d| inner(&d.values, &d.values))
        .fold(inner(&query.values, &query.values), f64::max)
        .max(1.0);
    order.windows(2).find_map(|w| {
        let a = inner(&query.values, &docs[w[0]].values);
        let b = inner(&query.values, &docs[w[1]].values);
        (a < b - 1e-6 * scale)
            .then(|| format!("doc {} (ip {a}) ranked before doc {} (ip {b})", w[0], w[1]))
    })
}

#[test]
fn criterion_6_mips_rank_equivalence() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for trial in 0..200 {
        let n = rng.gen_range(1..=200);
        let d = rng.gen_range(1..=16);
        let grid = trial % 4 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> f32 {
            if grid {
                rng.gen_range(-3..=3) as f32
            } else {
                rng.gen_range(-1.0..1.0)
            }
        };
        let docs: Vec<VectorRecord> = (0..n)
            .map(|i| VectorRecord::new(i as u32, (0..d).map(|_| draw(&mut rng)).collect()))
            .collect();
        let query = Query::new(0, (0..d).map(|_| draw(&mut rng)).collect());
        match mips_to_l2(&docs, std::slice::from_ref(&query)) {
            Err(e) => failures.push(format!("trial {trial}: {e}")),
            Ok(_) => {
                if let Some(v) = mips_rank_violation(&docs, &query) {
                    failures.push(format!("trial {trial} (n={n}, d={d}): {v}"));
                }
            }
        }
    }
    report(
        6,
        "MIPS to L2 rank equivalence",
        &failures,
        "200 instances, a quarter on an integer grid",
    );
}

#[test]
fn criterion_7_scaled_methodology() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut failures = Vec::new();

    let ratio = format_scale_up(scale_up(304.0, 21.0));
    if ratio != "14.5×" {
        failures.push(format!("304 ms / 21 ms renders as {ratio}, expected 14.5×"));
    }

    let (n, d, k, runs) = (100_000, 960, 1024, 3);
    let workload = Workload::new(
        generate_synthetic(n, d, 7),
        generate_synthetic_queries(8, d, 70),
    )
    .unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let parallel = cores.min(4);

    let single = run_on_workload(&workload, &EngineConfig::fdsq(k, 1), runs, false).unwrap();
    let multi = run_on_workload(&workload, &EngineConfig::fdsq(k, parallel), runs, false).unwrap();
    let (t1, tp) = (single.median_latency_ms(), multi.median_latency_ms());
    if parallel == 1 {
        failures.push(format!(
            "{cores} core available, so workers = min(4, cores) = 1 and the speed-up \
             comparison is a configuration against itself ({tp:.1} ms vs {t1:.1} ms)"
        ));
    } else if tp >= t1 {
        failures.push(format!(
            "median latency {tp:.1} ms with {parallel} workers, {t1:.1} ms with 1"
        ));
    }

    let mut table = Vec::new();
    emit_report(&[single, multi], Some(0), ReportFormat::Table, &mut table).unwrap();
    let table = String::from_utf8(table).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    let columns: Vec<&str> = lines[0].split('|').map(str::trim).collect();
    let expected = [
        "Method",
        "K",
        "Workers",
        "Batch Size",
        "Latency (msec/query)",
        "Latency scale-up",
        "Throughput (queries/sec)",
        "Throughput scale-up",
        "Energy (queries/J)",
    ];
    if columns != expected {
        failures.push(format!("table columns {columns:?}"));
    }
    if lines.len() != 4 || !lines[3].contains('×') {
        failures.push("table is missing the scale-up row".into());
    }
    print!("{table}");

    let secs = start.elapsed().as_secs_f64();
    if secs > 120.0 {
        failures.push(format!("took {secs:.0} s, limit 120 s"));
    }
    report(
        7,
        "scaled methodology reproduction",
        &failures,
        &format!("FD-SQ n={n} d={d} k={k}, workers 1 vs {parallel}, {secs:.1} s"),
    );
}

#[test]
fn criterion_8_budget_trade_off() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let total = 16_384;
    let mut failures = Vec::new();
    for (workers, k) in [(16, 1024), (19, 418), (22, 200), (24, 72)] {
        let config = EngineConfig::fdsq(k, workers).with_budget(total);
        if let Err(e) = validate_budget(k, workers, total).and_then(|_| config.validate()) {
            failures.push(format!("({workers}, {k}) rejected: {e}"));
        }
    }
    match EngineConfig::fdsq(1024, 24).with_budget(total).validate() {
        Err(EngineError::BudgetExceeded {
            required: 24_576,
            available: 16_384,
        }) => {}
        other => failures.push(format!("(24, 1024) gave {other:?}")),
    }
    report(8, "budget trade-off", &failures, "K_total = 16384");
}

#[test]
fn criterion_9_fvecs_round_trip() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Vec<f32>> = (0..1000)
        .map(|_| (0..960).map(|_| f32::from_bits(rng.gen())).collect())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round_trip.fvecs");
    write_fvecs(&path, rows.iter().map(Vec::as_slice)).unwrap();
    let (d, loaded) = load_fvecs(&path).unwrap();

    let mut failures = Vec::new();
    if d != 960 || loaded.len() != rows.len() {
        failures.push(format!("loaded {} vectors of d={d}", loaded.len()));
    }
    for (i, (rec, row)) in loaded.iter().zip(&rows).enumerate() {
        let same = rec.id.0 as usize == i
            && rec.values.len() == row.len()
            && rec
                .values
                .iter()
                .zip(row)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            failures.push(format!("vector {i} differs"));
        }
    }
    report(
        9,
        "fvecs round trip",
        &failures,
        "1000 vectors, d = 960, arbitrary bit patterns",
    );
}
