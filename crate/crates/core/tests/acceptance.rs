//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::net::TcpListener;
use std::time::{Duration, Instant};

use pfliforest::eval::{
    aggregate, gen_test_set, gen_training_set, named_point, roc_auc, run_experiment, spearman, AggregateRow,
    ConfusionMatrix, DataConfig, ExperimentConfig, ExperimentRecord, JsonlSink,
};
use pfliforest::iforest::{build_iforest_baseline, serialize_model};
use pfliforest::protocol::{round_limit, run_loopback, run_with_transports, ClientSpec, FederatedConfig};
use pfliforest::seed::{derive_seed, rng_from_seed};
use pfliforest::transport::tcp::{TcpClient, TcpServer};
use pfliforest::transport::ClientTransport;
use pfliforest::Builder;
use rand::Rng;

const SEED: u64 = 0;
const REPS: usize = 40;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn row<'a>(rows: &'a [AggregateRow], label: &str, builder: Builder) -> &'a AggregateRow {
    rows.iter()
        .find(|r| r.label == label && r.builder == builder)
        .unwrap_or_else(|| panic!("no aggregate row for {label} ({builder})"))
}

fn grid(labels: &[&str], builders: Vec<Builder>) -> ExperimentConfig {
    ExperimentConfig {
        points: labels.iter().map(|l| named_point(l).unwrap()).collect(),
        builders,
        reps: REPS,
        seed: SEED,
        ..ExperimentConfig::default()
    }
}

fn run(cfg: &ExperimentConfig) -> Vec<ExperimentRecord> {
    run_experiment(cfg, &mut JsonlSink::new(std::io::sink())).expect("experiment runs")
}

fn point_e(records: &[ExperimentRecord], elapsed: Duration) -> Verdict {
    let rows = aggregate(records);
    let e = row(&rows, "E", Builder::Federated);
    verdict(
        e.auc_roc >= 0.96 && e.auc_pr >= 0.90 && elapsed < Duration::from_secs(120),
        format!(
            "auc_roc={:.4} (>= 0.96) auc_pr={:.4} (>= 0.90) reps={} elapsed={:.1}s (< 120s)",
            e.auc_roc,
            e.auc_pr,
            e.reps,
            elapsed.as_secs_f64()
        ),
    )
}

fn all_points(rows: &[AggregateRow]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for label in ["A", "B", "C", "D", "E"] {
        let r = row(rows, label, Builder::Federated);
        pass &= r.auc_roc > 0.96 && r.ppv >= 0.78;
        parts.push(format!("{label}: roc={:.4} ppv={:.4}", r.auc_roc, r.ppv));
    }
    verdict(pass, format!("{} (roc > 0.96, ppv >= 0.78)", parts.join(", ")))
}

fn confusion_shape(rows: &[AggregateRow]) -> Verdict {
    let e = row(rows, "E", Builder::Federated);
    let cm = e.confusion;
    verdict(
        e.tpr >= 0.99 && e.fpr <= 0.005,
        format!(
            "recall={:.4} (>= 0.99) fpr={:.5} (<= 0.005) mean cm tp={:.3} fp={:.3} fn={:.3} tn={:.3}",
            e.tpr, e.fpr, cm.tp, cm.fp, cm.fn_, cm.tn
        ),
    )
}

fn baseline_dominance(rows: &[AggregateRow]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for label in ["A", "B", "C", "D"] {
        let fed = row(rows, label, Builder::Federated).auc_pr;
        let base = row(rows, &format!("{label}'"), Builder::Baseline).auc_pr;
        pass &= base >= fed - 0.05;
        parts.push(format!("{label}'={base:.4} vs {label}={fed:.4}"));
    }
    verdict(pass, format!("auc_pr {} (baseline >= federated - 0.05)", parts.join(", ")))
}

fn single_client_equivalence() -> Verdict {
    let cfg = DataConfig::default();
    let mut mismatches = Vec::new();
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(derive_seed(seed, &[5]));
        let size = rng.random_range(20..=200);
        let depth = rng.random_range(1..=10);
        let trees = rng.random_range(1..=10);
        let data = gen_training_set(size, &cfg, &mut rng).unwrap();
        let fed = run_loopback(
            &[ClientSpec { data: data.clone(), seed }],
            &FederatedConfig { num_trees: trees, max_depth: depth, timeout: None },
        )
        .expect("single-client build");
        let base = build_iforest_baseline(&data, trees, depth, seed).unwrap();
        if fed.forests[0].trees() != base.trees() {
            mismatches.push(seed);
        }
    }
    verdict(mismatches.is_empty(), format!("100 seeds, mismatching seeds: {mismatches:?}"))
}

fn termination() -> Verdict {
    let cfg = DataConfig::default();
    let mut rng = rng_from_seed(SEED);
    let mut combos = vec![(4, 10, 1), (12, 100, 8), (12, 10, 1), (4, 100, 8)];
    for _ in 0..12 {
        combos.push((rng.random_range(4..=12), rng.random_range(10..=100), rng.random_range(1..=8)));
    }
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (i, &(depth, trees, clients)) in combos.iter().enumerate() {
        let specs: Vec<ClientSpec> = (0..clients)
            .map(|c| {
                let mut r = rng_from_seed(derive_seed(SEED, &[6, i as u64, c as u64]));
                ClientSpec { data: gen_training_set(100, &cfg, &mut r).unwrap(), seed: derive_seed(SEED, &[7, i as u64, c as u64]) }
            })
            .collect();
        let fed = FederatedConfig { num_trees: trees, max_depth: depth, timeout: Some(Duration::from_secs(30)) };
        match run_loopback(&specs, &fed) {
            Ok(out) => {
                let bound = 1usize << (depth + 1);
                let max = out.rounds_per_tree.iter().copied().max().unwrap_or(0);
                worst = worst.max(max as f64 / bound as f64);
                if out.rounds_per_tree.len() != trees || max > bound || max > round_limit(depth) {
                    failures.push(format!("(d{depth},t{trees},c{clients}) rounds {max} > {bound}"));
                }
            }
            Err(e) => failures.push(format!("(d{depth},t{trees},c{clients}) {e}")),
        }
    }
    verdict(
        failures.is_empty(),
        format!("{} combos, max rounds/bound={worst:.3}, failures: {failures:?}", combos.len()),
    )
}

fn metric_identities(records: &[ExperimentRecord], n_test: usize) -> Verdict {
    let mut bad_totals = 0;
    for r in records {
        if let Some(m) = &r.metrics {
            if m.confusion.total() != n_test as f64 {
                bad_totals += 1;
            }
        }
    }

    // Reversal identity on real scored test sets.
    let data = DataConfig::default();
    let mut worst_reversal = 0.0f64;
    for rep in 0..5u64 {
        let mut rng = rng_from_seed(derive_seed(SEED, &[8, rep]));
        let specs: Vec<ClientSpec> = (0..2)
            .map(|c| ClientSpec { data: gen_training_set(200, &data, &mut rng).unwrap(), seed: rep * 2 + c })
            .collect();
        let out = run_loopback(&specs, &FederatedConfig { num_trees: 25, max_depth: 6, timeout: None }).unwrap();
        let pooled: Vec<f64> = specs.iter().flat_map(|s| s.data.clone()).collect();
        let test = gen_test_set(&pooled, 2000, 0.1, &data, &mut rng).unwrap();
        let scored: Vec<_> = test.iter().map(|s| (out.forests[0].score(s.value).value(), s.label)).collect();
        let reversed: Vec<_> = scored.iter().map(|&(s, l)| (-s, l)).collect();
        let sum = roc_auc(&scored).unwrap() + roc_auc(&reversed).unwrap();
        worst_reversal = worst_reversal.max((sum - 1.0).abs());
    }

    let table = ConfusionMatrix { tp: 998.0, fp: 8.325, fn_: 2.0, tn: 8991.675 };
    let round = |v: f64, places: i32| (v * 10f64.powi(places)).round() / 10f64.powi(places);
    let spot = table.tpr() == 0.998 && round(table.ppv(), 4) == 0.9917 && round(table.fpr(), 6) == 0.000925;

    verdict(
        bad_totals == 0 && worst_reversal <= 1e-9 && spot,
        format!(
            "{} matrices, {bad_totals} off-total; reversal max err={worst_reversal:.1e}; table tpr={} ppv={:.4} fpr={:.6}",
            records.len(),
            table.tpr(),
            table.ppv(),
            table.fpr()
        ),
    )
}

fn cost_monotonicity(rows: &[AggregateRow]) -> Verdict {
    let pts: Vec<&AggregateRow> = ["A", "B", "C", "D"].iter().map(|l| row(rows, l, Builder::Federated)).collect();
    let mem: Vec<f64> = pts.iter().map(|r| r.peak_memory_bytes).collect();
    let time: Vec<f64> = pts.iter().map(|r| r.build_time_seconds.unwrap_or(f64::NAN)).collect();
    let rho = spearman(&time, &mem);
    let monotone = mem.windows(2).all(|w| w[0] <= w[1]);
    verdict(
        monotone && rho >= 0.9,
        format!("peak bytes A..D={mem:.0?} (non-decreasing); spearman(time, size)={rho:.3} (>= 0.9)"),
    )
}

fn determinism() -> Verdict {
    let cfg = ExperimentConfig { reps: 1, record_timing: false, ..grid(&["A", "E"], vec![Builder::Federated, Builder::Baseline]) };
    let jsonl = || {
        let mut sink = JsonlSink::new(Vec::new());
        run_experiment(&cfg, &mut sink).unwrap();
        sink.into_inner()
    };
    let records_equal = jsonl() == jsonl();

    let data = DataConfig::default();
    let specs: Vec<ClientSpec> = (0..2)
        .map(|c| ClientSpec {
            data: gen_training_set(60, &data, &mut rng_from_seed(derive_seed(SEED, &[9, c]))).unwrap(),
            seed: derive_seed(SEED, &[10, c]),
        })
        .collect();
    let fed = FederatedConfig { num_trees: 5, max_depth: 5, timeout: Some(Duration::from_secs(30)) };
    let models = |out: &pfliforest::protocol::LoopbackOutcome| -> Vec<String> {
        out.forests.iter().map(serialize_model).collect()
    };
    let a = models(&run_loopback(&specs, &fed).unwrap());
    let b = models(&run_loopback(&specs, &fed).unwrap());
    let models_equal = a == b;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let timeout = Some(Duration::from_secs(30));
    let tcp = std::thread::scope(|s| {
        let connectors: Vec<_> = (1..=2u32)
            .map(|id| s.spawn(move || TcpClient::connect(addr, id, timeout).unwrap()))
            .collect();
        let server = TcpServer::accept_clients(&listener, &[1, 2], timeout).unwrap();
        let clients: Vec<Box<dyn ClientTransport>> = connectors
            .into_iter()
            .map(|h| Box::new(h.join().unwrap()) as Box<dyn ClientTransport>)
            .collect();
        run_with_transports(Box::new(server), clients, &specs, &fed).unwrap()
    });
    let tcp_equal = models(&tcp) == a;

    verdict(
        records_equal && models_equal && tcp_equal,
        format!("jsonl identical={records_equal}, loopback models identical={models_equal}, tcp == loopback={tcp_equal}"),
    )
}

fn main() {
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();

    let start = Instant::now();
    let e_records = run(&grid(&["E"], vec![Builder::Federated]));
    let e_elapsed = start.elapsed();
    let ad_records = run(&grid(&["A", "B", "C", "D"], vec![Builder::Federated, Builder::Baseline]));
    let all: Vec<ExperimentRecord> = ad_records.iter().chain(&e_records).cloned().collect();
    let rows = aggregate(&all);

    verdicts.push((1, "point E reproduction", point_e(&e_records, e_elapsed)));
    verdicts.push((2, "grid points A-E", all_points(&rows)));
    verdicts.push((3, "point E confusion shape", confusion_shape(&rows)));
    verdicts.push((4, "baseline dominance", baseline_dominance(&rows)));
    verdicts.push((5, "single-client equivalence", single_client_equivalence()));
    verdicts.push((6, "protocol termination", termination()));
    verdicts.push((7, "metric identities", metric_identities(&all, ExperimentConfig::default().n_test)));
    verdicts.push((8, "cost monotonicity", cost_monotonicity(&rows)));
    verdicts.push((9, "determinism", determinism()));

    let mut failed = 0;
    for (id, name, v) in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {}", v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
