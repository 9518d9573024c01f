//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use tsc_core::coord_graph::brute_force_optimum;
use tsc_core::dag::{eccentricity, min_diameter_dag, DagOrder};
use tsc_core::harness::{run_experiment, simulate_comm_delay, ControllerKind, DelayModel, Metrics, Scenario};
use tsc_core::loc_iai::{best_response, emc_decide, local_balances, EmcConfig};
use tsc_core::nl_coor::{message_passing, nl_coor, CoorBudget};
use tsc_core::{balance_index, build_cg, global_cost, predict_next_queues, Phase, QueueState, Scope, TurningModel};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn graph_cost_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let net = grid(r.random_range(1..=3), r.random_range(1..=3));
        let (s, t) = random_state(&net, &mut r);
        let x = random_phases(net.num_intersections(), &mut r);
        let cg = build_cg(&s, &net, &t).unwrap();
        let direct = balance_index(&predict_next_queues(&s, &x, &net, &t).unwrap(), &net, Scope::Network);
        let via_graph = global_cost(&cg, &x).unwrap();
        worst = worst.max((via_graph - direct).abs() / direct.max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 1e-6 && secs < 10.0,
        format!("max relative error {worst:.2e}, {secs:.2} s"),
    )
}

fn tree_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut matched = 0;
    for k in 0..50 {
        let n = if k < 10 { 8 } else { r.random_range(1..=8) };
        let cg = random_tree(n, &mut r);
        let order = min_diameter_dag(&cg).unwrap();
        let x = nl_coor(&cg, &order, CoorBudget::Rounds(usize::MAX));
        let (_, opt) = brute_force_optimum(&cg).unwrap();
        if (global_cost(&cg, &x).unwrap() - opt).abs() <= 1e-9 * opt.max(1.0) {
            matched += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        matched == 50 && secs < 30.0,
        format!("{matched}/50 trees optimal, {secs:.2} s"),
    )
}

fn fixpoint_bound() -> Outcome {
    let mut r = rng(3);
    let mut detail = Vec::new();
    let mut ok = true;
    for n in 2..=5 {
        let net = grid(n, n);
        let (s, t) = random_state(&net, &mut r);
        let cg = build_cg(&s, &net, &t).unwrap();
        let order = min_diameter_dag(&cg).unwrap();
        let dia = order.diameter;
        let at = message_passing(&cg, &order, dia);
        let after = message_passing(&cg, &order, dia + 1);
        let before = message_passing(&cg, &order, dia - 1);
        let stable = at.max_delta(&after) <= 1e-9;
        let not_earlier = before.max_delta(&at) > 1e-9;
        ok &= stable && not_earlier;
        detail.push(format!("{n}x{n} dia {dia}"));
    }
    (ok, detail.join(", "))
}

fn check_sink(cg: &tsc_core::CoordinationGraph) -> bool {
    let order = min_diameter_dag(cg).unwrap();
    let d = all_pairs(cg);
    let ecc: Vec<usize> = d.iter().map(|row| *row.iter().max().unwrap()).collect();
    let min = *ecc.iter().min().unwrap();
    ecc[order.sink] == min && eccentricity(cg, order.sink).unwrap() == min
}

fn minimum_diameter_sink() -> Outcome {
    let mut checked = 0;
    let mut ok = true;
    for rows in 1..=5 {
        for cols in 1..=5 {
            ok &= check_sink(&grid_cg(rows, cols));
            checked += 1;
        }
    }
    let mut r = rng(4);
    for _ in 0..20 {
        let n = r.random_range(2..=30);
        let extra = r.random_range(0..=n);
        ok &= check_sink(&random_connected(n, extra, &mut r));
        checked += 1;
    }
    (ok, format!("{checked} graphs checked"))
}

fn worked_example() -> Outcome {
    let net = two_node();
    let s = example_state(&net);
    let t = TurningModel::uniform(&net);
    let cg = build_cg(&s, &net, &t).unwrap();
    let (opt, cost) = brute_force_optimum(&cg).unwrap();
    let br = best_response(0, &opt, &s, &net, &t).unwrap();
    let b_i = local_balances(0, &opt, &s, &net, &t)[Phase::WeStraight.index()];
    let emc = emc_decide(&s, &net, &t, &EmcConfig::default()).unwrap();
    let ok = opt.get(0) == Phase::WeLeft
        && cost == 16.0
        && br == Phase::WeStraight
        && b_i == 4.0
        && emc.get(0) == Phase::WeStraight;
    (
        ok,
        format!(
            "optimum {} at {cost}, best response {} with B_i {b_i}, EMC {}",
            opt.get(0).name(),
            br.name(),
            emc.get(0).name()
        ),
    )
}

fn run(kind: ControllerKind, rows: usize, rate: f64, seed: u64) -> Metrics {
    let sc = Scenario::grid(rows, rows, rate, 3600.0, seed).unwrap();
    run_experiment(&sc.with_controller(kind)).unwrap()
}

fn balance_dominance() -> Outcome {
    let nl = run(ControllerKind::NlCoorOnly, 4, 1.76, 0).mean_balance;
    let mp = run(ControllerKind::MaxPressure, 4, 1.76, 0).mean_balance;
    (nl <= mp, format!("mean B: NL-Coor {nl:.1}, MaxPressure {mp:.1}"))
}

/// One-sided paired t statistic for `mean(worse - better) > 0`.
fn paired_t(better: &[f64], worse: &[f64]) -> f64 {
    let d: Vec<f64> = worse.iter().zip(better).map(|(w, b)| w - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean / (var / n).sqrt()
}

fn travel_time_ordering() -> Outcome {
    let start = Instant::now();
    let seeds = 10;
    let crit = StudentsT::new(0.0, 1.0, (seeds - 1) as f64).unwrap().inverse_cdf(0.95);
    let mut ok = true;
    let mut detail = Vec::new();
    for (rows, rate) in [(4, 1.76), (15, 0.80)] {
        let tt = |kind| -> Vec<f64> {
            (0..seeds)
                .map(|s| run(kind, rows, rate, s).avg_travel_time.unwrap())
                .collect()
        };
        let emc = tt(ControllerKind::Emc);
        let mp = tt(ControllerKind::MaxPressure);
        let ft = tt(ControllerKind::FixedTime);
        let t1 = paired_t(&emc, &mp);
        let t2 = paired_t(&mp, &ft);
        ok &= t1 > crit && t2 > crit;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        detail.push(format!(
            "{rows}x{rows}: EMC {:.1} MP {:.1} FT {:.1} (t {t1:.2}, {t2:.2})",
            mean(&emc),
            mean(&mp),
            mean(&ft)
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    detail.push(format!("t crit {crit:.3}, {secs:.0} s"));
    (ok, detail.join("; "))
}

fn real_time_budget() -> Outcome {
    let mut sc = Scenario::grid(20, 20, 0.77, 1000.0, 0).unwrap();
    sc.sim.horizon = 100;
    let m = run_experiment(&sc.with_controller(ControllerKind::Emc)).unwrap();
    let worst = m.series.iter().map(|r| r.decision_ms).fold(0.0, f64::max);
    (
        m.mean_decision_ms <= 3000.0 && m.series.len() == 100,
        format!(
            "mean {:.1} ms, worst {worst:.1} ms over {} periods",
            m.mean_decision_ms,
            m.series.len()
        ),
    )
}

/// Mean total queue over the second and last quarter of a 3,600-period run.
fn drift(kind: ControllerKind, rate: f64) -> (f64, f64) {
    let m = run_soak(kind, rate);
    let n = m.series.len();
    (m.mean_total_queue(n / 4, n / 2), m.mean_total_queue(3 * n / 4, n))
}

fn run_soak(kind: ControllerKind, rate: f64) -> Metrics {
    let sc = Scenario::grid(4, 4, rate, 36_000.0, 0).unwrap();
    assert_eq!(sc.sim.horizon, 3600);
    run_experiment(&sc.with_controller(kind)).unwrap()
}

fn saturates(kind: ControllerKind, rate: f64) -> bool {
    let (q2, q4) = drift(kind, rate);
    q4 >= 1.1 * q2
}

fn stability_soak() -> Outcome {
    let (mut lo, mut hi) = (1.0, 4.0);
    if saturates(ControllerKind::FixedTime, lo) || !saturates(ControllerKind::FixedTime, hi) {
        return (false, "FixedTime saturation not bracketed by [1, 4] veh/s".into());
    }
    while hi - lo > 0.02 {
        let mid = 0.5 * (lo + hi);
        if saturates(ControllerKind::FixedTime, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let saturation = 0.5 * (lo + hi);
    let rate = 0.8 * saturation;
    let (q2, q4) = drift(ControllerKind::Emc, rate);
    (
        q4 < 1.1 * q2,
        format!("FixedTime saturates near {saturation:.3} veh/s; EMC at {rate:.3}: q2 {q2:.1}, q4 {q4:.1}"),
    )
}

fn order_for(n: usize) -> DagOrder {
    let net = grid(n, n);
    let cg = build_cg(&QueueState::zeros(&net), &net, &TurningModel::uniform(&net)).unwrap();
    min_diameter_dag(&cg).unwrap()
}

fn comm_delay_model() -> Outcome {
    let model = |mu: f64| DelayModel::new(mu, 0).partitioned(10);
    let big = order_for(20);
    let at_20 = simulate_comm_delay(&big, 2, &model(20.0)).unwrap();
    let in_band = (at_20 - 1230.0).abs() <= 0.5 * 1230.0;
    let by_mu: Vec<f64> = [0.0, 5.0, 10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&mu| simulate_comm_delay(&big, 2, &model(mu)).unwrap())
        .collect();
    let by_size: Vec<f64> = [3, 4, 15, 20]
        .iter()
        .map(|&n| simulate_comm_delay(&order_for(n), 2, &model(20.0)).unwrap())
        .collect();
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
    (
        in_band && monotone(&by_mu) && monotone(&by_size),
        format!(
            "20x20 at 20 ms: {:.3} s; by size {:?} ms",
            at_20 / 1e3,
            by_size.iter().map(|d| d.round()).collect::<Vec<_>>()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("graph cost equals predicted balance", graph_cost_equivalence),
        ("tree exactness", tree_exactness),
        ("fixpoint after diameter rounds", fixpoint_bound),
        ("minimum-eccentricity sink", minimum_diameter_sink),
        ("two-intersection worked example", worked_example),
        ("balance dominance over MaxPressure", balance_dominance),
        ("travel-time ordering", travel_time_ordering),
        ("real-time budget on 20x20", real_time_budget),
        ("stability soak", stability_soak),
        ("communication-delay model", comm_delay_model),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        println!(
            "criterion {:>2} {} {name}: {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
