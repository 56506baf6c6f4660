use deconflict::scenario::{generate_cp, generate_rcp, SolverConfig};
use deconflict::{exact_naive, greedy_naive, run};
use deconflict::oracle;
use std::time::Instant;

fn main() {
    let config = SolverConfig::default();
    for n in [4, 6, 8, 10] {
        let s = generate_cp(n, 100.0, 500.0).unwrap();
        let t0 = Instant::now();
        let sol = run(&s, &config).unwrap();
        println!(
            "CP-{n}: tc0={:.4} tcn={:.4} improved={} iters={} sumf={} t={:.2}s",
            sol.ledger.tc_totals[0], sol.total_cost,
            sol.total_cost < sol.ledger.tc_totals[0],
            sol.ledger.iterations, sol.avoidance.controlled_count(),
            t0.elapsed().as_secs_f64()
        );
    }
    let t0 = Instant::now();
    let (mut infeasible, mut dirty, mut order_fail, mut worst) = (0, 0, 0, 0.0f64);
    for seed in 0..100u64 {
        let s = generate_rcp(10, 100.0, seed, (450.0, 550.0), 60.0).unwrap();
        let t1 = Instant::now();
        match (run(&s, &config), exact_naive(&s, &config), greedy_naive(&s, &config)) {
            (Ok(p), Ok(e), Ok(g)) => {
                for sol in [&p, &e, &g] {
                    let times = sol.recovery.times();
                    let h = oracle::default_horizon(&s, &sol.avoidance.maneuvers, &times);
                    let rep = oracle::simulate(&s, &sol.avoidance.maneuvers, &times, 1.0/3600.0, h);
                    if !rep.is_clean() { dirty += 1; println!("  seed {seed} DIRTY min={:.5}", rep.min_distance); }
                }
                if !(p.total_cost <= e.total_cost + 1e-9 && e.total_cost <= g.total_cost + 1e-9) {
                    order_fail += 1;
                    println!("  seed {seed} ORDER p={:.4} e={:.4} g={:.4}", p.total_cost, e.total_cost, g.total_cost);
                }
            }
            _ => { infeasible += 1; println!("  seed {seed} INFEASIBLE"); }
        }
        worst = worst.max(t1.elapsed().as_secs_f64());
    }
    println!("sweep@j60: infeasible={infeasible} dirty={dirty} order={order_fail} worst={worst:.1}s total={:.1}s",
        t0.elapsed().as_secs_f64());
}
