use evosearch_core::harness::checks::{check_consensus, reorg_stats, summarize};
use evosearch_core::harness::config::SimConfig;
use evosearch_core::harness::run;
use evosearch_core::Record;

fn main() {
    // 8 correct (t_eval=2) + 1 selfish with power 8/3 -> 25% of total rate.
    let mut merged = evosearch_core::ReorgStats::empty(8);
    let mut cons_ok = 0;
    let mut live_ok = 0;
    let mut cond_hold = 0;
    let mut total_reorgs = 0usize;
    let n_runs = 20;
    for seed in 0..n_runs {
        let json = format!(
            r#"{{
              "scenario": "probe_selfish",
              "master_seed": {seed},
              "mode": "permissionless",
              "workers": {{"count": 9, "t_eval": 2, "byzantine": [
                 {{"worker": 8, "kind": "selfish_minter", "power_multiplier": 2.6666666666666665}}
              ]}},
              "landscape": {{"name": "sphere", "dim": 10, "theta0": {{"fill": 5.0}}}},
              "search": {{"sigma": 0.05, "nu": 0.0, "z_steps": 10, "b_target": "2^-8"}},
              "gossip": {{"delay": [1,2]}},
              "chain": {{"d_final": 6}}
            }}"#
        );
        let t = run(&SimConfig::from_json(&json).unwrap()).unwrap();
        let c = check_consensus(&t).unwrap();
        if c.liveness { live_ok += 1; }
        if c.consistency { cons_ok += 1; }
        let s = summarize(&t).unwrap();
        if s.mining.as_ref().unwrap().holds { cond_hold += 1; }
        total_reorgs += t.records().iter().filter(|r| matches!(r, Record::Reorg { .. })).count();
        merged.merge(&reorg_stats(&t, 8).unwrap());
        if seed == 0 {
            println!("run0: mints={} alpha={:.5} gamma={:.5} g={:.4} ticks={}",
                s.counts.mints, s.rates.alpha, s.rates.gamma,
                s.mining.as_ref().unwrap().g, s.ticks);
        }
    }
    println!("liveness {live_ok}/{n_runs} consistency {cons_ok}/{n_runs} condition {cond_hold}/{n_runs}");
    println!("total REORG records: {total_reorgs}");
    println!("reorg trials:    {:?}", merged.trials);
    println!("reorg abandoned: {:?}", merged.abandoned);
    for d in 1..=8 {
        if let Some(f) = merged.frequency(d) {
            println!("freq(d={d}) = {:.5}", f);
        }
    }
}
