use bridgesim_core::config::*;
use bridgesim_core::*;
use rayon::prelude::*;

fn tail_mean(series: &[StageMetrics], n: usize, f: impl Fn(&StageMetrics) -> f64) -> f64 {
    let tail = &series[series.len().saturating_sub(n)..];
    tail.iter().map(&f).sum::<f64>() / tail.len() as f64
}

const SEEDS: [u64; 5] = [101, 202, 303, 404, 505];

fn main() {
    let mut jobs: Vec<(String, SimConfig)> = vec![];
    for seed in SEEDS {
        let mut cfg = ecosystem(Ecosystem::Static, None).unwrap();
        cfg.seed = seed;
        cfg.censor.strategy = CensorStrategyKind::Aggressive;
        jobs.push((format!("L1|{seed}"), cfg));

        for strat in [CensorStrategyKind::Optimal, CensorStrategyKind::Aggressive, CensorStrategyKind::Conservative] {
            let mut cfg = ecosystem(Ecosystem::Slow, None).unwrap();
            cfg.seed = seed;
            cfg.censor.strategy = strat;
            jobs.push((format!("L3|{strat:?}|{seed}"), cfg));
        }
        for ls in [0.5, 2.5, 5.0, 7.5] {
            let mut cfg = ecosystem(Ecosystem::Alive, Some(ls)).unwrap();
            cfg.seed = seed;
            cfg.censor.strategy = CensorStrategyKind::Optimal;
            cfg.rates.rho_birth = 0.05;
            cfg.rates.rho_stable = 0.05;
            jobs.push((format!("L4|{ls}|{seed}"), cfg));
        }
    }

    let results: Vec<(String, Vec<StageMetrics>)> = jobs
        .par_iter()
        .map(|(name, cfg)| (name.clone(), run(cfg).unwrap()))
        .collect();

    for (name, series) in &results {
        let s = summarize(series, 1635).unwrap();
        println!(
            "{name}: slope_r {:+.3e} cu500 {:.0} cu_mid(500at1000) {:.0} alive_end {}",
            s.connected_ratio.window_slope,
            tail_mean(series, 500, |m| m.connected_users as f64),
            series[750..1250].iter().map(|m| m.connected_users as f64).sum::<f64>() / 500.0,
            series.last().unwrap().alive_proxies,
        );
    }
}
