//! Steps the full network under a few fixed actions and reports latency,
//! denial rate and the discounted cost each one incurs.
//!
//! cargo run --release --example env_rollout

use mecchain::harness::ScenarioConfig;
use mecchain::network::{ControlEnv, MecNetwork};

fn main() -> mecchain::Result<()> {
    let cfg = ScenarioConfig::default();
    let net_cfg = cfg.network_config();
    let gamma_c = net_cfg.env.gamma_c;
    println!("E_max {:.3}", net_cfg.env.e_max());
    println!("{:>5} {:>12} {:>10} {:>12}", "u", "mean tau", "denials", "disc. cost");
    for u in [0.1, 0.3, 0.5, 0.8, 1.0] {
        let mut net = MecNetwork::new(net_cfg.clone(), cfg.seed)?;
        net.reset(cfg.seed);
        let (mut tau, mut served, mut denied) = (0.0, 0, 0);
        for _ in 0..5000 {
            let o = net.step(u)?;
            denied += usize::from(o.cost);
            if let Some(t) = o.tau_total {
                tau += t;
                served += 1;
            }
            assert!(net.capacity_conserved());
        }
        let cost = denied as f64 / 5000.0 / (1.0 - gamma_c);
        println!(
            "{u:>5.1} {:>12.3} {denied:>10} {cost:>12.4}",
            if served > 0 { tau / served as f64 } else { f64::NAN }
        );
    }
    Ok(())
}
