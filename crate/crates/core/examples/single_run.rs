//! Run one replication of a config file and print a summary.
//!
//! `cargo run --release --example single_run -- configs/highway.cfg 3`

use vanet_sec::config::parse_config;
use vanet_sec::metrics::{crash_fraction, pdr_curve, processing_stats};
use vanet_sec::security::PacketKind;
use vanet_sec::sim::run_replication;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: single_run CONFIG [SEED]")?;
    let cfg = parse_config(&std::fs::read_to_string(path)?)?;
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(cfg.seed);

    let started = std::time::Instant::now();
    let out = run_replication(&cfg, seed)?;
    println!("simulated {:.1} s in {:.2?}: {:?}", out.end_time.as_secs_f64(), started.elapsed(), out.stats);

    if let Some(c) = &out.crash {
        let row: String = c.crashed.iter().map(|&x| if x { 'X' } else { '.' }).collect();
        println!("crashed {}/{} ({:?} %)\n{row}", c.crashed_count(), c.platoon_size, crash_fraction(c).ok());
    }
    let m = processing_stats(&out.ledgers, out.window);
    for k in [PacketKind::Long, PacketKind::Short, PacketKind::Plain] {
        let s = m.kind(k);
        println!("{k:5}: mu_R {:.3} sigma_R {:.3} mu_P {:.3} sigma_P {:.3}", s.mu_r, s.sigma_r, s.mu_p, s.sigma_p);
    }
    for p in pdr_curve(&out.pdr).iter().step_by(5) {
        println!("{:5.0} m  {:.3}  ({} attempts)", p.bin_m, p.pdr, p.attempts);
    }
    Ok(())
}
