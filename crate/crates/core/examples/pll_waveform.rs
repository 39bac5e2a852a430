//! A jittered 600 MHz clock and a few of its statistics.

use wcd::time::Time;
use wcd::waveform::PllOutputSpec;

fn main() -> wcd::error::Result<()> {
    let spec = PllOutputSpec { period_jitter_sigma_ps: 2.0, seed: 7, ..PllOutputSpec::new(600e6, 0.5) };
    let w = spec.generate(Time::from_ps_int(20_000))?;
    println!("{} edges in 20 ns, nominal period {} ", w.edges().len(), spec.period());
    let high = w.high_time(Time::ZERO, Time::from_ps_int(20_000));
    println!("high for {high} ({:.1}%)", 100.0 * high.ps() / 20_000.0);
    print!("{}", w.to_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
