//! One 500 ps pulse watched as it travels down an asymmetric delay line.
//! The falling edge is faster, so the captured pulse shrinks until it
//! vanishes after 500 / (5.0 - 4.5) = 1000 elements.

use wcd::chain::{capture, capture_oracle, sample_chain, ChainSpec, RegisterBank};
use wcd::time::Time;
use wcd::waveform::DigitalWaveform;

fn main() -> wcd::error::Result<()> {
    let chain = sample_chain(&ChainSpec { tau_fall_ps: 4.5, ..ChainSpec::ideal(1300, 5.0) })?;
    let regs = RegisterBank::ideal(1300);
    let pulse = DigitalWaveform::from_toggles(false, [Time::ZERO, Time::from_ps_int(500)])?;
    for t in (1_000..=6_000).step_by(1_000) {
        let t = Time::from_ps_int(t);
        let frame = capture(&pulse, &chain, &regs, t)?;
        assert_eq!(frame, capture_oracle(&pulse, &chain, &regs, t)?);
        let ones: Vec<usize> = (1..=frame.k()).filter(|&k| frame.bit(k)).collect();
        match (ones.first(), ones.last()) {
            (Some(a), Some(b)) => println!("t = {t}: taps {a}..={b}, {} wide", b - a + 1),
            _ => println!("t = {t}: pulse gone"),
        }
    }
    Ok(())
}
