//! Design-constraint gate: coverage of the capture period, bounded
//! shrinkage of the narrowest feature, and the device length limit.

use wcd::chain::{validate_config, ChainSpec};
use wcd::time::Time;

fn main() {
    let t = Time::from_ps_int(5_000);
    for (k, t_min) in [(1300, 500), (1000, 500), (1741, 5_000), (1300, 400)] {
        let spec = ChainSpec { tau_fall_ps: 4.54, ..ChainSpec::ideal(k, 4.91) };
        let report = validate_config(&spec, t, Time::from_ps_int(t_min));
        println!("K = {k:>4}, T_min = {t_min:>4} ps: {report}");
    }
}
