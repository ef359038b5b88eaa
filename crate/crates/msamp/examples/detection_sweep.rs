//! Sweep the activity level and print the detection table the `run`
//! subcommand would emit: empirical rates from single AMP instances next to
//! their asymptotic limits.

use msamp::cli::{cmd_run, ExperimentSpec, MetricSet, SweepAxis};
use msamp::error::Result;
use msamp::model::SystemConfig;

fn main() -> Result<()> {
    let mut base = SystemConfig::two_location(1024, [0.1, 0.1], 0.1, 6, 11);
    base.mc_samples = 30_000;

    let mut spec = ExperimentSpec::single(base);
    spec.sweep = SweepAxis::Lambda(vec![0.05, 0.1, 0.2]);
    spec.metrics = MetricSet { detection: true, estimation: false, genie: false };

    print!("{}", cmd_run(&spec, 0)?);
    Ok(())
}
