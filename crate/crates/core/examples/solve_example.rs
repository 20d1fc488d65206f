//! Solves the invariant-ellipsoid problem of the bundled example plant for
//! basis lengths 0 through 3 and prints trace(Y) with solver statistics.

use iqc_core::analysis::{robust_ellipsoid_analysis, AnalysisOptions};
use iqc_core::{Interval, UncertainPlant};

fn main() -> iqc_core::Result<()> {
    let plant = UncertainPlant::example();
    let interval = Interval::new(-0.6, 5.0)?;
    for nu in 0..=3 {
        let start = std::time::Instant::now();
        let (bundle, report) = robust_ellipsoid_analysis(&plant, &interval, nu, &AnalysisOptions::default())?;
        let d = &bundle.diagnostics;
        println!(
            "nu={nu} trace(Y)={:.6} status={} iterations={} gap={:.1e} time={:?}",
            report.trace,
            d.status.as_str(),
            d.iterations,
            d.rel_gap,
            start.elapsed()
        );
    }
    Ok(())
}
