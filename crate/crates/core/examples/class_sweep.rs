//! Sweep K = 1..=8 on the synthetic corpus with two seeds and fit the trend.
//!
//! Writes into the directory given as the first argument (a temp dir
//! otherwise).

use classcurve::analysis::{degradation_report, per_k_means, Metric};
use classcurve::classifier::TrainConfig;
use classcurve::corpus::{CategoryTable, SamplingConfig};
use classcurve::features::VectorizerConfig;
use classcurve::sweep::{run_sweep, PoolMode, SweepConfig};
use classcurve::synth::{generate, SynthConfig};

fn main() -> classcurve::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("classcurve-sweep"));
    let records = generate(&SynthConfig::default())?;
    let cfg = SweepConfig {
        k_min: 1,
        k_max: 8,
        category_table: CategoryTable::default_table(),
        sampling: SamplingConfig {
            n_samples_per_class: 500,
            ..SamplingConfig::reference()
        },
        vectorizer: VectorizerConfig::default(),
        training: TrainConfig::default(),
        seeds: vec![1, 2],
        output_dir: out.clone(),
        pool_mode: PoolMode::Frozen,
        record_timing: false,
        parallel: 0,
    };
    let outcome = run_sweep(&cfg, &records)?;
    for (k, m) in per_k_means(&outcome.rows) {
        println!("K={k:2} accuracy {:.4}", m[3]);
    }
    let rep = degradation_report(&outcome.rows, true)?;
    let acc = rep.fit(Metric::Accuracy);
    println!(
        "{:.3} %/class, R² {:.3}; {} reused, results in {}",
        acc.rate_percent_per_class,
        acc.r_squared,
        outcome.reused,
        out.display()
    );
    Ok(())
}
