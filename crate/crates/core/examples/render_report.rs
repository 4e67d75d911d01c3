//! Render the metric-vs-K figure, a per-class bar chart and the summary
//! from hand-made rows.

use classcurve::analysis::degradation_report;
use classcurve::classifier::Backend;
use classcurve::metrics::{macro_report, ConfusionMatrix};
use classcurve::report::{plot_metrics_vs_k, plot_per_class, summarize};
use classcurve::sweep::SweepRow;

fn main() -> classcurve::Result<()> {
    let dir = std::env::temp_dir().join("classcurve-report");
    std::fs::create_dir_all(&dir).map_err(|e| classcurve::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let rows: Vec<SweepRow> = (1..=20)
        .map(|k| {
            let a = 1.0 - 0.01 * (k - 1) as f64;
            SweepRow::with_metrics(k, Backend::Linear, 0, [a, a, a - 0.002, a])
        })
        .collect();
    let fits = degradation_report(&rows, true)?;
    plot_metrics_vs_k(&rows, Some(&fits), &dir.join("metrics_vs_k.svg"))?;

    let cm = ConfusionMatrix::from_rows(&[vec![8, 2, 0], vec![1, 9, 0], vec![3, 3, 4]])?;
    let names = ["Musical instruments", "Baby", "Patio, Lawn and Garden"].map(String::from);
    plot_per_class(&macro_report(&cm)?, &names, &dir.join("per_class.svg"))?;

    print!("{}", summarize(&rows, Some(&fits), "manifest.json"));
    println!("\nfigures in {}", dir.display());
    Ok(())
}
