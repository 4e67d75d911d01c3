//! Fit a line to accuracy against K and read off the loss per added class.

use classcurve::analysis::fit_line;

fn main() -> classcurve::Result<()> {
    let points: Vec<(f64, f64)> = (1..=20)
        .map(|k| {
            let wobble = if k % 3 == 0 { 0.004 } else { -0.002 };
            (k as f64, 1.0 - 0.01 * (k - 1) as f64 + wobble)
        })
        .collect();
    let fit = fit_line(&points)?;
    println!(
        "accuracy = {:.4} {:+.5} K   (R² {:.4})",
        fit.intercept, fit.slope, fit.r_squared
    );
    println!(
        "{:.3} percentage points lost per added class",
        fit.rate_percent_per_class()
    );
    Ok(())
}
