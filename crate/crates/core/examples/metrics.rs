//! Confusion matrix, per-class scores and macro averages.

use classcurve::metrics::{confusion, macro_report, per_class_csv};

fn main() -> classcurve::Result<()> {
    let truth = [1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3];
    let pred = [1, 1, 2, 1, 2, 2, 3, 2, 3, 3, 3, 1];
    let cm = confusion(&truth, &pred, 3)?;
    for row in cm.rows() {
        println!("{row:?}");
    }
    let rep = macro_report(&cm)?;
    print!("{}", per_class_csv(&rep, &["Baby", "Books", "Beauty"])?);
    println!(
        "macro precision {:.4} recall {:.4} f1 {:.4} accuracy {:.4}",
        rep.macro_precision, rep.macro_recall, rep.macro_f1, rep.accuracy
    );
    Ok(())
}
