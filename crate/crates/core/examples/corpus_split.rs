//! Take the first K categories, sample a balanced pool and split it 90/10.

use classcurve::corpus::CategoryTable;
use classcurve::corpus::{
    filter_min_length, sample_balanced, select_classes, split, SamplingConfig,
};
use classcurve::synth::{generate, SynthConfig};

fn main() -> classcurve::Result<()> {
    let records = generate(&SynthConfig {
        n_classes: 5,
        samples_per_class: 60,
        ..SynthConfig::default()
    })?;
    let table = CategoryTable::default_table();
    let cfg = SamplingConfig {
        n_samples_per_class: 50,
        seed: 7,
        ..SamplingConfig::reference()
    };
    let kept = filter_min_length(&records, cfg.min_description_chars);
    for k in [1, 3, 5] {
        let classes = select_classes(&table, k)?;
        let pool = sample_balanced(&kept, &classes, &cfg)?;
        let data = split(&pool, &cfg)?;
        println!(
            "K={k}: {:?} -> {} train, {} test {:?}",
            classes.names(),
            data.train.len(),
            data.test.len(),
            data.per_class_test_counts
        );
    }
    Ok(())
}
