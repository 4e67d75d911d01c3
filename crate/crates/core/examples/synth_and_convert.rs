//! Generate the synthetic corpus and convert a raw per-category file.

use classcurve::cli::convert_raw;
use classcurve::corpus::{parse_jsonl, to_jsonl};
use classcurve::synth::{generate, vocabularies, SynthConfig};

fn main() -> classcurve::Result<()> {
    let cfg = SynthConfig {
        n_classes: 3,
        samples_per_class: 2,
        ..SynthConfig::default()
    };
    let (vocabs, background) = vocabularies(&cfg);
    println!(
        "{} words per class, {} background words",
        vocabs[0].len(),
        background.len()
    );
    let records = generate(&cfg)?;
    print!("{}", to_jsonl(&records));

    let raw = r#"{"asin": "B01", "description": ["Organic cotton", "swaddle blanket"]}
{"asin": "B02", "description": ""}
{"asin": "B03", "description": "Soft silicone teether"}"#;
    let (canonical, rejects) = convert_raw(raw, "Baby");
    let text = to_jsonl(&canonical);
    print!("{text}");
    println!(
        "rejected lines: {:?}",
        rejects.iter().map(|r| r.line).collect::<Vec<_>>()
    );
    assert_eq!(parse_jsonl(&text).records.len(), 2);
    Ok(())
}
