//! Hash a product description into a sparse, unit-length feature vector.

use classcurve::features::{featurize, hash_feature, tokenize, VectorizerConfig};

fn main() {
    let cfg = VectorizerConfig {
        dimension: 1 << 12,
        ..VectorizerConfig::default()
    };
    let text = "Solid spruce top acoustic guitar, natural finish";
    let tokens = tokenize(text, &cfg);
    println!("tokens: {tokens:?}");
    for t in &tokens[..3] {
        let (idx, sign) = hash_feature(t, &cfg);
        println!("{t:>10} -> index {idx:4} sign {sign:+}");
    }
    let v = featurize(text, &cfg);
    println!("nnz {} of {}, norm {:.6}", v.nnz(), v.dimension, v.norm());
}
