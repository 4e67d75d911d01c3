//! Train both backends on a small synthetic problem and check the gradients.

use classcurve::classifier::{
    gradient_check, n_train_steps, predict, train_vectors, Backend, DropoutDraw, SoftmaxModel,
    TrainConfig,
};
use classcurve::features::{featurize, VectorizerConfig};
use classcurve::synth::{generate, SynthConfig};

fn main() -> classcurve::Result<()> {
    let vec_cfg = VectorizerConfig {
        dimension: 1 << 14,
        ..VectorizerConfig::default()
    };
    let synth = SynthConfig {
        n_classes: 4,
        samples_per_class: 200,
        ..SynthConfig::default()
    };
    let names = classcurve::synth::class_names(synth.n_classes);
    let data: Vec<_> = generate(&synth)?
        .iter()
        .map(|r| {
            let y = names.iter().position(|n| *n == r.category).unwrap() + 1;
            (featurize(&r.description, &vec_cfg), y)
        })
        .collect();
    let steps = n_train_steps(1.0, 4, 200, 32, 3);
    for backend in [Backend::Linear, Backend::Mlp] {
        let cfg = TrainConfig {
            backend,
            seed: 1,
            ..TrainConfig::default()
        };
        let model = train_vectors(&data, 4, &vec_cfg, &cfg, steps)?;
        let meta = model.metadata.as_ref().unwrap();
        let correct = data
            .iter()
            .filter(|(q, y)| predict(&model, q).ok() == Some(*y))
            .count();
        println!(
            "{:6} {} steps, loss {:.4} -> {:.4}, train accuracy {:.3}",
            backend.as_str(),
            meta.steps,
            meta.initial_loss,
            meta.final_loss,
            correct as f64 / data.len() as f64
        );
    }

    let small = SoftmaxModel::init(Backend::Mlp, 3, 16, 4, true, 9)?;
    let q = classcurve::features::FeatureVector::from_pairs(16, [(1, 0.6), (7, -0.8)]);
    let check = gradient_check(
        &small,
        &[(&q, 2)],
        Some(DropoutDraw { rate: 0.2, seed: 3 }),
        1e-4,
        1e-6,
    );
    println!(
        "gradient check over {} parameters: max relative error {:.2e}",
        check.parameters, check.max_relative_error
    );
    Ok(())
}
