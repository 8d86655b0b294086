use sgg_core::dataio::{generate_synthetic, GrammarConfig};
use sgg_core::model::{ModelConfig, SceneGraphModel};
use sgg_core::train::{TrainConfig, Trainer};

#[test]
fn desk_model_halves_its_loss_on_a_small_set() {
    let grammar = GrammarConfig::default_grammar();
    let vocab = grammar.vocabulary().unwrap();
    let data = generate_synthetic(&grammar, 10, 3).unwrap();
    let model = SceneGraphModel::new(ModelConfig::desk(), &vocab, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        batches_per_epoch: 100,
        batch_size: 10,
        checkpoint_every: None,
        ..TrainConfig::desk(1)
    };
    let mut trainer = Trainer::new(model, vocab, data, cfg).unwrap();
    trainer.run().unwrap();
    let losses = trainer.log.step_losses();
    assert_eq!(losses.len(), 500);
    let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = losses[480..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.5 * head, "loss went from {head:.3} to {tail:.3}");
    assert!(losses.iter().all(|l| l.is_finite()));
}
