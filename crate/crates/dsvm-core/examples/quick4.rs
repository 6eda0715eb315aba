use dsvm_core::data::{synth_sample, SynthConfig};
use dsvm_core::engine::{train, TrainConfig};
use dsvm_core::network::Model;

fn main() {
    let m = Model::init(dsvm_core::network::ModelConfig::desk(), 0).unwrap();
    println!("model checksum: {:x}", m.params.checksum());
    let mut cfg = TrainConfig::desk();
    cfg.distill.alpha = 0.0;
    cfg.distill.beta = 0.0;
    cfg.epochs = 4;
    let synth = SynthConfig { n_samples: 80, size: 64, ..Default::default() };
    let train_set: Vec<_> = (0..64).map(|i| synth_sample(&synth, "train", i)).collect();
    let val_set: Vec<_> = (0..16).map(|i| synth_sample(&synth, "val", i)).collect();
    let out = train(&cfg, &train_set, &val_set, None, None).unwrap();
    println!("epoch 4 best mIoU {:.4}", out.best.best_metric);
}
