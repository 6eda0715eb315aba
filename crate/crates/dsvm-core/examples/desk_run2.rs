use dsvm_core::data::{synth_sample, SynthConfig};
use dsvm_core::engine::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args[1].parse().unwrap();
    let beta: f64 = args[2].parse().unwrap();
    let detach: bool = args[3].parse().unwrap();
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let mut cfg = TrainConfig::desk();
    cfg.distill.alpha = alpha;
    cfg.distill.beta = beta;
    cfg.distill.teacher_detach = detach;
    cfg.seed = seed;
    let synth = SynthConfig { n_samples: 80, size: 64, ..Default::default() };
    let train_set: Vec<_> = (0..64).map(|i| synth_sample(&synth, "train", i)).collect();
    let val_set: Vec<_> = (0..16).map(|i| synth_sample(&synth, "val", i)).collect();
    let out = train(&cfg, &train_set, &val_set, None, None).unwrap();
    println!(
        "a={alpha} b={beta} detach={detach} seed={seed}: best mIoU {:.4} (epoch {})",
        out.best.best_metric, out.best.best_epoch
    );
}
