use dsvm_core::data::{synth_sample, SynthConfig};
use dsvm_core::distill::DistillConfig;
use dsvm_core::engine::{complexity_report, train, TrainConfig};
use dsvm_core::network::ModelConfig;

fn main() {
    let report = complexity_report(&ModelConfig::paper_scale(), &DistillConfig::default()).unwrap();
    println!("{}", report.render());

    // time: 2 epochs desk scale, 64 train / 16 val
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::desk() };
    let synth = SynthConfig { n_samples: 80, size: 64, ..Default::default() };
    let train_set: Vec<_> = (0..64).map(|i| synth_sample(&synth, "train", i)).collect();
    let val_set: Vec<_> = (0..16).map(|i| synth_sample(&synth, "val", i)).collect();
    let t0 = std::time::Instant::now();
    let out = train(&cfg, &train_set, &val_set, None, None).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("2 epochs (16 steps + 2 evals): {dt:.1}s -> 20 epochs ~ {:.0}s", dt * 10.0);
    println!("last mIoU {:.3}", out.best_report.mean.miou);
}
