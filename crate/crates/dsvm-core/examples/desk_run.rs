use dsvm_core::data::{synth_sample, SynthConfig};
use dsvm_core::engine::{evaluate, train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let beta: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let out_scale: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mut cfg = TrainConfig::desk();
    cfg.distill.alpha = alpha;
    cfg.distill.beta = beta;
    let synth = SynthConfig { n_samples: 80, size: 64, ..Default::default() };
    let train_set: Vec<_> = (0..64).map(|i| synth_sample(&synth, "train", i)).collect();
    let val_set: Vec<_> = (0..16).map(|i| synth_sample(&synth, "val", i)).collect();
    let t0 = std::time::Instant::now();
    // epoch-by-epoch: run in 4-epoch chunks via resume to print val curve
    let mut ckpt = None;
    for stage in 1..=5 {
        let mut c = cfg.clone();
        c.epochs = stage * 4;
        let _ = out_scale;
        let out = train(&c, &train_set, &val_set, None, ckpt.take()).unwrap();
        let rep = evaluate(&out.last, &val_set).unwrap();
        println!(
            "epoch {:2}: val mIoU(last) {:.4} best-so-far {:.4} seg {:.3} proj {:.3} prog {:.3} [{:.0}s]",
            stage * 4,
            rep.mean.miou,
            out.best.best_metric,
            out.log.steps.last().unwrap().l_seg,
            out.log.steps.last().unwrap().l_proj,
            out.log.steps.last().unwrap().l_prog,
            t0.elapsed().as_secs_f64()
        );
        ckpt = Some(out.last);
    }
}
