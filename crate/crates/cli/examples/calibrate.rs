//! Scratch harness for tuning toy-scale training speed. Not part of the
//! pipeline; run with `cargo run --release --example calibrate [lr] [kind]`.

use std::time::Instant;

use trabs_core::metrics::dice_arrays;
use trabs_core::phantom::{generate_phantom, PhantomSpec};
use trabs_model::augment::AugmentConfig;
use trabs_model::infer::{binarize, sliding_window_probs, Blend, InferenceConfig};
use trabs_model::splits::FoldSplit;
use trabs_model::train::{prepare_sides, train_fold, TrainConfig};
use trabs_model::{BaselineConfig, NetConfig, Network, TraBSConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let kind = args.get(2).map(|s| s.as_str()).unwrap_or("trabs").to_string();
    let max_epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(60);

    let spec = PhantomSpec {
        seed: 42,
        shape: [16, 64, 96],
        target_density: 0.3,
        ..PhantomSpec::default()
    };
    let mut case = generate_phantom(&spec).unwrap();
    case.case_id = "c0".into();
    let cases = vec![case];

    let fold = FoldSplit {
        fold_index: 0,
        train_ids: vec!["c0".into()],
        val_ids: vec!["c0".into()],
        test_ids: vec![],
    };
    let cfg = TrainConfig {
        learning_rate: lr,
        window: [8, 64, 64],
        batch_size: 2,
        max_epochs,
        patience_epochs: max_epochs,
        seed: 1,
        augment: AugmentConfig::disabled(),
        ..TrainConfig::toy()
    };
    let net_cfg = if kind == "trabs" {
        NetConfig::Trabs(TraBSConfig::toy())
    } else {
        NetConfig::Baseline(BaselineConfig::toy())
    };
    let mut net = Network::build(&net_cfg, 7).unwrap();
    println!("{kind} params: {}", net.store().num_elements());

    let t0 = Instant::now();
    let rec = train_fold(&mut net, &fold, &cases, &cfg).unwrap();
    let train_time = t0.elapsed().as_secs_f64();

    // train DSC: predict the training crops
    let icfg = InferenceConfig {
        window: [8, 64, 64],
        overlap: 0.5,
        tta_flips: false,
        blend: Blend::Uniform,
    };
    let sides = prepare_sides(&fold.train_ids, &cases, cfg.crop_margin).unwrap();
    let mut dices = Vec::new();
    for s in &sides {
        let probs = sliding_window_probs(&net, &s.image, &icfg);
        let pred = binarize(&probs);
        dices.push(dice_arrays(&pred, &s.fgt));
    }
    let mean_dice: f64 = dices.iter().sum::<f64>() / dices.len() as f64;
    println!(
        "lr={lr} epochs={} best={} time={train_time:.1}s sec/epoch={:.2} train DSC={mean_dice:.4}",
        rec.epochs_run,
        rec.best_epoch,
        train_time / rec.epochs_run as f64
    );
    for h in rec.history.iter().take(12) {
        println!("  epoch {:3}  train {:.4}  val {:.4}", h.epoch, h.train_loss, h.val_loss);
    }
    if let Some(last) = rec.history.last() {
        println!("  last epoch {:3}  train {:.4}  val {:.4}", last.epoch, last.train_loss, last.val_loss);
    }
}
