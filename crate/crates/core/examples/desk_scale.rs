//! Trains the default model on the synthetic benchmark series and prints
//! per-epoch metrics next to the persistence baseline.

use std::env;

use triformer_core::data::{split, synth, SplitSpec, StandardizeStats, WindowDataset};
use triformer_core::training::{persistence_baseline, train_with_observer, TrainConfig};
use triformer_core::{TriformerConfig, TriformerModel, VsmMode};

fn main() -> triformer_core::Result<()> {
    let args: Vec<String> = env::args().collect();
    let vsm: VsmMode = args.get(1).map_or(Ok(VsmMode::Light), |s| s.parse())?;
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().unwrap());
    let lr: f64 = args.get(3).map_or(1e-4, |s| s.parse().unwrap());

    let (h, f) = (96, 24);
    let table = synth(8, 4000, 7, 1.0);
    let parts = split(&table, &SplitSpec::default(), h + f)?;
    let stats = StandardizeStats::fit(&parts.train)?;
    let train_set = WindowDataset::new(stats.apply(&parts.train)?, h, f)?;
    let val_set = WindowDataset::new(stats.apply(&parts.val)?, h, f)?;

    let mut cfg = TriformerConfig::new(h, f, 8, vec![6, 4, 4]);
    cfg.vsm = vsm;
    cfg.seed = seed;
    let mut model = TriformerModel::new(cfg)?;
    println!("parameters: {}", model.num_parameters());
    let baseline = persistence_baseline(&val_set)?;
    println!("persistence val mse {:.4}", baseline.mse);

    let train_cfg = TrainConfig { lr, seed, ..TrainConfig::default() };
    let history = train_with_observer(&mut model, &train_set, &val_set, &train_cfg, |r| {
        println!(
            "epoch {:2} train {:.4} val mse {:.4} mae {:.4} ({:.1}s)",
            r.epoch, r.train_loss, r.val_mse, r.val_mae, r.wall_seconds
        );
    })?;
    println!(
        "best epoch {} val mse {:.4} (initial {:.4})",
        history.best_epoch, history.metrics.mse, history.initial_metrics.mse
    );
    Ok(())
}
