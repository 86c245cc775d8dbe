use luxmap_core::net::build_minif;
use luxmap_core::shapes::ShapeSet;
use luxmap_core::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let train_set = ShapeSet::new(1800, 96, 5);
    let val_set = train_set.continuation(200);
    let net = build_minif(64, 3, 256, 42).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.03,
        lr_decay: 0.999,
        momentum: 0.9,
        batch_size: 32,
        max_iters: 1200,
        dropout_rate: 0.15,
        mirror_augment: true,
        seed: 7,
        eval_every: 100, stop_at_val_acc: None,
    };
    let run = train(&net, &train_set, &val_set, &cfg).unwrap();
    println!("elapsed {:?}", t0.elapsed());
    println!("best val acc {:.3} at iter {}", run.best_val_acc, run.best_iter);
    for (it, acc) in &run.val_curve {
        print!("{it}:{acc:.3} ");
    }
    println!();
}
