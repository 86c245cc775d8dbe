use luxmap_core::dataset::{bin_labels, rebalance, sample_dataset, split, Split};
use luxmap_core::gmm::fit_gmm1d;
use luxmap_core::net::{build_minif, convolutionalize, LayerSpec};
use luxmap_core::shapes::ShapeSet;
use luxmap_core::train::{train, TrainConfig};
use luxmap_core::world::World;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let world = Arc::new(World::generate(11, 256).unwrap());
    let ds = sample_dataset(&world, 20_000, 96, 3).unwrap();
    let ds = split(&ds, 0.1, 4).unwrap();
    let train_intens: Vec<f64> = ds
        .records
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| r.intensity as f64)
        .collect();
    let gmm = fit_gmm1d(&train_intens, 3, 5, 200, 1e-9).unwrap();
    println!("gmm means {:?} weights {:?}", gmm.means, gmm.weights);
    let ds = bin_labels(&gmm, &ds).unwrap();
    println!("bin counts before rebalance: {:?} / val {:?}", ds.bin_counts(Split::Train), ds.bin_counts(Split::Val));
    let ds = rebalance(&ds, 9).unwrap();
    println!("bin counts after rebalance: {:?} / val {:?}", ds.bin_counts(Split::Train), ds.bin_counts(Split::Val));
    println!("data prep {:?}", t0.elapsed());

    // P1 pretrain (short)
    let t1 = Instant::now();
    let p1_train = ShapeSet::new(1800, 96, 5);
    let p1_val = p1_train.continuation(200);
    let p1net = build_minif(64, 3, 256, 42).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.03, lr_decay: 0.999, momentum: 0.9, batch_size: 32,
        max_iters: 800, dropout_rate: 0.15, mirror_augment: true, seed: 7, eval_every: 100, stop_at_val_acc: None,
    };
    let p1 = train(&p1net, &p1_train, &p1_val, &cfg).unwrap();
    println!("P1 best val {:.3} in {:?}", p1.best_val_acc, t1.elapsed());

    for (name, init_from_p1) in [("transfer", true), ("scratch", false)] {
        let t2 = Instant::now();
        let base = if init_from_p1 { p1.net.clone() } else { build_minif(64, 3, 256, 99).unwrap() };
        let mut conv = convolutionalize(&base).unwrap();
        // reinit the conv_from_fc layers
        for i in 0..conv.layers.len() {
            if matches!(conv.layers[i], LayerSpec::ConvFromFc { .. }) {
                conv.reinit_layer(i, 1000 + i as u64).unwrap();
            }
        }
        let cfg = TrainConfig {
            learning_rate: 0.02, lr_decay: 0.999, momentum: 0.9, batch_size: 32,
            max_iters: 700, dropout_rate: 0.3, mirror_augment: true, seed: 21, eval_every: 50, stop_at_val_acc: None,
        };
        let tv = ds.view(Split::Train);
        let vv = ds.view(Split::Val);
        let run = train(&conv, &tv, &vv, &cfg).unwrap();
        println!("P2 {name}: best val {:.3} at iter {} ({:?})", run.best_val_acc, run.best_iter, t2.elapsed());
        print!("  curve: ");
        for (it, acc) in run.val_curve.iter().step_by(2) { print!("{it}:{acc:.3} "); }
        println!();
        println!("  to 0.55: {:?}  to 0.6: {:?}", run.iterations_to_accuracy(0.55), run.iterations_to_accuracy(0.6));
    }
}
