//! Trains a depth-4 student on data from a random depth-3 teacher.
//!
//! `cargo run --release -p dmn-core --example teacher_student -- [epochs] [seed] [lr_z] [lr_angle] [doubling epochs, comma separated]`

use dmn_core::doe::{generate_dataset, Oracle};
use dmn_core::network::MaterialNetwork;
use dmn_core::train::{TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dmn_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let epochs = arg(1, 2000.0) as usize;
    let seed = arg(2, 1.0) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = MaterialNetwork::random(3, &mut rng);
    let (train, test) = generate_dataset(&Oracle::Teacher(teacher.clone()), 500, 400, seed)?;
    let student = MaterialNetwork::random(4, &mut rng);
    let cfg = TrainConfig {
        epochs,
        seed,
        lr_z: arg(3, 0.01),
        lr_angle: arg(4, 0.02),
        log_every: 50,
        restart_double_at: args
            .get(5)
            .map(|s| s.split(',').filter_map(|e| e.parse().ok()).collect())
            .unwrap_or_default(),
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let mut t = Trainer::new(student, cfg)?;
    t.run(&train, &test, |t| {
        if let Some(r) = t.report.last().filter(|r| r.epoch == t.epoch) {
            println!(
                "{:5} train {:.4}% test {:.4}% max {:.3}% Na {} vf1 {:.4} ({:.1}s)",
                r.epoch,
                100.0 * r.train_error,
                100.0 * r.test_error,
                100.0 * r.test_max_error,
                r.active_leaves,
                r.vf1,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    println!("teacher vf1 {:.4}", teacher.weights()?.vf1);
    Ok(())
}
