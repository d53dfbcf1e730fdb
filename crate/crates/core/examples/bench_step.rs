// Rehearsal for the noise-robustness trend: clean-trained baseline vs
// corruption-trained mp-pose on a severe-noise circle dataset.
use std::time::Instant;
use mrcp_core::datagen::{generate_dataset, FormationPreset, GenSpec, NoiseKind, NoiseSpec};
use mrcp_core::harness::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let channels: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let dir = std::env::temp_dir().join("mrcp_rehearsal");
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.join("bench.mrcp");
    let t0 = Instant::now();
    let spec = GenSpec {
        preset: FormationPreset::CircleInward,
        agents: 5,
        frames: 200,
        height: 64,
        width: 64,
        class_count: 4,
        seed: 123,
        noise: NoiseSpec { kind: NoiseKind::Severe, n_corrupt: 2 },
        ..GenSpec::default()
    };
    generate_dataset(&spec, &data).unwrap();
    println!("render 200 frames: {:.2}s", t0.elapsed().as_secs_f64());

    let mut results = Vec::new();
    for (variant, noisy_train) in [("baseline", 0usize), ("mp-pose", 2)] {
        let mut cfg = TrainConfig::default();
        cfg.dataset = data.clone();
        cfg.out_dir = dir.join(format!("run_{variant}"));
        cfg.variant = variant.parse().unwrap();
        cfg.channels = channels;
        cfg.epochs = epochs;
        cfg.eval_every = epochs;
        cfg.noisy_train = noisy_train;
        cfg.noisy_eval = 2;
        cfg.seed = 1;
        let t = Instant::now();
        let out = train(&cfg).unwrap();
        println!("{variant}: {:.1}s total", t.elapsed().as_secs_f64());
        for row in &out.log.rows {
            println!(
                "  {} epoch {} loss {:.4} noisy={} rmse={:?} absrel={:?}",
                variant, row.epoch, row.train_loss, row.noisy_cameras,
                row.metrics.rmse, row.metrics.abs_rel
            );
        }
        let rmse_at = |s: usize| out.log.rows.iter().find(|r| r.noisy_cameras == s).unwrap().metrics.rmse.unwrap();
        results.push((variant, rmse_at(0), rmse_at(2)));
    }
    let (_, b0, b2) = results[0];
    let (_, p0, p2) = results[1];
    println!("baseline rmse@0={b0:.4} rmse@2={b2:.4} ratio={:.3} (need >= 1.5)", b2 / b0);
    println!("mp-pose  rmse@0={p0:.4} rmse@2={p2:.4}");
    println!("(b) mp-pose@2 / baseline@2 = {:.3} (need <= 0.8)", p2 / b2);
    println!("(c) mp-pose@0 / baseline@0 = {:.3} (need <= 1.25)", p0 / b0);
}
