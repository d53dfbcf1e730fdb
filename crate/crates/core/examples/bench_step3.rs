// Rehearsal for the overlap-effect trend: (mp-pose - mp) mIoU gap on
// inward vs outward circle formations, 3 seeds each.
use mrcp_core::datagen::{generate_dataset, FormationPreset, GenSpec, NoiseKind, NoiseSpec};
use mrcp_core::harness::{train, TrainConfig};
use mrcp_core::model::{TaskKind, Variant};
use std::time::Instant;

fn main() {
    let dir = std::env::temp_dir().join("mrcp_rehearsal5");
    std::fs::create_dir_all(&dir).unwrap();
    for preset in [FormationPreset::CircleInward, FormationPreset::CircleOutward] {
        let data = dir.join(format!("{preset}.mrcp"));
        let spec = GenSpec {
            preset,
            agents: 5,
            frames: 80,
            height: 32,
            width: 32,
            class_count: 4,
            seed: 2468,
            noise: NoiseSpec { kind: NoiseKind::Mixed, n_corrupt: 2 },
            ..GenSpec::default()
        };
        generate_dataset(&spec, &data).unwrap();
        let mut gap_sum = 0.0;
        for seed in [1u64, 2, 3] {
            let mut pair = Vec::new();
            for variant in [Variant::MpPose, Variant::Mp] {
                let mut cfg = TrainConfig::default();
                cfg.dataset = data.clone();
                cfg.out_dir = dir.join(format!("run_{preset}_{variant}_{seed}"));
                cfg.variant = variant;
                cfg.task = TaskKind::Segmentation;
                cfg.channels = 8;
                cfg.epochs = 10;
                cfg.eval_every = 10;
                cfg.noisy_train = 2;
                cfg.noisy_eval = 2;
                cfg.seed = seed;
                let t = Instant::now();
                let out = train(&cfg).unwrap();
                let mean: f64 = out.log.rows.iter().map(|r| r.metrics.miou.unwrap()).sum::<f64>()
                    / out.log.rows.len() as f64;
                println!("{preset} {variant} seed {seed}: mean miou {mean:.4} ({:.0}s)", t.elapsed().as_secs_f64());
                pair.push(mean);
            }
            let gap = pair[0] - pair[1];
            println!("  seed {seed} gap (mp-pose - mp) = {gap:+.4}");
            gap_sum += gap;
        }
        println!("{preset}: mean gap {:+.4}", gap_sum / 3.0);
    }
}
