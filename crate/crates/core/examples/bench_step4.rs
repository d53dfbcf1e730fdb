// Probe: how many epochs until segmentation escapes the all-background
// collapse at 32x32?
use mrcp_core::datagen::{generate_dataset, FormationPreset, GenSpec, NoiseKind, NoiseSpec};
use mrcp_core::harness::{train, TrainConfig};
use mrcp_core::model::{TaskKind, Variant};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.002);
    let dir = std::env::temp_dir().join("mrcp_rehearsal5");
    let data = dir.join("circle_inward.mrcp");
    if !data.exists() {
        let spec = GenSpec {
            preset: FormationPreset::CircleInward,
            agents: 5, frames: 80, height: 32, width: 32, class_count: 4,
            seed: 2468,
            noise: NoiseSpec { kind: NoiseKind::Mixed, n_corrupt: 2 },
            ..GenSpec::default()
        };
        generate_dataset(&spec, &data).unwrap();
    }
    for (variant, seed) in [(Variant::MpPose, 2u64), (Variant::Mp, 2), (Variant::MpPose, 3), (Variant::Mp, 3)] {
        let mut cfg = TrainConfig::default();
        cfg.dataset = data.clone();
        cfg.out_dir = dir.join(format!("probe_{variant}_{seed}"));
        cfg.variant = variant;
        cfg.task = TaskKind::Segmentation;
        cfg.channels = 8;
        cfg.epochs = epochs;
        cfg.eval_every = epochs.max(5) / 5;
        cfg.lr = lr;
        cfg.noisy_train = 2;
        cfg.noisy_eval = 2;
        cfg.seed = seed;
        let out = train(&cfg).unwrap();
        print!("{variant} seed {seed}: ");
        for row in out.log.rows.iter().filter(|r| r.noisy_cameras == 0) {
            print!("e{}:{:.3} ", row.epoch, row.metrics.miou.unwrap());
        }
        let mean: f64 = out.log.rows.iter().rev().take(3).map(|r| r.metrics.miou.unwrap()).sum::<f64>() / 3.0;
        println!("| final mean(0..2) {mean:.4}");
    }
}
