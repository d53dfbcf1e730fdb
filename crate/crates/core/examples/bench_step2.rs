// Probe: does the e2e FD mismatch shrink with epsilon (kink signature)?
use mrcp_core::graph::{CommGraph, RobotPose};
use mrcp_core::model::{ModelConfig, PerceptionModel, TaskKind, Variant};
use mrcp_core::rng::RngState;
use mrcp_core::tasks::{depth_loss, total_loss, LossConfig};
use mrcp_core::tensor::NodeId;
use mrcp_core::{Tape, Tensor};

fn main() {
    let mut rng = RngState::new(555);
    let images: Vec<Tensor> = (0..3)
        .map(|_| {
            let data: Vec<f64> = (0..3 * 16 * 16).map(|_| rng.next_f64()).collect();
            Tensor::from_vec(vec![3, 16, 16], data).unwrap()
        })
        .collect();
    let targets: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..256).map(|_| rng.next_range(0.5, 3.0)).collect())
        .collect();
    let graph = CommGraph::complete(3);
    let cfg = ModelConfig {
        variant: Variant::Baseline, levels: 1, channels: 8, heads: 2,
        height: 16, width: 16, class_count: 3, task: TaskKind::Depth,
        agents: 3, share_level_params: true,
    };
    let mut model = PerceptionModel::<f64>::new(cfg, 99).unwrap();
    let scale: f64 = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(2.0);
    let names: Vec<String> = model.params().names().map(String::from).collect();
    for n in &names {
        for v in model.params_mut().get_mut(n).unwrap().data_mut() { *v *= scale; }
    }

    let loss_of = |model: &mut PerceptionModel<f64>| -> f64 {
        let mut tape = Tape::new();
        let outs = model.forward(&mut tape, &graph, &images, None).unwrap();
        let lc = LossConfig::default();
        let losses: Vec<NodeId> = outs.iter().enumerate()
            .map(|(i, &o)| depth_loss(&mut tape, images[i].data(), o, &targets[i], &lc).unwrap())
            .collect();
        let l = total_loss(&mut tape, &losses).unwrap();
        tape.value(l)[0]
    };
    // analytic
    let mut tape = Tape::new();
    let outs = model.forward(&mut tape, &graph, &images, None).unwrap();
    let lc = LossConfig::default();
    let losses: Vec<NodeId> = outs.iter().enumerate()
        .map(|(i, &o)| depth_loss(&mut tape, images[i].data(), o, &targets[i], &lc).unwrap())
        .collect();
    let l = total_loss(&mut tape, &losses).unwrap();
    tape.backward(l).unwrap();
    model.params_mut().harvest_grads(&tape).unwrap();
    let name = "encoder.conv2.weight";
    let analytic = model.params().get(name).unwrap().grad().unwrap().to_vec();
    model.params_mut().clear_grads();

    let mut comp_rng = RngState::new(7);
    let numel = model.params().get(name).unwrap().numel();
    for _ in 0..8 {
        let i = comp_rng.next_below(numel as u64) as usize;
        print!("comp {i}: a={:+.6e}", analytic[i]);
        for eps in [1e-4, 1e-5, 1e-6, 1e-7] {
            let orig = model.params().get(name).unwrap().data()[i];
            model.params_mut().get_mut(name).unwrap().data_mut()[i] = orig + eps;
            let plus = loss_of(&mut model);
            model.params_mut().get_mut(name).unwrap().data_mut()[i] = orig - eps;
            let minus = loss_of(&mut model);
            model.params_mut().get_mut(name).unwrap().data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-8);
            print!("  e{:.0}:{:.2e}", eps.log10(), rel);
        }
        println!();
    }
}
