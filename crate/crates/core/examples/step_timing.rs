//! Times one forward/loss/backward cycle per stage at the default desk
//! scale, to budget the end-to-end training wall time.
use dpgs_core::deform::{DeformationField, FieldConfig};
use dpgs_core::grad::dilate;
use dpgs_core::pipeline::{backward_frame, compute_losses, forward_frame, FrameContext, FrameTargets, Stage};
use dpgs_core::render::RenderSettings;
use dpgs_core::synth::SceneScript;
use dpgs_core::types::init_from_pointcloud;
use dpgs_core::loss::LossWeights;
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let script = SceneScript::default();
    let dir = std::env::temp_dir().join("dpgs_gen_timing");
    if !dir.join("cameras.json").exists() {
        dpgs_core::synth::generate(&script, &dir).unwrap();
    }
    let data = dpgs_core::load_dataset(&dir).unwrap();
    let scene = init_from_pointcloud(&data.init_points, &data.init_colors, &[0.8, 0.1, 0.1], 1).unwrap();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
    let field = DeformationField::new(&FieldConfig::default(), &mut rng);
    let settings = RenderSettings::default();
    let weights = LossWeights::default();
    let (w, h) = (data.width, data.height);

    let fi = 17usize;
    let frame = &data.frames[fi];
    let next = &data.frames[fi + 1];
    let union: Vec<f64> = frame.mask_obj.iter().zip(&frame.mask_hand).map(|(&a, &b)| if a > 0.5 || b > 0.5 { 1.0 } else { 0.0 }).collect();
    let m_bg: Vec<f64> = dilate(&union, w, h, 5).iter().map(|&v| 1.0 - v).collect();
    let occ_bg = dilate(&union, w, h, 5);
    let occ_obj = dilate(&frame.mask_hand, w, h, 5);
    let occ_hand = dilate(&frame.mask_obj, w, h, 5);
    let ctx = FrameContext { cam: &frame.camera, cam_next: Some(&next.camera), t: frame.t, t_next: Some(next.t) };
    let targets = FrameTargets {
        rgb: &frame.rgb,
        masks: [&m_bg, &frame.mask_obj, &frame.mask_hand],
        occ: [&occ_bg, &occ_obj, &occ_hand],
        flow: Some(&frame.flow_gt),
    };

    for stage in [Stage::Warmup, Stage::Soft, Stage::Hard] {
        let t0 = Instant::now();
        let reps = 3;
        for _ in 0..reps {
            let fwd = forward_frame(&scene, &field, &ctx, stage, &settings).unwrap();
            let (report, adj, d_logits) = compute_losses(&fwd, &ctx, &targets, &weights, &settings).unwrap();
            let _ = backward_frame(&scene, &field, &ctx, &settings, &fwd, &adj, &d_logits).unwrap();
            std::hint::black_box(report.weighted_sum);
        }
        println!("{:?}: {:.0?}/step", stage, t0.elapsed() / reps);
    }
}
