//! Generates the default scripted dataset and reports wall time and scale.
use std::time::Instant;

fn main() {
    let script = dpgs_core::synth::SceneScript::default();
    let dir = std::env::temp_dir().join("dpgs_gen_timing");
    let t0 = Instant::now();
    dpgs_core::synth::generate(&script, &dir).unwrap();
    let model = dpgs_core::synth::GtModel::build(&script).unwrap();
    let data = dpgs_core::load_dataset(&dir).unwrap();
    println!(
        "generated {} frames {}x{} from {} gt points in {:.1?}; init cloud {}",
        data.frames.len(),
        data.width,
        data.height,
        model.point_count(),
        t0.elapsed(),
        data.init_points.len()
    );
}
