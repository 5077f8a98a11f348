//! Full desk-scale run: generate the default dataset, train the whole
//! schedule, evaluate on the holdout, and print the report with timings.
use dpgs_core::metrics::evaluate;
use dpgs_core::render::RenderSettings;
use dpgs_core::synth::{generate, SceneScript};
use dpgs_core::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let root = std::env::temp_dir().join("dpgs_full_run");
    let data_dir = root.join("data");
    let run_dir = root.join("run");
    let t0 = Instant::now();
    let script = SceneScript::default();
    generate(&script, &data_dir).unwrap();
    let t_gen = t0.elapsed();

    let cfg = TrainConfig { dataset: data_dir.clone(), ..TrainConfig::default() };
    let t1 = Instant::now();
    let state = train(&cfg, &run_dir, None).unwrap();
    let t_train = t1.elapsed();

    let data = dpgs_core::load_dataset(&data_dir).unwrap();
    let t2 = Instant::now();
    let report = evaluate(
        &state.scene,
        &state.field,
        &data,
        cfg.holdout_every,
        cfg.dilation_px(data.height),
        &RenderSettings::default(),
    )
    .unwrap();
    let t_eval = t2.elapsed();

    println!("gen {:.1?}  train {:.1?}  eval {:.1?}  total {:.1?}", t_gen, t_train, t_eval, t0.elapsed());
    print!("{}", report.table());
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
