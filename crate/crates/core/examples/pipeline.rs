//! End-to-end run: two networks, fusion, selection and walker refinement,
//! with a planted false positive.
//!
//! `cargo run --release --example pipeline -- [edge] [iterations]`; the
//! defaults (32, 200) are the acceptance scene and take about two minutes.

use rcseg::io::{PipelineConfig, Seeds, UnitRates};
use rcseg::metrics::report_csv;
use rcseg::pipeline::{run, SceneConfig};
use rcseg::rcnet::UnitType;

fn main() -> rcseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let edge = args.next().map_or(32, |s| s.parse().expect("volume edge"));
    let epochs = args.next().map_or(200, |s| s.parse().expect("iteration count"));
    let config = PipelineConfig {
        theta: 0.97,
        epochs,
        widths: vec![4, 8, 16],
        unit_learning_rates: UnitRates { conv3d: Some(0.5), convlstm: Some(2.0) },
        seeds: Seeds { synth: 0, init: 1, train: 2 },
        ..PipelineConfig::default()
    };
    let scene = SceneConfig { dims: [edge; 3], ..SceneConfig::default() };
    let out = run(&config, &scene, &[UnitType::Conv3d, UnitType::ConvLstm], Some(2))?;
    print!("{}", report_csv(&out.report));
    let left = out.planted.iter().filter(|&&i| out.refinement.labels.labels()[i] == 1).count();
    println!("planted voxels still foreground after refinement: {left} of {}", out.planted.len());
    Ok(())
}
