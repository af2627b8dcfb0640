//! Trains one toy network on a synthetic scene and segments a second one.
//!
//! `cargo run --release --example train_toy -- [conv3d|convlstm] [iterations]`

use rcseg::io::synth::synth;
use rcseg::metrics::dice;
use rcseg::rcnet::{infer, train_toy, NetworkSpec, TrainConfig, UnitType};

fn main() -> rcseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let unit: UnitType = args.next().as_deref().unwrap_or("convlstm").parse()?;
    let epochs = args.next().map_or(200, |s| s.parse().expect("iteration count"));
    let learning_rate = if unit == UnitType::ConvLstm { 2.0 } else { 0.5 };

    let train = synth(0, [16, 16, 16], 2, 0.3)?;
    let test = synth(1, [16, 16, 16], 2, 0.3)?;
    let spec = NetworkSpec { widths: vec![4, 8], depth: 1, ..NetworkSpec::toy(unit) };
    let config = TrainConfig { learning_rate, epochs, seed: 2, ..TrainConfig::default() };
    let report = train_toy(&spec, &config, &[(train.intensity, train.truth)])?;
    let losses = &report.iteration_losses;
    println!("{unit:?}: loss {:.4} -> {:.4} over {} iterations", losses[0], losses[losses.len() - 1], losses.len());

    let probs = infer(&spec, &report.params, &test.intensity)?;
    println!("held-out Dice {:.4}", dice(&probs.thresholded_mean(), &test.truth)?);
    Ok(())
}
