//! Skip-connection masks: sampling frequencies and the sub-network each
//! mask selects.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcseg::rcnet::{sample_mask, ConnectionMask, NetworkSpec, RcNet, Skips, UnitType};
use rcseg::Tensor;

fn main() -> rcseg::Result<()> {
    let spec = NetworkSpec { widths: vec![2, 4, 8], depth: 2, ..NetworkSpec::toy(UnitType::Conv3d) };
    let net = RcNet::init(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = Tensor::uniform([1, 8, 8, 8], 1.0, &mut rng);

    let mut counts = vec![0usize; 1 << spec.depth];
    for _ in 0..10_000 {
        counts[sample_mask(spec.alpha, spec.depth, &mut rng).pattern()] += 1;
    }
    println!("alpha {}: pattern counts over 10000 draws {counts:?}", spec.alpha);

    let expectation = net.forward(&input, Skips::Expectation)?;
    for mask in ConnectionMask::enumerate(spec.depth) {
        let out = net.forward(&input, Skips::Mask(&mask))?;
        let gap = out.zip_map(&expectation, |a, b| (a - b).abs())?.max_abs();
        println!("mask {:?}: mean output {:.4}, max gap to expectation {gap:.4}", mask.0, out.sum() / out.len() as f64);
    }
    Ok(())
}
