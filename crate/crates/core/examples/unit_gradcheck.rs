//! Central-difference checks of the conv3d and ConvLSTM backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcseg::tensor::*;

fn main() -> rcseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-5;

    let x = Tensor::uniform([2, 4, 4, 4], 1.0, &mut rng);
    let conv = Conv3dParams::init(3, 2, [3, 3, 3], &mut rng);
    let r = Tensor::uniform([3, 4, 4, 4], 1.0, &mut rng);
    let g = conv3d_backward(&x, &conv, Padding::Same, &r)?;
    let dir = Tensor::uniform(conv.weight.shape().to_vec(), 1.0, &mut rng);
    let loss = |w: &[f64]| {
        let p = Conv3dParams { weight: Tensor::new(conv.weight.shape().to_vec(), w.to_vec()).unwrap(), ..conv.clone() };
        conv3d_linear(&x, &p, Padding::Same).unwrap().dot(&r).unwrap()
    };
    let err = grad_check(loss, g.weight.data(), conv.weight.data(), dir.data(), eps)?;
    println!("conv3d weight gradient: relative error {err:.2e}");

    let cell = ConvLstmParams::init(2, 1, 3, &mut rng);
    let frame = Tensor::uniform([1, 5, 5], 1.0, &mut rng);
    let state = ConvLstmState { h: Tensor::uniform([2, 5, 5], 0.5, &mut rng), c: Tensor::uniform([2, 5, 5], 0.5, &mut rng) };
    let (rh, rc) = (Tensor::uniform([2, 5, 5], 1.0, &mut rng), Tensor::uniform([2, 5, 5], 1.0, &mut rng));
    let cache = convlstm_step_cached(&frame, &state, &cell)?;
    let g = convlstm_step_backward(&frame, &state, &cell, &cache, &rh, &rc)?;
    let dir = Tensor::uniform([1, 5, 5], 1.0, &mut rng);
    let loss = |v: &[f64]| {
        let out = convlstm_step(&Tensor::new([1, 5, 5], v.to_vec()).unwrap(), &state, &cell).unwrap();
        out.h.dot(&rh).unwrap() + out.c.dot(&rc).unwrap()
    };
    let err = grad_check(loss, g.x.data(), frame.data(), dir.data(), eps)?;
    println!("convlstm input gradient: relative error {err:.2e}");
    Ok(())
}
