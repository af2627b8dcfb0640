//! Ranks voxels of two disagreeing probability maps and prunes the
//! confident ones.

use rcseg::select::select;
use rcseg::ProbabilityMap;

fn main() -> rcseg::Result<()> {
    let dims = [1, 4, 6];
    let edge = |x: usize| if x < 3 { 0.95 } else { 0.05 };
    let a: Vec<f64> = (0..24).map(|i| edge(i % 6)).collect();
    // The second map is unsure along the boundary and wrong in one corner.
    let mut b: Vec<f64> = (0..24).map(|i| if matches!(i % 6, 2 | 3) { 0.5 } else { edge(i % 6) }).collect();
    b[23] = 0.9;
    let maps = ProbabilityMap::new(dims, vec![a, b])?;

    for theta in [0.5, 0.75, 0.9] {
        let s = select(&maps, theta)?;
        println!("theta {theta}: {} confident, candidates {:?}", s.confident.len(), s.candidates);
    }
    let s = select(&maps, 0.75)?;
    for row in s.energies.chunks(6) {
        println!("{}", row.iter().map(|e| format!("{e:6.3}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
