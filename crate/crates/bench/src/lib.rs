//! Shared fixtures for the benchmarks under `benches/`.

use dynrecon::coils::synth_maps;
use dynrecon::phantom::{acquire, generate, PhantomSpec};
use dynrecon::sampling::{mask_vista_like, VistaParams};
use dynrecon::{CoilMaps, DynTensor, SamplingMask};

pub struct Fixture {
    pub gt: DynTensor,
    pub maps: CoilMaps,
    pub mask: SamplingMask,
    pub v: DynTensor,
}

/// Default phantom on a `frames x n x n` grid, `coils` coils, acceleration `r`.
pub fn fixture(frames: usize, n: usize, coils: usize, r: f64) -> Fixture {
    let gt = generate(&PhantomSpec::scaled(frames, n, n)).expect("phantom");
    let maps = synth_maps(coils, n, n, 0).expect("maps");
    let mask = mask_vista_like(frames, n, r, VistaParams::default()).expect("mask");
    let v = acquire(&gt, &maps, &mask, 0.0, 0).expect("acquire");
    Fixture { gt, maps, mask, v }
}
