//! Sampled signals: synthetic families with a bandwidth dial, corruptions,
//! and the native container format.

mod corrupt;
pub mod io;
mod lattice;
mod phantom;
pub mod spectrum;
mod synth;

pub use corrupt::{add_gaussian_noise, downsample, downsample_to, half_voxel_resolution};
pub use io::{load_raster, load_signal, save_signal};
pub use lattice::{center_coord, lattice_coords, Bandwidth, SampledSignal};
pub use phantom::shepp_logan;
pub use synth::{
    gen_bandlimited, gen_sierpinski, gen_spheres, gen_star_target, generate, ring_of_radius, sierpinski_contains,
    sierpinski_depth, sphere_count, star_value, Family, RingMask, SIERPINSKI_TRIANGLE, STAR_WEDGES,
};
