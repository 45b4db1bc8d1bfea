//! Runs the forward-only recurrent depth extractor on a synthetic stack and
//! reports how the weighted sequence loss evolves with iteration count.
//!
//! ```bash
//! cargo run --release -p sff-core --example recurrent_refine
//! ```

use std::time::Instant;

use sff_core::convolve::BorderPolicy;
use sff_core::focusvol::{aggregation_map, multiscale_volumes};
use sff_core::refiner::{context_encode, refine, sequence_loss, RefinerWeights};
use sff_core::stackio::mean_image;
use sff_core::synth::{generate, DepthPattern, SynthSpec, Texture};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        height: 64,
        width: 64,
        slices: 10,
        depth_pattern: DepthPattern::Staircase,
        texture: Texture::NoiseTexture,
        blur_scale: 1.0,
        seed: 42,
    };
    println!("generating {}x{} stack with {} slices...", spec.height, spec.width, spec.slices);
    let (stack, gt) = generate(&spec)?;

    let volumes = multiscale_volumes(&stack, 4, BorderPolicy::Replicate)?;
    let u = aggregation_map(&volumes)?;
    let mean = mean_image(&stack);

    let weights = RefinerWeights::from_seed(7, stack.channels(), u.depth())?;
    println!(
        "seeded refiner: {} parameters across {} layers",
        weights.parameter_count(),
        weights.layer_names().len()
    );

    let biases = context_encode(&mean, &weights)?;
    let iterations = 8;
    let start = Instant::now();
    let out = refine(&u, &biases, &weights, iterations)?;
    let elapsed = start.elapsed();
    println!("{iterations} iterations in {:.2}s", elapsed.as_secs_f64());

    for (t, intermediate) in out.intermediates.iter().enumerate() {
        let loss = sequence_loss(std::slice::from_ref(intermediate), &gt, 0.9)?;
        println!("  iteration {:2}: mse vs ground truth = {:10.4}", t + 1, loss);
    }
    let total = sequence_loss(&out.intermediates, &gt, 0.9)?;
    println!("weighted sequence loss (alpha = 0.9): {total:.4}");
    println!(
        "final depth range: [{:.3}, {:.3}] at {}x{}",
        out.depth.values.iter().cloned().fold(f64::INFINITY, f64::min),
        out.depth.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        out.depth.height(),
        out.depth.width()
    );
    Ok(())
}
