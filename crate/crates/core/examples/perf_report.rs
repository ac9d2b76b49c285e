//! Efficiency and latency of the hardware generations, with the GPU
//! reference points for comparison.
use dcnn::perfmodel::{generation_presets, ops_per_watt, sweep_report, ConvMethod, PerfScenario, GPU_REFERENCES};

fn main() -> dcnn::Result<()> {
    let report = sweep_report(&generation_presets(), &[ConvMethod::Fft, ConvMethod::Brute])?;
    print!("{}", report.to_csv());
    for gpu in GPU_REFERENCES {
        println!("{}: {:.3e} OPS/W", gpu.name, gpu.ops_per_watt());
    }
    let big = PerfScenario {
        image_m: 1000.0,
        image_n: 1000.0,
        ..generation_presets()[1].0.clone()
    };
    println!(
        "1000x1000 inputs: FFT/brute-force ratio {:.1}",
        ops_per_watt(&big, ConvMethod::Fft)? / ops_per_watt(&big, ConvMethod::Brute)?
    );
    Ok(())
}
