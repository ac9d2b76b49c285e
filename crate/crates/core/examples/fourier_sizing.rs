//! Fourier-plane window size and diffraction-order offsets for the default
//! bench and the short-focal-length variant.
use dcnn::optics::{diffraction_angle, fourier_plane_px, order_offset_px, OpticalConfig, MAX_ORDER};

fn main() -> dcnn::Result<()> {
    for (name, cfg) in [
        ("100 mm lenses", OpticalConfig::default()),
        ("30 mm lenses", OpticalConfig::short_focal()),
    ] {
        let f = fourier_plane_px(&cfg)?;
        println!(
            "{name}: Fourier window {f} px, diffraction angle {:.4} rad",
            diffraction_angle(&cfg)?
        );
        for order in -MAX_ORDER..=MAX_ORDER {
            match order_offset_px(order, &cfg) {
                Ok(off) => println!("  order {order:+}: offset {off:+} px"),
                Err(e) => println!("  order {order:+}: {e}"),
            }
        }
    }
    Ok(())
}
