//! Packing many images into one DMD frame and reading them back.
use dcnn::datapipe::{tile, untile, DatasetKind, LayoutSpec};
use dcnn::optics::OpticalConfig;
use dcnn::Grid;

fn main() -> dcnn::Result<()> {
    let cfg = OpticalConfig::default();
    for kind in [DatasetKind::Mnist, DatasetKind::Cifar10] {
        let l = LayoutSpec::default().layout(kind, &cfg)?;
        println!(
            "{kind:?}: {}x{} grid of {:?} tiles, content {:?} scaled by {:?}, separation {:?} px, {} images per frame",
            l.grid_rows,
            l.grid_cols,
            l.tile,
            l.content,
            l.scale,
            l.separation(),
            l.capacity()
        );
    }
    let l = LayoutSpec::default().layout(DatasetKind::Mnist, &cfg)?;
    let images: Vec<Grid<u8>> = (0..l.capacity())
        .map(|i| Grid::from_fn(28, 28, |r, c| ((r + c + i) % 3 == 0) as u8))
        .collect();
    let frame = tile(&images, &l)?;
    let lit = frame.iter().filter(|&&v| v != 0).count();
    let back = untile(&frame, &l, images.len())?;
    let first = &back[0];
    println!(
        "frame {:?}, {lit} mirrors on, first window {:?} (superpixel {}x{})",
        frame.shape(),
        first.shape(),
        l.scale.0,
        l.scale.1
    );
    Ok(())
}
