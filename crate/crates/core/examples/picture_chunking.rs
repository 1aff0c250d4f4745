//! Split a photo into grid cells, redact one and render what the public sees.

use std::collections::BTreeSet;

use acrp_core::chunking::{cell_chunk, chunk_image_grid, render_published_picture, ImageDescriptor};
use acrp_core::keys::keygen;
use acrp_core::rss::{redact, sign_redactable};

fn main() {
    let (w, h) = (12u32, 8u32);
    let data: Vec<u8> = (0..w * h).flat_map(|i| [200, (i * 3) as u8, 90]).collect();
    let img = ImageDescriptor::new(w, h, data).expect("sized");
    let msg = chunk_image_grid(&img, 2, 3, [0; 32]).expect("grid fits");
    println!("{}x{} photo as a 2x3 grid: {} chunks (header + 6 cells)", w, h, msg.len());

    let (sk, _) = keygen(Some(b"example-photo"));
    let sig = sign_redactable(&sk, &msg);
    let face = BTreeSet::from([cell_chunk(4)]);
    let published = redact(&msg, &sig, &face).expect("valid subset");
    let shown = render_published_picture(&published).expect("renderable");

    for y in 0..shown.height {
        let row: String = (0..shown.width).map(|x| if shown.pixel(x, y) == [0, 0, 0] { '#' } else { '.' }).collect();
        println!("{row}");
    }
}
