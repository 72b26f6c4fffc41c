//! PPM images and CSV dumps.

use std::io::Write;

use bdk_core::synth::SpriteGeometry;
use ndarray::ArrayView2;

fn to_byte(v: f64) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// Binary PPM (P6) of images tiled into a grid, `cols` per row, one-pixel
/// gutters. Pixels in `[−1, 1]` map to `0..=255`; grayscale images fill
/// all three channels.
pub fn ppm_grid(images: &[&[f64]], geometry: SpriteGeometry, cols: usize) -> Vec<u8> {
    let side = geometry.side;
    let cols = cols.max(1).min(images.len().max(1));
    let rows = images.len().div_ceil(cols).max(1);
    let width = cols * (side + 1) + 1;
    let height = rows * (side + 1) + 1;
    let mut rgb = vec![40u8; width * height * 3];
    for (k, img) in images.iter().enumerate() {
        let (gr, gc) = (k / cols, k % cols);
        for r in 0..side {
            for c in 0..side {
                let y = 1 + gr * (side + 1) + r;
                let x = 1 + gc * (side + 1) + c;
                for ch in 0..3 {
                    let src = if geometry.channels == 3 { ch } else { 0 };
                    rgb[(y * width + x) * 3 + ch] = to_byte(img[src * side * side + r * side + c]);
                }
            }
        }
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    out
}

pub fn ppm_rows(images: ArrayView2<'_, f64>, geometry: SpriteGeometry, cols: usize) -> Vec<u8> {
    let rows: Vec<Vec<f64>> = images.rows().into_iter().map(|r| r.to_vec()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    ppm_grid(&refs, geometry, cols)
}

/// Long-format CSV `sample_id,step,coordinate_index,value`.
pub fn trajectory_csv<W: Write>(sink: W, steps: &[usize], states: &[ArrayView2<'_, f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["sample_id", "step", "coordinate_index", "value"])?;
    for (&t, state) in steps.iter().zip(states) {
        for (i, row) in state.rows().into_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.serialize((i, t, j, v))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn ppm_header_and_size() {
        let g = SpriteGeometry { side: 4, channels: 1 };
        let a = vec![-1.0; 16];
        let b = vec![1.0; 16];
        let bytes = ppm_grid(&[&a, &b, &a], g, 2);
        let header = b"P6\n11 11\n255\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 11 * 11 * 3);
        // First pixel of the first tile is black, of the second white.
        let px = |y: usize, x: usize| bytes[header.len() + (y * 11 + x) * 3];
        assert_eq!(px(1, 1), 0);
        assert_eq!(px(1, 6), 255);
    }

    #[test]
    fn csv_long_format() {
        let s = Array2::from_shape_vec((2, 2), vec![0.5, 1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        trajectory_csv(&mut buf, &[7], &[s.view()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "sample_id,step,coordinate_index,value");
        assert_eq!(lines[1], "0,7,0,0.5");
        assert_eq!(lines[4], "1,7,1,3.0");
    }
}
