use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use log::warn;

use super::{validate_alphabet, Corpus, DataError, LabeledImage, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

/// Per-axis box filter taps: for each output index, the overlapping source
/// indices and their overlap lengths.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) as f64) - lo.max(s as f64);
                    (overlap > 0.0).then_some((s, overlap))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging resize of a row-major `width x height` image to
/// `resolution x resolution`. Each output pixel is the mean of the source
/// area it covers, with fractional pixels weighted by overlap.
pub fn area_resize(pixels: &[f64], width: usize, height: usize, resolution: usize) -> Vec<f64> {
    // Dividing by the summed taps keeps constant images exactly constant.
    let apply = |taps: &[(usize, f64)], at: &dyn Fn(usize) -> f64| -> f64 {
        let norm: f64 = taps.iter().map(|&(_, w)| w).sum();
        taps.iter().map(|&(s, w)| at(s) * w).sum::<f64>() / norm
    };
    assert_eq!(
        pixels.len(),
        width * height,
        "pixel buffer does not match dimensions"
    );
    let wx = axis_weights(width, resolution);
    let wy = axis_weights(height, resolution);
    let mut rows = vec![0.0; height * resolution];
    for y in 0..height {
        let src = &pixels[y * width..(y + 1) * width];
        for (ox, weights) in wx.iter().enumerate() {
            rows[y * resolution + ox] = apply(weights, &|s| src[s]);
        }
    }
    let mut out = vec![0.0; resolution * resolution];
    for (oy, weights) in wy.iter().enumerate() {
        for ox in 0..resolution {
            let v = apply(weights, &|s| rows[s * resolution + ox]);
            out[oy * resolution + ox] = v.clamp(0.0, 1.0);
        }
    }
    out
}

/// Grayscale intensities in `[0, 1]`. Color images use the
/// 0.299 R + 0.587 G + 0.114 B luminance; alpha is ignored.
pub(crate) fn luminance(img: &DynamicImage) -> Vec<f64> {
    if !img.color().has_color() {
        return img
            .to_luma16()
            .pixels()
            .map(|p| f64::from(p.0[0]) / 65535.0)
            .collect();
    }
    img.to_rgb16()
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0.map(u64::from);
            // Integer weights keep white at exactly 1.0.
            (299 * r + 587 * g + 114 * b) as f64 / (1000.0 * 65535.0)
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    entries.sort();
    Ok(entries)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Loads `<root>/<LETTER>/<name>.png` (or PGM/PPM) images, converting to
/// grayscale and area-averaging to `resolution x resolution`.
///
/// Items come out in alphabet order, then filename order. Letter
/// directories outside the alphabet and undecodable images are errors when
/// `strict` is set and skipped with a warning otherwise.
pub fn load_image_dir(
    root: impl AsRef<Path>,
    resolution: usize,
    alphabet: &[String],
    strict: bool,
) -> Result<Corpus> {
    let root = root.as_ref();
    validate_alphabet(alphabet)?;
    if resolution == 0 {
        return Err(DataError::Invalid("resolution must be >= 1".into()));
    }
    let mut per_letter: Vec<Vec<PathBuf>> = vec![Vec::new(); alphabet.len()];
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match alphabet.iter().position(|l| *l == name) {
            Some(idx) => per_letter[idx] = sorted_entries(&dir)?,
            None if strict => return Err(DataError::UnknownLetter { path: dir }),
            None => warn!("skipping directory {} (not in the alphabet)", dir.display()),
        }
    }

    let mut items = Vec::new();
    for (label, files) in per_letter.into_iter().enumerate() {
        for file in files.into_iter().filter(|p| p.is_file() && is_image(p)) {
            let img = match image::open(&file) {
                Ok(img) => img,
                Err(e) if strict => {
                    return Err(DataError::Decode {
                        path: file,
                        message: e.to_string(),
                    })
                }
                Err(e) => {
                    warn!("skipping undecodable image {}: {e}", file.display());
                    continue;
                }
            };
            let gray = luminance(&img);
            let pixels = area_resize(
                &gray,
                img.width() as usize,
                img.height() as usize,
                resolution,
            );
            items.push(LabeledImage { pixels, label });
        }
    }

    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "images".into());
    Corpus::new(name, alphabet.to_vec(), resolution, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_alphabet;
    use image::{GrayImage, Luma, Rgb, RgbImage};

    #[test]
    fn two_by_two_block_averages_to_half() {
        assert_eq!(area_resize(&[0.0, 0.0, 1.0, 1.0], 2, 2, 1), vec![0.5]);
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let board: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        assert_eq!(area_resize(&board, 4, 4, 2), vec![0.5; 4]);
    }

    #[test]
    fn fractional_overlap_is_weighted() {
        // 3 -> 2 along x: outputs cover [0, 1.5) and [1.5, 3).
        let out = area_resize(&[0.0, 0.6, 0.9], 3, 1, 2);
        // y axis is 1 -> 2, so both rows repeat.
        let left = (0.0 + 0.5 * 0.6) / 1.5;
        let right = (0.5 * 0.6 + 0.9) / 1.5;
        for (got, want) in out.iter().zip([left, right, left, right]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn white_rgb_image_is_all_ones() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("A")).unwrap();
        RgbImage::from_pixel(256, 256, Rgb([255, 255, 255]))
            .save(dir.path().join("A/white.png"))
            .unwrap();
        let c = load_image_dir(dir.path(), 28, &default_alphabet(), true).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.items[0].pixels, vec![1.0; 28 * 28]);
    }

    #[test]
    fn luminance_weights() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(1, 1, Rgb([255, 0, 0])));
        assert!((luminance(&img)[0] - 0.299).abs() < 1e-12);
        let gray = DynamicImage::ImageLuma8(GrayImage::from_pixel(1, 1, Luma([51])));
        assert!((luminance(&gray)[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn items_follow_alphabet_then_filename_order() {
        let dir = tempfile::tempdir().unwrap();
        for (letter, files) in [("C", vec!["b.png", "a.png"]), ("A", vec!["z.png"])] {
            std::fs::create_dir(dir.path().join(letter)).unwrap();
            for (i, f) in files.iter().enumerate() {
                let v = if f.starts_with('a') { 0 } else { 255 - i as u8 };
                GrayImage::from_pixel(4, 4, Luma([v]))
                    .save(dir.path().join(letter).join(f))
                    .unwrap();
            }
        }
        let c = load_image_dir(dir.path(), 2, &default_alphabet(), true).unwrap();
        let labels: Vec<&str> = c
            .items
            .iter()
            .map(|i| c.alphabet[i.label].as_str())
            .collect();
        assert_eq!(labels, ["A", "C", "C"]);
        // C/a.png (black) sorts before C/b.png.
        assert_eq!(c.items[1].pixels, vec![0.0; 4]);
    }

    #[test]
    fn unknown_letters_and_bad_images_respect_strict_flag() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("ZH")).unwrap();
        std::fs::create_dir(dir.path().join("B")).unwrap();
        std::fs::write(dir.path().join("B/broken.png"), b"not a png").unwrap();
        GrayImage::from_pixel(2, 2, Luma([0]))
            .save(dir.path().join("B/ok.png"))
            .unwrap();
        let alphabet = default_alphabet();
        assert!(matches!(
            load_image_dir(dir.path(), 2, &alphabet, true),
            Err(DataError::UnknownLetter { .. })
        ));
        std::fs::remove_dir(dir.path().join("ZH")).unwrap();
        assert!(matches!(
            load_image_dir(dir.path(), 2, &alphabet, true),
            Err(DataError::Decode { .. })
        ));
        std::fs::create_dir(dir.path().join("ZH")).unwrap();
        let c = load_image_dir(dir.path(), 2, &alphabet, false).unwrap();
        assert_eq!(c.len(), 1);
    }
}
