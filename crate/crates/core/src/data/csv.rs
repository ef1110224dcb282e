use std::fs;
use std::path::Path;

use super::{validate_alphabet, Corpus, DataError, LabeledImage, Result};

/// Maps a label field to an alphabet index. Numeric labels follow the
/// sign-language-MNIST convention (`0` = `A`, `1` = `B`, ...); anything
/// else is taken as the letter itself.
fn resolve_label(field: &str, alphabet: &[String]) -> Option<usize> {
    let letter = match field.parse::<u32>() {
        Ok(n) if n < 26 => char::from(b'A' + n as u8).to_string(),
        Ok(_) => return None,
        Err(_) => field.to_string(),
    };
    alphabet.iter().position(|l| *l == letter)
}

/// Loads a `label,pixel1,...,pixelR²` CSV with a header row. Intensities are
/// scaled from `[0, 255]` to `[0, 1]`; the corpus is named after the file stem.
pub fn load_csv_corpus(path: impl AsRef<Path>, alphabet: &[String]) -> Result<Corpus> {
    let path = path.as_ref();
    validate_alphabet(alphabet)?;
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, message: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "missing header row".into()))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(parse_err(
            1,
            "header needs a label column and pixel columns".into(),
        ));
    }
    let pixels = columns - 1;
    let resolution = (pixels as f64).sqrt().round() as usize;
    if resolution * resolution != pixels {
        return Err(DataError::NonSquare {
            path: path.to_path_buf(),
            pixels,
        });
    }

    let mut items = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let label_field = fields.next().unwrap_or_default().trim();
        let label = resolve_label(label_field, alphabet).ok_or_else(|| {
            DataError::LabelOutsideAlphabet {
                path: path.to_path_buf(),
                line,
                label: label_field.to_string(),
            }
        })?;
        let mut values = Vec::with_capacity(pixels);
        for (col, field) in fields.enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(
                    line,
                    format!("pixel column {} is not numeric: {field:?}", col + 1),
                )
            })?;
            if !(0.0..=255.0).contains(&v) {
                return Err(parse_err(
                    line,
                    format!("pixel column {} value {v} outside [0, 255]", col + 1),
                ));
            }
            values.push(v / 255.0);
        }
        if values.len() != pixels {
            return Err(parse_err(
                line,
                format!(
                    "ragged row: {} pixel values, header has {pixels}",
                    values.len()
                ),
            ));
        }
        items.push(LabeledImage {
            pixels: values,
            label,
        });
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Corpus::new(name, alphabet.to_vec(), resolution, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_alphabet;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn header(n: usize) -> String {
        let mut h = "label".to_string();
        for i in 1..=n {
            h.push_str(&format!(",pixel{i}"));
        }
        h
    }

    #[test]
    fn parses_labels_and_scales_pixels() {
        let f = write(&format!(
            "{}\n0,255,255,255,255\n3,0,51,102,255\n",
            header(4)
        ));
        let c = load_csv_corpus(f.path(), &default_alphabet()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.resolution, 2);
        assert_eq!(c.items[0].label, 0);
        assert_eq!(c.items[1].label, 3);
        assert_eq!(c.items[0].pixels, vec![1.0; 4]);
        assert_eq!(c.items[1].pixels, vec![0.0, 0.2, 0.4, 1.0]);
    }

    #[test]
    fn numeric_labels_skip_j() {
        // 10 = K in the A=0 convention; K sits at index 9 once J is removed.
        let f = write(&format!("{}\n10,0\n", header(1)));
        let c = load_csv_corpus(f.path(), &default_alphabet()).unwrap();
        assert_eq!(c.alphabet[c.items[0].label], "K");
    }

    #[test]
    fn non_square_header_is_rejected() {
        let f = write(&format!("{}\n", header(783)));
        let err = load_csv_corpus(f.path(), &default_alphabet()).unwrap_err();
        assert!(matches!(err, DataError::NonSquare { pixels: 783, .. }));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let f = write(&format!("{}\n0,1,2,3,4\n1,1,2,3\n", header(4)));
        let err = load_csv_corpus(f.path(), &default_alphabet()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, .. }), "{err}");

        let f = write(&format!("{}\n0,1,x,3,4\n", header(4)));
        let err = load_csv_corpus(f.path(), &default_alphabet()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("not numeric"));

        // 9 = J, which the alphabet excludes.
        let f = write(&format!("{}\n0,1,2,3,4\n9,1,2,3,4\n", header(4)));
        let err = load_csv_corpus(f.path(), &default_alphabet()).unwrap_err();
        assert!(
            matches!(err, DataError::LabelOutsideAlphabet { line: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn letter_labels_are_accepted() {
        let f = write(&format!("{}\nB,0\nY,0\n", header(1)));
        let c = load_csv_corpus(f.path(), &default_alphabet()).unwrap();
        assert_eq!(c.items[0].label, 1);
        assert_eq!(c.items[1].label, 23);
    }
}
