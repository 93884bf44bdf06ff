//! File formats: binary PGM images and CSV vectors.

use std::io::Write;

use crate::error::{Error, Result};

/// Writes a `side × side` image as binary PGM (P5, maxval 255). Values are
/// clamped to `[lo, hi]` and mapped linearly onto `0..=255`.
pub fn write_pgm<W: Write>(mut out: W, side: usize, pixels: &[f64], lo: f64, hi: f64) -> Result<()> {
    if pixels.len() != side * side {
        return Err(Error::DimensionMismatch {
            context: "write_pgm",
            expected: side * side,
            got: pixels.len(),
        });
    }
    if !(hi > lo) {
        return Err(Error::InvalidParameter("PGM range must be nonempty".into()));
    }
    write!(out, "P5\n{side} {side}\n255\n")?;
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|&v| {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            if t.is_nan() {
                0
            } else {
                (t * 255.0).round() as u8
            }
        })
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Parses a binary PGM written by [`write_pgm`] into `(width, height, bytes)`.
pub fn read_pgm(data: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("not a binary PGM: {}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::Parse(format!("PGM header {s:?}: {e}")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Parse(format!("unsupported maxval {maxval}")));
    }
    let body = data
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::Parse("truncated PGM body".into()))?;
    Ok((w, h, body.to_vec()))
}

/// Writes a sinogram as CSV: one line per angle, one column per detector.
pub fn write_sinogram_csv<W: Write>(mut out: W, n_detectors: usize, sino: &[f64]) -> Result<()> {
    if n_detectors == 0 || !sino.len().is_multiple_of(n_detectors) {
        return Err(Error::InvalidParameter(
            "sinogram length is not a multiple of the detector count".into(),
        ));
    }
    for row in sino.chunks(n_detectors) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a CSV of numbers, row by row, into one flat vector.
pub fn read_csv_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        for tok in line.split(',') {
            out.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))?,
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, &[0.0, 1.0, 0.5, 2.0], 0.0, 1.0).unwrap();
        assert!(buf.starts_with(b"P5\n2 2\n255\n"));
        let (w, h, px) = read_pgm(&buf).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(px, vec![0, 255, 128, 255]);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        let mut buf = Vec::new();
        assert!(write_pgm(&mut buf, 3, &[0.0; 4], 0.0, 1.0).is_err());
        assert!(write_pgm(&mut buf, 2, &[0.0; 4], 1.0, 1.0).is_err());
        assert!(read_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(read_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn sinogram_csv_round_trip() {
        let sino = vec![1.0, 2.5, -3.0, 0.125, 1e-9, 7.0];
        let mut buf = Vec::new();
        write_sinogram_csv(&mut buf, 3, &sino).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_csv_vector(&text).unwrap(), sino);
        assert!(write_sinogram_csv(Vec::new(), 4, &sino).is_err());
    }
}
