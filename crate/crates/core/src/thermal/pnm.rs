//! Binary PGM (P5, 16-bit) and PPM (P6, 8-bit) raster files.

use std::io::{BufRead, BufReader, Read, Write};

use super::{RadiometricFrame, Raster, RgbImage, ThermalError, Calibration};

pub fn write_pgm16<W: Write>(mut w: W, frame: &RadiometricFrame) -> std::io::Result<()> {
    write!(w, "P5\n{} {}\n65535\n", frame.width, frame.height)?;
    let mut buf = Vec::with_capacity(frame.raw.len() * 2);
    for v in &frame.raw {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf)
}

pub fn write_ppm<W: Write>(mut w: W, img: &RgbImage) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let buf: Vec<u8> = img.data.iter().flat_map(|p| p.iter().copied()).collect();
    w.write_all(&buf)
}

fn header<R: BufRead>(r: &mut R, magic: &str) -> Result<(usize, usize, u32), ThermalError> {
    let mut tokens = Vec::with_capacity(4);
    let mut token = Vec::new();
    let mut in_comment = false;
    while tokens.len() < 4 {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            return Err(ThermalError::Parse("truncated header".into()));
        }
        let b = byte[0];
        if in_comment {
            in_comment = b != b'\n';
            continue;
        }
        if b == b'#' {
            in_comment = true;
        } else if b.is_ascii_whitespace() {
            if !token.is_empty() {
                tokens.push(String::from_utf8_lossy(&token).into_owned());
                token.clear();
            }
        } else {
            token.push(b);
        }
    }
    if tokens[0] != magic {
        return Err(ThermalError::Parse(format!("expected {magic}, found {}", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| ThermalError::Parse(format!("bad header field {s:?}")));
    Ok((num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])? as u32))
}

pub fn read_pgm16<R: Read>(r: R, calibration: Calibration) -> Result<RadiometricFrame, ThermalError> {
    let mut r = BufReader::new(r);
    let (w, h, maxval) = header(&mut r, "P5")?;
    if maxval != 65535 {
        return Err(ThermalError::Parse(format!("expected maxval 65535, found {maxval}")));
    }
    let mut buf = vec![0u8; w * h * 2];
    r.read_exact(&mut buf)?;
    let raw = buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    RadiometricFrame::new(w, h, raw, calibration)
}

pub fn read_ppm<R: Read>(r: R) -> Result<RgbImage, ThermalError> {
    let mut r = BufReader::new(r);
    let (w, h, maxval) = header(&mut r, "P6")?;
    if maxval != 255 {
        return Err(ThermalError::Parse(format!("expected maxval 255, found {maxval}")));
    }
    let mut buf = vec![0u8; w * h * 3];
    r.read_exact(&mut buf)?;
    Raster::new(w, h, buf.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}
