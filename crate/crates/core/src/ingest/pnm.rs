//! Binary PGM (`P5`) and PPM (`P6`) images.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for `P5`, 3 for `P6`.
    pub channels: usize,
    pub maxval: u16,
    /// Row-major, channel-interleaved samples in `0..=maxval`.
    pub samples: Vec<u16>,
}

impl PnmImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        maxval: u16,
        samples: Vec<u16>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if maxval == 0 {
            return Err(Error::invalid("maxval must be >= 1"));
        }
        if samples.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                samples.len()
            )));
        }
        if let Some(s) = samples.iter().find(|s| **s > maxval) {
            return Err(Error::invalid(format!(
                "sample {s} exceeds maxval {maxval}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval,
            samples,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let channels = match bytes.get(..2) {
            Some(b"P5") => 1,
            Some(b"P6") => 3,
            Some(other) => {
                return Err(Error::UnsupportedFormat(format!(
                    "magic {:?}; only binary PGM (P5) and PPM (P6) are supported",
                    String::from_utf8_lossy(other)
                )))
            }
            None => {
                return Err(Error::InvalidInput(
                    "file too short for a PNM header".into(),
                ))
            }
        };
        let mut cursor = HeaderCursor { bytes, pos: 2 };
        let width = cursor.number("width")?;
        let height = cursor.number("height")?;
        let maxval = cursor.number("maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::InvalidInput(format!(
                "maxval {maxval} outside 1..=65535"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => {
                return Err(Error::InvalidInput(
                    "missing whitespace after maxval".into(),
                ))
            }
        }
        let count = width * height * channels;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = &bytes[cursor.pos..];
        if raster.len() < need {
            return Err(Error::InvalidInput(format!(
                "raster truncated: expected {need} bytes, found {}",
                raster.len()
            )));
        }
        let samples: Vec<u16> = if wide {
            raster[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            raster[..need].iter().map(|b| *b as u16).collect()
        };
        Self::new(width, height, channels, maxval as u16, samples)
            .map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
            Error::UnsupportedFormat(m) => {
                Error::UnsupportedFormat(format!("{}: {m}", path.display()))
            }
            other => other,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out =
            format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            out.extend(self.samples.iter().flat_map(|s| s.to_be_bytes()));
        } else {
            out.extend(self.samples.iter().map(|s| *s as u8));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    /// Samples scaled to `[0, 1]` by dividing by `maxval`.
    pub fn to_values(&self) -> Vec<f32> {
        let scale = self.maxval as f32;
        self.samples.iter().map(|s| *s as f32 / scale).collect()
    }

    /// Inverse of [`PnmImage::to_values`].
    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        maxval: u16,
        values: &[f32],
    ) -> Result<Self> {
        let scale = maxval as f32;
        let samples = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * scale).round() as u16)
            .collect();
        Self::new(width, height, channels, maxval, samples)
    }

    /// Lossless PNG. Samples are stretched to the full 8- or 16-bit range
    /// when `maxval` is not already 255 or 65535; the map is injective.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let color = if self.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        };
        let (depth, data): (png::BitDepth, Vec<u8>) = if self.maxval <= 255 {
            let data = self
                .samples
                .iter()
                .map(|s| ((*s as u32 * 255 + self.maxval as u32 / 2) / self.maxval as u32) as u8)
                .collect();
            (png::BitDepth::Eight, data)
        } else {
            let data = self
                .samples
                .iter()
                .flat_map(|s| {
                    let v = (*s as u64 * 65535 + self.maxval as u64 / 2) / self.maxval as u64;
                    (v as u16).to_be_bytes()
                })
                .collect();
            (png::BitDepth::Sixteen, data)
        };
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(color);
            enc.set_depth(depth);
            let mut writer = enc
                .write_header()
                .map_err(|e| Error::InvalidInput(format!("png header: {e}")))?;
            writer
                .write_image_data(&data)
                .map_err(|e| Error::InvalidInput(format!("png data: {e}")))?;
        }
        Ok(out)
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidInput(format!("bad {what} in PNM header")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_by_maxval() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\x00\xff";
        let img = PnmImage::parse(bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.to_values(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn header_comments_and_rgb() {
        let mut bytes = b"P6 # rgb\n# a comment line\n1 2 # dims\n15\n".to_vec();
        bytes.extend([0, 5, 15, 15, 10, 0]);
        let img = PnmImage::parse(&bytes).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.samples, vec![0, 5, 15, 15, 10, 0]);
        assert_eq!(img.to_values()[2], 1.0);
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let img = PnmImage::new(3, 1, 1, 1000, vec![0, 999, 1000]).unwrap();
        let back = PnmImage::parse(&img.encode()).unwrap();
        assert_eq!(back, img);
        let again = PnmImage::from_values(3, 1, 1, 1000, &back.to_values()).unwrap();
        assert_eq!(again.encode(), img.encode());
    }

    #[test]
    fn rejects_other_formats() {
        assert!(matches!(
            PnmImage::parse(b"P2\n1 1\n255\n0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            PnmImage::parse(b"\x89PNG\r\n"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            PnmImage::parse(b"P5\n2 2\n255\n\x00"),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            PnmImage::parse(b"P5\n2 x\n255\n"),
            Err(Error::InvalidInput(_))
        ));
        assert!(PnmImage::parse(b"P5\n1 1\n255\n\x00").is_ok());
    }

    #[test]
    fn png_is_decodable() {
        let img = PnmImage::new(2, 1, 3, 255, vec![1, 2, 3, 250, 251, 252]).unwrap();
        let png_bytes = img.to_png().unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(png_bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (2, 1));
        assert_eq!(&buf[..info.buffer_size()], &[1, 2, 3, 250, 251, 252]);
    }
}
