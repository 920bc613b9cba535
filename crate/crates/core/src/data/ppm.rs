//! Binary PPM (`P6`) codec.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' && bytes[pos] != b'\r' {
                    pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn read_number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_whitespace_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::format(start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text
        .parse::<usize>()
        .map_err(|_| Error::format(start, format!("{what} `{text}` out of range")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::format(0, "bad magic: expected `P6`"));
    }
    let (width, pos) = read_number(bytes, 2, "width")?;
    let (height, pos) = read_number(bytes, pos, "height")?;
    let (maxval, pos) = read_number(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(pos, "image extent is zero"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(pos, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => {}
        _ => return Err(Error::format(pos, "expected single whitespace after maxval")),
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_offset: pos + 1,
    })
}

/// Decode a `P6` image into a `[3, height, width]` tensor with values in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let header = parse_header(bytes)?;
    let pixels = header.width * header.height;
    let sample_bytes = if header.maxval < 256 { 1 } else { 2 };
    let needed = pixels * 3 * sample_bytes;
    let payload = &bytes[header.data_offset..];
    if payload.len() < needed {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: need {needed} bytes, found {}", payload.len()),
        ));
    }
    let maxval = header.maxval as f32;
    let mut data = vec![0.0; pixels * 3];
    for i in 0..pixels * 3 {
        let raw = if sample_bytes == 1 {
            payload[i] as usize
        } else {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as usize
        };
        if raw > header.maxval {
            return Err(Error::format(
                header.data_offset + i * sample_bytes,
                format!("sample {raw} exceeds maxval {}", header.maxval),
            ));
        }
        // Interleaved RGB to planar CHW.
        let (pixel, channel) = (i / 3, i % 3);
        data[channel * pixels + pixel] = raw as f32 / maxval;
    }
    Tensor::from_vec(&[3, header.height, header.width], data)
}

/// Encode a `[3, H, W]` image with values in `[0, 1]`; values are clamped
/// and rounded to the nearest level.
pub fn encode_ppm(image: &Tensor, maxval: u16) -> Result<Vec<u8>> {
    if image.rank() != 3 || image.shape()[0] != 3 {
        return Err(Error::shape(format!("PPM needs a [3, H, W] image, got {:?}", image.shape())));
    }
    if maxval == 0 {
        return Err(Error::config("maxval must be positive"));
    }
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let pixels = h * w;
    let mut out = format!("P6\n{w} {h}\n{maxval}\n").into_bytes();
    let wide = maxval > 255;
    out.reserve(pixels * 3 * if wide { 2 } else { 1 });
    let data = image.data();
    for p in 0..pixels {
        for c in 0..3 {
            let level = (data[c * pixels + p].clamp(0.0, 1.0) * maxval as f32).round() as u16;
            if wide {
                out.extend_from_slice(&level.to_be_bytes());
            } else {
                out.push(level as u8);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_ones() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([255u8; 12]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), &[3, 2, 2]);
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn wide_maxval_normalizes() {
        let mut bytes = b"P6 1 1 510\n".to_vec();
        bytes.extend([0u8, 255, 0, 0, 1, 254]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.5, 0.0, 1.0]);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n1 # width done\n1\n# max\n255\n".to_vec();
        bytes.extend([0u8, 51, 255]);
        assert_eq!(decode_ppm(&bytes).unwrap().data(), &[0.0, 0.2, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(decode_ppm(b"P5\n1 1\n255\n\0"), Err(Error::Format { offset: 0, .. })));
        let err = decode_ppm(b"P6\n2 2\n255\n\x01\x02").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 13, .. }), "{err}");
        assert!(matches!(decode_ppm(b"P6\n1 1\n0\n\0\0\0"), Err(Error::Format { .. })));
        assert!(matches!(decode_ppm(b"P6\nx 1\n255\n"), Err(Error::Format { offset: 3, .. })));
        assert!(matches!(decode_ppm(b"P6\n1 1\n100\n\xff\0\0"), Err(Error::Format { offset: 11, .. })));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            levels in proptest::collection::vec(any::<u16>(), 3 * 6),
            wide in any::<bool>(),
        ) {
            let maxval: u16 = if wide { 65535 } else { 255 };
            let values = levels.iter().map(|&l| (l as u32 % (maxval as u32 + 1)) as f32 / maxval as f32).collect();
            let img = Tensor::from_vec(&[3, 2, 3], values).unwrap();
            let bytes = encode_ppm(&img, maxval).unwrap();
            let back = decode_ppm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_ppm(&back, maxval).unwrap(), bytes);
        }
    }
}
