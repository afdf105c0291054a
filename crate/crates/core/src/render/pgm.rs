//! Binary greymap (P5) encoding.

use super::RenderError;

/// Encodes a `width`×`height` 8-bit raster as P5 with maxval 255.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Decodes a P5 stream with maxval 255. Header comments are accepted.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), RenderError> {
    let mut pos = 0;
    let mut fields = [0usize; 3];
    if bytes.get(..2) != Some(b"P5") {
        return Err(RenderError::Pgm("missing P5 magic".into()));
    }
    pos += 2;
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(RenderError::Pgm(format!("expected a number at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| RenderError::Pgm(format!("bad number `{text}`")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(RenderError::Pgm(format!("maxval {maxval} unsupported")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(RenderError::Pgm("header not terminated".into()));
    }
    pos += 1;
    let payload = &bytes[pos..];
    if payload.len() != width * height {
        return Err(RenderError::Pgm(format!(
            "payload is {} bytes, header declares {}",
            payload.len(),
            width * height
        )));
    }
    Ok((width, height, payload.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let bytes = encode_pgm(2, 2, &[0, 255, 255, 0]);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 255, 0]);
        assert_eq!(decode_pgm(&bytes).unwrap(), (2, 2, vec![0, 255, 255, 0]));
    }

    #[test]
    fn comments_and_errors() {
        let bytes = b"P5 # made by hand\n1 1\n255\n\x07";
        assert_eq!(decode_pgm(bytes).unwrap(), (1, 1, vec![7]));
        assert!(decode_pgm(b"P2\n1 1\n255\n\x07").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x07").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x07\x07").is_err());
    }
}
