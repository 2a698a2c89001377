use std::path::{Path, PathBuf};

use super::measures::Patch;
use crate::dataio::FrameId;
use crate::error::{Error, Result};

fn image_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Binary PGM (`P5`), 8 or 16 bit.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Patch> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(image_err(path, "truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    if fields[0] != "P5" {
        return Err(image_err(path, format!("expected a binary PGM (P5), got {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| image_err(path, format!("bad PGM {what} {s:?}")))
    };
    let (w, h, max) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
    if w == 0 || h == 0 || max == 0 || max > 65535 {
        return Err(image_err(path, format!("unsupported PGM geometry {w}x{h} maxval {max}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[pos + 1..];
    let scale = max as f64;
    let values: Vec<f64> = if max < 256 {
        if data.len() < w * h {
            return Err(image_err(path, "truncated PGM raster"));
        }
        data[..w * h].iter().map(|&b| (f64::from(b) / scale).min(1.0)).collect()
    } else {
        if data.len() < 2 * w * h {
            return Err(image_err(path, "truncated PGM raster"));
        }
        data[..2 * w * h]
            .chunks_exact(2)
            .map(|c| (f64::from(u16::from_be_bytes([c[0], c[1]])) / scale).min(1.0))
            .collect()
    };
    Patch::new(w, h, values)
}

pub fn load_gray(path: &Path) -> Result<Patch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => parse_pgm(&bytes, path),
        Some("png") => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| image_err(path, e.to_string()))?
                .to_luma32f();
            let (w, h) = img.dimensions();
            let values = img.into_raw().into_iter().map(|v| f64::from(v).clamp(0.0, 1.0)).collect();
            Patch::new(w as usize, h as usize, values)
        }
        _ => Err(image_err(path, "only .pgm and .png images are supported")),
    }
}

/// Frame images under a root directory, looked up as
/// `<root>/<video>/I<index:05>.<ext>` or `<root>/<video>_I<index:05>.<ext>`.
#[derive(Debug, Clone)]
pub struct ImageSource {
    root: PathBuf,
}

impl ImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageSource { root: root.into() }
    }

    pub fn locate(&self, frame: &FrameId) -> Option<PathBuf> {
        let name = format!("I{:05}", frame.index);
        for ext in ["pgm", "png"] {
            let candidates = [
                self.root.join(&frame.video).join(format!("{name}.{ext}")),
                self.root.join(format!("{}_{name}.{ext}", frame.video)),
            ];
            if let Some(p) = candidates.into_iter().find(|p| p.is_file()) {
                return Some(p);
            }
        }
        None
    }

    pub fn load(&self, frame: &FrameId) -> Result<Patch> {
        let path = self
            .locate(frame)
            .ok_or_else(|| image_err(&self.root, format!("no image for frame {frame}")))?;
        load_gray(&path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend([0, 51, 255, 102, 153, 204]);
        let p = parse_pgm(&bytes, Path::new("x.pgm")).unwrap();
        assert_eq!((p.width(), p.height()), (3, 2));
        assert_eq!(p.get(1, 0), 0.2);
        assert_eq!(p.get(2, 0), 1.0);
    }

    #[test]
    fn pgm_errors() {
        assert!(parse_pgm(b"P2\n1 1\n255\n0", Path::new("x")).is_err());
        assert!(parse_pgm(b"P5\n4 4\n255\n\0\0", Path::new("x")).is_err());
    }

    #[test]
    fn sixteen_bit() {
        let mut bytes = b"P5 1 1 65535\n".to_vec();
        bytes.extend([0xff, 0xff]);
        assert_eq!(parse_pgm(&bytes, Path::new("x")).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn png_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("vid")).unwrap();
        let img = image::GrayImage::from_raw(2, 2, vec![0, 255, 255, 0]).unwrap();
        img.save(dir.path().join("vid").join("I00007.png")).unwrap();
        let src = ImageSource::new(dir.path());
        let frame = FrameId::new("vid", 7).unwrap();
        let p = src.load(&frame).unwrap();
        assert_eq!(p.get(1, 0), 1.0);
        assert!(src.load(&FrameId::new("vid", 8).unwrap()).is_err());
    }
}
