//! File formats: atomic writes, FMAP float maps and PNG frames.

use std::io::Write;
use std::path::Path;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u16 = 1;

/// Encodes a `(1, C, H, W)` tensor as an FMAP float map:
///
/// ```text
/// "FMAP" | version: u16 | channels: u16 | height: u32 | width: u32 | f32 × C·H·W
/// ```
///
/// Integers and floats are little-endian; values are stored channel-major
/// (all of channel 0, then channel 1, …), rows top to bottom.
pub fn fmap_to_bytes(map: &Tensor) -> Result<Vec<u8>> {
    let (n, c, h, w) = map.dims4("fmap")?;
    if n != 1 || c > u16::MAX as usize {
        return Err(Error::Config(format!("cannot store shape {:?} as a float map", map.shape())));
    }
    let mut out = Vec::with_capacity(16 + 4 * map.numel());
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&FMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u16).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn fmap_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    let bad = |msg: &str| Error::Format { what: "float map", msg: msg.to_string() };
    if bytes.len() < 16 {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != FMAP_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FMAP_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let c = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = c.checked_mul(h).and_then(|v| v.checked_mul(w)).and_then(|v| v.checked_mul(4));
    if expected != Some(bytes.len() - 16) {
        return Err(bad("payload size does not match header"));
    }
    let data = bytes[16..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Tensor::from_vec(&[1, c, h, w], data)?)
}

pub fn write_fmap(path: &Path, map: &Tensor) -> Result<()> {
    write_atomic(path, &fmap_to_bytes(map)?)
}

pub fn read_fmap(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    fmap_from_bytes(&bytes)
}

/// Quantizes a value in [0, 1] to 8 bits.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `(1, 3, H, W)` image in [0, 1] as an 8-bit RGB PNG.
pub fn write_png(path: &Path, img: &Tensor) -> Result<()> {
    let (n, c, h, w) = img.dims4("png")?;
    if n != 1 || c != 3 {
        return Err(Error::Config(format!("PNG output needs a (1, 3, H, W) image, got {:?}", img.shape())));
    }
    let hw = h * w;
    let d = img.data();
    let mut rgb = Vec::with_capacity(3 * hw);
    for i in 0..hw {
        for ch in 0..3 {
            rgb.push(to_u8(d[ch * hw + i]));
        }
    }
    let mut bytes = Vec::new();
    image::RgbImage::from_raw(w as u32, h as u32, rgb)
        .expect("buffer length matches dimensions")
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    write_atomic(path, &bytes)
}

/// Reads an 8-bit RGB PNG into a `(1, 3, H, W)` tensor in [0, 1].
pub fn read_png(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let hw = h * w;
    let mut data = vec![0.0f32; 3 * hw];
    for (i, px) in img.pixels().enumerate() {
        for ch in 0..3 {
            data[ch * hw + i] = px[ch] as f32 / 255.0;
        }
    }
    Ok(Tensor::from_vec(&[1, 3, h, w], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fmap_header_layout() {
        let t = Tensor::from_vec(&[1, 2, 1, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = fmap_to_bytes(&t).unwrap();
        assert_eq!(&b[..4], b"FMAP");
        assert_eq!(&b[4..8], &[1, 0, 2, 0]);
        assert_eq!(&b[8..16], &[1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&b[28..32], &4.0f32.to_le_bytes());
        assert_eq!(b.len(), 16 + 24);
    }

    #[test]
    fn fmap_rejects_corruption() {
        let t = Tensor::zeros(&[1, 1, 2, 2]);
        let b = fmap_to_bytes(&t).unwrap();
        assert!(fmap_from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'G';
        assert!(fmap_from_bytes(&bad).is_err());
        assert!(fmap_from_bytes(&b[..8]).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_vec(&[1, 3, 2, 2], (0..12).map(|i| i as f32 / 11.0).collect()).unwrap();
        let p = dir.path().join("a.png");
        write_png(&p, &img).unwrap();
        let back = read_png(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        let m = Tensor::from_vec(&[1, 1, 1, 2], vec![-3.5, 7.25]).unwrap();
        let p = dir.path().join("m.fmap");
        write_fmap(&p, &m).unwrap();
        assert_eq!(read_fmap(&p).unwrap().data(), m.data());
        assert!(matches!(read_fmap(&dir.path().join("missing.fmap")), Err(Error::MissingFile(_))));
        let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp")).collect();
        assert!(leftovers.is_empty());
    }

    proptest! {
        #[test]
        fn fmap_bytes_round_trip(c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u16>()) {
            let data: Vec<f32> = (0..c * h * w).map(|i| (i as f32 - seed as f32) * 0.37).collect();
            let t = Tensor::from_vec(&[1, c, h, w], data).unwrap();
            let back = fmap_from_bytes(&fmap_to_bytes(&t).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(back.data(), t.data());
        }
    }
}
