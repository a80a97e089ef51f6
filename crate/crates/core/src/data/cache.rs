//! Binary patch cache.
//!
//! Header: magic `DPDNPTCH`, then u32 version, patch size and record count.
//! Each record stores the scene id (u16 length + UTF-8), category (u8),
//! window position (2 x u32), sharpness energy (f64) and the four RGB views
//! as 16-bit samples. A CRC32 of all preceding bytes closes the file.
//! Everything is little-endian.

use std::path::Path;

use super::PatchRecord;
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::sim::Category;

const MAGIC: &[u8; 8] = b"DPDNPTCH";
pub const CACHE_VERSION: u32 = 1;

pub fn write_patch_cache(path: &Path, patch_size: usize, records: &[PatchRecord]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [CACHE_VERSION, patch_size as u32, records.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for r in records {
        if r.views().iter().any(|v| v.dims() != (patch_size, patch_size, 3)) {
            return Err(Error::Data(format!(
                "patch {}@({}, {}) is not {patch_size}x{patch_size} RGB",
                r.scene_id, r.y, r.x
            )));
        }
        buf.extend_from_slice(&(r.scene_id.len() as u16).to_le_bytes());
        buf.extend_from_slice(r.scene_id.as_bytes());
        buf.push(match r.category {
            Category::Indoor => 0,
            Category::Outdoor => 1,
        });
        buf.extend_from_slice(&(r.y as u32).to_le_bytes());
        buf.extend_from_slice(&(r.x as u32).to_le_bytes());
        buf.extend_from_slice(&r.energy.to_le_bytes());
        for v in r.views() {
            for &s in v.data() {
                let q = (s.clamp(0.0, 1.0) * 65535.0).round() as u16;
                buf.extend_from_slice(&q.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_patch_cache(path: &Path) -> Result<(usize, Vec<PatchRecord>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(bad("not a patch cache"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(bad("checksum mismatch"));
    }
    let mut pos = 8;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = body.get(pos..pos + n).ok_or_else(|| bad("truncated record"))?;
        pos += n;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != CACHE_VERSION {
        return Err(bad(&format!("unsupported cache version {version}")));
    }
    let size = u32_at(take(4)?) as usize;
    let count = u32_at(take(4)?) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let scene_id = String::from_utf8(take(n)?.to_vec()).map_err(|_| bad("scene id is not UTF-8"))?;
        let category = match take(1)?[0] {
            0 => Category::Indoor,
            1 => Category::Outdoor,
            _ => return Err(bad("invalid category tag")),
        };
        let y = u32_at(take(4)?) as usize;
        let x = u32_at(take(4)?) as usize;
        let energy = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut views = Vec::with_capacity(4);
        for _ in 0..4 {
            let raw = take(size * size * 3 * 2)?;
            let data = raw
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0)
                .collect();
            views.push(ImageTensor::new(size, size, 3, data)?);
        }
        let [left, right, combined, sharp]: [ImageTensor; 4] = views.try_into().expect("four views");
        records.push(PatchRecord {
            scene_id,
            category,
            y,
            x,
            left,
            right,
            combined,
            sharp,
            energy,
        });
    }
    if pos != body.len() {
        return Err(bad("trailing bytes after last record"));
    }
    Ok((size, records))
}
