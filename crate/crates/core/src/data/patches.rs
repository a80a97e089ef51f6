use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::sim::{Category, DPFrame};

/// Aligned crops of one scene's four views.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub scene_id: String,
    pub category: Category,
    pub y: usize,
    pub x: usize,
    pub left: ImageTensor,
    pub right: ImageTensor,
    pub combined: ImageTensor,
    pub sharp: ImageTensor,
    /// Sharpness energy of the sharp patch.
    pub energy: f64,
}

impl PatchRecord {
    pub fn size(&self) -> usize {
        self.sharp.height()
    }

    pub fn views(&self) -> [&ImageTensor; 4] {
        [&self.left, &self.right, &self.combined, &self.sharp]
    }
}

/// Window stride for the given overlap, rounded down.
pub fn patch_stride(size: usize, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap {overlap} outside [0, 1)")));
    }
    // the epsilon absorbs representation error in products such as 100 * 0.7
    Ok(((size as f64 * (1.0 - overlap)) + 1e-9).floor().max(1.0) as usize)
}

/// Window starts along one axis: `0, stride, 2·stride, …` plus a final window
/// flush with the far edge when the regular grid does not reach it.
pub fn patch_starts(len: usize, size: usize, stride: usize) -> Result<Vec<usize>> {
    if size == 0 || stride == 0 {
        return Err(Error::Config("patch size and stride must be positive".into()));
    }
    if len < size {
        return Err(Error::Data(format!(
            "image extent {len} is smaller than the {size}-pixel window"
        )));
    }
    let last = len - size;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if *starts.last().expect("at least one start") != last {
        starts.push(last);
    }
    Ok(starts)
}

/// Crops every view of `frame` at identical window positions, in row-major
/// window order.
pub fn extract_patches(frame: &DPFrame, size: usize, overlap: f64) -> Result<Vec<PatchRecord>> {
    frame.validate()?;
    let stride = patch_stride(size, overlap)?;
    let (h, w, _) = frame.sharp.dims();
    let rows = patch_starts(h, size, stride)?;
    let cols = patch_starts(w, size, stride)?;
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &y in &rows {
        for &x in &cols {
            let crop = |v: &ImageTensor| v.crop(y, x, size, size);
            let sharp = crop(&frame.sharp);
            out.push(PatchRecord {
                scene_id: frame.meta.scene_id.clone(),
                category: frame.meta.category,
                y,
                x,
                left: crop(&frame.left),
                right: crop(&frame.right),
                combined: crop(&frame.combined),
                energy: sharpness_energy(&sharp),
                sharp,
            });
        }
    }
    Ok(out)
}

/// Mean Sobel gradient magnitude of the luma over all positions whose 3x3
/// neighbourhood lies inside the image. Images smaller than 3x3 score 0.
pub fn sharpness_energy(image: &ImageTensor) -> f64 {
    let luma = image.luma();
    let (h, w, _) = luma.dims();
    if h < 3 || w < 3 {
        return 0.0;
    }
    let p = |y: usize, x: usize| luma.get(y, x, 0) as f64;
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            // separable form: smoothing [1, 2, 1] across, difference [-1, 0, 1] along
            let gx = (p(y - 1, x + 1) - p(y - 1, x - 1))
                + 2.0 * (p(y, x + 1) - p(y, x - 1))
                + (p(y + 1, x + 1) - p(y + 1, x - 1));
            let gy = (p(y + 1, x - 1) - p(y - 1, x - 1))
                + 2.0 * (p(y + 1, x) - p(y - 1, x))
                + (p(y + 1, x + 1) - p(y - 1, x + 1));
            total += gx.hypot(gy);
        }
    }
    total / ((h - 2) * (w - 2)) as f64
}

/// Drops the `floor(fraction · n)` records with the lowest energy. Ties are
/// ordered by scene id then position; survivors keep their input order.
pub fn filter_patches(records: Vec<PatchRecord>, fraction: f64) -> Result<Vec<PatchRecord>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("discard fraction {fraction} outside [0, 1)")));
    }
    let drop = (fraction * records.len() as f64 + 1e-9).floor() as usize;
    if drop == 0 {
        return Ok(records);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.energy
            .total_cmp(&rb.energy)
            .then_with(|| ra.scene_id.cmp(&rb.scene_id))
            .then_with(|| (ra.y, ra.x).cmp(&(rb.y, rb.x)))
    });
    let mut keep = vec![true; records.len()];
    for &i in &order[..drop] {
        keep[i] = false;
    }
    Ok(records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CameraConfig, FrameMeta};

    fn frame(h: usize, w: usize) -> DPFrame {
        let v = |s: f32| ImageTensor::from_fn(h, w, 3, move |y, x, c| ((y * 7 + x * 3 + c) as f32 * s).sin() * 0.5 + 0.5);
        DPFrame {
            left: v(0.1),
            right: v(0.2),
            combined: v(0.3),
            sharp: v(0.4),
            meta: FrameMeta {
                scene_id: "s".into(),
                category: Category::Indoor,
                camera: CameraConfig::default(),
            },
        }
    }

    #[test]
    fn full_resolution_window_grid() {
        let stride = patch_stride(512, 0.6).unwrap();
        assert_eq!(stride, 204);
        let cols = patch_starts(1680, 512, stride).unwrap();
        let expected_cols: Vec<usize> = (0..7).map(|i| i * 204).filter(|&s| s + 512 <= 1680).chain([1168]).collect();
        assert_eq!(cols, expected_cols);
        assert_eq!(cols.len(), 7);
        assert_eq!(patch_starts(1120, 512, stride).unwrap(), vec![0, 204, 408, 608]);
        assert_eq!(patch_starts(512, 512, stride).unwrap(), vec![0]);
        assert!(patch_starts(500, 512, stride).is_err());
        assert_eq!(patch_starts(768, 256, patch_stride(256, 0.6).unwrap()).unwrap(), vec![0, 102, 204, 306, 408, 510, 512]);
    }

    #[test]
    fn patches_are_aligned_crops() {
        let f = frame(40, 60);
        let ps = extract_patches(&f, 16, 0.5).unwrap();
        assert_eq!(ps.len(), 4 * 7);
        for p in &ps {
            assert!(p.y + 16 <= 40 && p.x + 16 <= 60);
            for (view, full) in p.views().iter().zip(f.views()) {
                assert_eq!(**view, full.crop(p.y, p.x, 16, 16));
            }
            assert_eq!(p.energy, sharpness_energy(&p.sharp));
        }
        assert!(extract_patches(&f, 64, 0.5).is_err());
    }

    #[test]
    fn energy_of_constant_is_zero() {
        assert_eq!(sharpness_energy(&ImageTensor::filled(8, 8, 3, 0.7)), 0.0);
    }

    #[test]
    fn ramp_matches_direct_correlation() {
        let img = ImageTensor::from_fn(5, 5, 1, |y, x, _| (0.03 * x as f64 + 0.11 * y as f64 + 0.002 * (x * y) as f64) as f32);
        let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        let ky = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
        let mut sum = 0.0;
        for y in 1..4 {
            for x in 1..4 {
                let (mut gx, mut gy) = (0.0f64, 0.0f64);
                for i in 0..3 {
                    for j in 0..3 {
                        let v = img.get(y + i - 1, x + j - 1, 0) as f64;
                        gx += kx[i][j] * v;
                        gy += ky[i][j] * v;
                    }
                }
                sum += (gx * gx + gy * gy).sqrt();
            }
        }
        assert!((sharpness_energy(&img) - sum / 9.0).abs() < 1e-12);
    }

    #[test]
    fn blur_lowers_energy() {
        let step = ImageTensor::from_fn(16, 16, 3, |_, x, _| if x < 8 { 0.1 } else { 0.9 });
        let sigma = 3.0f32;
        let g: Vec<f32> = (-9..=9).map(|k: i32| (-(k * k) as f32 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f32 = g.iter().sum();
        let blurred = ImageTensor::from_fn(16, 16, 3, |y, x, c| {
            g.iter()
                .enumerate()
                .map(|(k, w)| w * step.get(y, (x as i32 + k as i32 - 9).clamp(0, 15) as usize, c))
                .sum::<f32>()
                / norm
        });
        assert!(sharpness_energy(&step) > sharpness_energy(&blurred));
    }

    fn records(energies: &[f64]) -> Vec<PatchRecord> {
        let img = ImageTensor::filled(2, 2, 3, 0.0);
        energies
            .iter()
            .enumerate()
            .map(|(i, &e)| PatchRecord {
                scene_id: format!("s{}", i % 3),
                category: Category::Outdoor,
                y: i,
                x: 0,
                left: img.clone(),
                right: img.clone(),
                combined: img.clone(),
                sharp: img.clone(),
                energy: e,
            })
            .collect()
    }

    #[test]
    fn filtering_counts_and_order() {
        let e = [0.5, 0.1, 0.9, 0.3, 0.3, 0.7, 0.2, 0.8, 0.6, 0.4];
        let recs = records(&e);
        assert_eq!(filter_patches(recs.clone(), 0.0).unwrap(), recs);
        let kept = filter_patches(recs.clone(), 0.3).unwrap();
        assert_eq!(kept.len(), 7);
        let min_kept = kept.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
        let dropped: Vec<_> = recs.iter().filter(|r| !kept.contains(r)).collect();
        assert!(dropped.iter().all(|r| r.energy <= min_kept));
        assert!(kept.windows(2).all(|w| w[0].y < w[1].y));
        assert!(filter_patches(recs, 1.0).is_err());
    }
}
