use crate::error::{Error, Result};
use crate::imaging::ImageTensor;

/// Source-pixel coverage of each target pixel along one axis:
/// `(first source index, weights)` with weights summing to one.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let (a, b) = (i as f64 * scale, (i + 1) as f64 * scale);
            let first = a.floor() as usize;
            let last = (b.ceil() as usize).min(src);
            let w = (first..last)
                .map(|j| (b.min(j as f64 + 1.0) - a.max(j as f64)).max(0.0) / scale)
                .collect();
            (first, w)
        })
        .collect()
}

/// Area-average resampling to `width x height`. The target must not exceed
/// the source and must have the same aspect ratio.
pub fn downscale(image: &ImageTensor, width: usize, height: usize) -> Result<ImageTensor> {
    let (h, w, c) = image.dims();
    if width == 0 || height == 0 || width > w || height > h {
        return Err(Error::Data(format!(
            "cannot downscale {w}x{h} to {width}x{height}"
        )));
    }
    if w * height != h * width {
        return Err(Error::Data(format!(
            "aspect mismatch: {w}x{h} cannot be resampled to {width}x{height}"
        )));
    }
    if (w, h) == (width, height) {
        return Ok(image.clone());
    }
    let wx = axis_weights(w, width);
    let wy = axis_weights(h, height);
    // horizontal pass, then vertical
    let mut tmp = vec![0.0f64; h * width * c];
    for y in 0..h {
        for (ox, (x0, ws)) in wx.iter().enumerate() {
            for (k, &wt) in ws.iter().enumerate() {
                for ch in 0..c {
                    tmp[(y * width + ox) * c + ch] += wt * image.get(y, x0 + k, ch) as f64;
                }
            }
        }
    }
    let mut out = vec![0.0f64; height * width * c];
    for (oy, (y0, ws)) in wy.iter().enumerate() {
        for (k, &wt) in ws.iter().enumerate() {
            let src = &tmp[(y0 + k) * width * c..(y0 + k + 1) * width * c];
            for (o, s) in out[oy * width * c..(oy + 1) * width * c].iter_mut().zip(src) {
                *o += wt * s;
            }
        }
    }
    ImageTensor::new(height, width, c, out.into_iter().map(|v| v as f32).collect())
}
