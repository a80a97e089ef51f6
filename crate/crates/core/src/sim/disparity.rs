use crate::error::{Error, Result};
use crate::imaging::ImageTensor;

/// Horizontal shift `s` (pixels) that best aligns `right[x + s]` with
/// `left[x]`, found by maximising normalised cross-correlation of the luma
/// over integer shifts in `[-max_shift, max_shift]` and refined by a
/// parabola through the peak and its neighbours.
///
/// The comparison window is the same for every shift (columns
/// `max_shift..width - max_shift` of the left patch).
pub fn estimate_disparity(left: &ImageTensor, right: &ImageTensor, max_shift: usize) -> Result<f64> {
    if left.dims() != right.dims() {
        return Err(Error::Data(format!(
            "disparity patches differ: {:?} vs {:?}",
            left.dims(),
            right.dims()
        )));
    }
    let (h, w, _) = left.dims();
    if 2 * max_shift >= w {
        return Err(Error::Data(format!(
            "max shift {max_shift} must be below half the patch width {w}"
        )));
    }
    let l = left.luma();
    let r = right.luma();
    let x0 = max_shift;
    let x1 = w - max_shift;

    let window = |img: &ImageTensor, shift: isize| -> Vec<f64> {
        let mut v = Vec::with_capacity(h * (x1 - x0));
        for y in 0..h {
            for x in x0..x1 {
                v.push(img.get(y, (x as isize + shift) as usize, 0) as f64);
            }
        }
        v
    };
    let centred = |v: &mut Vec<f64>| -> f64 {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let mut ss = 0.0;
        for x in v.iter_mut() {
            *x -= mean;
            ss += *x * *x;
        }
        ss.sqrt()
    };

    let mut a = window(&l, 0);
    let na = centred(&mut a);
    if na < 1e-9 {
        return Err(Error::Textureless);
    }
    let m = max_shift as isize;
    let scores: Vec<f64> = (-m..=m)
        .map(|s| {
            let mut b = window(&r, s);
            let nb = centred(&mut b);
            if nb < 1e-9 {
                return f64::NEG_INFINITY;
            }
            a.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>() / (na * nb)
        })
        .collect();
    if scores.iter().all(|s| !s.is_finite()) {
        return Err(Error::Textureless);
    }
    let (best, _) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let mut shift = best as f64 - m as f64;
    // an exact match needs no sub-pixel refinement
    if best > 0 && best + 1 < scores.len() && scores[best] < 1.0 - 1e-12 {
        let (c0, c1, c2) = (scores[best - 1], scores[best], scores[best + 1]);
        let denom = c0 - 2.0 * c1 + c2;
        if c0.is_finite() && c2.is_finite() && denom < 0.0 {
            shift += 0.5 * (c0 - c2) / denom;
        }
    }
    Ok(shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(h: usize, w: usize, offset: isize) -> ImageTensor {
        ImageTensor::from_fn(h, w, 3, |y, x, c| {
            let u = x as isize - offset;
            let v = (u as f32 * 0.7).sin() * 0.25 + (u as f32 * 0.31 + y as f32 * 0.5).cos() * 0.2;
            0.5 + v + c as f32 * 0.01
        })
    }

    #[test]
    fn identical_patches_have_zero_disparity() {
        let p = texture(16, 40, 0);
        assert!(estimate_disparity(&p, &p, 6).unwrap().abs() < 1e-9);
    }

    #[test]
    fn recovers_integer_shift() {
        let l = texture(16, 40, 0);
        let r = texture(16, 40, 3);
        let d = estimate_disparity(&l, &r, 6).unwrap();
        assert!((d - 3.0).abs() < 0.1, "{d}");
        let d = estimate_disparity(&r, &l, 6).unwrap();
        assert!((d + 3.0).abs() < 0.1, "{d}");
    }

    #[test]
    fn flat_patch_is_textureless() {
        let p = ImageTensor::filled(8, 20, 3, 0.4);
        assert!(matches!(estimate_disparity(&p, &p, 3), Err(Error::Textureless)));
    }

    #[test]
    fn shift_bound_checked() {
        let p = texture(8, 10, 0);
        assert!(estimate_disparity(&p, &p, 5).is_err());
    }
}
