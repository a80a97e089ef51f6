//! Half-disc point spread functions of the two dual-pixel sub-aperture views.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Square, odd-sized blur kernel centred at `(half, half)`. Tap `(dy, dx)`
/// gives the fraction of a point's light landing `dy` rows and `dx` columns
/// away from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    half: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn identity() -> Self {
        Self {
            half: 0,
            taps: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        2 * self.half + 1
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let s = self.size() as isize;
        let h = self.half as isize;
        self.taps[((dy + h) * s + dx + h) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Horizontal mirror image.
    pub fn mirror(&self) -> Self {
        let s = self.size();
        let mut taps = vec![0.0; s * s];
        for y in 0..s {
            for x in 0..s {
                taps[y * s + x] = self.taps[y * s + (s - 1 - x)];
            }
        }
        Self {
            half: self.half,
            taps,
        }
    }

    /// Mass-weighted horizontal offset of the kernel, in pixels.
    pub fn centroid_x(&self) -> f64 {
        let h = self.half as isize;
        let mut m = 0.0;
        let mut w = 0.0;
        for dy in -h..=h {
            for dx in -h..=h {
                let v = self.at(dy, dx);
                m += v * dx as f64;
                w += v;
            }
        }
        m / w
    }

    /// Non-zero `(dy, dx, weight)` taps.
    pub fn support(&self) -> Vec<(isize, isize, f64)> {
        let h = self.half as isize;
        let mut out = Vec::new();
        for dy in -h..=h {
            for dx in -h..=h {
                let v = self.at(dy, dx);
                if v != 0.0 {
                    out.push((dy, dx, v));
                }
            }
        }
        out
    }
}

/// Anti-aliased disc coverage: `clamp(r + 0.5 - distance, 0, 1)`.
fn disc_weight(radius: f64, dy: isize, dx: isize) -> f64 {
    let d = ((dy * dy + dx * dx) as f64).sqrt();
    (radius + 0.5 - d).clamp(0.0, 1.0)
}

/// Full disc kernel of the given radius, normalised to unit sum.
pub fn disc_psf(radius: f64) -> Kernel {
    let r = radius.abs();
    if r < 0.5 || !r.is_finite() {
        return Kernel::identity();
    }
    let half = (r + 0.5).ceil() as usize;
    let h = half as isize;
    let mut taps = Vec::with_capacity((2 * half + 1).pow(2));
    for dy in -h..=h {
        for dx in -h..=h {
            taps.push(disc_weight(r, dy, dx));
        }
    }
    normalise(Kernel { half, taps })
}

/// Half of a disc of radius `|radius|`, split along the vertical line
/// through its centre. For a positive radius (scene point behind the focal
/// plane) the left view keeps the left half; a negative radius swaps the
/// halves. The centre column is shared equally by both views, and the right
/// view is always the exact mirror of the left one. Radii below half a pixel
/// give the identity kernel.
pub fn half_disc_psf(radius: f64, side: Side) -> Kernel {
    let r = radius.abs();
    if r < 0.5 || !r.is_finite() {
        return Kernel::identity();
    }
    let half = (r + 0.5).ceil() as usize;
    let h = half as isize;
    let keep_left = radius > 0.0;
    let mut taps = Vec::with_capacity((2 * half + 1).pow(2));
    for dy in -h..=h {
        for dx in -h..=h {
            let w = disc_weight(r, dy, dx);
            let share = match dx.cmp(&0) {
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less if keep_left => 1.0,
                std::cmp::Ordering::Greater if !keep_left => 1.0,
                _ => 0.0,
            };
            taps.push(w * share);
        }
    }
    let left = normalise(Kernel { half, taps });
    match side {
        Side::Left => left,
        Side::Right => left.mirror(),
    }
}

fn normalise(mut k: Kernel) -> Kernel {
    let s = k.sum();
    for t in &mut k.taps {
        *t /= s;
    }
    k
}

/// Horizontal centroid of a continuous half disc of radius `r`: `4r / 3π`.
pub fn half_disc_centroid(radius: f64) -> f64 {
    4.0 * radius.abs() / (3.0 * PI)
}
