use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thin-lens camera used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub focal_length_mm: f64,
    pub f_number: f64,
    pub focus_distance_mm: f64,
    pub pixel_pitch_mm: f64,
    /// Sensor resolution as (width, height) in pixels.
    pub resolution: (usize, usize),
}

impl Default for CameraConfig {
    /// A 50 mm lens at f/4 focused at 1 m, with 40 µm effective pixels.
    fn default() -> Self {
        Self {
            focal_length_mm: 50.0,
            f_number: 4.0,
            focus_distance_mm: 1000.0,
            pixel_pitch_mm: 0.04,
            resolution: (96, 64),
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.focal_length_mm,
            self.f_number,
            self.focus_distance_mm,
            self.pixel_pitch_mm,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.f_number <= 0.0 || self.focal_length_mm <= 0.0 || self.pixel_pitch_mm <= 0.0
        {
            return Err(Error::Config(format!("invalid camera parameters {self:?}")));
        }
        if self.focus_distance_mm <= self.focal_length_mm {
            return Err(Error::Config(format!(
                "focus distance {} mm must exceed focal length {} mm",
                self.focus_distance_mm, self.focal_length_mm
            )));
        }
        Ok(())
    }

    pub fn with_f_number(mut self, f_number: f64) -> Self {
        self.f_number = f_number;
        self
    }

    /// Signed circle-of-confusion radius in pixels for a point at `depth_mm`:
    /// `f² / (2N) · |d − d_f| / (d · (d_f − f)) / pitch`, positive beyond the
    /// focal plane and negative in front of it.
    pub fn coc_radius(&self, depth_mm: f64) -> Result<f64> {
        coc_radius(depth_mm, self)
    }
}

pub fn coc_radius(depth_mm: f64, cam: &CameraConfig) -> Result<f64> {
    if !(depth_mm > cam.focal_length_mm) {
        return Err(Error::Config(format!(
            "depth {depth_mm} mm must exceed focal length {} mm",
            cam.focal_length_mm
        )));
    }
    let f = cam.focal_length_mm;
    let df = cam.focus_distance_mm;
    let mag = f * f / (2.0 * cam.f_number) * (depth_mm - df).abs() / (depth_mm * (df - f));
    Ok((depth_mm - df).signum() * mag / cam.pixel_pitch_mm)
}
