use super::InputVariant;
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::sim::DPFrame;
use crate::tensor::{Scalar, Tensor4};

/// The views available for one scene. Any view may be a single-channel
/// (green-only) capture; it is replicated to three channels on adaptation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ViewSet<'a> {
    pub left: Option<&'a ImageTensor>,
    pub right: Option<&'a ImageTensor>,
    pub combined: Option<&'a ImageTensor>,
}

impl<'a> From<&'a DPFrame> for ViewSet<'a> {
    fn from(f: &'a DPFrame) -> Self {
        Self {
            left: Some(&f.left),
            right: Some(&f.right),
            combined: Some(&f.combined),
        }
    }
}

fn need<'a>(view: Option<&'a ImageTensor>, name: &str, variant: InputVariant) -> Result<&'a ImageTensor> {
    view.ok_or_else(|| Error::Data(format!("{variant} input needs the {name} view")))
}

/// Stacks the views required by `variant` into a `[1, h, w, c]` input cube:
/// dual is (L, R), triple is (L, R, B) and single is B alone.
pub fn adapt_input<T: Scalar>(views: ViewSet<'_>, variant: InputVariant) -> Result<Tensor4<T>> {
    let picked: Vec<&ImageTensor> = match variant {
        InputVariant::Dual => vec![
            need(views.left, "left", variant)?,
            need(views.right, "right", variant)?,
        ],
        InputVariant::Triple => vec![
            need(views.left, "left", variant)?,
            need(views.right, "right", variant)?,
            need(views.combined, "combined", variant)?,
        ],
        InputVariant::Single => vec![need(views.combined, "combined", variant)?],
    };
    let rgb = picked
        .into_iter()
        .map(|v| v.to_rgb())
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ImageTensor> = rgb.iter().collect();
    Ok(ImageTensor::stack_channels(&refs)?.to_tensor())
}
