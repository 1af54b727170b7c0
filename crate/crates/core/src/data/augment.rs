use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a datum is laid out for augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentMode {
    Vector,
    /// Row-major flattened `height × width` grayscale image.
    Image { height: usize, width: usize },
}

/// Element-level perturbation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub mode: AugmentMode,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Global scale factor drawn from `[1 − s, 1 + s]`.
    pub scale: f64,
    /// Per-coordinate dropout probability.
    pub dropout: f64,
    /// Smallest crop side as a fraction of the image side (1 = no crop).
    pub min_crop: f64,
    pub flip: bool,
    /// Brightness and contrast jitter amplitude.
    pub jitter: f64,
}

impl AugmentPolicy {
    pub fn identity() -> Self {
        Self {
            mode: AugmentMode::Vector,
            noise_sigma: 0.0,
            scale: 0.0,
            dropout: 0.0,
            min_crop: 1.0,
            flip: false,
            jitter: 0.0,
        }
    }

    /// Defaults for low-dimensional vectors with typical per-feature
    /// spread `feature_std`.
    pub fn vector(feature_std: f64) -> Self {
        Self {
            noise_sigma: 0.05 * feature_std,
            scale: 0.1,
            dropout: 0.02,
            ..Self::identity()
        }
    }

    pub fn image(height: usize, width: usize) -> Self {
        Self {
            mode: AugmentMode::Image { height, width },
            noise_sigma: 0.0,
            scale: 0.0,
            dropout: 0.0,
            min_crop: 0.8,
            flip: true,
            jitter: 0.2,
        }
    }

    /// Resolves a policy id: `none`, `vector` or `image:<H>x<W>`.
    pub fn from_id(id: &str, feature_std: f64) -> Result<Self> {
        let policy = match id {
            "none" => Self::identity(),
            "vector" => Self::vector(feature_std),
            _ => {
                let dims = id
                    .strip_prefix("image:")
                    .and_then(|s| s.split_once('x'))
                    .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)));
                match dims {
                    Some((h, w)) => Self::image(h, w),
                    None => return Err(Error::BadPolicy(format!("unknown policy id `{id}`"))),
                }
            }
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0
            && self.scale == 0.0
            && self.dropout == 0.0
            && self.min_crop == 1.0
            && !self.flip
            && self.jitter == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::BadPolicy(format!("{what} out of range: {v}")));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", self.noise_sigma);
        }
        if !(0.0..1.0).contains(&self.scale) {
            return bad("scale", self.scale);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", self.dropout);
        }
        if !(self.min_crop > 0.0 && self.min_crop <= 1.0) {
            return bad("min_crop", self.min_crop);
        }
        if !(self.jitter >= 0.0 && self.jitter < 1.0) {
            return bad("jitter", self.jitter);
        }
        if let AugmentMode::Image { height, width } = self.mode {
            if height == 0 || width == 0 {
                return Err(Error::BadPolicy(format!("image size {height}x{width}")));
            }
        }
        Ok(())
    }
}

/// Returns a randomly perturbed copy of `x` with the same length.
///
/// Vector mode applies coordinate dropout, a global scale and additive
/// noise. Image mode applies a random crop resized back to full size, an
/// optional horizontal flip and brightness/contrast jitter, then the vector
/// steps.
pub fn augment<R: Rng + ?Sized>(x: &[f64], policy: &AugmentPolicy, rng: &mut R) -> Result<Vec<f64>> {
    policy.validate()?;
    let mut out = match policy.mode {
        AugmentMode::Vector => x.to_vec(),
        AugmentMode::Image { height, width } => {
            if height * width != x.len() {
                return Err(Error::BadPolicy(format!(
                    "image {height}x{width} does not match length {}",
                    x.len()
                )));
            }
            augment_image(x, height, width, policy, rng)
        }
    };
    if policy.dropout > 0.0 {
        for v in out.iter_mut() {
            if rng.random::<f64>() < policy.dropout {
                *v = 0.0;
            }
        }
    }
    if policy.scale > 0.0 {
        let s = 1.0 + policy.scale * rng.random_range(-1.0..=1.0);
        out.iter_mut().for_each(|v| *v *= s);
    }
    if policy.noise_sigma > 0.0 {
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += policy.noise_sigma * z;
        }
    }
    Ok(out)
}

fn augment_image<R: Rng + ?Sized>(x: &[f64], h: usize, w: usize, policy: &AugmentPolicy, rng: &mut R) -> Vec<f64> {
    let frac = if policy.min_crop < 1.0 {
        rng.random_range(policy.min_crop..=1.0)
    } else {
        1.0
    };
    let ch = ((h as f64 * frac).round() as usize).clamp(1, h);
    let cw = ((w as f64 * frac).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    let flip = policy.flip && rng.random::<bool>();
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            // Bilinear sample of the crop at the pixel center.
            let sy = ((i as f64 + 0.5) * ch as f64 / h as f64 - 0.5).clamp(0.0, (ch - 1) as f64);
            let jj = if flip { w - 1 - j } else { j };
            let sx = ((jj as f64 + 0.5) * cw as f64 / w as f64 - 0.5).clamp(0.0, (cw - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(ch - 1), (x0 + 1).min(cw - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            let px = |y: usize, xx: usize| x[(top + y) * w + left + xx];
            out[i * w + j] = (1.0 - fy) * ((1.0 - fx) * px(y0, x0) + fx * px(y0, x1))
                + fy * ((1.0 - fx) * px(y1, x0) + fx * px(y1, x1));
        }
    }
    if policy.jitter > 0.0 {
        let contrast = 1.0 + policy.jitter * rng.random_range(-1.0..=1.0);
        let brightness = policy.jitter * rng.random_range(-1.0..=1.0);
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        out.iter_mut()
            .for_each(|v| *v = (*v - mean) * contrast + mean + brightness);
    }
    out
}
