use crate::ad::vec3::{self, V3};
use crate::ad::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shading {
    /// Constant object color: only silhouettes carry geometric signal.
    Flat,
    Lambert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    /// Direction toward the light; normalized on validation.
    pub direction: [f64; 3],
    pub intensity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub shading: Shading,
    pub albedo: [f64; 3],
    #[serde(default)]
    pub ambient: [f64; 3],
    #[serde(default = "Material::default_light")]
    pub light: Light,
    #[serde(default)]
    pub background: [f64; 3],
}

/// Width of the softened clamp on `n . l`.
pub const TERMINATOR_WIDTH: f64 = 1e-3;

impl Material {
    pub fn flat(color: [f64; 3], background: [f64; 3]) -> Self {
        Self {
            shading: Shading::Flat,
            albedo: color,
            ambient: [0.0; 3],
            light: Self::default_light(),
            background,
        }
    }

    pub fn lambert(albedo: [f64; 3], ambient: [f64; 3], light: Light, background: [f64; 3]) -> Self {
        Self {
            shading: Shading::Lambert,
            albedo,
            ambient,
            light,
            background,
        }
    }

    fn default_light() -> Light {
        Light {
            direction: [0.0, 0.0, -1.0],
            intensity: [1.0; 3],
        }
    }

    pub fn validate(&mut self) -> Result<()> {
        let colors = [self.albedo, self.ambient, self.background, self.light.intensity];
        if colors.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::config("material colors must be finite and non-negative"));
        }
        let n = vec3::norm(self.light.direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::config("light direction must be a nonzero vector"));
        }
        // already-unit directions are kept bit-exact so save/load round-trips
        if (n - 1.0).abs() > 1e-14 {
            self.light.direction = vec3::scale(self.light.direction, 1.0 / n);
        }
        Ok(())
    }

    /// Whether radiance at a hit depends on the surface normal.
    pub fn depends_on_normal(&self) -> bool {
        self.shading == Shading::Lambert
    }

    /// Radiance at a surface point with spatial gradient `grad`.
    pub fn shade<S: Scalar>(&self, grad: V3<S>) -> Result<V3<S>> {
        match self.shading {
            Shading::Flat => Ok(vec3::lift(self.albedo)),
            Shading::Lambert => {
                let len = vec3::norm(grad);
                if len.value() < 1e-8 {
                    return Err(Error::DegenerateNormal(len.value()));
                }
                let n = vec3::scale(grad, len.recip());
                let cos = vec3::dot(n, vec3::lift(self.light.direction));
                let lit = cos.softplus(1.0 / TERMINATOR_WIDTH);
                Ok([0, 1, 2].map(|c| lit * (self.albedo[c] * self.light.intensity[c]) + self.ambient[c]))
            }
        }
    }

    /// Per-channel upper bound of radiance (used for range checks).
    pub fn max_radiance(&self) -> [f64; 3] {
        let lit = 1.0 + TERMINATOR_WIDTH * std::f64::consts::LN_2;
        [0, 1, 2].map(|c| {
            let hit = match self.shading {
                Shading::Flat => self.albedo[c],
                Shading::Lambert => self.ambient[c] + self.albedo[c] * self.light.intensity[c] * lit,
            };
            hit.max(self.background[c])
        })
    }

    pub fn min_radiance(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| {
            let hit = match self.shading {
                Shading::Flat => self.albedo[c],
                Shading::Lambert => self.ambient[c],
            };
            hit.min(self.background[c])
        })
    }
}
