use crate::error::{Error, Result};
use crate::render::{render_image, Camera, Image, RenderContext};
use crate::scene::Scene;

/// One calibrated view with its target image pyramid; level 0 is full
/// resolution, each further level halves both sides.
#[derive(Clone, Debug)]
pub struct View {
    pub cameras: Vec<Camera>,
    pub targets: Vec<Image>,
}

impl View {
    pub fn new(camera: Camera, target: Image, levels: usize) -> Result<Self> {
        if target.width != camera.width || target.height != camera.height || target.channels != 3 {
            return Err(Error::config("target image must be RGB and match the camera film"));
        }
        if levels == 0 {
            return Err(Error::config("at least one pyramid level is required"));
        }
        let mut cameras = vec![camera];
        let mut targets = vec![target];
        for l in 1..levels {
            let prev = &targets[l - 1];
            if prev.width % 2 != 0 || prev.height % 2 != 0 || prev.width < 2 || prev.height < 2 {
                return Err(Error::config(format!("film size does not allow {levels} pyramid levels")));
            }
            let next = prev.downsample2();
            cameras.push(cameras[0].with_resolution(next.width, next.height)?);
            targets.push(next);
        }
        Ok(Self { cameras, targets })
    }

    pub fn levels(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub views: Vec<View>,
}

impl Dataset {
    pub fn new(views: Vec<View>) -> Result<Self> {
        let first = views.first().ok_or_else(|| Error::config("dataset needs at least one view"))?;
        let dims = (first.cameras[0].width, first.cameras[0].height, first.levels());
        if views.iter().any(|v| (v.cameras[0].width, v.cameras[0].height, v.levels()) != dims) {
            return Err(Error::config("all views must share film size and pyramid depth"));
        }
        Ok(Self { views })
    }

    /// Render targets of `scene` from `cameras` with `spp` samples.
    pub fn synthesize(scene: &Scene, cameras: &[Camera], spp: usize, levels: usize, seed: u64) -> Result<Self> {
        let mut views = Vec::with_capacity(cameras.len());
        for (i, cam) in cameras.iter().enumerate() {
            let ctx = RenderContext::new(scene, scene.theta(), cam);
            let (img, _) = render_image(&ctx, spp, seed, i as u64)?;
            views.push(View::new(cam.clone(), img, levels)?);
        }
        Self::new(views)
    }

    pub fn levels(&self) -> usize {
        self.views[0].levels()
    }

    pub fn pixels_at(&self, level: usize) -> usize {
        let c = &self.views[0].cameras[level];
        c.width * c.height * self.views.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Material;

    #[test]
    fn pyramid_levels_halve_resolution() {
        let s = Scene::sphere([0.0; 3], 0.5, Material::flat([1.0; 3], [0.0; 3]), 1.0).unwrap();
        let cam = Camera::orthographic(2.0, 16, 8, 3.0).unwrap();
        let d = Dataset::synthesize(&s, &[cam], 4, 3, 1).unwrap();
        let v = &d.views[0];
        assert_eq!((v.targets[2].width, v.targets[2].height), (4, 2));
        assert_eq!(v.cameras[2].pixel_size, 4.0 * v.cameras[0].pixel_size);
        assert!(View::new(v.cameras[0].clone(), v.targets[0].clone(), 5).is_err());
    }
}
