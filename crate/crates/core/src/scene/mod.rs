//! Gaussian Splatting scenes: Gaussians, cameras and the active mask.

mod camera;
mod ply;
pub mod sh;

use std::path::Path;

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};

pub use camera::{cameras_to_json, load_cameras, parse_cameras, save_cameras, Camera};
pub use ply::{read_ply, write_ply};

use crate::error::{Error, Result};

/// One decoded 3D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Point3<f64>,
    /// Linear (exponentiated) per-axis standard deviations.
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Opacity in (0, 1).
    pub opacity: f64,
    /// SH coefficients, `(degree + 1)^2` RGB triples; index 0 is the DC term.
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian {
    /// Isotropic Gaussian with a constant (view-independent) color.
    pub fn isotropic(mean: Point3<f64>, sigma: f64, opacity: f64, rgb: [f64; 3]) -> Gaussian {
        Gaussian {
            mean,
            scale: Vector3::repeat(sigma),
            rotation: UnitQuaternion::identity(),
            opacity,
            sh: vec![sh::dc_from_rgb(rgb)],
        }
    }

    /// Σ = R S Sᵀ Rᵀ.
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_of(self)
    }

    pub fn sh_degree(&self) -> usize {
        sh::degree_for_count(self.sh.len()).unwrap_or(0)
    }
}

pub fn covariance_of(g: &Gaussian) -> Matrix3<f64> {
    let r = g.rotation.to_rotation_matrix().into_inner();
    let m = r * Matrix3::from_diagonal(&g.scale);
    let cov = m * m.transpose();
    // symmetrize away rounding
    (cov + cov.transpose()) * 0.5
}

#[derive(Debug, Clone, Default)]
pub struct GaussianScene {
    pub gaussians: Vec<Gaussian>,
    pub cameras: Vec<Camera>,
    pub active: Vec<bool>,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<Gaussian>, cameras: Vec<Camera>) -> Result<GaussianScene> {
        let active = vec![true; gaussians.len()];
        let scene = GaussianScene {
            gaussians,
            cameras,
            active,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn camera(&self, id: &str) -> Result<&Camera> {
        self.cameras
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::validation(format!("unknown camera {id:?}")))
    }

    /// Highest SH degree stored on any Gaussian.
    pub fn sh_degree(&self) -> usize {
        self.gaussians.iter().map(Gaussian::sh_degree).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.active.len() != self.gaussians.len() {
            return Err(Error::validation(format!(
                "active mask has {} entries for {} Gaussians",
                self.active.len(),
                self.gaussians.len()
            )));
        }
        camera::check_unique_ids(&self.cameras)?;
        for c in &self.cameras {
            c.validate()?;
        }
        for (i, g) in self.gaussians.iter().enumerate() {
            let finite = g.mean.iter().all(|v| v.is_finite())
                && g.scale.iter().all(|v| v.is_finite() && *v >= 0.0)
                && g.rotation.coords.iter().all(|v| v.is_finite())
                && g.opacity.is_finite()
                && g.sh.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(Error::validation(format!(
                    "Gaussian {i} has non-finite or negative parameters"
                )));
            }
            if !(g.opacity > 0.0 && g.opacity < 1.0) {
                return Err(Error::validation(format!(
                    "Gaussian {i} opacity {} outside (0, 1)",
                    g.opacity
                )));
            }
            if sh::degree_for_count(g.sh.len()).is_none() {
                return Err(Error::validation(format!(
                    "Gaussian {i} has {} SH coefficients",
                    g.sh.len()
                )));
            }
        }
        Ok(())
    }

    /// Deactivates every Gaussian whose mask value is at least `threshold`.
    pub fn remove_gaussians(&self, mask3d: &[f64], threshold: f64) -> Result<GaussianScene> {
        if mask3d.len() != self.len() {
            return Err(Error::validation(format!(
                "3D mask has {} entries for {} Gaussians",
                mask3d.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (flag, &m) in out.active.iter_mut().zip(mask3d) {
            if m >= threshold {
                *flag = false;
            }
        }
        Ok(out)
    }

    /// Scene holding only the active Gaussians, plus the kept original indices.
    pub fn compact(&self) -> (GaussianScene, Vec<usize>) {
        let kept = self.active_indices();
        let gaussians = kept.iter().map(|&i| self.gaussians[i].clone()).collect();
        let scene = GaussianScene {
            gaussians,
            cameras: self.cameras.clone(),
            active: vec![true; kept.len()],
        };
        (scene, kept)
    }

    pub fn centers(&self) -> Vec<[f64; 3]> {
        self.gaussians
            .iter()
            .map(|g| [g.mean.x, g.mean.y, g.mean.z])
            .collect()
    }
}

/// Reads a 3DGS PLY and a camera registry.
pub fn load_scene(ply_path: &Path, cameras_path: &Path) -> Result<GaussianScene> {
    let gaussians = read_ply(ply_path)?;
    let cameras = load_cameras(cameras_path)?;
    GaussianScene::new(gaussians, cameras)
}

/// Writes the active Gaussians as a 3DGS PLY.
pub fn save_scene(scene: &GaussianScene, ply_path: &Path) -> Result<()> {
    let active: Vec<&Gaussian> = scene
        .gaussians
        .iter()
        .zip(&scene.active)
        .filter_map(|(g, &a)| a.then_some(g))
        .collect();
    write_ply(&active, ply_path)
}
