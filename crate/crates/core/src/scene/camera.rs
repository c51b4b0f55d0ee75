//! Pinhole cameras and the JSON camera registry.
//!
//! Cameras follow the OpenCV convention: x right, y down, z forward. Pixel
//! `(px, py)` has its center at `(px + 0.5, py + 0.5)` in the same
//! coordinate frame as the principal point, so `cx = width / 2` is the
//! geometric image center.
//!
//! The registry file is a JSON array of objects
//! `{id, width, height, fx, fy, cx, cy, world_to_camera}` where
//! `world_to_camera` holds 16 floats in row-major order. COLMAP or NeRF
//! `transforms.json` poses convert by inverting camera-to-world and, for
//! NeRF, flipping the y and z camera axes.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: Matrix4<f64>,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: String,
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    world_to_camera: Vec<f64>,
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` roughly opposite the
    /// image y axis.
    pub fn look_at(
        id: impl Into<String>,
        width: usize,
        height: usize,
        focal: f64,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
    ) -> Camera {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye.coords);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Camera {
            id: id.into(),
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            world_to_camera: m,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation().transpose() * self.translation()))
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation() * p.coords + self.translation()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation(format!(
                "camera {:?}: width and height must be positive",
                self.id
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::validation(format!(
                "camera {:?}: invalid intrinsics",
                self.id
            )));
        }
        if self.world_to_camera.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "camera {:?}: non-finite pose",
                self.id
            )));
        }
        let r = self.rotation();
        let gram = r * r.transpose();
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if ortho_err > 1e-5 || (det - 1.0).abs() > 1e-5 {
            return Err(Error::validation(format!(
                "camera {:?}: rotation is not orthonormal with det +1 (err {ortho_err:.2e}, det {det:.6})",
                self.id
            )));
        }
        let bottom = self.world_to_camera.fixed_view::<1, 4>(3, 0);
        if (bottom[0].abs() + bottom[1].abs() + bottom[2].abs() + (bottom[3] - 1.0).abs()) > 1e-9 {
            return Err(Error::validation(format!(
                "camera {:?}: last row of world_to_camera must be (0, 0, 0, 1)",
                self.id
            )));
        }
        Ok(())
    }

    fn from_record(rec: CameraRecord) -> Result<Camera> {
        if rec.world_to_camera.len() != 16 {
            return Err(Error::format(
                "cameras",
                format!(
                    "camera {:?}: world_to_camera has {} entries, expected 16",
                    rec.id,
                    rec.world_to_camera.len()
                ),
            ));
        }
        let cam = Camera {
            id: rec.id,
            width: rec.width,
            height: rec.height,
            fx: rec.fx,
            fy: rec.fy,
            cx: rec.cx,
            cy: rec.cy,
            world_to_camera: Matrix4::from_row_slice(&rec.world_to_camera),
        };
        cam.validate()?;
        Ok(cam)
    }

    fn to_record(&self) -> CameraRecord {
        let mut m = Vec::with_capacity(16);
        for r in 0..4 {
            for c in 0..4 {
                m.push(self.world_to_camera[(r, c)]);
            }
        }
        CameraRecord {
            id: self.id.clone(),
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            world_to_camera: m,
        }
    }
}

pub fn parse_cameras(json: &str) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> =
        serde_json::from_str(json).map_err(|e| Error::format("cameras", e.to_string()))?;
    let cams = records
        .into_iter()
        .map(Camera::from_record)
        .collect::<Result<Vec<_>>>()?;
    check_unique_ids(&cams)?;
    Ok(cams)
}

pub fn cameras_to_json(cams: &[Camera]) -> String {
    let records: Vec<CameraRecord> = cams.iter().map(Camera::to_record).collect();
    serde_json::to_string_pretty(&records).expect("camera records serialize")
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

pub fn save_cameras(cams: &[Camera], path: &Path) -> Result<()> {
    std::fs::write(path, cameras_to_json(cams)).map_err(|e| Error::io(path, e))
}

pub(crate) fn check_unique_ids(cams: &[Camera]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in cams {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::validation(format!("duplicate camera id {:?}", c.id)));
        }
    }
    Ok(())
}
