//! Pinhole camera model.

use crate::error::{Error, Result};
use crate::math::{Ray, Vec3};
use crate::render::EncodedImage;

/// Rigid camera-to-world transform. The camera looks along its +z axis with
/// +x to the right in the image and +y up in camera space.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Camera-to-world rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// Camera position in world space.
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let cols: [Vec3; 3] = [
            Vec3::new(r[0][0], r[1][0], r[2][0]),
            Vec3::new(r[0][1], r[1][1], r[2][1]),
            Vec3::new(r[0][2], r[1][2], r[2][2]),
        ];
        for i in 0..3 {
            for j in 0..3 {
                let dot = cols[i].dot(cols[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "camera rotation is not orthonormal (col {i} . col {j} = {dot})"
                    )));
                }
            }
        }
        let det = cols[0].cross(cols[1]).dot(cols[2]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "camera rotation must be a proper rotation, det = {det}"
            )));
        }
        if !self.translation.x.is_finite()
            || !self.translation.y.is_finite()
            || !self.translation.z.is_finite()
        {
            return Err(Error::Config("camera translation must be finite".into()));
        }
        Ok(())
    }

    /// Apply the rotation to a camera-space vector.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
}

/// Pose looking from `eye` toward `target` with the given up hint.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Pose> {
    let forward = (target - eye).normalized();
    let right = up.cross(forward);
    if right.norm() < 1e-9 {
        return Err(Error::Config(
            "look_at: view direction parallel to up vector".into(),
        ));
    }
    let right = right.normalized();
    let cam_up = forward.cross(right);
    Ok(Pose {
        rotation: [
            [right.x, cam_up.x, forward.x],
            [right.y, cam_up.y, forward.y],
            [right.z, cam_up.z, forward.z],
        ],
        translation: eye,
    })
}

/// Pinhole camera: intrinsics in pixels, camera-to-world pose, and an
/// optional goal image for optimization.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels (square pixels assumed).
    pub focal: f64,
    /// Principal point in pixels.
    pub cx: f64,
    pub cy: f64,
    pub pose: Pose,
    pub goal: Option<EncodedImage>,
}

impl CameraView {
    pub fn new(width: u32, height: u32, focal: f64, cx: f64, cy: f64, pose: Pose) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if focal <= 0.0 {
            return Err(Error::Config(format!(
                "focal length must be positive, got {focal}"
            )));
        }
        pose.validate()?;
        Ok(CameraView {
            width,
            height,
            focal,
            cx,
            cy,
            pose,
            goal: None,
        })
    }

    pub fn with_goal(mut self, goal: EncodedImage) -> Result<Self> {
        if goal.width != self.width || goal.height != self.height {
            return Err(Error::Shape(format!(
                "goal image {}x{} does not match view {}x{}",
                goal.width, goal.height, self.width, self.height
            )));
        }
        self.goal = Some(goal);
        Ok(self)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// World-space ray through the center of pixel (x, y).
pub fn generate_ray(view: &CameraView, x: u32, y: u32) -> Result<Ray> {
    if x >= view.width || y >= view.height {
        return Err(Error::Index(format!(
            "pixel ({x},{y}) outside {}x{} image",
            view.width, view.height
        )));
    }
    let px = x as f64 + 0.5;
    let py = y as f64 + 0.5;
    // Image rows grow downward while camera-space y points up.
    let dir_cam = Vec3::new(
        (px - view.cx) / view.focal,
        (view.cy - py) / view.focal,
        1.0,
    );
    Ok(Ray {
        origin: view.pose.translation,
        direction: view.pose.rotate(dir_cam).normalized(),
    })
}

/// Camera on a horizontal orbit around `target`: azimuth 0 places it on the
/// -z axis looking toward +z, 90 degrees on the +x side.
pub fn orbit_view(
    width: u32,
    height: u32,
    focal: f64,
    target: Vec3,
    distance: f64,
    azimuth_deg: f64,
) -> Result<CameraView> {
    let az = azimuth_deg.to_radians();
    let eye = target + Vec3::new(-distance * az.sin(), 0.0, -distance * az.cos());
    let pose = look_at(eye, target, Vec3::new(0.0, 1.0, 0.0))?;
    CameraView::new(
        width,
        height,
        focal,
        width as f64 * 0.5,
        height as f64 * 0.5,
        pose,
    )
}
