//! Pinhole projection and homography algebra.
//!
//! A left-image pixel `q_l` and the right-image pixel `q_r` of the same world
//! point are related by `q_r ∝ K_r · M_r · M_l⁻¹ · K_l⁻¹ · q_l` up to the depth
//! ratio `d_l / d_r`, which is taken as 1. [`homography_from_params`] builds
//! that matrix; [`homography_induced_by_plane`] covers rigs with a baseline,
//! which a pure 3×3 `M` cannot express.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor};

const SINGULAR_TOL: f64 = 1e-12;

/// Sub-pixel image coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn is_singular(m: &Matrix3<f64>) -> bool {
    let scale = m.norm();
    scale == 0.0 || m.determinant().abs() <= SINGULAR_TOL * scale.powi(3)
}

fn invert(m: &Matrix3<f64>, what: &str) -> Result<Matrix3<f64>> {
    if is_singular(m) {
        return Err(Error::Singular(format!("{what} is not invertible")));
    }
    m.try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what} is not invertible")))
}

/// Intrinsic matrix `K`: focal lengths on the diagonal, principal point in the last column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics(Matrix3<f64>);

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::from_matrix(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(k: Matrix3<f64>) -> Result<Self> {
        if k[(2, 2)] != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "intrinsics must have K[2][2] = 1, got {}",
                k[(2, 2)]
            )));
        }
        invert(&k, "intrinsic matrix")?;
        Ok(Self(k))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn focal_x(&self) -> f64 {
        self.0[(0, 0)]
    }
}

/// Invertible 3×3 plane-mapping component of a camera's extrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose(Matrix3<f64>);

impl CameraPose {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        invert(&m, "pose matrix")?;
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Rotation by `angle` radians about the camera's vertical (y) axis.
pub fn rotation_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation by `angle` radians about the optical (z) axis.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Invertible 3×3 map from left-image to right-image homogeneous pixels.
///
/// Scale is fixed by `H[2][2] = 1` whenever `|H[2][2]| > 1e-9`; otherwise the
/// matrix is scaled to unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite homography entry".into()));
        }
        if is_singular(&m) {
            return Err(Error::Singular("homography".into()));
        }
        let z = m[(2, 2)];
        let scaled = if z.abs() > 1e-9 { m / z } else { m / m.norm() };
        Ok(Self(scaled))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Result<Homography> {
        Homography::new(invert(&self.0, "homography")?)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::new(self.0 * other.0)
    }

    /// Scale-free distance `‖A/‖A‖ ∓ B/‖B‖‖_F`, sign chosen to minimize it.
    pub fn relative_frobenius(&self, other: &Homography) -> f64 {
        let a = self.0 / self.0.norm();
        let b = other.0 / other.0.norm();
        (a - b).norm().min((a + b).norm())
    }

    /// Row-major entries.
    pub fn to_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    pub fn from_array(v: [f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(&v))
    }

    /// `[1, 1, 3, 3]` STEN-compatible tensor (values rounded to `f32`).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            Dims::new(1, 1, 3, 3),
            self.to_array().iter().map(|&v| v as f32).collect(),
        )
        .expect("homography entries are finite")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        t.require_dims(Dims::new(1, 1, 3, 3))?;
        let mut v = [0.0; 9];
        for (o, &x) in v.iter_mut().zip(t.data()) {
            *o = x as f64;
        }
        Self::from_array(v)
    }
}

/// Nine row-major numbers on one line, separated by single spaces.
impl fmt::Display for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_array().iter().map(|v| format!("{v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

impl FromStr for Homography {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad homography entry '{t}'")))
            })
            .collect::<Result<_>>()?;
        let arr: [f64; 9] = vals
            .try_into()
            .map_err(|v: Vec<f64>| Error::Format(format!("expected 9 numbers, got {}", v.len())))?;
        Self::from_array(arr)
    }
}

/// Left/right pixel pair of the same world point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub left: Pixel,
    pub right: Pixel,
}

/// Projects world point `q` seen at `depth`: `(1/depth) · K · M · q`, dehomogenized.
pub fn project_point(
    k: &CameraIntrinsics,
    m: &CameraPose,
    q: &Vector3<f64>,
    depth: f64,
) -> Result<Pixel> {
    if !(depth > 0.0) {
        return Err(Error::InvalidParameter(format!("depth must be > 0, got {depth}")));
    }
    let p = k.0 * m.0 * q / depth;
    if p.z.abs() <= 1e-12 {
        return Err(Error::PointAtInfinity { x: q.x, y: q.y });
    }
    Ok(Pixel::new(p.x / p.z, p.y / p.z))
}

/// `H = K_r · M_r · M_l⁻¹ · K_l⁻¹`.
pub fn homography_from_params(
    k_l: &CameraIntrinsics,
    m_l: &CameraPose,
    k_r: &CameraIntrinsics,
    m_r: &CameraPose,
) -> Result<Homography> {
    let m_l_inv = invert(&m_l.0, "left pose")?;
    let k_l_inv = invert(&k_l.0, "left intrinsics")?;
    Homography::new(k_r.0 * m_r.0 * m_l_inv * k_l_inv)
}

/// Unnormalized `K_r · (R − t·nᵀ/plane_depth) · K_l⁻¹`.
pub(crate) fn plane_homography_matrix(
    k_l: &CameraIntrinsics,
    k_r: &CameraIntrinsics,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    n: &Vector3<f64>,
    plane_depth: f64,
) -> Result<Matrix3<f64>> {
    if !(plane_depth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "plane depth must be > 0, got {plane_depth}"
        )));
    }
    if (n.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "plane normal must be unit length, |n| = {}",
            n.norm()
        )));
    }
    let k_l_inv = invert(&k_l.0, "left intrinsics")?;
    Ok(k_r.0 * (r - t * n.transpose() / plane_depth) * k_l_inv)
}

/// Homography induced by the plane `nᵀX = plane_depth` (left camera frame).
///
/// With `R = I`, `t` is the right camera centre in left-camera coordinates: a
/// baseline `t = (b, 0, 0)` shifts a fronto-parallel plane by `-f·b/plane_depth`
/// pixels.
pub fn homography_induced_by_plane(
    k_l: &CameraIntrinsics,
    k_r: &CameraIntrinsics,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    n: &Vector3<f64>,
    plane_depth: f64,
) -> Result<Homography> {
    Homography::new(plane_homography_matrix(k_l, k_r, r, t, n, plane_depth)?)
}

/// Maps a pixel through `h` and dehomogenizes.
pub fn apply_homography(h: &Homography, q: Pixel) -> Result<Pixel> {
    apply_matrix(&h.0, q)
}

pub(crate) fn apply_matrix(m: &Matrix3<f64>, q: Pixel) -> Result<Pixel> {
    let p = m * Vector3::new(q.x, q.y, 1.0);
    if p.z.abs() <= 1e-12 || !p.z.is_finite() {
        return Err(Error::PointAtInfinity { x: q.x, y: q.y });
    }
    Ok(Pixel::new(p.x / p.z, p.y / p.z))
}

/// Similarity transform moving the centroid to the origin and the mean
/// distance to √2.
fn hartley_normalizer(points: &[Pixel]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean_dist > 0.0) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn any_three_collinear(p: &[Pixel]) -> bool {
    let scale = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| a.distance(b)))
        .fold(0.0, f64::max);
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            for k in j + 1..p.len() {
                let area = (p[j].x - p[i].x) * (p[k].y - p[i].y) - (p[j].y - p[i].y) * (p[k].x - p[i].x);
                if area.abs() <= 1e-9 * scale * scale {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares direct linear transform with Hartley normalization.
pub fn fit_homography_dlt(cs: &[Correspondence]) -> Result<Homography> {
    if cs.len() < 4 {
        return Err(Error::Degenerate(format!(
            "need at least 4 correspondences, got {}",
            cs.len()
        )));
    }
    let left: Vec<Pixel> = cs.iter().map(|c| c.left).collect();
    let right: Vec<Pixel> = cs.iter().map(|c| c.right).collect();
    if left.iter().chain(&right).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidParameter("non-finite correspondence".into()));
    }
    if cs.len() == 4 && (any_three_collinear(&left) || any_three_collinear(&right)) {
        return Err(Error::Degenerate("three of the four points are collinear".into()));
    }
    let tl = hartley_normalizer(&left)?;
    let tr = hartley_normalizer(&right)?;

    // At least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * cs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (l, r)) in left.iter().zip(&right).enumerate() {
        let pl = tl * Vector3::new(l.x, l.y, 1.0);
        let pr = tr * Vector3::new(r.x, r.y, 1.0);
        let (x, y) = (pl.x / pl.z, pl.y / pl.z);
        let (u, v) = (pr.x / pr.z, pr.y / pr.z);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = |k: usize| svd.singular_values[order[k]];
    let (largest, second_smallest, smallest) = (s(0), s(7), s(8));
    if second_smallest - smallest <= 1e-9 * largest {
        return Err(Error::Degenerate(
            "solution is not unique (smallest singular values coincide)".into(),
        ));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tr_inv = invert(&tr, "normalizer")?;
    Homography::new(tr_inv * hn * tl)
}

/// Adds independent `N(0, sigma²)` noise to each of the 9 entries, without renormalizing.
///
/// Draws come from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`)
/// through `rand_distr::Normal`, which samples with the ziggurat method, in
/// row-major element order.
pub fn perturb_matrix(h: &Homography, sigma: f64, seed: u64) -> Result<Matrix3<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(h.0);
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = h.0;
    for r in 0..3 {
        for c in 0..3 {
            out[(r, c)] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// [`perturb_matrix`] followed by renormalization.
pub fn perturb_homography(h: &Homography, sigma: f64, seed: u64) -> Result<Homography> {
    Homography::new(perturb_matrix(h, sigma, seed)?)
}
