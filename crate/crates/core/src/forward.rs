//! Synthetic forward models.
//!
//! Leadfields come from a current dipole in an infinite homogeneous
//! conductor sampled on a spherical sensor layout, re-referenced to the
//! sensor average. [`synthetic_leadfield`] builds matrices with a prescribed
//! singular spectrum for conditioning studies, and [`perturb_geometry`]
//! models source mislocalization.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::random::{self, SimRng};

pub const HEAD_RADIUS: f64 = 0.09;
pub const DEFAULT_CONDUCTIVITY: f64 = 0.33;
pub const DEFAULT_SENSORS: usize = 128;
pub const DEFAULT_MAX_SHIFT: f64 = 0.005;
pub const DEFAULT_MAX_ANGLE: f64 = PI / 32.0;

/// Closest a source may get to a sensor.
pub const MIN_SENSOR_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error("source {source_index} lies within 1 mm of sensor {sensor}")]
    SourceOnSensor { source_index: usize, sensor: usize },

    #[error("source {0} lies outside the head")]
    SourceOutsideHead(usize),

    #[error("leadfield rank {rank} is below the source count {sources}")]
    DegenerateLeadfield { rank: usize, sources: usize },

    #[error("invalid singular spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("perturbed source {0} escapes the head")]
    PerturbationEscapesHead(usize),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

pub type Result<T> = std::result::Result<T, ForwardError>;

/// Positions (meters) and unit orientations of single-orientation dipoles.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceGeometry {
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Vec<Vector3<f64>>,
}

impl SourceGeometry {
    pub fn new(positions: Vec<Vector3<f64>>, orientations: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.len() != orientations.len() {
            return Err(ForwardError::InvalidGeometry(format!(
                "{} positions but {} orientations",
                positions.len(),
                orientations.len()
            )));
        }
        for (i, u) in orientations.iter().enumerate() {
            if (u.norm() - 1.0).abs() > 1e-10 {
                return Err(ForwardError::InvalidGeometry(format!("orientation {i} is not unit length")));
            }
        }
        for (i, r) in positions.iter().enumerate() {
            if r.norm() >= HEAD_RADIUS {
                return Err(ForwardError::SourceOutsideHead(i));
            }
        }
        Ok(Self { positions, orientations })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Random sources with radius uniform in `[r_min, r_max)` (meters),
    /// isotropic directions and isotropic orientations.
    pub fn sample_shell(count: usize, r_min: f64, r_max: f64, rng: &mut SimRng) -> Result<Self> {
        if !(0.0 <= r_min && r_min < r_max && r_max < HEAD_RADIUS) {
            return Err(ForwardError::InvalidGeometry(format!("bad shell [{r_min}, {r_max})")));
        }
        let mut positions = Vec::with_capacity(count);
        let mut orientations = Vec::with_capacity(count);
        for _ in 0..count {
            let radius = rng.random_range(r_min..r_max);
            positions.push(random_unit(rng) * radius);
            orientations.push(random_unit(rng));
        }
        Self::new(positions, orientations)
    }

    /// Concatenation of two geometries.
    pub fn concat(&self, other: &SourceGeometry) -> SourceGeometry {
        let mut out = self.clone();
        out.positions.extend_from_slice(&other.positions);
        out.orientations.extend_from_slice(&other.orientations);
        out
    }

    /// Sources `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> SourceGeometry {
        SourceGeometry {
            positions: self.positions[start..start + len].to_vec(),
            orientations: self.orientations[start..start + len].to_vec(),
        }
    }
}

fn random_unit(rng: &mut SimRng) -> Vector3<f64> {
    loop {
        let g = random::gaussian_matrix(3, 1, rng);
        let v = Vector3::new(g[0], g[1], g[2]);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Sensor positions on a sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    pub positions: Vec<Vector3<f64>>,
}

impl SensorArray {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        for (i, p) in positions.iter().enumerate() {
            if (p.norm() - HEAD_RADIUS).abs() > 1e-9 {
                return Err(ForwardError::InvalidGeometry(format!("sensor {i} is off the head sphere")));
            }
        }
        Ok(Self { positions })
    }

    /// `count` sensors on a Fibonacci lattice over the head sphere.
    pub fn fibonacci(count: usize) -> Self {
        let golden = PI * (3.0 - 5f64.sqrt());
        let positions = (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Vector3::new(rho * phi.cos(), rho * phi.sin(), z) * HEAD_RADIUS
            })
            .collect();
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Potential at `sensor` of a dipole with moment `moment` at `source` in an
/// infinite homogeneous conductor: `moment . d / (4 pi sigma |d|^3)` with `d = sensor - source`.
pub fn dipole_potential(source: &Vector3<f64>, moment: &Vector3<f64>, sensor: &Vector3<f64>, conductivity: f64) -> f64 {
    let d = sensor - source;
    let dist = d.norm();
    moment.dot(&d) / (4.0 * PI * conductivity * dist * dist * dist)
}

/// Leadfield matrix (`sensors x sources`), average referenced.
pub fn spherical_leadfield(geom: &SourceGeometry, sensors: &SensorArray, conductivity: f64) -> Result<Matrix> {
    if conductivity.is_nan() || conductivity <= 0.0 {
        return Err(ForwardError::InvalidGeometry(format!("conductivity must be positive, got {conductivity}")));
    }
    let (m, l) = (sensors.len(), geom.len());
    let mut lf = Matrix::zeros(m, l);
    for (j, (pos, u)) in geom.positions.iter().zip(&geom.orientations).enumerate() {
        if pos.norm() >= HEAD_RADIUS {
            return Err(ForwardError::SourceOutsideHead(j));
        }
        for (i, s) in sensors.positions.iter().enumerate() {
            if (s - pos).norm() < MIN_SENSOR_DISTANCE {
                return Err(ForwardError::SourceOnSensor { source_index: j, sensor: i });
            }
            lf[(i, j)] = dipole_potential(pos, u, s, conductivity);
        }
        let mean = lf.column(j).mean();
        lf.column_mut(j).add_scalar_mut(-mean);
    }
    if l > 0 {
        let rank = linalg::rank_check(&lf, linalg::RANK_REL_TOL);
        if rank < l {
            return Err(ForwardError::DegenerateLeadfield { rank, sources: l });
        }
    }
    Ok(lf)
}

/// `m x l` matrix `U diag(sigma) V^T` with random orthonormal `U`, `V`.
pub fn synthetic_leadfield(m: usize, l: usize, singular_values: &[f64], seed: u64) -> Result<Matrix> {
    if singular_values.len() != l {
        return Err(ForwardError::InvalidSpectrum(format!("expected {l} singular values, got {}", singular_values.len())));
    }
    if l == 0 || l > m {
        return Err(ForwardError::InvalidSpectrum(format!("need 1 <= l <= m, got l={l}, m={m}")));
    }
    if singular_values.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(ForwardError::InvalidSpectrum("singular values must be positive".into()));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return Err(ForwardError::InvalidSpectrum("singular values must be non-increasing".into()));
    }
    let mut rng = random::rng(seed);
    let u = random::orthonormal_columns(m, l, &mut rng);
    let v = random::orthonormal_columns(l, l, &mut rng);
    let mut us = u;
    for (j, &s) in singular_values.iter().enumerate() {
        us.column_mut(j).scale_mut(s);
    }
    Ok(us * v.transpose())
}

/// Shifts every source by an independent uniform offset in
/// `(-max_shift, max_shift)` per axis and rotates its orientation by an
/// angle uniform in `[0, max_angle)` about a random axis.
pub fn perturb_geometry(geom: &SourceGeometry, max_shift: f64, max_angle: f64, seed: u64) -> Result<SourceGeometry> {
    if !(max_shift >= 0.0 && max_angle >= 0.0) {
        return Err(ForwardError::InvalidGeometry("perturbation bounds must be non-negative".into()));
    }
    let mut rng = random::rng(seed);
    let mut positions = Vec::with_capacity(geom.len());
    let mut orientations = Vec::with_capacity(geom.len());
    for (i, (pos, u)) in geom.positions.iter().zip(&geom.orientations).enumerate() {
        let shift = Vector3::from_fn(|_, _| uniform_symmetric(&mut rng, max_shift));
        let moved = pos + shift;
        if moved.norm() >= HEAD_RADIUS {
            return Err(ForwardError::PerturbationEscapesHead(i));
        }
        positions.push(moved);
        if max_angle > 0.0 {
            let angle = rng.random_range(0.0..max_angle);
            let axis = Unit::new_normalize(random_unit(&mut rng));
            orientations.push((Rotation3::from_axis_angle(&axis, angle) * u).normalize());
        } else {
            orientations.push(*u);
        }
    }
    Ok(SourceGeometry { positions, orientations })
}

fn uniform_symmetric(rng: &mut SimRng, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..bound)
    } else {
        0.0
    }
}

/// JSON interchange form of a source geometry and its sensor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryRecord {
    pub positions: Vec<[f64; 3]>,
    pub orientations: Vec<[f64; 3]>,
    pub sensors: Vec<[f64; 3]>,
}

impl GeometryRecord {
    pub fn from_parts(geom: &SourceGeometry, sensors: &SensorArray) -> Self {
        let arr = |v: &Vector3<f64>| [v.x, v.y, v.z];
        Self {
            positions: geom.positions.iter().map(arr).collect(),
            orientations: geom.orientations.iter().map(arr).collect(),
            sensors: sensors.positions.iter().map(arr).collect(),
        }
    }

    pub fn into_parts(self) -> Result<(SourceGeometry, SensorArray)> {
        let vec = |a: [f64; 3]| Vector3::new(a[0], a[1], a[2]);
        let geom = SourceGeometry::new(
            self.positions.into_iter().map(vec).collect(),
            self.orientations.into_iter().map(vec).collect(),
        )?;
        let sensors = SensorArray::new(self.sensors.into_iter().map(vec).collect())?;
        Ok((geom, sensors))
    }
}
