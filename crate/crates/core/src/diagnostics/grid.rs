//! Externally produced vorticity fields on a regular grid, and their
//! impulse profiles.
//!
//! On-disk format: a JSON header describing the box plus a raw binary file
//! of `3 * nx * ny * nz` little-endian 64-bit floats, component-major (the
//! full x-component block, then y, then z), x-fastest within each block.
//! Samples live at cell centers; `origin` is the low corner of the box.

use crate::error::{Error, Result};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::ImpulseProfile;

const COMPONENT_ORDER: &str = "x-fastest";
const SCALAR: &str = "f64-le";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    nx: usize,
    ny: usize,
    nz: usize,
    dx: f64,
    dy: f64,
    dz: f64,
    origin: [f64; 3],
    component_order: String,
    scalar: String,
}

/// Vorticity samples on a regular box grid.
#[derive(Debug, Clone)]
pub struct VorticityGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub origin: Vec3,
    /// Component-major scalar data: `omega[c * ncells + i + nx*(j + ny*k)]`.
    pub omega: Vec<f64>,
}

impl VorticityGrid {
    pub fn zeros(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        origin: Vec3,
    ) -> Result<Self> {
        let g = VorticityGrid {
            nx: dims.0,
            ny: dims.1,
            nz: dims.2,
            dx: spacing.0,
            dy: spacing.1,
            dz: spacing.2,
            origin,
            omega: vec![0.0; 3 * dims.0 * dims.1 * dims.2],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    fn scalar_index(&self, component: usize, i: usize, j: usize, k: usize) -> usize {
        component * self.cell_count() + i + self.nx * (j + self.ny * k)
    }

    /// Center of cell (i, j, k).
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                (i as f64 + 0.5) * self.dx,
                (j as f64 + 0.5) * self.dy,
                (k as f64 + 0.5) * self.dz,
            )
    }

    pub fn omega_at(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.omega[self.scalar_index(0, i, j, k)],
            self.omega[self.scalar_index(1, i, j, k)],
            self.omega[self.scalar_index(2, i, j, k)],
        )
    }

    pub fn set_omega(&mut self, i: usize, j: usize, k: usize, w: Vec3) {
        let ix = self.scalar_index(0, i, j, k);
        let iy = self.scalar_index(1, i, j, k);
        let iz = self.scalar_index(2, i, j, k);
        self.omega[ix] = w.x;
        self.omega[iy] = w.y;
        self.omega[iz] = w.z;
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Config(format!(
                "grid dims must be positive, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        for (name, d) in [("dx", self.dx), ("dy", self.dy), ("dz", self.dz)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("grid spacing {name} = {d} invalid")));
            }
        }
        if !self.origin.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        let want = 3 * self.cell_count();
        if self.omega.len() != want {
            return Err(Error::Config(format!(
                "field has {} scalars, dims need {want}",
                self.omega.len()
            )));
        }
        Ok(())
    }

    /// Write the JSON header and the raw component-major data file.
    pub fn store(&self, header_path: &Path, data_path: &Path) -> Result<()> {
        self.validate()?;
        let header = GridHeader {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            dx: self.dx,
            dy: self.dy,
            dz: self.dz,
            origin: [self.origin.x, self.origin.y, self.origin.z],
            component_order: COMPONENT_ORDER.into(),
            scalar: SCALAR.into(),
        };
        let mut text = serde_json::to_string_pretty(&header)?;
        text.push('\n');
        fs::write(header_path, text)?;
        let mut bytes = Vec::with_capacity(8 * self.omega.len());
        for v in &self.omega {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(data_path, bytes)?;
        Ok(())
    }

    pub fn load(header_path: &Path, data_path: &Path) -> Result<Self> {
        let header: GridHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
        if header.component_order != COMPONENT_ORDER {
            return Err(Error::Config(format!(
                "unsupported component order {:?}",
                header.component_order
            )));
        }
        if header.scalar != SCALAR {
            return Err(Error::Config(format!(
                "unsupported scalar encoding {:?}",
                header.scalar
            )));
        }
        let bytes = fs::read(data_path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Config(format!(
                "data file holds {} bytes, not a whole number of 64-bit floats",
                bytes.len()
            )));
        }
        let omega: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let g = VorticityGrid {
            nx: header.nx,
            ny: header.ny,
            nz: header.nz,
            dx: header.dx,
            dy: header.dy,
            dz: header.dz,
            origin: Vec3::new(header.origin[0], header.origin[1], header.origin[2]),
            omega,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Impulse profile of a vorticity field, binned into z-slabs of thickness
/// `dz`: per slab, `(1/2) sum x ^ omega dV` by the midpoint rule over the
/// cells whose center lies inside.
pub fn grid_impulse(g: &VorticityGrid, dz: f64) -> Result<ImpulseProfile> {
    g.validate()?;
    if !(dz >= g.dz) {
        return Err(Error::Config(format!(
            "slab thickness {dz} must not undercut the grid spacing {}",
            g.dz
        )));
    }
    let height = g.nz as f64 * g.dz;
    let bins = ((height / dz).ceil() as usize).max(1);
    let dv = g.cell_volume();
    let mut vectors = vec![Vec3::ZERO; bins];
    for k in 0..g.nz {
        let z_rel = (k as f64 + 0.5) * g.dz;
        let idx = ((z_rel / dz) as usize).min(bins - 1);
        let mut slab = Vec3::ZERO;
        for j in 0..g.ny {
            for i in 0..g.nx {
                slab += g.position(i, j, k).cross(g.omega_at(i, j, k));
            }
        }
        vectors[idx] += slab * (0.5 * dv);
    }
    let q = (0..bins).map(|m| g.origin.z + m as f64 * dz).collect();
    let moduli = vectors.iter().map(|v| v.norm()).collect();
    Ok(ImpulseProfile { q, vectors, moduli })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Gaussian-core vortex ring of radius `r0` and circulation `gamma`,
    /// axis along z through `center`, core width `core`.
    fn add_ring(g: &mut VorticityGrid, center: Vec3, r0: f64, gamma: f64, core: f64) {
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let p = g.position(i, j, k) - center;
                    let r = (p.x * p.x + p.y * p.y).sqrt();
                    if r < 1e-12 {
                        continue;
                    }
                    let d_sq = (r - r0) * (r - r0) + p.z * p.z;
                    let w = gamma * (-d_sq / (2.0 * core * core)).exp()
                        / (2.0 * PI * core * core);
                    // azimuthal direction in the ring plane
                    let phi = Vec3::new(-p.y / r, p.x / r, 0.0);
                    let prev = g.omega_at(i, j, k);
                    g.set_omega(i, j, k, prev + phi * w);
                }
            }
        }
    }

    fn ring_box(n: usize) -> VorticityGrid {
        let d = 2.0 / n as f64;
        VorticityGrid::zeros((n, n, n), (d, d, d), Vec3::new(-1.0, -1.0, -1.0)).unwrap()
    }

    #[test]
    fn thin_ring_impulse_matches_the_classical_value() {
        let mut g = ring_box(64);
        let (r0, gamma) = (0.5, 2.0);
        add_ring(&mut g, Vec3::ZERO, r0, gamma, 0.08);
        let profile = grid_impulse(&g, 2.0).unwrap();
        assert_eq!(profile.q.len(), 1);
        let expect = gamma * PI * r0 * r0;
        let rel = (profile.moduli[0] - expect).abs() / expect;
        assert!(rel < 0.05, "relative error {rel}");
        // impulse points along the ring axis
        let v = profile.vectors[0];
        assert!(v.z > 0.0 && v.x.abs() < 1e-10 && v.y.abs() < 1e-10);
    }

    #[test]
    fn zero_field_has_zero_profile() {
        let g = ring_box(16);
        let profile = grid_impulse(&g, 0.5).unwrap();
        assert_eq!(profile.q.len(), 4);
        for m in &profile.moduli {
            assert_eq!(*m, 0.0);
        }
    }

    #[test]
    fn mirror_rings_with_opposite_circulation_cancel() {
        let mut g = ring_box(48);
        add_ring(&mut g, Vec3::new(0.0, 0.0, 0.4), 0.45, 1.5, 0.09);
        add_ring(&mut g, Vec3::new(0.0, 0.0, -0.4), 0.45, -1.5, 0.09);
        let profile = grid_impulse(&g, 2.0).unwrap();
        assert!(profile.moduli[0] < 1e-10, "residual {}", profile.moduli[0]);
    }

    #[test]
    fn impulse_ignores_the_origin_for_closed_vorticity() {
        let mut a = ring_box(48);
        add_ring(&mut a, Vec3::ZERO, 0.5, 2.0, 0.09);
        let mut b = a.clone();
        b.origin = b.origin + Vec3::new(0.37, -0.21, 0.11);
        let fa = grid_impulse(&a, 2.0).unwrap().vectors[0];
        let fb = grid_impulse(&b, 2.0).unwrap().vectors[0];
        assert!(
            (fa - fb).norm() < 0.01 * fa.norm(),
            "moved by {}",
            (fa - fb).norm()
        );
    }

    #[test]
    fn slabs_partition_the_box() {
        let mut g = ring_box(32);
        add_ring(&mut g, Vec3::ZERO, 0.5, 2.0, 0.1);
        let whole = grid_impulse(&g, 2.0).unwrap().vectors[0];
        let sliced = grid_impulse(&g, 0.25).unwrap();
        assert_eq!(sliced.q.len(), 8);
        let sum = sliced.vectors.iter().copied().fold(Vec3::ZERO, |a, v| a + v);
        assert!((sum - whole).norm() < 1e-12);
    }

    #[test]
    fn grid_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut g =
            VorticityGrid::zeros((8, 6, 4), (0.1, 0.2, 0.3), Vec3::new(1.0, -2.0, 0.5)).unwrap();
        for (i, v) in g.omega.iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin();
        }
        let header = dir.path().join("field.json");
        let data = dir.path().join("field.raw");
        g.store(&header, &data).unwrap();
        let back = VorticityGrid::load(&header, &data).unwrap();
        assert_eq!(back.omega, g.omega);
        assert_eq!((back.nx, back.ny, back.nz), (8, 6, 4));
        assert_eq!(back.origin, g.origin);
    }

    #[test]
    fn malformed_grid_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = VorticityGrid::zeros((4, 4, 4), (0.1, 0.1, 0.1), Vec3::ZERO).unwrap();
        let header = dir.path().join("field.json");
        let data = dir.path().join("field.raw");
        g.store(&header, &data).unwrap();

        // truncated payload
        let bytes = std::fs::read(&data).unwrap();
        std::fs::write(&data, &bytes[..bytes.len() - 16]).unwrap();
        assert!(VorticityGrid::load(&header, &data).is_err());

        // unknown scalar encoding
        std::fs::write(&data, &bytes).unwrap();
        let text = std::fs::read_to_string(&header).unwrap().replace("f64-le", "f32-be");
        std::fs::write(&header, text).unwrap();
        assert!(VorticityGrid::load(&header, &data).is_err());

        // slabs thinner than the grid are refused
        assert!(grid_impulse(&g, 0.05).is_err());
    }
}
