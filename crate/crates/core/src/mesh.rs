//! Structured isoparametric hexahedral meshes of the unit cube.

use crate::quadrature::{QuadratureKind, QuadratureRule};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Amplitude of the sine deformation.
pub const SINE_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deformation {
    #[default]
    None,
    /// `x_i + eps * sin(pi x) sin(pi y) sin(pi z)` in every component; fixes
    /// the boundary of the cube.
    Sine,
}

impl Deformation {
    pub fn apply(self, x: [f64; 3]) -> [f64; 3] {
        match self {
            Deformation::None => x,
            Deformation::Sine => {
                let s = SINE_AMPLITUDE * x.iter().map(|&t| (PI * t).sin()).product::<f64>();
                [x[0] + s, x[1] + s, x[2] + s]
            }
        }
    }
}

impl fmt::Display for Deformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Deformation::None => "none",
            Deformation::Sine => "sine",
        })
    }
}

impl FromStr for Deformation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Deformation::None),
            "sine" => Ok(Deformation::Sine),
            other => Err(Error::InvalidConfig(format!("unknown deformation '{other}'"))),
        }
    }
}

/// Mesh of `nx * ny * nz` degree-`p` hexahedra covering `[0,1]^3`.
///
/// Nodes are numbered lexicographically over the global `(nx p + 1) x
/// (ny p + 1) x (nz p + 1)` lattice, x fastest. `coords` is a component-major
/// L-vector: all x coordinates, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct HexMesh {
    pub dims: [usize; 3],
    pub p: usize,
    pub n_l: usize,
    pub coords: Vec<f64>,
    pub boundary_nodes: Vec<usize>,
    pub deformation: Deformation,
}

impl HexMesh {
    pub fn new(dims: [usize; 3], p: usize, deformation: Deformation) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("element counts must be positive, got {dims:?}")));
        }
        if p == 0 {
            return Err(Error::InvalidConfig("mesh degree must be at least 1".into()));
        }
        let gll = QuadratureRule::new(QuadratureKind::GaussLobattoLegendre, p + 1)?.points;
        let lattice = dims.map(|n| n * p + 1);
        let n_l = lattice.iter().product();

        // 1D node positions per direction on [0, 1]
        let line: Vec<Vec<f64>> = (0..3)
            .map(|d| {
                (0..lattice[d])
                    .map(|i| {
                        let (e, a) = if i == lattice[d] - 1 { (dims[d] - 1, p) } else { (i / p, i % p) };
                        (e as f64 + 0.5 * (1.0 + gll[a])) / dims[d] as f64
                    })
                    .collect()
            })
            .collect();

        let mut coords = vec![0.0; 3 * n_l];
        let mut boundary_nodes = Vec::new();
        for k in 0..lattice[2] {
            for j in 0..lattice[1] {
                for i in 0..lattice[0] {
                    let node = i + lattice[0] * (j + lattice[1] * k);
                    let x = deformation.apply([line[0][i], line[1][j], line[2][k]]);
                    for c in 0..3 {
                        coords[c * n_l + node] = x[c];
                    }
                    let on_boundary = [i, j, k]
                        .iter()
                        .zip(&lattice)
                        .any(|(&idx, &len)| idx == 0 || idx == len - 1);
                    if on_boundary {
                        boundary_nodes.push(node);
                    }
                }
            }
        }
        Ok(Self {
            dims,
            p,
            n_l,
            coords,
            boundary_nodes,
            deformation,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.dims.iter().product()
    }

    /// Global node lattice extents.
    pub fn lattice(&self) -> [usize; 3] {
        self.dims.map(|n| n * self.p + 1)
    }

    pub fn elem_size(&self) -> usize {
        (self.p + 1).pow(3)
    }

    /// Logical element coordinates of element `e`.
    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [e % nx, (e / nx) % ny, e / (nx * ny)]
    }

    /// L-indices of the `(p+1)^3` nodes of element `e`, lexicographic with
    /// the local x index fastest.
    pub fn element_node_indices(&self, e: usize) -> Result<Vec<usize>> {
        let count = self.num_elements();
        if e >= count {
            return Err(Error::ElementOutOfRange { element: e, count });
        }
        let [ex, ey, ez] = self.element_ijk(e);
        let [lx, ly, _] = self.lattice();
        let p = self.p;
        let mut out = Vec::with_capacity(self.elem_size());
        for c in 0..=p {
            for b in 0..=p {
                for a in 0..=p {
                    out.push((ex * p + a) + lx * ((ey * p + b) + ly * (ez * p + c)));
                }
            }
        }
        Ok(out)
    }

    /// Number of nodes not on the boundary.
    pub fn interior_count(&self) -> usize {
        self.lattice().iter().map(|&n| n - 2).product()
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        [0, 1, 2].map(|c| self.coords[c * self.n_l + node])
    }
}

pub fn build_mesh(nx: usize, ny: usize, nz: usize, p: usize, deformation: Deformation) -> Result<HexMesh> {
    HexMesh::new([nx, ny, nz], p, deformation)
}
