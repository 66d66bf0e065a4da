//! Axisymmetric tensor-product grid of ring-shaped finite volumes.
//!
//! Cells are numbered row-major with the axial index running fastest and
//! rings ordered from the axis outwards, i.e. `index = ir * n_axial + ix`.
//! Zone interfaces (`r_c`, `d1/2`) always coincide with cell faces so every
//! cell carries exactly one material.

mod geometry;

pub use geometry::{ExtruderGeometry, HeatingTape, MaterialZone, Materials, SensorSite, ZoneKind};

use std::f64::consts::PI;

use crate::error::{config, Result};

/// Grid resolution and optional explicit edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n_axial: usize,
    pub n_radial: usize,
    /// Overrides the uniform axial spacing; must span `[0, L]`.
    pub axial_edges: Option<Vec<f64>>,
    /// Overrides the zone-proportional radial spacing; must start at 0, end at
    /// `d2/2` and contain `r_c` and `d1/2`.
    pub radial_edges: Option<Vec<f64>>,
    /// Move the nearest uniform axial edge onto each heating-tape boundary.
    pub snap_to_tapes: bool,
}

impl GridSpec {
    pub fn uniform(n_axial: usize, n_radial: usize) -> Self {
        Self {
            n_axial,
            n_radial,
            axial_edges: None,
            radial_edges: None,
            snap_to_tapes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvCell {
    pub index: usize,
    pub ix: usize,
    pub ir: usize,
    pub x_center: f64,
    pub delta_x: f64,
    /// Mid-radius of the ring, `(r_in + r_out) / 2`.
    pub r_center: f64,
    pub delta_r: f64,
    pub material: MaterialZone,
    pub is_disk: bool,
}

impl FvCell {
    pub fn zone(&self) -> ZoneKind {
        self.material.kind
    }

    pub fn r_inner(&self) -> f64 {
        self.r_center - 0.5 * self.delta_r
    }

    pub fn r_outer(&self) -> f64 {
        self.r_center + 0.5 * self.delta_r
    }

    /// `V = 2 pi r dr dx`, which equals the exact ring volume for the mid-radius.
    pub fn volume(&self) -> f64 {
        2.0 * PI * self.r_center * self.delta_r * self.delta_x
    }

    /// Thermal capacitance `C = V rho c_p` [J/K].
    pub fn capacitance(&self) -> f64 {
        self.volume() * self.material.volumetric_heat_capacity()
    }
}

/// Direction of a facet's normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetNormal {
    /// Plane `x = const` (end faces and axial neighbours).
    Axial,
    /// Cylinder `r = const` (radial neighbours and the outer skin).
    Radial,
}

/// Cell face shared by two cells or by one cell and the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub index: usize,
    pub normal: FacetNormal,
    /// Coordinate of the plane (x for axial facets, r for radial ones).
    pub position: f64,
    /// Extent in the other coordinate.
    pub span: (f64, f64),
    pub area: f64,
    /// Cell on the low-coordinate side, if any.
    pub low: Option<usize>,
    /// Cell on the high-coordinate side, if any.
    pub high: Option<usize>,
}

impl Facet {
    pub fn is_exterior(&self) -> bool {
        self.low.is_none() || self.high.is_none()
    }

    pub fn span_mid(&self) -> f64 {
        0.5 * (self.span.0 + self.span.1)
    }

    /// The cell on the other side of `cell`, if this is an interior facet.
    pub fn neighbour_of(&self, cell: usize) -> Option<usize> {
        match (self.low, self.high) {
            (Some(a), Some(b)) if a == cell => Some(b),
            (Some(a), Some(b)) if b == cell => Some(a),
            _ => None,
        }
    }
}

/// Nearest-cell mapping of a thermocouple, with the offset from the cell centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorCell {
    pub label: String,
    pub cell: usize,
    pub offset_x: f64,
    pub offset_r: f64,
    /// True when the offset exceeds half the cell size in either direction.
    pub coarse: bool,
}

/// Boundary facet sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundarySets {
    /// Ambient-exposed facets of the cylinder zone.
    pub gamma1: Vec<usize>,
    /// Outer facets under each heating tape, indexed like `geometry.heating_tapes`.
    pub gamma2: Vec<Vec<usize>>,
    /// Cylinder/granulate cut surface: facets at `r = d1/2` plus the end faces of the screw region.
    pub gamma3: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvMesh {
    pub axial_edges: Vec<f64>,
    pub radial_edges: Vec<f64>,
    pub cells: Vec<FvCell>,
    pub facets: Vec<Facet>,
    pub boundary: BoundarySets,
    /// First ring index of the screw conveyor and cylinder zones.
    pub conveyor_ring: usize,
    pub cylinder_ring: usize,
}

impl FvMesh {
    pub fn n_axial(&self) -> usize {
        self.axial_edges.len() - 1
    }

    pub fn n_radial(&self) -> usize {
        self.radial_edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_index(&self, ix: usize, ir: usize) -> usize {
        ir * self.n_axial() + ix
    }

    pub fn cell(&self, ix: usize, ir: usize) -> &FvCell {
        &self.cells[self.cell_index(ix, ir)]
    }

    /// Index of the axial-normal facet at edge `j` (0..=n_a) in ring `ir`.
    pub fn axial_facet(&self, j: usize, ir: usize) -> usize {
        ir * (self.n_axial() + 1) + j
    }

    /// Index of the radial-normal facet at radial edge `k` (1..=n_r) over axial cell `ix`.
    pub fn radial_facet(&self, k: usize, ix: usize) -> usize {
        self.n_radial() * (self.n_axial() + 1) + (k - 1) * self.n_axial() + ix
    }

    pub fn zone_rings(&self, kind: ZoneKind) -> std::ops::Range<usize> {
        match kind {
            ZoneKind::ScrewCore => 0..self.conveyor_ring,
            ZoneKind::ScrewConveyor => self.conveyor_ring..self.cylinder_ring,
            ZoneKind::Cylinder => self.cylinder_ring..self.n_radial(),
        }
    }

    /// Cell indices belonging to `kind`, in mesh order.
    pub fn zone_cells(&self, kind: ZoneKind) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.zone() == kind)
            .map(|c| c.index)
            .collect()
    }

    /// Facets bordering `cell` in port order: axial-low, axial-high, outward,
    /// inward. Disk cells have no inward facet.
    pub fn cell_facets(&self, cell: usize) -> [Option<usize>; 4] {
        let c = &self.cells[cell];
        [
            Some(self.axial_facet(c.ix, c.ir)),
            Some(self.axial_facet(c.ix + 1, c.ir)),
            Some(self.radial_facet(c.ir + 1, c.ix)),
            if c.ir == 0 { None } else { Some(self.radial_facet(c.ir, c.ix)) },
        ]
    }

    pub fn exterior_facets(&self) -> Vec<usize> {
        self.facets.iter().filter(|f| f.is_exterior()).map(|f| f.index).collect()
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(FvCell::volume).sum()
    }

    /// Map each sensor to the cell whose centre is nearest in both coordinates.
    pub fn locate_sensors(&self, sensors: &[SensorSite]) -> Vec<SensorCell> {
        sensors
            .iter()
            .map(|s| {
                let ix = nearest_center(&self.axial_edges, s.x);
                let ir = nearest_center(&self.radial_edges, s.r);
                let c = self.cell(ix, ir);
                let offset_x = s.x - c.x_center;
                let offset_r = s.r - c.r_center;
                let coarse = offset_x.abs() > 0.5 * c.delta_x + 1e-12 || offset_r.abs() > 0.5 * c.delta_r + 1e-12;
                if coarse {
                    log::warn!(
                        "sensor {} is {:.3e} m / {:.3e} m away from the nearest cell centre; refine the grid",
                        s.label,
                        offset_x,
                        offset_r
                    );
                }
                SensorCell {
                    label: s.label.clone(),
                    cell: c.index,
                    offset_x,
                    offset_r,
                    coarse,
                }
            })
            .collect()
    }
}

fn nearest_center(edges: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in edges.windows(2).enumerate() {
        let d = (0.5 * (w[0] + w[1]) - v).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Build the ring-cell grid with `n_a` uniform axial cells and `n_r` radial
/// cells placed zone-proportionally.
pub fn build_mesh(geometry: &ExtruderGeometry, materials: &Materials, n_a: usize, n_r: usize) -> Result<FvMesh> {
    build_mesh_with(geometry, materials, &GridSpec::uniform(n_a, n_r))
}

pub fn build_mesh_with(geometry: &ExtruderGeometry, materials: &Materials, grid: &GridSpec) -> Result<FvMesh> {
    geometry.validate()?;
    materials.validate()?;

    let axial_edges = match &grid.axial_edges {
        Some(edges) => {
            check_edges("grid.axial_edges", edges, 0.0, geometry.length)?;
            edges.clone()
        }
        None => {
            if grid.n_axial < 1 {
                return Err(config("grid.n_a must be >= 1"));
            }
            let mut edges = uniform_edges(0.0, geometry.length, grid.n_axial);
            if grid.snap_to_tapes {
                snap_edges(&mut edges, geometry)?;
            }
            edges
        }
    };

    let rc = geometry.core_radius;
    let r1 = geometry.inner_radius();
    let r2 = geometry.outer_radius();
    let radial_edges = match &grid.radial_edges {
        Some(edges) => {
            check_edges("grid.radial_edges", edges, 0.0, r2)?;
            if edges.len() < 4 {
                return Err(config("grid.radial_edges: need at least one cell per zone"));
            }
            for (name, r) in [("r_c", rc), ("d1/2", r1)] {
                if !edges.iter().any(|e| (e - r).abs() <= 1e-12 * r2) {
                    return Err(config(format!("grid.radial_edges must contain {name} = {r}")));
                }
            }
            edges.clone()
        }
        None => zone_radial_edges(rc, r1, r2, grid.n_radial)?,
    };

    let conveyor_ring = ring_of_edge(&radial_edges, rc);
    let cylinder_ring = ring_of_edge(&radial_edges, r1);
    let n_a = axial_edges.len() - 1;
    let n_r = radial_edges.len() - 1;

    let mut cells = Vec::with_capacity(n_a * n_r);
    for ir in 0..n_r {
        let kind = if ir < conveyor_ring {
            ZoneKind::ScrewCore
        } else if ir < cylinder_ring {
            ZoneKind::ScrewConveyor
        } else {
            ZoneKind::Cylinder
        };
        let (r_in, r_out) = (radial_edges[ir], radial_edges[ir + 1]);
        for ix in 0..n_a {
            let (x_lo, x_hi) = (axial_edges[ix], axial_edges[ix + 1]);
            cells.push(FvCell {
                index: ir * n_a + ix,
                ix,
                ir,
                x_center: 0.5 * (x_lo + x_hi),
                delta_x: x_hi - x_lo,
                r_center: 0.5 * (r_in + r_out),
                delta_r: r_out - r_in,
                material: *materials.get(kind),
                is_disk: ir == 0,
            });
        }
    }

    let mut facets = Vec::with_capacity(n_r * (n_a + 1) + n_r * n_a);
    for ir in 0..n_r {
        let (r_in, r_out) = (radial_edges[ir], radial_edges[ir + 1]);
        for (j, &x) in axial_edges.iter().enumerate() {
            facets.push(Facet {
                index: facets.len(),
                normal: FacetNormal::Axial,
                position: x,
                span: (r_in, r_out),
                area: PI * (r_out * r_out - r_in * r_in),
                low: (j > 0).then(|| ir * n_a + j - 1),
                high: (j < n_a).then(|| ir * n_a + j),
            });
        }
    }
    for k in 1..=n_r {
        let r = radial_edges[k];
        for ix in 0..n_a {
            let (x_lo, x_hi) = (axial_edges[ix], axial_edges[ix + 1]);
            facets.push(Facet {
                index: facets.len(),
                normal: FacetNormal::Radial,
                position: r,
                span: (x_lo, x_hi),
                area: 2.0 * PI * r * (x_hi - x_lo),
                low: Some((k - 1) * n_a + ix),
                high: (k < n_r).then(|| k * n_a + ix),
            });
        }
    }

    let mut mesh = FvMesh {
        axial_edges,
        radial_edges,
        cells,
        facets,
        boundary: BoundarySets::default(),
        conveyor_ring,
        cylinder_ring,
    };
    mesh.boundary = classify_boundary(&mesh, geometry);
    Ok(mesh)
}

/// Sort the boundary facets into ambient (Γ1), per-tape (Γ2) and cut-surface (Γ3) sets.
///
/// An outer facet belongs to tape `j` iff its axial midpoint lies inside the
/// tape's interval; all other outer facets and the cylinder end faces are Γ1.
pub fn classify_boundary(mesh: &FvMesh, geometry: &ExtruderGeometry) -> BoundarySets {
    let n_a = mesh.n_axial();
    let n_r = mesh.n_radial();
    let mut sets = BoundarySets {
        gamma1: Vec::new(),
        gamma2: vec![Vec::new(); geometry.heating_tapes.len()],
        gamma3: Vec::new(),
    };

    for ix in 0..n_a {
        let f = &mesh.facets[mesh.radial_facet(n_r, ix)];
        let mid = f.span_mid();
        match geometry
            .heating_tapes
            .iter()
            .position(|t| t.start <= mid && mid <= t.end)
        {
            Some(tape) => sets.gamma2[tape].push(f.index),
            None => sets.gamma1.push(f.index),
        }
    }
    for ir in mesh.cylinder_ring..n_r {
        sets.gamma1.push(mesh.axial_facet(0, ir));
        sets.gamma1.push(mesh.axial_facet(n_a, ir));
    }

    for ix in 0..n_a {
        sets.gamma3.push(mesh.radial_facet(mesh.cylinder_ring, ix));
    }
    for ir in 0..mesh.cylinder_ring {
        sets.gamma3.push(mesh.axial_facet(0, ir));
        sets.gamma3.push(mesh.axial_facet(n_a, ir));
    }

    sets.gamma1.sort_unstable();
    sets.gamma3.sort_unstable();
    sets
}

fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    edges[n] = hi;
    edges
}

fn check_edges(name: &str, edges: &[f64], lo: f64, hi: f64) -> Result<()> {
    if edges.len() < 2 {
        return Err(config(format!("{name}: need at least two edges")));
    }
    let tol = 1e-12 * hi.abs().max(1.0);
    if (edges[0] - lo).abs() > tol || (edges[edges.len() - 1] - hi).abs() > tol {
        return Err(config(format!("{name}: must span [{lo}, {hi}]")));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config(format!("{name}: edges must be strictly increasing")));
    }
    Ok(())
}

fn ring_of_edge(edges: &[f64], r: f64) -> usize {
    edges
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - r).abs().total_cmp(&(b.1 - r).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Radial edges with `r_c` and `d1/2` on cell faces and the `n_r` rings
/// shared between the zones in proportion to their thickness (largest
/// remainder, at least one ring per zone), uniform inside each zone.
fn zone_radial_edges(rc: f64, r1: f64, r2: f64, n_r: usize) -> Result<Vec<f64>> {
    if n_r < 3 {
        return Err(config(format!(
            "grid.n_r = {n_r}: need at least 3 radial cells to place the zone boundaries r_c and d1/2 on cell faces"
        )));
    }
    let bounds = [0.0, rc, r1, r2];
    let widths: Vec<f64> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
    let counts = allocate_rings(&widths, n_r);
    let mut edges = vec![0.0];
    for z in 0..3 {
        let seg = uniform_edges(bounds[z], bounds[z + 1], counts[z]);
        edges.extend_from_slice(&seg[1..]);
    }
    Ok(edges)
}

fn allocate_rings(widths: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = widths.iter().sum();
    let quotas: Vec<f64> = widths.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
    loop {
        let assigned: usize = counts.iter().sum();
        if assigned == n {
            break;
        }
        if assigned < n {
            // zone with the largest unmet quota
            let z = (0..counts.len())
                .max_by(|&a, &b| (quotas[a] - counts[a] as f64).total_cmp(&(quotas[b] - counts[b] as f64)))
                .unwrap();
            counts[z] += 1;
        } else {
            let z = (0..counts.len())
                .filter(|&z| counts[z] > 1)
                .min_by(|&a, &b| (quotas[a] - counts[a] as f64).total_cmp(&(quotas[b] - counts[b] as f64)))
                .unwrap();
            counts[z] -= 1;
        }
    }
    counts
}

fn snap_edges(edges: &mut [f64], geometry: &ExtruderGeometry) -> Result<()> {
    let n = edges.len() - 1;
    let mut targets: Vec<f64> = geometry
        .heating_tapes
        .iter()
        .flat_map(|t| [t.start, t.end])
        .filter(|&b| b > 0.0 && b < geometry.length)
        .collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut used = vec![false; n + 1];
    for b in targets {
        let j = (1..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &c| (edges[a] - b).abs().total_cmp(&(edges[c] - b).abs()));
        if let Some(j) = j {
            edges[j] = b;
            used[j] = true;
        }
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config(
            "grid.snap_to_tapes: too few axial cells to resolve every heating-tape boundary",
        ));
    }
    Ok(())
}
