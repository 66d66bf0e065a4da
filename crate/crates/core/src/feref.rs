//! Axisymmetric finite-element reference solver.
//!
//! Bilinear quadrilaterals on a tensor grid nested inside the finite-volume
//! grid (every cell split `refine x refine`). All integrals use the measure
//! `r dr dx` per radian, so the system is symmetric and the r = 0 axis is a
//! natural boundary. Conductivity sits inside the element integrals; boundary
//! terms are the plain film integrals. The mass matrix is row-sum lumped.
//! Time stepping is backward Euler with the input held over each step.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{config, Error, Result};
use crate::fvnet::{BoundaryConditions, BoundarySpec, Region};
use crate::lti::{input_vectors, InputChannel};
use crate::mesh::{FacetNormal, FvMesh, SensorSite};
use crate::timeseries::TimeSeries;

const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

#[derive(Debug, Clone, PartialEq)]
pub struct FeElement {
    pub ix: usize,
    pub ir: usize,
    /// Finite-volume cell the element refines; supplies the material.
    pub cell: usize,
    /// Corner nodes counter-clockwise from (x_lo, r_lo).
    pub nodes: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    /// Finite-volume facet containing the edge; supplies the boundary condition.
    pub facet: usize,
    pub normal: FacetNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeMesh {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub refine: usize,
    pub elements: Vec<FeElement>,
    pub edges: Vec<BoundaryEdge>,
    /// Indices into `edges`.
    pub gamma1: Vec<usize>,
    pub gamma2: Vec<Vec<usize>>,
    element_at: Vec<Option<usize>>,
}

impl FeMesh {
    pub fn n_nodes(&self) -> usize {
        self.x.len() * self.r.len()
    }

    pub fn node(&self, ix: usize, ir: usize) -> usize {
        ix * self.r.len() + ir
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        (self.x[node / self.r.len()], self.r[node % self.r.len()])
    }

    fn element(&self, ex: usize, er: usize) -> Option<usize> {
        self.element_at[ex * (self.r.len() - 1) + er]
    }

    /// Bilinear interpolation weights at `(x, r)`.
    pub fn probe(&self, label: &str, x: f64, r: f64) -> Result<FeProbe> {
        let (nx, nr) = (self.x.len() - 1, self.r.len() - 1);
        let inside = |v: f64, grid: &[f64]| v >= grid[0] && v <= grid[grid.len() - 1];
        if !inside(x, &self.x) || !inside(r, &self.r) {
            return Err(config(format!("probe {label} at ({x}, {r}) lies outside the mesh")));
        }
        let ex = self.x.partition_point(|&v| v <= x).saturating_sub(1).min(nx - 1);
        let er = self.r.partition_point(|&v| v <= r).saturating_sub(1).min(nr - 1);
        let e = self
            .element(ex, er)
            .ok_or_else(|| config(format!("probe {label} lies outside the meshed region")))?;
        let el = &self.elements[e];
        let s = (x - self.x[ex]) / (self.x[ex + 1] - self.x[ex]);
        let t = (r - self.r[er]) / (self.r[er + 1] - self.r[er]);
        let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
        Ok(FeProbe {
            label: label.to_string(),
            weights: el.nodes.iter().copied().zip(w).filter(|p| p.1 != 0.0).collect(),
        })
    }

    pub fn sensor_probes(&self, sensors: &[SensorSite]) -> Result<Vec<FeProbe>> {
        sensors.iter().map(|s| self.probe(&s.label, s.x, s.r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeProbe {
    pub label: String,
    pub weights: Vec<(usize, f64)>,
}

impl FeProbe {
    pub fn eval(&self, t: &DVector<f64>) -> f64 {
        self.weights.iter().map(|&(n, w)| w * t[n]).sum()
    }
}

fn subdivide(edges: &[f64], refine: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((edges.len() - 1) * refine + 1);
    for w in edges.windows(2) {
        for k in 0..refine {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / refine as f64);
        }
    }
    out.push(edges[edges.len() - 1]);
    out
}

/// Refine every finite-volume cell of `region` into `refine x refine` elements.
pub fn build_fe_mesh(fv: &FvMesh, region: &Region, refine: usize) -> Result<FeMesh> {
    if refine == 0 {
        return Err(config("fe refinement factor must be >= 1"));
    }
    let x = subdivide(&fv.axial_edges, refine);
    let r = subdivide(&fv.radial_edges, refine);
    let (nx, nr) = (x.len() - 1, r.len() - 1);
    let n_nodes_r = r.len();
    let node = |ix: usize, ir: usize| ix * n_nodes_r + ir;

    let mut element_at = vec![None; nx * nr];
    let mut elements = Vec::new();
    for ex in 0..nx {
        for er in 0..nr {
            let cell = fv.cell_index(ex / refine, er / refine);
            if !region.contains(fv.cells[cell].zone()) {
                continue;
            }
            element_at[ex * nr + er] = Some(elements.len());
            elements.push(FeElement {
                ix: ex,
                ir: er,
                cell,
                nodes: [node(ex, er), node(ex + 1, er), node(ex + 1, er + 1), node(ex, er + 1)],
            });
        }
    }
    let present = |ex: isize, er: isize| {
        ex >= 0 && er >= 0 && (ex as usize) < nx && (er as usize) < nr && element_at[ex as usize * nr + er as usize].is_some()
    };

    let mut edges = Vec::new();
    for el in &elements {
        let (ex, er) = (el.ix as isize, el.ir as isize);
        let (cx, cr) = (el.ix / refine, el.ir / refine);
        if er > 0 && !present(ex, er - 1) {
            edges.push(BoundaryEdge {
                nodes: [el.nodes[0], el.nodes[1]],
                facet: fv.radial_facet(cr, cx),
                normal: FacetNormal::Radial,
            });
        }
        if !present(ex, er + 1) {
            edges.push(BoundaryEdge {
                nodes: [el.nodes[3], el.nodes[2]],
                facet: fv.radial_facet(cr + 1, cx),
                normal: FacetNormal::Radial,
            });
        }
        if !present(ex - 1, er) {
            edges.push(BoundaryEdge {
                nodes: [el.nodes[0], el.nodes[3]],
                facet: fv.axial_facet(cx, cr),
                normal: FacetNormal::Axial,
            });
        }
        if !present(ex + 1, er) {
            edges.push(BoundaryEdge {
                nodes: [el.nodes[1], el.nodes[2]],
                facet: fv.axial_facet(cx + 1, cr),
                normal: FacetNormal::Axial,
            });
        }
    }
    let in_set = |set: &[usize]| -> Vec<usize> {
        edges
            .iter()
            .enumerate()
            .filter(|(_, e)| set.contains(&e.facet))
            .map(|(i, _)| i)
            .collect()
    };
    let gamma1 = in_set(&fv.boundary.gamma1);
    let gamma2 = fv.boundary.gamma2.iter().map(|s| in_set(s)).collect();
    Ok(FeMesh {
        x,
        r,
        refine,
        elements,
        edges,
        gamma1,
        gamma2,
        element_at,
    })
}

/// Semi-discrete operators `M T' + K T = F u` before time discretization.
#[derive(Debug, Clone)]
pub struct FeOperators {
    /// Lumped heat capacity per node [J/K per radian].
    pub mass: DVector<f64>,
    /// Conduction plus film terms.
    pub stiffness: CscMatrix<f64>,
    /// Input-to-load map, nodes x channels.
    pub load: DMatrix<f64>,
    /// Nodes fixed to a temperature channel.
    pub pinned: Vec<(usize, usize)>,
    pub channels: Vec<InputChannel>,
    /// Nodes touched by at least one element.
    pub active: Vec<bool>,
}

struct EdgeGeom {
    /// `int N_a N_b r ds` and `int N_a r ds`.
    nn: [[f64; 2]; 2],
    n: [f64; 2],
}

fn edge_integrals(mesh: &FeMesh, edge: &BoundaryEdge) -> EdgeGeom {
    let (xa, ra) = mesh.node_coords(edge.nodes[0]);
    let (xb, rb) = mesh.node_coords(edge.nodes[1]);
    let half = 0.5 * ((xb - xa).powi(2) + (rb - ra).powi(2)).sqrt();
    let mut g = EdgeGeom {
        nn: [[0.0; 2]; 2],
        n: [0.0; 2],
    };
    for t in GAUSS {
        let shape = [0.5 * (1.0 - t), 0.5 * (1.0 + t)];
        let w = half * (shape[0] * ra + shape[1] * rb);
        for a in 0..2 {
            g.n[a] += shape[a] * w;
            for b in 0..2 {
                g.nn[a][b] += shape[a] * shape[b] * w;
            }
        }
    }
    g
}

/// Element stiffness `int lambda grad N_a . grad N_b r dA` and lumped mass
/// `int rho c N_a r dA`, plus `int N_a r dA` for volumetric sources.
fn element_matrices(mesh: &FeMesh, el: &FeElement, lambda: f64, rho_c: f64) -> ([[f64; 4]; 4], [f64; 4], [f64; 4]) {
    let (x0, x1) = (mesh.x[el.ix], mesh.x[el.ix + 1]);
    let (r0, r1) = (mesh.r[el.ir], mesh.r[el.ir + 1]);
    let (hx, hr) = (x1 - x0, r1 - r0);
    let sx = [-1.0, 1.0, 1.0, -1.0];
    let sr = [-1.0, -1.0, 1.0, 1.0];
    let mut k = [[0.0; 4]; 4];
    let mut m = [0.0; 4];
    let mut v = [0.0; 4];
    for xi in GAUSS {
        for eta in GAUSS {
            let r = 0.5 * (r0 + r1) + 0.5 * hr * eta;
            let w = 0.25 * hx * hr * r;
            let mut n = [0.0; 4];
            let mut dx = [0.0; 4];
            let mut dr = [0.0; 4];
            for a in 0..4 {
                n[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sr[a] * eta);
                dx[a] = 0.25 * sx[a] * (1.0 + sr[a] * eta) * 2.0 / hx;
                dr[a] = 0.25 * (1.0 + sx[a] * xi) * sr[a] * 2.0 / hr;
            }
            for a in 0..4 {
                m[a] += rho_c * n[a] * w;
                v[a] += n[a] * w;
                for b in 0..4 {
                    k[a][b] += lambda * (dx[a] * dx[b] + dr[a] * dr[b]) * w;
                }
            }
        }
    }
    (k, m, v)
}

pub fn assemble_operators(fv: &FvMesh, mesh: &FeMesh, bcs: &BoundaryConditions) -> Result<FeOperators> {
    let n = mesh.n_nodes();
    let m = bcs.channels().len();
    let mut active = vec![false; n];
    let mut mass = DVector::zeros(n);
    let mut load = DMatrix::zeros(n, m);
    let mut triplets: HashMap<(usize, usize), f64> = HashMap::new();

    let sources: HashMap<usize, Vec<usize>> = bcs.cell_sources().iter().fold(HashMap::new(), |mut acc, (c, ch)| {
        acc.entry(*c)
            .or_default()
            .push(bcs.channel_index(ch).expect("registered"));
        acc
    });
    for el in &mesh.elements {
        let cell = &fv.cells[el.cell];
        let mat = &cell.material;
        let (k, mm, v) = element_matrices(mesh, el, mat.conductivity, mat.volumetric_heat_capacity());
        for a in 0..4 {
            active[el.nodes[a]] = true;
            mass[el.nodes[a]] += mm[a];
            for b in 0..4 {
                *triplets.entry((el.nodes[a], el.nodes[b])).or_default() += k[a][b];
            }
        }
        if let Some(chs) = sources.get(&el.cell) {
            // total source [W] spread over the cell volume per radian
            let per_radian_volume = cell.volume() / std::f64::consts::TAU;
            for &ch in chs {
                for a in 0..4 {
                    load[(el.nodes[a], ch)] += v[a] / per_radian_volume;
                }
            }
        }
    }

    let specs: HashMap<usize, &BoundarySpec> = bcs.specs().iter().map(|(f, s)| (*f, s)).collect();
    let ch = |label: &str| bcs.channel_index(label).expect("registered by set()");
    let mut pinned: HashMap<usize, usize> = HashMap::new();
    for edge in &mesh.edges {
        let spec = specs.get(&edge.facet).ok_or_else(|| {
            Error::Assembly(format!("facet {}: no boundary condition for the fe edge", edge.facet))
        })?;
        let g = edge_integrals(mesh, edge);
        let mut robin = |alpha: f64, channel: usize| {
            for a in 0..2 {
                load[(edge.nodes[a], channel)] += alpha * g.n[a];
                for b in 0..2 {
                    *triplets.entry((edge.nodes[a], edge.nodes[b])).or_default() += alpha * g.nn[a][b];
                }
            }
        };
        match spec {
            BoundarySpec::Dirichlet { channel } => {
                let k = ch(channel);
                for &node in &edge.nodes {
                    if let Some(prev) = pinned.insert(node, k) {
                        if prev != k {
                            return Err(Error::Assembly(format!(
                                "fe node {node}: conflicting Dirichlet channels at a corner"
                            )));
                        }
                    }
                }
            }
            BoundarySpec::Neumann { channel: None } => {}
            BoundarySpec::Neumann { channel: Some(c) } => {
                let k = ch(c);
                let facet_area = fv.facets[edge.facet].area / std::f64::consts::TAU;
                for a in 0..2 {
                    load[(edge.nodes[a], k)] += g.n[a] / facet_area;
                }
            }
            BoundarySpec::Robin { alpha, ambient } => robin(*alpha, ch(ambient)),
            BoundarySpec::HeatingTape {
                alpha,
                alpha_ht,
                ambient,
                tape,
            } => {
                robin(*alpha, ch(ambient));
                robin(*alpha_ht, ch(tape));
            }
            BoundarySpec::Radiation { .. } => {
                return Err(Error::Assembly(format!(
                    "facet {}: radiation is nonlinear and cannot be assembled",
                    edge.facet
                )))
            }
        }
    }

    let mut coo = CooMatrix::new(n, n);
    let mut entries: Vec<_> = triplets.into_iter().collect();
    entries.sort_by_key(|e| e.0);
    for ((i, j), v) in entries {
        coo.push(i, j, v);
    }
    let mut pinned: Vec<(usize, usize)> = pinned.into_iter().collect();
    pinned.sort_unstable();
    Ok(FeOperators {
        mass,
        stiffness: CscMatrix::from(&coo),
        load,
        pinned,
        channels: bcs.channels().to_vec(),
        active,
    })
}

/// Free/pinned split of the active nodes and the reduced system
/// `S_ff T_f = rhs - S_fp T_p` for a given diagonal shift.
struct Reduced {
    free: Vec<usize>,
    chol: CscCholesky<f64>,
    /// Effective load on the free nodes including the pinned-node lift.
    load: DMatrix<f64>,
}

fn reduce(ops: &FeOperators, shift: Option<&DVector<f64>>) -> Result<Reduced> {
    let n = ops.mass.len();
    let pinned_ch: HashMap<usize, usize> = ops.pinned.iter().copied().collect();
    let free: Vec<usize> = (0..n).filter(|&i| ops.active[i] && !pinned_ch.contains_key(&i)).collect();
    if free.is_empty() {
        return Err(Error::Assembly("fe system has no free nodes".into()));
    }
    let mut index = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        index[i] = k;
    }
    let nf = free.len();
    let mut coo = CooMatrix::new(nf, nf);
    let mut load = DMatrix::zeros(nf, ops.load.ncols());
    for (k, &i) in free.iter().enumerate() {
        load.set_row(k, &ops.load.row(i));
        if let Some(s) = shift {
            coo.push(k, k, s[i]);
        }
    }
    for (i, j, &v) in ops.stiffness.triplet_iter() {
        let fi = index[i];
        if fi == usize::MAX {
            continue;
        }
        if index[j] != usize::MAX {
            coo.push(fi, index[j], v);
        } else if let Some(&c) = pinned_ch.get(&j) {
            load[(fi, c)] -= v;
        }
    }
    let chol = CscCholesky::factor(&CscMatrix::from(&coo))
        .map_err(|e| Error::Assembly(format!("singular fe system ({e:?}); check boundary conditions")))?;
    Ok(Reduced { free, chol, load })
}

impl Reduced {
    fn solve(&self, rhs: DVector<f64>) -> DVector<f64> {
        let mut b = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        self.chol.solve_mut(&mut b);
        b.column(0).into_owned()
    }
}

fn apply_pinned(ops: &FeOperators, t: &mut DVector<f64>, u: &DVector<f64>) {
    for &(node, c) in &ops.pinned {
        t[node] = u[c];
    }
}

/// Steady state `K T = F u` with pinned nodes at their channel values.
pub fn fe_steady_state(ops: &FeOperators, u: &DVector<f64>) -> Result<DVector<f64>> {
    let red = reduce(ops, None)?;
    let sol = red.solve(&red.load * u);
    let mut t = DVector::from_element(ops.mass.len(), f64::NAN);
    for (k, &i) in red.free.iter().enumerate() {
        t[i] = sol[k];
    }
    apply_pinned(ops, &mut t, u);
    Ok(t)
}

/// Backward-Euler stepper `(M/dt + K) T_{k+1} = M/dt T_k + F u_k`.
pub struct FeSystem {
    pub ops: FeOperators,
    pub dt: f64,
    red: Reduced,
}

pub fn assemble_variational(fv: &FvMesh, mesh: &FeMesh, bcs: &BoundaryConditions, dt: f64) -> Result<FeSystem> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(config(format!("fe time step must be positive, got {dt}")));
    }
    let ops = assemble_operators(fv, mesh, bcs)?;
    let shift = &ops.mass / dt;
    let red = reduce(&ops, Some(&shift))?;
    Ok(FeSystem { ops, dt, red })
}

impl FeSystem {
    pub fn input_labels(&self) -> Vec<String> {
        self.ops.channels.iter().map(|c| c.label.clone()).collect()
    }

    /// Uniform nodal field (inactive nodes NaN).
    pub fn uniform_state(&self, value: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.ops.active.len(),
            self.ops.active.iter().map(|&a| if a { value } else { f64::NAN }),
        )
    }

    pub fn step(&self, t: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut rhs = &self.red.load * u;
        for (k, &i) in self.red.free.iter().enumerate() {
            rhs[k] += self.ops.mass[i] / self.dt * t[i];
        }
        let sol = self.red.solve(rhs);
        let mut next = t.clone();
        for (k, &i) in self.red.free.iter().enumerate() {
            next[i] = sol[k];
        }
        apply_pinned(&self.ops, &mut next, u);
        next
    }
}

/// March the FE model over the samples of `u` and report the probes; the
/// first row is the initial field.
pub fn fe_simulate(sys: &FeSystem, x0: &DVector<f64>, u: &TimeSeries, probes: &[FeProbe]) -> Result<TimeSeries> {
    if x0.len() != sys.ops.mass.len() {
        return Err(config(format!(
            "initial fe field has {} entries, mesh has {} nodes",
            x0.len(),
            sys.ops.mass.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::Data("input series is empty".into()));
    }
    if u.time().windows(2).any(|w| ((w[1] - w[0]) - sys.dt).abs() > 1e-6 * sys.dt) {
        return Err(config(format!(
            "input series is not sampled at the fe step dt = {} s",
            sys.dt
        )));
    }
    let inputs = input_vectors(&sys.input_labels(), u)?;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(u.len()); probes.len()];
    let mut t = x0.clone();
    for (k, uk) in inputs.iter().enumerate() {
        for (c, p) in cols.iter_mut().zip(probes) {
            c.push(p.eval(&t));
        }
        if k + 1 < inputs.len() {
            t = sys.step(&t, uk);
        }
    }
    let mut out = TimeSeries::new(u.time().to_vec())?;
    for (p, c) in probes.iter().zip(cols) {
        out.push_channel(&p.label, c)?;
    }
    Ok(out)
}
