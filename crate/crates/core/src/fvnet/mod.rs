//! Finite-volume RC network and its reduction to a linear state-space model.
//!
//! Every cell has four ports (axial-low, axial-high, outward, inward). Each
//! facet is a junction node whose temperature is an algebraic variable: it
//! is tied to the adjacent cell centres through half-cell resistances and to
//! boundary sources through film conductances. Eliminating the junction
//! temperatures one facet at a time leaves `x' = A x + B u`.

mod extruder;

pub use extruder::{
    ambient_facets, build_extruder_model, extruder_conditions, extruder_probes, zone_channel, AmbientAlpha,
    ExtruderModel, ExtruderSpec, HeatTransfer, ProbeSelection, ScrewEnd,
};

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::{ChannelKind, InputChannel, LtiModel, OutputChannel, OutputKind, ZonePartition};
use crate::mesh::{FvCell, FvMesh, SensorCell, ZoneKind};

/// Port order used by [`CellRc`] and [`cell_balance`].
pub const AXIAL_LOW: usize = 0;
pub const AXIAL_HIGH: usize = 1;
pub const OUTWARD: usize = 2;
pub const INWARD: usize = 3;

/// Capacitance and centre-to-centre resistances of one ring cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRc {
    /// `C = V rho c_p` [J/K].
    pub capacitance: f64,
    /// Resistances through the axial-low, axial-high, outward and inward
    /// ports [K/W]; the inward one is infinite for disk cells.
    pub resistance: [f64; 4],
    /// Port areas [m^2]; the inward area is zero for disk cells.
    pub area: [f64; 4],
}

impl CellRc {
    /// Resistance from the cell centre to the face of `port` (half the
    /// centre-to-centre value).
    pub fn half_resistance(&self, port: usize) -> f64 {
        0.5 * self.resistance[port]
    }

    pub fn half_conductance(&self, port: usize) -> f64 {
        let r = self.half_resistance(port);
        if r.is_finite() {
            1.0 / r
        } else {
            0.0
        }
    }
}

pub fn cell_rc(cell: &FvCell) -> CellRc {
    let m = &cell.material;
    let (r, dr, dx, lambda) = (cell.r_center, cell.delta_r, cell.delta_x, m.conductivity);
    let a_axial = 2.0 * r * dr * PI;
    let a_out = 2.0 * PI * (r + 0.5 * dr) * dx;
    let a_in = if cell.is_disk { 0.0 } else { 2.0 * PI * (r - 0.5 * dr) * dx };
    let r_axial = dx / (a_axial * lambda);
    let r_in = if cell.is_disk { f64::INFINITY } else { dr / (a_in * lambda) };
    CellRc {
        capacitance: cell.capacitance(),
        resistance: [r_axial, r_axial, dr / (a_out * lambda), r_in],
        area: [a_axial, a_axial, a_out, a_in],
    }
}

/// Four-port energy balance `dT/dt = sum_s (T_s - T) / (R_s C)`.
///
/// Ports with infinite resistance are skipped, so the inward neighbour of a
/// disk cell may be passed as `NaN`.
pub fn cell_balance(rc: &CellRc, t: f64, neighbours: [f64; 4]) -> f64 {
    let flow: f64 = rc
        .resistance
        .iter()
        .zip(neighbours)
        .filter(|(r, _)| r.is_finite())
        .map(|(r, ts)| (ts - t) / r)
        .sum();
    flow / rc.capacitance
}

/// Boundary condition attached to one exterior facet. Coefficients are per
/// unit area and get multiplied by the facet area during assembly.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    /// Facet temperature equals the named temperature channel.
    Dirichlet { channel: String },
    /// Heat flow into the region through the facet equals the named channel
    /// [W]; `None` is an adiabatic facet.
    Neumann { channel: Option<String> },
    /// Film transfer to the ambient channel, `q = alpha A (T_f - T_0)` leaving the region.
    Robin { alpha: f64, ambient: String },
    /// Facet under a heating tape:
    /// `q = alpha A (T_f - T_0) + alpha_ht A (T_f - T_h)` leaving the region.
    HeatingTape {
        alpha: f64,
        alpha_ht: f64,
        ambient: String,
        tape: String,
    },
    /// Radiative loss `q = alpha T_f^4`. Not linear; assembly rejects it.
    Radiation { alpha: f64 },
}

impl BoundarySpec {
    fn name(&self) -> &'static str {
        match self {
            BoundarySpec::Dirichlet { .. } => "dirichlet",
            BoundarySpec::Neumann { .. } => "neumann",
            BoundarySpec::Robin { .. } => "robin",
            BoundarySpec::HeatingTape { .. } => "heating_tape",
            BoundarySpec::Radiation { .. } => "radiation",
        }
    }

    fn channels(&self) -> Vec<(&str, ChannelKind)> {
        match self {
            BoundarySpec::Dirichlet { channel } => vec![(channel, ChannelKind::Temperature)],
            BoundarySpec::Neumann { channel } => channel
                .iter()
                .map(|c| (c.as_str(), ChannelKind::HeatFlow))
                .collect(),
            BoundarySpec::Robin { ambient, .. } => vec![(ambient, ChannelKind::Temperature)],
            BoundarySpec::HeatingTape { ambient, tape, .. } => {
                vec![(ambient, ChannelKind::Temperature), (tape, ChannelKind::Temperature)]
            }
            BoundarySpec::Radiation { .. } => vec![],
        }
    }
}

/// Boundary specs per facet, heat sources per cell, and the ordered input channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryConditions {
    channels: Vec<InputChannel>,
    specs: Vec<(usize, BoundarySpec)>,
    sources: Vec<(usize, String)>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn channels(&self) -> &[InputChannel] {
        &self.channels
    }

    pub fn specs(&self) -> &[(usize, BoundarySpec)] {
        &self.specs
    }

    pub fn cell_sources(&self) -> &[(usize, String)] {
        &self.sources
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
    }

    /// Register a channel (idempotent); fixes its position in the input vector.
    pub fn add_channel(&mut self, label: &str, kind: ChannelKind) -> Result<usize> {
        if let Some(i) = self.channel_index(label) {
            if self.channels[i].kind != kind {
                return Err(Error::Assembly(format!(
                    "channel {label} used both as temperature and as heat-flow source"
                )));
            }
            return Ok(i);
        }
        self.channels.push(InputChannel {
            label: label.to_string(),
            kind,
        });
        Ok(self.channels.len() - 1)
    }

    pub fn set(&mut self, facet: usize, spec: BoundarySpec) -> Result<()> {
        for (label, kind) in spec.channels() {
            self.add_channel(label, kind)?;
        }
        let coeffs_ok = match &spec {
            BoundarySpec::Robin { alpha, .. } | BoundarySpec::Radiation { alpha } => *alpha >= 0.0,
            BoundarySpec::HeatingTape { alpha, alpha_ht, .. } => *alpha >= 0.0 && *alpha_ht >= 0.0,
            _ => true,
        };
        if !coeffs_ok {
            return Err(Error::Assembly(format!(
                "facet {facet}: heat transfer coefficients must be >= 0"
            )));
        }
        self.specs.push((facet, spec));
        Ok(())
    }

    /// Heat flow [W] injected straight into `cell` by a heat-flow channel.
    pub fn add_cell_source(&mut self, cell: usize, channel: &str) -> Result<()> {
        self.add_channel(channel, ChannelKind::HeatFlow)?;
        self.sources.push((cell, channel.to_string()));
        Ok(())
    }
}

/// Set of cells that make up the assembled model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    Full,
    Zones(Vec<ZoneKind>),
}

impl Region {
    pub fn cylinder() -> Self {
        Region::Zones(vec![ZoneKind::Cylinder])
    }

    pub fn contains(&self, zone: ZoneKind) -> bool {
        match self {
            Region::Full => true,
            Region::Zones(z) => z.contains(&zone),
        }
    }

    fn active(&self, mesh: &FvMesh, cell: Option<usize>) -> Option<usize> {
        cell.filter(|&c| self.contains(mesh.cells[c].zone()))
    }

    /// Active cell on each side of `facet` (low, high).
    pub fn sides(&self, mesh: &FvMesh, facet: usize) -> (Option<usize>, Option<usize>) {
        let f = &mesh.facets[facet];
        (self.active(mesh, f.low), self.active(mesh, f.high))
    }

    /// Facets with exactly one active side.
    pub fn exterior_facets(&self, mesh: &FvMesh) -> Vec<usize> {
        (0..mesh.facets.len())
            .filter(|&f| matches!(self.sides(mesh, f), (Some(_), None) | (None, Some(_))))
            .collect()
    }
}

/// Linear combination of cell temperatures (by mesh cell index) and input channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub cells: Vec<(usize, f64)>,
    pub inputs: Vec<(usize, f64)>,
}

impl Affine {
    pub fn eval(&self, cell_temps: &[f64], u: &[f64]) -> f64 {
        self.cells.iter().map(|&(c, w)| w * cell_temps[c]).sum::<f64>()
            + self.inputs.iter().map(|&(k, w)| w * u[k]).sum::<f64>()
    }

    fn scaled(&self, s: f64) -> Affine {
        Affine {
            cells: self.cells.iter().map(|&(c, w)| (c, w * s)).collect(),
            inputs: self.inputs.iter().map(|&(k, w)| (k, w * s)).collect(),
        }
    }

    fn add_cell(&mut self, cell: usize, w: f64) {
        self.cells.push((cell, w));
    }

    fn add_input(&mut self, k: usize, w: f64) {
        self.inputs.push((k, w));
    }
}

/// Algebraic node of one facet.
///
/// The facet temperature follows from the flow balance over all attached
/// conductances: `sum G_c (T_c - T_f) + sum g_k (u_k - T_f) + q = 0`, unless a
/// Dirichlet channel pins it.
#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub facet: usize,
    /// (cell, conductance from the cell centre to the facet) [W/K].
    pub cells: Vec<(usize, f64)>,
    /// (channel, film conductance from the source to the facet) [W/K].
    pub sources: Vec<(usize, f64)>,
    /// Dirichlet channel fixing the facet temperature.
    pub pinned: Option<usize>,
    /// Heat-flow channel injected into the facet node [W].
    pub injected: Option<usize>,
}

impl Junction {
    fn new(facet: usize) -> Self {
        Self {
            facet,
            cells: Vec::new(),
            sources: Vec::new(),
            pinned: None,
            injected: None,
        }
    }

    /// Facet temperature as an affine function of cell temperatures and inputs.
    pub fn facet_temperature(&self) -> Result<Affine> {
        let mut t = Affine::default();
        if let Some(k) = self.pinned {
            t.add_input(k, 1.0);
            return Ok(t);
        }
        let total: f64 = self.cells.iter().map(|c| c.1).sum::<f64>() + self.sources.iter().map(|s| s.1).sum::<f64>();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Assembly(format!(
                "facet {}: singular junction (no finite resistance attached)",
                self.facet
            )));
        }
        for &(c, g) in &self.cells {
            t.add_cell(c, g / total);
        }
        for &(k, g) in &self.sources {
            t.add_input(k, g / total);
        }
        if let Some(k) = self.injected {
            t.add_input(k, 1.0 / total);
        }
        Ok(t)
    }

    /// Heat flow through the facet into `cell`, `G (T_f - T_cell)` [W].
    pub fn flow_into_cell(&self, cell: usize) -> Result<Affine> {
        let g = self
            .cells
            .iter()
            .find(|c| c.0 == cell)
            .map(|c| c.1)
            .ok_or_else(|| Error::Assembly(format!("cell {cell} is not attached to facet {}", self.facet)))?;
        if self.pinned.is_some() {
            let mut flow = self.facet_temperature()?.scaled(g);
            flow.add_cell(cell, -g);
            return Ok(flow);
        }
        let t = self.facet_temperature()?;
        // self-coefficient from the remaining conductances, avoiding g - g^2/total
        let others: f64 = self.cells.iter().filter(|c| c.0 != cell).map(|c| c.1).sum::<f64>()
            + self.sources.iter().map(|s| s.1).sum::<f64>();
        let total = others + g;
        let mut flow = Affine::default();
        for &(c, w) in &t.cells {
            if c != cell {
                flow.add_cell(c, g * w);
            }
        }
        flow.add_cell(cell, -g * others / total);
        for &(k, w) in &t.inputs {
            flow.add_input(k, g * w);
        }
        Ok(flow)
    }

    /// Heat flow delivered by temperature source `channel`, `g (u - T_f)` [W].
    pub fn flow_from_source(&self, channel: usize) -> Result<Affine> {
        let g: f64 = self.sources.iter().filter(|s| s.0 == channel).map(|s| s.1).sum();
        let mut flow = self.facet_temperature()?.scaled(-g);
        flow.add_input(channel, g);
        Ok(flow)
    }
}

fn port_of_facet(mesh: &FvMesh, cell: usize, facet: usize) -> usize {
    mesh.cell_facets(cell)
        .iter()
        .position(|f| *f == Some(facet))
        .expect("facet borders cell")
}

fn half_conductance(mesh: &FvMesh, rcs: &[CellRc], cell: usize, facet: usize) -> f64 {
    rcs[cell].half_conductance(port_of_facet(mesh, cell, facet))
}

/// Port equations between neighbouring active cells: one series junction per
/// interior facet of the region.
pub fn interconnect(mesh: &FvMesh, region: &Region) -> Vec<Junction> {
    let rcs: Vec<CellRc> = mesh.cells.iter().map(cell_rc).collect();
    interconnect_with(mesh, region, &rcs)
}

fn interconnect_with(mesh: &FvMesh, region: &Region, rcs: &[CellRc]) -> Vec<Junction> {
    (0..mesh.facets.len())
        .filter_map(|f| match region.sides(mesh, f) {
            (Some(a), Some(b)) => {
                let mut j = Junction::new(f);
                j.cells.push((a, half_conductance(mesh, rcs, a, f)));
                j.cells.push((b, half_conductance(mesh, rcs, b, f)));
                Some(j)
            }
            _ => None,
        })
        .collect()
}

/// Boundary junctions for every exterior facet of the region.
pub fn apply_boundary(mesh: &FvMesh, region: &Region, bcs: &BoundaryConditions) -> Result<Vec<Junction>> {
    let rcs: Vec<CellRc> = mesh.cells.iter().map(cell_rc).collect();
    apply_boundary_with(mesh, region, bcs, &rcs)
}

fn apply_boundary_with(
    mesh: &FvMesh,
    region: &Region,
    bcs: &BoundaryConditions,
    rcs: &[CellRc],
) -> Result<Vec<Junction>> {
    let exterior = region.exterior_facets(mesh);
    let mut by_facet: HashMap<usize, &BoundarySpec> = HashMap::new();
    for (facet, spec) in &bcs.specs {
        if *facet >= mesh.facets.len() {
            return Err(Error::Assembly(format!("boundary spec on unknown facet {facet}")));
        }
        if let Some(prev) = by_facet.insert(*facet, spec) {
            return Err(Error::Assembly(format!(
                "facet {facet}: conflicting boundary conditions ({} and {})",
                prev.name(),
                spec.name()
            )));
        }
        if exterior.binary_search(facet).is_err() {
            return Err(Error::Assembly(format!(
                "facet {facet} is not on the boundary of the assembled region"
            )));
        }
    }
    let ch = |label: &str| bcs.channel_index(label).expect("registered by set()");

    let mut out = Vec::with_capacity(exterior.len());
    for f in exterior {
        let cell = match region.sides(mesh, f) {
            (Some(c), None) | (None, Some(c)) => c,
            _ => unreachable!(),
        };
        let spec = by_facet.get(&f).ok_or_else(|| {
            let facet = &mesh.facets[f];
            Error::Assembly(format!(
                "exterior facet {f} (at {:?} = {}, span {:?}) has no boundary condition",
                facet.normal, facet.position, facet.span
            ))
        })?;
        let area = mesh.facets[f].area;
        let mut j = Junction::new(f);
        j.cells.push((cell, half_conductance(mesh, rcs, cell, f)));
        match spec {
            BoundarySpec::Dirichlet { channel } => j.pinned = Some(ch(channel)),
            BoundarySpec::Neumann { channel } => j.injected = channel.as_deref().map(ch),
            BoundarySpec::Robin { alpha, ambient } => j.sources.push((ch(ambient), alpha * area)),
            BoundarySpec::HeatingTape {
                alpha,
                alpha_ht,
                ambient,
                tape,
            } => {
                j.sources.push((ch(ambient), alpha * area));
                j.sources.push((ch(tape), alpha_ht * area));
            }
            BoundarySpec::Radiation { .. } => {
                return Err(Error::Assembly(format!(
                    "facet {f}: radiation boundary condition is nonlinear and cannot be assembled into a linear model"
                )))
            }
        }
        out.push(j);
    }
    Ok(out)
}

/// Heat-flow monitor appended to the model outputs. Positive values are flow
/// into the cell (or out of the source) named by each term.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub label: String,
    pub terms: Vec<ProbeTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeTerm {
    /// Flow through `facet` into `cell`.
    IntoCell { facet: usize, cell: usize },
    /// Flow delivered at `facet` by the temperature source `channel`.
    FromSource { facet: usize, channel: String },
    /// Flow injected into `cell` by a heat-flow channel.
    CellSource { cell: usize, channel: String },
}

impl Probe {
    /// Net heat input into the region: every exterior facet plus every cell source.
    pub fn total_input(mesh: &FvMesh, region: &Region, bcs: &BoundaryConditions, label: &str) -> Probe {
        let mut terms: Vec<ProbeTerm> = region
            .exterior_facets(mesh)
            .into_iter()
            .map(|f| {
                let cell = match region.sides(mesh, f) {
                    (Some(c), _) | (_, Some(c)) => c,
                    _ => unreachable!(),
                };
                ProbeTerm::IntoCell { facet: f, cell }
            })
            .collect();
        terms.extend(
            bcs.sources
                .iter()
                .filter(|(c, _)| region.contains(mesh.cells[*c].zone()))
                .map(|(c, ch)| ProbeTerm::CellSource {
                    cell: *c,
                    channel: ch.clone(),
                }),
        );
        Probe {
            label: label.to_string(),
            terms,
        }
    }
}

/// Assemble the region's network into `x' = A x + B u`, `y = C x + D u`.
///
/// States are the active cells in mesh order. Sensor outputs come first,
/// then one row per probe.
pub fn assemble_lti(
    mesh: &FvMesh,
    region: &Region,
    bcs: &BoundaryConditions,
    sensors: &[SensorCell],
    probes: &[Probe],
) -> Result<LtiModel> {
    let rcs: Vec<CellRc> = mesh.cells.iter().map(cell_rc).collect();
    let state_cells: Vec<usize> = mesh
        .cells
        .iter()
        .filter(|c| region.contains(c.zone()))
        .map(|c| c.index)
        .collect();
    if state_cells.is_empty() {
        return Err(Error::Assembly("region contains no cells".into()));
    }
    let mut state_of = vec![usize::MAX; mesh.len()];
    for (s, &c) in state_cells.iter().enumerate() {
        state_of[c] = s;
    }
    let n = state_cells.len();
    let m = bcs.channels.len();

    let mut junctions = interconnect_with(mesh, region, &rcs);
    junctions.extend(apply_boundary_with(mesh, region, bcs, &rcs)?);
    let junction_of: HashMap<usize, usize> = junctions.iter().enumerate().map(|(i, j)| (j.facet, i)).collect();

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, m);
    let cap: Vec<f64> = state_cells.iter().map(|&c| rcs[c].capacitance).collect();
    for j in &junctions {
        for &(cell, _) in &j.cells {
            let row = state_of[cell];
            let flow = j.flow_into_cell(cell)?;
            for &(c, w) in &flow.cells {
                a[(row, state_of[c])] += w / cap[row];
            }
            for &(k, w) in &flow.inputs {
                b[(row, k)] += w / cap[row];
            }
        }
    }
    for (cell, channel) in &bcs.sources {
        if !region.contains(mesh.cells[*cell].zone()) {
            continue;
        }
        let row = state_of[*cell];
        let k = bcs.channel_index(channel).expect("registered");
        b[(row, k)] += 1.0 / cap[row];
    }

    let p = sensors.len() + probes.len();
    let mut c = DMatrix::<f64>::zeros(p, n);
    let mut d = DMatrix::<f64>::zeros(p, m);
    let mut outputs = Vec::with_capacity(p);
    for (i, s) in sensors.iter().enumerate() {
        let st = state_of[s.cell];
        if st == usize::MAX {
            return Err(Error::Config(format!(
                "sensor {} lies in cell {} outside the assembled region",
                s.label, s.cell
            )));
        }
        c[(i, st)] = 1.0;
        outputs.push(OutputChannel {
            label: s.label.clone(),
            kind: OutputKind::Sensor,
        });
    }
    for (pi, probe) in probes.iter().enumerate() {
        let row = sensors.len() + pi;
        let mut total = Affine::default();
        for term in &probe.terms {
            let part = match term {
                ProbeTerm::IntoCell { facet, cell } => {
                    let j = junction_of
                        .get(facet)
                        .ok_or_else(|| Error::Assembly(format!("probe {}: facet {facet} not in region", probe.label)))?;
                    junctions[*j].flow_into_cell(*cell)?
                }
                ProbeTerm::FromSource { facet, channel } => {
                    let j = junction_of
                        .get(facet)
                        .ok_or_else(|| Error::Assembly(format!("probe {}: facet {facet} not in region", probe.label)))?;
                    let k = bcs
                        .channel_index(channel)
                        .ok_or_else(|| Error::Assembly(format!("probe {}: unknown channel {channel}", probe.label)))?;
                    junctions[*j].flow_from_source(k)?
                }
                ProbeTerm::CellSource { channel, .. } => {
                    let k = bcs
                        .channel_index(channel)
                        .ok_or_else(|| Error::Assembly(format!("probe {}: unknown channel {channel}", probe.label)))?;
                    Affine {
                        cells: vec![],
                        inputs: vec![(k, 1.0)],
                    }
                }
            };
            total.cells.extend(part.cells);
            total.inputs.extend(part.inputs);
        }
        for (cell, w) in total.cells {
            let st = state_of[cell];
            if st == usize::MAX {
                return Err(Error::Assembly(format!(
                    "probe {} depends on cell {cell} outside the region",
                    probe.label
                )));
            }
            c[(row, st)] += w;
        }
        for (k, w) in total.inputs {
            d[(row, k)] += w;
        }
        outputs.push(OutputChannel {
            label: probe.label.clone(),
            kind: OutputKind::Probe,
        });
    }

    let mut partition = ZonePartition::default();
    for (s, &cell) in state_cells.iter().enumerate() {
        match mesh.cells[cell].zone() {
            ZoneKind::Cylinder => partition.cylinder.push(s),
            ZoneKind::ScrewConveyor => partition.screw_conveyor.push(s),
            ZoneKind::ScrewCore => partition.screw_core.push(s),
        }
    }
    let state_labels = state_cells
        .iter()
        .map(|&c| format!("T[{},{}]", mesh.cells[c].ix, mesh.cells[c].ir))
        .collect();

    Ok(LtiModel {
        a,
        b,
        c,
        d,
        state_cells,
        state_labels,
        partition,
        inputs: bcs.channels.clone(),
        outputs,
        capacitance: DVector::from_vec(cap),
    })
}

#[cfg(test)]
mod tests;
