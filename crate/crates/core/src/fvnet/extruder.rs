use super::{assemble_lti, BoundaryConditions, BoundarySpec, Probe, ProbeTerm, Region};
use crate::error::{config, Result};
use crate::lti::{ChannelKind, LtiModel};
use crate::mesh::{build_mesh_with, ExtruderGeometry, FacetNormal, FvMesh, GridSpec, Materials, SensorCell};

/// Input label of heating zone `zone` (0-based), e.g. `T_h1`.
pub fn zone_channel(zone: usize) -> String {
    format!("T_h{}", zone + 1)
}

/// Ambient heat transfer coefficients [W/(m^2 K)].
#[derive(Debug, Clone, PartialEq)]
pub enum AmbientAlpha {
    /// One coefficient per equal-length axial segment of the barrel.
    Grouped(Vec<f64>),
    /// One coefficient per ambient-exposed facet, ordered as [`ambient_facets`].
    PerFacet(Vec<f64>),
}

impl AmbientAlpha {
    pub fn values(&self) -> &[f64] {
        match self {
            AmbientAlpha::Grouped(v) | AmbientAlpha::PerFacet(v) => v,
        }
    }

    pub fn values_mut(&mut self) -> &mut Vec<f64> {
        match self {
            AmbientAlpha::Grouped(v) | AmbientAlpha::PerFacet(v) => v,
        }
    }
}

/// Condition on the end faces of the screw region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScrewEnd {
    Adiabatic,
    /// Film transfer to ambient with the given coefficient.
    Robin(f64),
}

/// Unknown heat transfer parameters of the barrel surface.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatTransfer {
    /// Tape-to-barrel coefficient per heating tape [W/(m^2 K)].
    pub alpha_ht: Vec<f64>,
    pub ambient: AmbientAlpha,
    pub ambient_channel: String,
    pub screw_end: ScrewEnd,
}

impl HeatTransfer {
    pub fn validate(&self, geometry: &ExtruderGeometry, mesh: &FvMesh) -> Result<()> {
        if self.alpha_ht.len() != geometry.heating_tapes.len() {
            return Err(config(format!(
                "boundary.alpha_ht has {} entries, geometry has {} heating tapes",
                self.alpha_ht.len(),
                geometry.heating_tapes.len()
            )));
        }
        match &self.ambient {
            AmbientAlpha::Grouped(v) if v.is_empty() => {
                return Err(config("boundary.ambient_alpha: need at least one group"))
            }
            AmbientAlpha::PerFacet(v) => {
                let expected = ambient_facets(mesh).len();
                if v.len() != expected {
                    return Err(config(format!(
                        "boundary.ambient_alpha: per-facet grouping needs {expected} values, got {}",
                        v.len()
                    )));
                }
            }
            _ => {}
        }
        let all = self.alpha_ht.iter().chain(self.ambient.values());
        if all.clone().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(config("boundary: heat transfer coefficients must be finite and >= 0"));
        }
        if let ScrewEnd::Robin(a) = self.screw_end {
            if !(a >= 0.0) {
                return Err(config("boundary.screw_end_alpha must be >= 0"));
            }
        }
        Ok(())
    }

    /// Ambient coefficient of an ambient-exposed facet.
    pub fn ambient_alpha(&self, mesh: &FvMesh, facet: usize) -> f64 {
        match &self.ambient {
            AmbientAlpha::Grouped(v) => {
                let f = &mesh.facets[facet];
                let length = mesh.axial_edges[mesh.n_axial()];
                let x = match f.normal {
                    FacetNormal::Radial => f.span_mid(),
                    FacetNormal::Axial => f.position,
                };
                let seg = ((x / length) * v.len() as f64).floor() as usize;
                v[seg.min(v.len() - 1)]
            }
            AmbientAlpha::PerFacet(v) => {
                let pos = ambient_facets(mesh)
                    .iter()
                    .position(|&f| f == facet)
                    .expect("facet is ambient-exposed");
                v[pos]
            }
        }
    }
}

/// Ambient-exposed facets (Γ1 ∪ Γ2) in parameter order: the outer skin by
/// axial index, then the cylinder end faces at x = 0 and at x = L by ring.
/// There are `n_a + 2 m` of them for `m` cylinder rings.
pub fn ambient_facets(mesh: &FvMesh) -> Vec<usize> {
    let n_a = mesh.n_axial();
    let n_r = mesh.n_radial();
    let mut out: Vec<usize> = (0..n_a).map(|ix| mesh.radial_facet(n_r, ix)).collect();
    out.extend((mesh.cylinder_ring..n_r).map(|ir| mesh.axial_facet(0, ir)));
    out.extend((mesh.cylinder_ring..n_r).map(|ir| mesh.axial_facet(n_a, ir)));
    out
}

/// Boundary conditions of the full three-zone model: heating tapes on Γ2,
/// ambient film on Γ1, the configured screw-end condition on the exterior
/// part of Γ3. Inputs are ordered `T_h1 .. T_hN, T_0`.
pub fn extruder_conditions(mesh: &FvMesh, geometry: &ExtruderGeometry, heat: &HeatTransfer) -> Result<BoundaryConditions> {
    heat.validate(geometry, mesh)?;
    let mut bcs = BoundaryConditions::new();
    for z in 0..geometry.num_heating_zones {
        bcs.add_channel(&zone_channel(z), ChannelKind::Temperature)?;
    }
    let ambient = heat.ambient_channel.clone();
    bcs.add_channel(&ambient, ChannelKind::Temperature)?;

    for (tape, facets) in mesh.boundary.gamma2.iter().enumerate() {
        let channel = zone_channel(geometry.heating_tapes[tape].zone);
        for &f in facets {
            bcs.set(
                f,
                BoundarySpec::HeatingTape {
                    alpha: heat.ambient_alpha(mesh, f),
                    alpha_ht: heat.alpha_ht[tape],
                    ambient: ambient.clone(),
                    tape: channel.clone(),
                },
            )?;
        }
    }
    for &f in &mesh.boundary.gamma1 {
        bcs.set(
            f,
            BoundarySpec::Robin {
                alpha: heat.ambient_alpha(mesh, f),
                ambient: ambient.clone(),
            },
        )?;
    }
    for &f in mesh.boundary.gamma3.iter().filter(|&&f| mesh.facets[f].is_exterior()) {
        let spec = match heat.screw_end {
            ScrewEnd::Adiabatic => BoundarySpec::Neumann { channel: None },
            ScrewEnd::Robin(alpha) => BoundarySpec::Robin {
                alpha,
                ambient: ambient.clone(),
            },
        };
        bcs.set(f, spec)?;
    }
    Ok(bcs)
}

/// Which heat-flow monitors to append to the sensor outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProbeSelection {
    /// Flow across each Γ3 facet at d1/2 into the screw region, `q_gamma3_<ix>`.
    pub gamma3: bool,
    /// Flow delivered by each heating tape into the barrel, `q_tape_<j>`.
    pub tapes: bool,
    /// Net heat input into the model, `q_total`.
    pub total: bool,
}

impl ProbeSelection {
    pub fn all() -> Self {
        Self {
            gamma3: true,
            tapes: true,
            total: true,
        }
    }
}

pub fn extruder_probes(
    mesh: &FvMesh,
    geometry: &ExtruderGeometry,
    bcs: &BoundaryConditions,
    selection: ProbeSelection,
) -> Vec<Probe> {
    let mut probes = Vec::new();
    if selection.gamma3 {
        for ix in 0..mesh.n_axial() {
            let facet = mesh.radial_facet(mesh.cylinder_ring, ix);
            let cell = mesh.facets[facet].low.expect("interface facet has an inner cell");
            probes.push(Probe {
                label: format!("q_gamma3_{ix}"),
                terms: vec![ProbeTerm::IntoCell { facet, cell }],
            });
        }
    }
    if selection.tapes {
        for (j, facets) in mesh.boundary.gamma2.iter().enumerate() {
            let channel = zone_channel(geometry.heating_tapes[j].zone);
            probes.push(Probe {
                label: format!("q_tape_{}", j + 1),
                terms: facets
                    .iter()
                    .map(|&facet| ProbeTerm::FromSource {
                        facet,
                        channel: channel.clone(),
                    })
                    .collect(),
            });
        }
    }
    if selection.total {
        probes.push(Probe::total_input(mesh, &Region::Full, bcs, "q_total"));
    }
    probes
}

/// Geometry, materials, grid and surface coefficients of one extruder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtruderSpec {
    pub geometry: ExtruderGeometry,
    pub materials: Materials,
    pub grid: GridSpec,
    pub heat: HeatTransfer,
}

impl ExtruderSpec {
    pub fn build(&self, probes: ProbeSelection) -> Result<ExtruderModel> {
        build_extruder_model(&self.geometry, &self.materials, &self.grid, &self.heat, probes)
    }
}

/// Assembled full three-zone model together with the pieces it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtruderModel {
    pub mesh: FvMesh,
    pub sensors: Vec<SensorCell>,
    pub conditions: BoundaryConditions,
    pub lti: LtiModel,
}

pub fn build_extruder_model(
    geometry: &ExtruderGeometry,
    materials: &Materials,
    grid: &GridSpec,
    heat: &HeatTransfer,
    probes: ProbeSelection,
) -> Result<ExtruderModel> {
    let mesh = build_mesh_with(geometry, materials, grid)?;
    let sensors = mesh.locate_sensors(&geometry.sensors);
    let conditions = extruder_conditions(&mesh, geometry, heat)?;
    let probe_list = extruder_probes(&mesh, geometry, &conditions, probes);
    let lti = assemble_lti(&mesh, &Region::Full, &conditions, &sensors, &probe_list)?;
    Ok(ExtruderModel {
        mesh,
        sensors,
        conditions,
        lti,
    })
}
