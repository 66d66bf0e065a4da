//! Project configuration: one TOML document, optionally followed by overlay
//! documents whose tables are merged key by key (arrays and scalars replace).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use extruder_thermal::calib::{default_params, ParamKind, ParamSpec};
use extruder_thermal::fvnet::{AmbientAlpha, ExtruderSpec, HeatTransfer, ProbeSelection, ScrewEnd};
use extruder_thermal::lti::Discretization;
use extruder_thermal::mesh::{ExtruderGeometry, GridSpec, HeatingTape, MaterialZone, Materials, SensorSite, ZoneKind};
use extruder_thermal::sensor::{AxialCut, ObserverTuning, RadialCut};
use extruder_thermal::fvnet::ExtruderModel;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub geometry: GeometryConfig,
    pub materials: MaterialsConfig,
    pub grid: GridConfig,
    pub boundary: BoundaryConfig,
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

/// Lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub length_l: f64,
    pub inner_diameter_d1: f64,
    pub outer_diameter_d2: f64,
    pub core_radius_rc: f64,
    pub num_heating_zones: usize,
    pub heating_tapes: Vec<TapeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapeConfig {
    pub start: f64,
    pub end: f64,
    /// 1-based heating zone.
    pub zone: usize,
}

/// Density [kg/m^3], heat capacity [J/(kg K)], conductivity [W/(m K)].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub density: f64,
    pub heat_capacity: f64,
    pub conductivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub screw_core: MaterialConfig,
    pub screw_conveyor: MaterialConfig,
    pub cylinder: MaterialConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_a: usize,
    pub n_r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial_edges: Option<Vec<f64>>,
    #[serde(default)]
    pub snap_to_tapes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientGrouping {
    /// Equal-length axial segments, one coefficient each.
    #[default]
    Grouped,
    PerFacet,
}

/// Heat transfer coefficients in W/(m^2 K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub alpha_ht: Vec<f64>,
    pub ambient_alpha: Vec<f64>,
    #[serde(default)]
    pub ambient_grouping: AmbientGrouping,
    #[serde(default = "default_ambient_channel")]
    pub ambient_channel: String,
    /// Film coefficient on the screw end faces; absent means adiabatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screw_end_alpha: Option<f64>,
}

fn default_ambient_channel() -> String {
    "T_0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub label: String,
    pub x: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    /// Zero-order hold for moderate sizes, backward Euler for large models.
    #[default]
    Auto,
    Zoh,
    BackwardEuler,
}

impl MethodConfig {
    pub fn resolve(self, n_states: usize) -> Discretization {
        match self {
            MethodConfig::Auto => Discretization::default_for(n_states),
            MethodConfig::Zoh => Discretization::ZeroOrderHold,
            MethodConfig::BackwardEuler => Discretization::BackwardEuler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeConfig {
    Gamma3,
    Tapes,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    /// Steady state for the first input sample.
    #[default]
    Equilibrium,
    /// Every cell at `initial_temperature`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_temperature: Option<f64>,
}

impl SimulationConfig {
    pub fn probe_selection(&self) -> ProbeSelection {
        ProbeSelection {
            gamma3: self.probes.contains(&ProbeConfig::Gamma3),
            tapes: self.probes.contains(&ProbeConfig::Tapes),
            total: self.probes.contains(&ProbeConfig::Total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialCutConfig {
    /// Barrel cells at the discharge end `x = 0`.
    #[default]
    DischargeEnd,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// Sample period [s]; taken from the first two samples of the stream
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Thermocouple noise standard deviation [K].
    #[serde(default = "default_meas_std")]
    pub meas_std: f64,
    /// Process noise on barrel temperatures per step [K].
    #[serde(default = "default_state_std")]
    pub state_std: f64,
    /// Random-walk step of each heat flow per sample [W]; derived from the
    /// plant when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_std: Option<f64>,
    /// Number of contiguous axial groups sharing one heat flow; one per axial
    /// element when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_groups: Option<usize>,
    #[serde(default)]
    pub radial_cut: RadialCutConfig,
    /// Also write the estimated barrel temperatures.
    #[serde(default)]
    pub with_states: bool,
}

fn default_meas_std() -> f64 {
    ObserverTuning::default().meas_std
}
fn default_state_std() -> f64 {
    ObserverTuning::default().state_std
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            meas_std: default_meas_std(),
            state_std: default_state_std(),
            q_std: None,
            axial_groups: None,
            radial_cut: RadialCutConfig::default(),
            with_states: false,
        }
    }
}

impl ObserverConfig {
    pub fn tuning(&self) -> ObserverTuning {
        ObserverTuning {
            meas_std: self.meas_std,
            state_std: self.state_std,
            q_std: self.q_std,
        }
    }

    pub fn axial_cut(&self, n_axial: usize) -> CliResult<AxialCut> {
        match self.axial_groups {
            None => Ok(AxialCut::PerElement),
            Some(n) => Ok(AxialCut::even_groups(n_axial, n)?),
        }
    }

    pub fn radial_cut(&self, model: &ExtruderModel) -> RadialCut {
        match self.radial_cut {
            RadialCutConfig::DischargeEnd => RadialCut::discharge_end(model),
            RadialCutConfig::None => RadialCut::none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamConfig {
    pub name: String,
    /// Defaults to a twentieth of the initial value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    /// Defaults to twenty times the initial value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    /// Defaults to the value in this config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub method: MethodConfig,
    /// Parameters to estimate; all tape, ambient and screw parameters when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<ParamConfig>>,
    /// One weight per sensor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl FitConfig {
    pub fn params(&self, spec: &ExtruderSpec) -> CliResult<Vec<ParamSpec>> {
        let Some(list) = &self.parameters else {
            return Ok(default_params(spec, spec)?);
        };
        list.iter()
            .map(|p| {
                let value = ParamKind::parse(&p.name)?.get(spec)?;
                let initial = p.initial.unwrap_or(value);
                let lower = p.lower.unwrap_or(initial / 20.0);
                let upper = p.upper.unwrap_or(initial * 20.0);
                Ok(ParamSpec::new(&p.name, lower, upper, initial)?)
            })
            .collect()
    }
}

fn material(kind: ZoneKind, m: &MaterialConfig) -> MaterialZone {
    MaterialZone {
        kind,
        density: m.density,
        heat_capacity: m.heat_capacity,
        conductivity: m.conductivity,
    }
}

fn material_config(m: &MaterialZone) -> MaterialConfig {
    MaterialConfig {
        density: m.density,
        heat_capacity: m.heat_capacity,
        conductivity: m.conductivity,
    }
}

impl ProjectConfig {
    pub fn spec(&self) -> CliResult<ExtruderSpec> {
        let g = &self.geometry;
        let heating_tapes = g
            .heating_tapes
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if t.zone == 0 {
                    return Err(CliError::Config(format!("geometry.heating_tapes[{j}].zone: zones are numbered from 1")));
                }
                Ok(HeatingTape {
                    start: t.start,
                    end: t.end,
                    zone: t.zone - 1,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let geometry = ExtruderGeometry {
            length: g.length_l,
            inner_diameter: g.inner_diameter_d1,
            outer_diameter: g.outer_diameter_d2,
            core_radius: g.core_radius_rc,
            heating_tapes,
            num_heating_zones: g.num_heating_zones,
            sensors: self
                .sensors
                .iter()
                .map(|s| SensorSite {
                    label: s.label.clone(),
                    x: s.x,
                    r: s.r,
                })
                .collect(),
        };
        if let Some(edges) = &self.grid.axial_edges {
            if edges.len() != self.grid.n_a + 1 {
                return Err(CliError::Config(format!(
                    "grid.axial_edges: expected n_a + 1 = {} edges, got {}",
                    self.grid.n_a + 1,
                    edges.len()
                )));
            }
        }
        if let Some(edges) = &self.grid.radial_edges {
            if edges.len() != self.grid.n_r + 1 {
                return Err(CliError::Config(format!(
                    "grid.radial_edges: expected n_r + 1 = {} edges, got {}",
                    self.grid.n_r + 1,
                    edges.len()
                )));
            }
        }
        let b = &self.boundary;
        Ok(ExtruderSpec {
            geometry,
            materials: Materials {
                screw_core: material(ZoneKind::ScrewCore, &self.materials.screw_core),
                screw_conveyor: material(ZoneKind::ScrewConveyor, &self.materials.screw_conveyor),
                cylinder: material(ZoneKind::Cylinder, &self.materials.cylinder),
            },
            grid: GridSpec {
                n_axial: self.grid.n_a,
                n_radial: self.grid.n_r,
                axial_edges: self.grid.axial_edges.clone(),
                radial_edges: self.grid.radial_edges.clone(),
                snap_to_tapes: self.grid.snap_to_tapes,
            },
            heat: HeatTransfer {
                alpha_ht: b.alpha_ht.clone(),
                ambient: match b.ambient_grouping {
                    AmbientGrouping::Grouped => AmbientAlpha::Grouped(b.ambient_alpha.clone()),
                    AmbientGrouping::PerFacet => AmbientAlpha::PerFacet(b.ambient_alpha.clone()),
                },
                ambient_channel: b.ambient_channel.clone(),
                screw_end: b.screw_end_alpha.map_or(ScrewEnd::Adiabatic, ScrewEnd::Robin),
            },
        })
    }

    /// Config describing `spec` with default run sections.
    pub fn from_spec(spec: &ExtruderSpec) -> Self {
        let g = &spec.geometry;
        let h = &spec.heat;
        let (ambient_grouping, ambient_alpha) = match &h.ambient {
            AmbientAlpha::Grouped(v) => (AmbientGrouping::Grouped, v.clone()),
            AmbientAlpha::PerFacet(v) => (AmbientGrouping::PerFacet, v.clone()),
        };
        Self {
            geometry: GeometryConfig {
                length_l: g.length,
                inner_diameter_d1: g.inner_diameter,
                outer_diameter_d2: g.outer_diameter,
                core_radius_rc: g.core_radius,
                num_heating_zones: g.num_heating_zones,
                heating_tapes: g
                    .heating_tapes
                    .iter()
                    .map(|t| TapeConfig {
                        start: t.start,
                        end: t.end,
                        zone: t.zone + 1,
                    })
                    .collect(),
            },
            materials: MaterialsConfig {
                screw_core: material_config(&spec.materials.screw_core),
                screw_conveyor: material_config(&spec.materials.screw_conveyor),
                cylinder: material_config(&spec.materials.cylinder),
            },
            grid: GridConfig {
                n_a: spec.grid.axial_edges.as_ref().map_or(spec.grid.n_axial, |e| e.len() - 1),
                n_r: spec.grid.radial_edges.as_ref().map_or(spec.grid.n_radial, |e| e.len() - 1),
                axial_edges: spec.grid.axial_edges.clone(),
                radial_edges: spec.grid.radial_edges.clone(),
                snap_to_tapes: spec.grid.snap_to_tapes,
            },
            boundary: BoundaryConfig {
                alpha_ht: h.alpha_ht.clone(),
                ambient_alpha,
                ambient_grouping,
                ambient_channel: h.ambient_channel.clone(),
                screw_end_alpha: match h.screw_end {
                    ScrewEnd::Adiabatic => None,
                    ScrewEnd::Robin(a) => Some(a),
                },
            },
            sensors: g
                .sensors
                .iter()
                .map(|s| SensorConfig {
                    label: s.label.clone(),
                    x: s.x,
                    r: s.r,
                })
                .collect(),
            simulation: SimulationConfig::default(),
            observer: ObserverConfig::default(),
            fit: FitConfig::default(),
        }
    }

    /// The reference barrel. The observer groups the axial cut into seven
    /// blocks since the sensors cannot see a per-element profile.
    pub fn reference() -> Self {
        let mut cfg = Self::from_spec(&extruder_thermal::reference::setup());
        cfg.observer.axial_groups = Some(7);
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn parse_str(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> CliResult<Self> {
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.inner().to_string();
            // name the missing key itself, not just its parent table
            let missing = msg
                .strip_prefix("missing field `")
                .and_then(|s| s.split('`').next())
                .map(|f| if path == "." { f.to_string() } else { format!("{path}.{f}") });
            match missing {
                Some(key) => CliError::Config(format!("{key}: missing required key")),
                None => CliError::Config(format!("{path}: {msg}")),
            }
        })
    }
}

/// Recursive merge: tables merge key by key, everything else replaces.
pub fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Loaded config together with the files it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProjectConfig,
    pub files: Vec<PathBuf>,
}

impl LoadedConfig {
    pub fn load(paths: &[PathBuf]) -> CliResult<Self> {
        let Some((first, rest)) = paths.split_first() else {
            return Err(CliError::Config("no --config given".into()));
        };
        let mut table = read_table(first)?;
        for p in rest {
            merge(&mut table, read_table(p)?);
        }
        Ok(Self {
            config: ProjectConfig::from_table(table)?,
            files: paths.to_vec(),
        })
    }
}

fn read_table(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))
}

/// Overlay holding the fitted values of the parameters in `fitted`.
pub fn fit_overlay(fitted: &ExtruderSpec, params: &[ParamSpec]) -> toml::Table {
    let mut out = toml::Table::new();
    let mut screw = toml::Table::new();
    let mut boundary = toml::Table::new();
    let floats = |v: &[f64]| toml::Value::Array(v.iter().map(|x| toml::Value::Float(*x)).collect());
    for p in params {
        match p.kind {
            ParamKind::HeatCapacityScrew => {
                screw.insert("heat_capacity".into(), toml::Value::Float(fitted.materials.screw_conveyor.heat_capacity));
            }
            ParamKind::ConductivityScrew => {
                screw.insert("conductivity".into(), toml::Value::Float(fitted.materials.screw_conveyor.conductivity));
            }
            ParamKind::AlphaHt(_) => {
                boundary.insert("alpha_ht".into(), floats(&fitted.heat.alpha_ht));
            }
            ParamKind::AlphaAmbient(_) => {
                boundary.insert("ambient_alpha".into(), floats(fitted.heat.ambient.values()));
            }
        }
    }
    if !screw.is_empty() {
        let mut materials = toml::Table::new();
        materials.insert("screw_conveyor".into(), toml::Value::Table(screw));
        out.insert("materials".into(), toml::Value::Table(materials));
    }
    if !boundary.is_empty() {
        out.insert("boundary".into(), toml::Value::Table(boundary));
    }
    out
}
