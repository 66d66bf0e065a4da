//! Reference extruder used by the examples, the default CLI config and the
//! acceptance tests: a 1.4 m barrel with 12 heating tapes in 4 zones and 14
//! thermocouples, discretized on a 35 x 6 grid (210 states).
//!
//! The tapes cover the barrel with 10 mm gaps. The axial grid follows the
//! tapes: two cells under each tape and one cell per gap. Thermocouples sit
//! at under-tape cell centres of the inner cylinder ring.

use crate::error::Result;
use crate::fvnet::{
    assemble_lti, extruder_conditions, extruder_probes, AmbientAlpha, ExtruderModel, ExtruderSpec, HeatTransfer,
    ProbeSelection, Region, ScrewEnd,
};
use crate::mesh::build_mesh_with;
use crate::mesh::{ExtruderGeometry, GridSpec, HeatingTape, MaterialZone, Materials, SensorSite, ZoneKind};
use crate::timeseries::TimeSeries;

pub const LENGTH: f64 = 1.4;
pub const N_AXIAL: usize = 35;
pub const N_RADIAL: usize = 6;
pub const AMBIENT: f64 = 300.0;
/// Uncovered strip between neighbouring heating tapes [m].
pub const TAPE_GAP: f64 = 0.01;

/// Two cells under every tape and one cell per gap: 24 + 11 = 35 axial cells.
fn axial_edges(tapes: &[HeatingTape]) -> Vec<f64> {
    let mut edges: Vec<f64> = tapes
        .iter()
        .flat_map(|t| [t.start, 0.5 * (t.start + t.end), t.end])
        .collect();
    *edges.last_mut().expect("tapes") = LENGTH;
    edges
}

pub fn setup() -> ExtruderSpec {
    let tape_width = (LENGTH - 11.0 * TAPE_GAP) / 12.0;
    let heating_tapes: Vec<HeatingTape> = (0..12)
        .map(|j| {
            let start = j as f64 * (tape_width + TAPE_GAP);
            HeatingTape {
                start,
                end: (start + tape_width).min(LENGTH),
                zone: j / 3,
            }
        })
        .collect();
    let axial_edges = axial_edges(&heating_tapes);
    // thermocouples at 14 of the 24 under-tape cell centres
    let r_sensor = 0.045 + 0.25 * 0.025;
    let sensors = (0..14)
        .map(|k| {
            let slot = (k as f64 * 23.0 / 13.0).round() as usize;
            let ix = 3 * (slot / 2) + slot % 2;
            SensorSite {
                label: format!("S{k}"),
                x: 0.5 * (axial_edges[ix] + axial_edges[ix + 1]),
                r: r_sensor,
            }
        })
        .collect();
    let geometry = ExtruderGeometry {
        length: LENGTH,
        inner_diameter: 0.09,
        outer_diameter: 0.14,
        core_radius: 0.025,
        heating_tapes,
        num_heating_zones: 4,
        sensors,
    };
    let materials = Materials {
        screw_core: MaterialZone {
            kind: ZoneKind::ScrewCore,
            density: 7850.0,
            heat_capacity: 500.0,
            conductivity: 45.0,
        },
        screw_conveyor: MaterialZone {
            kind: ZoneKind::ScrewConveyor,
            density: 1800.0,
            heat_capacity: 1500.0,
            conductivity: 5.0,
        },
        cylinder: MaterialZone {
            kind: ZoneKind::Cylinder,
            density: 7850.0,
            heat_capacity: 500.0,
            conductivity: 45.0,
        },
    };
    let heat = HeatTransfer {
        alpha_ht: vec![
            420.0, 380.0, 450.0, 400.0, 360.0, 430.0, 410.0, 390.0, 440.0, 370.0, 425.0, 395.0,
        ],
        ambient: AmbientAlpha::Grouped(vec![9.0, 11.0, 12.0, 10.0]),
        ambient_channel: "T_0".to_string(),
        screw_end: ScrewEnd::Adiabatic,
    };
    ExtruderSpec {
        geometry,
        materials,
        grid: GridSpec {
            axial_edges: Some(axial_edges),
            ..GridSpec::uniform(N_AXIAL, N_RADIAL)
        },
        heat,
    }
}

/// Synthetic heating-tape temperatures for a four-zone heat-up from ambient.
///
/// Each zone rises as a first-order response towards its set point with its
/// own delay and time constant; `T_0` stays at [`AMBIENT`].
pub fn heat_up_inputs(dt: f64, duration: f64) -> TimeSeries {
    heat_up_inputs_for(4, dt, duration)
}

/// [`heat_up_inputs`] for `n_zones` zones; zone `z` reuses profile `z % 4`.
pub fn heat_up_inputs_for(n_zones: usize, dt: f64, duration: f64) -> TimeSeries {
    let steps = (duration / dt).round() as usize;
    let mut ts = TimeSeries::uniform(0.0, dt, steps + 1).expect("positive step");
    let time = ts.time().to_vec();
    let set_points = [460.0, 475.0, 490.0, 480.0];
    let delays = [0.0, 60.0, 120.0, 30.0];
    let tau = [300.0, 380.0, 450.0, 520.0];
    for z in 0..n_zones {
        let p = z % 4;
        let values = time
            .iter()
            .map(|&t| {
                let s = (t - delays[p]).max(0.0);
                AMBIENT + (set_points[p] - AMBIENT) * (1.0 - (-s / tau[p]).exp())
            })
            .collect();
        ts.push_channel(&format!("T_h{}", z + 1), values).expect("length matches");
    }
    ts.push_channel("T_0", vec![AMBIENT; time.len()]).expect("length matches");
    ts
}

/// Held tape temperatures with `T_0` at [`AMBIENT`].
pub fn constant_inputs(tapes: &[f64; 4], dt: f64, duration: f64) -> TimeSeries {
    let steps = (duration / dt).round() as usize;
    let mut ts = TimeSeries::uniform(0.0, dt, steps + 1).expect("positive step");
    for (z, &t) in tapes.iter().enumerate() {
        ts.push_channel(&format!("T_h{}", z + 1), vec![t; steps + 1]).expect("length matches");
    }
    ts.push_channel("T_0", vec![AMBIENT; steps + 1]).expect("length matches");
    ts
}

/// Channel of the process heat source in granulate cell `ix` of [`twin_plant`].
pub fn source_channel(ix: usize) -> String {
    format!("src_{ix}")
}

/// Process heat [W] released in the granulate next to the barrel, per axial
/// element: a heating bump near the filling end (`x = L`) and a cooling dip
/// in mid-barrel, zero towards the discharge end.
pub fn process_heat_profile(n_axial: usize) -> Vec<f64> {
    let scale = n_axial as f64 / N_AXIAL as f64;
    (0..n_axial)
        .map(|ix| {
            let s = (ix + 1) as f64 / scale;
            let bump = |c: f64| (-((s - c) / 2.5).powi(2)).exp();
            100.0 * (bump(34.0) - 0.8 * bump(25.0))
        })
        .collect()
}

/// Full model plus one heat-flow input per granulate cell adjacent to the
/// barrel (`src_<ix>`, after the temperature channels), with the interface
/// flow monitors `q_gamma3_<ix>` after the sensors.
pub fn twin_plant(spec: &ExtruderSpec) -> Result<ExtruderModel> {
    let mesh = build_mesh_with(&spec.geometry, &spec.materials, &spec.grid)?;
    let sensors = mesh.locate_sensors(&spec.geometry.sensors);
    let mut conditions = extruder_conditions(&mesh, &spec.geometry, &spec.heat)?;
    for ix in 0..mesh.n_axial() {
        conditions.add_cell_source(mesh.cell_index(ix, mesh.cylinder_ring - 1), &source_channel(ix))?;
    }
    let probes = extruder_probes(
        &mesh,
        &spec.geometry,
        &conditions,
        ProbeSelection {
            gamma3: true,
            ..Default::default()
        },
    );
    let lti = assemble_lti(&mesh, &Region::Full, &conditions, &sensors, &probes)?;
    Ok(ExtruderModel {
        mesh,
        sensors,
        conditions,
        lti,
    })
}
