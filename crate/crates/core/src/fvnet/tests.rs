use super::*;
use crate::lti::{equilibrium, ChannelKind};
use crate::mesh::{build_mesh, ExtruderGeometry, MaterialZone, Materials};
use crate::reference;
use approx::assert_relative_eq;

fn ring_cell(r: f64, dr: f64, dx: f64, material: MaterialZone) -> FvCell {
    FvCell {
        index: 0,
        ix: 0,
        ir: 1,
        x_center: 0.5 * dx,
        delta_x: dx,
        r_center: r,
        delta_r: dr,
        material,
        is_disk: false,
    }
}

fn steel() -> MaterialZone {
    MaterialZone {
        kind: ZoneKind::Cylinder,
        density: 7800.0,
        heat_capacity: 500.0,
        conductivity: 50.0,
    }
}

#[test]
fn cell_rc_matches_hand_values() {
    let rc = cell_rc(&ring_cell(0.05, 0.01, 0.02, steel()));
    // hand-evaluated: 2*pi*0.05*0.01*0.02*7800*500 and 0.02/(2*pi*0.05*0.01*50)
    assert_relative_eq!(rc.capacitance, 245.04422698000388, max_relative = 1e-12);
    assert_relative_eq!(rc.resistance[AXIAL_LOW], 0.12732395447351627, max_relative = 1e-12);
    assert_eq!(rc.resistance[AXIAL_LOW], rc.resistance[AXIAL_HIGH]);
    assert_relative_eq!(
        rc.resistance[OUTWARD] / rc.resistance[INWARD],
        0.045 / 0.055,
        max_relative = 1e-12
    );
}

#[test]
fn disk_cell_has_no_inward_port() {
    let mut cell = ring_cell(0.005, 0.01, 0.02, steel());
    cell.is_disk = true;
    cell.ir = 0;
    let rc = cell_rc(&cell);
    assert_eq!(rc.area[INWARD], 0.0);
    assert!(rc.resistance[INWARD].is_infinite());
    assert_eq!(rc.half_conductance(INWARD), 0.0);
    // NaN neighbour through the missing port is ignored
    assert_eq!(cell_balance(&rc, 300.0, [300.0, 300.0, 300.0, f64::NAN]), 0.0);
}

#[test]
fn cell_balance_single_port() {
    let rc = CellRc {
        capacitance: 10.0,
        resistance: [0.1, 1.0, 1.0, 1.0],
        area: [1.0; 4],
    };
    assert_eq!(cell_balance(&rc, 300.0, [300.0; 4]), 0.0);
    assert_relative_eq!(cell_balance(&rc, 300.0, [301.0, 300.0, 300.0, 300.0]), 1.0, max_relative = 1e-12);
}

#[test]
fn cell_balance_equals_difference_quotient_form() {
    let m = steel();
    let (r, dr, dx) = (0.037, 0.004, 0.011);
    let rc = cell_rc(&ring_cell(r, dr, dx, m));
    let t = 412.0;
    let (t1, t2, t3, t4) = (405.5, 418.25, 409.0, 420.75);
    let lhs = cell_balance(&rc, t, [t1, t2, t3, t4]);
    let lambda = m.conductivity;
    let rho_c = m.density * m.heat_capacity;
    // t3 is the outward neighbour
    let rhs = lambda / rho_c
        * ((t1 - 2.0 * t + t2) / (dx * dx) + (t3 - 2.0 * t + t4) / (dr * dr) + (t3 - t4) / (2.0 * dr * r));
    assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
}

fn two_cell_junction(ga: f64, gb: f64) -> Junction {
    Junction {
        facet: 0,
        cells: vec![(0, ga), (1, gb)],
        sources: vec![],
        pinned: None,
        injected: None,
    }
}

#[test]
fn series_junction_temperature() {
    let (ra, rb) = (0.3, 1.7);
    let j = two_cell_junction(1.0 / ra, 1.0 / rb);
    let (ta, tb) = (350.0, 410.0);
    let tf = j.facet_temperature().unwrap().eval(&[ta, tb], &[]);
    let expected = (ta / ra + tb / rb) / (1.0 / ra + 1.0 / rb);
    assert_relative_eq!(tf, expected, max_relative = 1e-14);
    // flows balance across the facet
    let qa = j.flow_into_cell(0).unwrap().eval(&[ta, tb], &[]);
    let qb = j.flow_into_cell(1).unwrap().eval(&[ta, tb], &[]);
    assert_relative_eq!(qa, -qb, max_relative = 1e-12);
    assert_relative_eq!(qa, (tb - ta) / (ra + rb), max_relative = 1e-12);
}

#[test]
fn identical_cells_at_equal_temperature_exchange_nothing() {
    let j = two_cell_junction(4.0, 4.0);
    assert_eq!(j.flow_into_cell(0).unwrap().eval(&[320.0, 320.0], &[]), 0.0);
}

#[test]
fn steel_granulate_facet_stays_close_to_steel() {
    // equal half-thickness: conductances scale with lambda
    let j = two_cell_junction(50.0, 0.3);
    let (t_steel, t_gran) = (450.0, 350.0);
    let tf = j.facet_temperature().unwrap().eval(&[t_steel, t_gran], &[]);
    let rel = (tf - t_steel).abs() / (t_steel - t_gran).abs();
    assert!(rel < 0.006, "deviation {rel}");
    assert_relative_eq!(rel, 0.3 / 50.3, max_relative = 1e-12);
}

#[test]
fn singular_junction_is_an_assembly_error() {
    let j = Junction {
        facet: 3,
        cells: vec![(0, 0.0)],
        sources: vec![],
        pinned: None,
        injected: None,
    };
    assert!(matches!(j.facet_temperature(), Err(Error::Assembly(_))));
}

/// Single cylinder cell with one Robin facet outward and adiabatic elsewhere.
fn one_cell(alpha: f64, lambda: f64) -> (FvMesh, BoundaryConditions, usize) {
    let geometry = ExtruderGeometry {
        length: 0.1,
        inner_diameter: 0.04,
        outer_diameter: 0.06,
        core_radius: 0.01,
        heating_tapes: vec![],
        num_heating_zones: 0,
        sensors: vec![],
    };
    let mut materials = reference::setup().materials;
    materials.cylinder.conductivity = lambda;
    let mesh = build_mesh(&geometry, &materials, 1, 3).unwrap();
    let cell = mesh.cell_index(0, 2);
    let mut bcs = BoundaryConditions::new();
    let outer = mesh.radial_facet(3, 0);
    for f in Region::cylinder().exterior_facets(&mesh) {
        let spec = if f == outer {
            BoundarySpec::Robin {
                alpha,
                ambient: "T_0".into(),
            }
        } else {
            BoundarySpec::Neumann { channel: None }
        };
        bcs.set(f, spec).unwrap();
    }
    (mesh, bcs, cell)
}

#[test]
fn one_cell_robin_model_by_hand() {
    let alpha = 25.0;
    let (mesh, bcs, cell) = one_cell(alpha, 45.0);
    let model = assemble_lti(&mesh, &Region::cylinder(), &bcs, &[], &[]).unwrap();
    assert_eq!(model.n_states(), 1);
    let c = &mesh.cells[cell];
    let rc = cell_rc(c);
    let area = mesh.facets[mesh.radial_facet(3, 0)].area;
    // eliminate T_f from G (T - T_f) = alpha A (T_f - T_0)
    let g = 1.0 / (0.5 * rc.resistance[OUTWARD]);
    let k = g * alpha * area / (g + alpha * area);
    assert_relative_eq!(model.a[(0, 0)], -k / rc.capacitance, max_relative = 1e-12);
    assert_relative_eq!(model.b[(0, 0)], k / rc.capacitance, max_relative = 1e-12);
    // highly conductive wall: the film dominates, A -> -alpha A / C
    let (mesh, bcs, cell) = one_cell(alpha, 1e9);
    let model = assemble_lti(&mesh, &Region::cylinder(), &bcs, &[], &[]).unwrap();
    let cap = mesh.cells[cell].capacitance();
    assert_relative_eq!(model.a[(0, 0)], -alpha * area / cap, max_relative = 1e-6);
    // equilibrium is the ambient temperature
    let x = equilibrium(&model, &DVector::from_element(1, 300.0)).unwrap();
    assert_relative_eq!(x[0], 300.0, max_relative = 1e-14);
}

#[test]
fn zero_coefficients_act_like_adiabatic_facets() {
    let setup = reference::setup();
    let mesh = build_mesh(&setup.geometry, &setup.materials, 6, 3).unwrap();
    let region = Region::Full;
    let mut tape = BoundaryConditions::new();
    let mut neumann = BoundaryConditions::new();
    for ch in ["T_h", "T_0"] {
        tape.add_channel(ch, ChannelKind::Temperature).unwrap();
        neumann.add_channel(ch, ChannelKind::Temperature).unwrap();
    }
    let target = mesh.radial_facet(3, 2);
    for f in region.exterior_facets(&mesh) {
        let robin = BoundarySpec::Robin {
            alpha: 10.0,
            ambient: "T_0".into(),
        };
        if f == target {
            tape.set(
                f,
                BoundarySpec::HeatingTape {
                    alpha: 0.0,
                    alpha_ht: 0.0,
                    ambient: "T_0".into(),
                    tape: "T_h".into(),
                },
            )
            .unwrap();
            neumann.set(f, BoundarySpec::Neumann { channel: None }).unwrap();
        } else {
            tape.set(f, robin.clone()).unwrap();
            neumann.set(f, robin).unwrap();
        }
    }
    let a = assemble_lti(&mesh, &region, &tape, &[], &[]).unwrap();
    let b = assemble_lti(&mesh, &region, &neumann, &[], &[]).unwrap();
    assert_relative_eq!(a.a, b.a, max_relative = 1e-14);
    assert_relative_eq!(a.b, b.b, max_relative = 1e-14);
}

#[test]
fn robin_at_ambient_carries_no_flow() {
    let j = Junction {
        facet: 0,
        cells: vec![(0, 12.0)],
        sources: vec![(0, 3.0)],
        pinned: None,
        injected: None,
    };
    assert!(j.flow_into_cell(0).unwrap().eval(&[300.0], &[300.0]).abs() < 1e-9);
}

#[test]
fn strong_tape_coupling_pins_the_facet_to_the_tape() {
    let tf = |alpha_ht: f64| {
        let j = Junction {
            facet: 0,
            cells: vec![(0, 40.0)],
            sources: vec![(0, 10.0 * 0.01), (1, alpha_ht * 0.01)],
            pinned: None,
            injected: None,
        };
        j.facet_temperature().unwrap().eval(&[350.0], &[300.0, 480.0])
    };
    let mut prev = f64::INFINITY;
    for alpha_ht in [1e2, 1e4, 1e6, 1e8, 1e10] {
        let gap = (tf(alpha_ht) - 480.0).abs();
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 1e-3);
}

#[test]
fn boundary_errors() {
    let setup = reference::setup();
    let mesh = build_mesh(&setup.geometry, &setup.materials, 4, 3).unwrap();
    let exterior = Region::Full.exterior_facets(&mesh);

    // uncovered facet
    let mut bcs = BoundaryConditions::new();
    for &f in &exterior[1..] {
        bcs.set(f, BoundarySpec::Neumann { channel: None }).unwrap();
    }
    let err = apply_boundary(&mesh, &Region::Full, &bcs).unwrap_err();
    assert!(matches!(err, Error::Assembly(ref m) if m.contains("no boundary condition")));

    // dirichlet + heating tape on the same facet
    bcs.set(exterior[1], BoundarySpec::Dirichlet { channel: "T_h".into() }).unwrap();
    let err = apply_boundary(&mesh, &Region::Full, &bcs).unwrap_err();
    assert!(matches!(err, Error::Assembly(ref m) if m.contains("conflicting")));

    // radiation is rejected
    let mut bcs = BoundaryConditions::new();
    for &f in &exterior {
        bcs.set(f, BoundarySpec::Radiation { alpha: 1e-8 }).unwrap();
    }
    let err = assemble_lti(&mesh, &Region::Full, &bcs, &[], &[]).unwrap_err();
    assert!(matches!(err, Error::Assembly(ref m) if m.contains("radiation")));

    // channel kind clash
    let mut bcs = BoundaryConditions::new();
    bcs.set(exterior[0], BoundarySpec::Dirichlet { channel: "u".into() }).unwrap();
    assert!(bcs.set(exterior[1], BoundarySpec::Neumann { channel: Some("u".into()) }).is_err());
}

#[test]
fn reference_model_dimensions() {
    let s = reference::setup();
    let m = build_extruder_model(&s.geometry, &s.materials, &s.grid, &s.heat, ProbeSelection::default()).unwrap();
    assert_eq!(m.lti.n_states(), 210);
    assert_eq!(m.lti.n_inputs(), 5);
    assert_eq!(m.lti.input_labels(), vec!["T_h1", "T_h2", "T_h3", "T_h4", "T_0"]);
    assert_eq!(m.lti.n_outputs(), 14);
    assert_eq!(m.lti.partition.cylinder.len(), 70);
}

#[test]
fn uniform_state_and_inputs_is_an_equilibrium() {
    let s = reference::setup();
    let m = build_extruder_model(&s.geometry, &s.materials, &s.grid, &s.heat, ProbeSelection::all()).unwrap();
    let x = DVector::from_element(m.lti.n_states(), 300.0);
    let u = DVector::from_element(m.lti.n_inputs(), 300.0);
    let xdot = &m.lti.a * &x + &m.lti.b * &u;
    assert!(xdot.amax() < 1e-10);
}

#[test]
fn reference_model_structure() {
    let s = reference::setup();
    let m = build_extruder_model(&s.geometry, &s.materials, &s.grid, &s.heat, ProbeSelection::default())
        .unwrap()
        .lti;
    assert!(m.is_metzler(0.0));
    assert!(m.is_hurwitz());
    let a13 = m.a_block(&m.partition.cylinder, &m.partition.screw_core);
    let a31 = m.a_block(&m.partition.screw_core, &m.partition.cylinder);
    assert_eq!(a13.amax(), 0.0);
    assert_eq!(a31.amax(), 0.0);
    let row_sum = &m.a * DVector::from_element(m.n_states(), 1.0) + &m.b * m.temperature_inputs();
    assert!(row_sum.amax() < 1e-12 * m.a.amax());
}

#[test]
fn uniform_materials_place_edges_uniformly() {
    let geometry = ExtruderGeometry {
        length: 1.0,
        inner_diameter: 0.4,
        outer_diameter: 0.6,
        core_radius: 0.1,
        heating_tapes: vec![],
        num_heating_zones: 0,
        sensors: vec![],
    };
    let m = Materials::uniform(1000.0, 1000.0, 10.0).unwrap();
    let mesh = build_mesh(&geometry, &m, 3, 6).unwrap();
    for w in mesh.radial_edges.windows(2) {
        assert_relative_eq!(w[1] - w[0], 0.05, max_relative = 1e-12);
    }
}
