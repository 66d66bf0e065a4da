use crate::error::{config, Result};

/// Band heater clamped around the barrel, covering `[start, end]` along the axis.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatingTape {
    pub start: f64,
    pub end: f64,
    pub zone: usize,
}

/// Thermocouple position in the `(x, r)` half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSite {
    pub label: String,
    pub x: f64,
    pub r: f64,
}

/// Axisymmetric extruder barrel with its screw, heaters and thermocouples.
///
/// All lengths in metres. The modelled rectangle is `[0, length] x [0, d2/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtruderGeometry {
    pub length: f64,
    pub inner_diameter: f64,
    pub outer_diameter: f64,
    pub core_radius: f64,
    pub heating_tapes: Vec<HeatingTape>,
    pub num_heating_zones: usize,
    pub sensors: Vec<SensorSite>,
}

impl ExtruderGeometry {
    pub fn inner_radius(&self) -> f64 {
        0.5 * self.inner_diameter
    }

    pub fn outer_radius(&self) -> f64 {
        0.5 * self.outer_diameter
    }

    /// Indices of the tapes wired to heating zone `zone`.
    pub fn tapes_in_zone(&self, zone: usize) -> Vec<usize> {
        self.heating_tapes
            .iter()
            .enumerate()
            .filter(|(_, t)| t.zone == zone)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.length,
            self.inner_diameter,
            self.outer_diameter,
            self.core_radius,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.length <= 0.0 {
            return Err(config("geometry: lengths must be finite and L > 0"));
        }
        if !(0.0 < self.core_radius
            && self.core_radius < self.inner_radius()
            && self.inner_radius() < self.outer_radius())
        {
            return Err(config(format!(
                "geometry: require 0 < r_c < d1/2 < d2/2, got r_c={}, d1/2={}, d2/2={}",
                self.core_radius,
                self.inner_radius(),
                self.outer_radius()
            )));
        }

        let mut tapes: Vec<&HeatingTape> = self.heating_tapes.iter().collect();
        tapes.sort_by(|a, b| a.start.total_cmp(&b.start));
        for t in &tapes {
            if !(0.0 <= t.start && t.start < t.end && t.end <= self.length) {
                return Err(config(format!(
                    "geometry: heating tape [{}, {}] must lie within [0, {}]",
                    t.start, t.end, self.length
                )));
            }
            if t.zone >= self.num_heating_zones {
                return Err(config(format!(
                    "geometry: heating tape zone {} out of range (num_heating_zones = {})",
                    t.zone + 1,
                    self.num_heating_zones
                )));
            }
        }
        for pair in tapes.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(config(format!(
                    "geometry: heating tapes [{}, {}] and [{}, {}] overlap",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        if !self.heating_tapes.is_empty() {
            let n_th = self.heating_tapes.len();
            let n_h = self.num_heating_zones;
            if n_th % n_h != 0 {
                return Err(config(format!(
                    "geometry: {n_th} tapes cannot be split evenly over {n_h} heating zones"
                )));
            }
            for z in 0..n_h {
                let count = self.tapes_in_zone(z).len();
                if count != n_th / n_h {
                    return Err(config(format!(
                        "geometry: heating zone {} has {count} tapes, expected {}",
                        z + 1,
                        n_th / n_h
                    )));
                }
            }
        }

        for s in &self.sensors {
            let inside = (0.0..=self.length).contains(&s.x) && (0.0..=self.outer_radius()).contains(&s.r);
            if !inside {
                return Err(config(format!(
                    "geometry: sensor {} at (x={}, r={}) lies outside the modelled region",
                    s.label, s.x, s.r
                )));
            }
        }
        Ok(())
    }
}

/// The three radially stacked material regions, from the axis outwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ZoneKind {
    ScrewCore,
    ScrewConveyor,
    Cylinder,
}

impl ZoneKind {
    pub const ALL: [ZoneKind; 3] = [ZoneKind::ScrewCore, ZoneKind::ScrewConveyor, ZoneKind::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            ZoneKind::ScrewCore => "screw_core",
            ZoneKind::ScrewConveyor => "screw_conveyor",
            ZoneKind::Cylinder => "cylinder",
        }
    }
}

/// Constant material properties of one zone (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialZone {
    pub kind: ZoneKind,
    /// kg/m^3
    pub density: f64,
    /// J/(kg K)
    pub heat_capacity: f64,
    /// W/(m K)
    pub conductivity: f64,
}

impl MaterialZone {
    pub fn new(kind: ZoneKind, density: f64, heat_capacity: f64, conductivity: f64) -> Result<Self> {
        let m = Self {
            kind,
            density,
            heat_capacity,
            conductivity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.density, self.heat_capacity, self.conductivity]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(config(format!(
                "materials.{}: density, heat capacity and conductivity must be > 0",
                self.kind.name()
            )))
        }
    }

    /// Volumetric heat capacity rho * c_p.
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.density * self.heat_capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Materials {
    pub screw_core: MaterialZone,
    pub screw_conveyor: MaterialZone,
    pub cylinder: MaterialZone,
}

impl Materials {
    pub fn get(&self, kind: ZoneKind) -> &MaterialZone {
        match kind {
            ZoneKind::ScrewCore => &self.screw_core,
            ZoneKind::ScrewConveyor => &self.screw_conveyor,
            ZoneKind::Cylinder => &self.cylinder,
        }
    }

    pub fn get_mut(&mut self, kind: ZoneKind) -> &mut MaterialZone {
        match kind {
            ZoneKind::ScrewCore => &mut self.screw_core,
            ZoneKind::ScrewConveyor => &mut self.screw_conveyor,
            ZoneKind::Cylinder => &mut self.cylinder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in ZoneKind::ALL {
            let m = self.get(kind);
            if m.kind != kind {
                return Err(config(format!(
                    "materials.{}: entry tagged as {}",
                    kind.name(),
                    m.kind.name()
                )));
            }
            m.validate()?;
        }
        Ok(())
    }

    /// Same material in all three zones; handy for homogeneous test problems.
    pub fn uniform(density: f64, heat_capacity: f64, conductivity: f64) -> Result<Self> {
        Ok(Self {
            screw_core: MaterialZone::new(ZoneKind::ScrewCore, density, heat_capacity, conductivity)?,
            screw_conveyor: MaterialZone::new(ZoneKind::ScrewConveyor, density, heat_capacity, conductivity)?,
            cylinder: MaterialZone::new(ZoneKind::Cylinder, density, heat_capacity, conductivity)?,
        })
    }
}
