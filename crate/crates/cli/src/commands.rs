//! The workflows behind the subcommands. Each takes parsed config and data
//! and returns in-memory results; file handling lives in `run`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use extruder_thermal::calib::{fit, FitOptions, FitProblem, FitResult, InitialState};
use extruder_thermal::feref::{assemble_variational, build_fe_mesh, fe_simulate, fe_steady_state};
use extruder_thermal::fvnet::{ExtruderModel, ExtruderSpec, ProbeSelection, Region};
use extruder_thermal::lti::{discretize, equilibrium, input_vectors, simulate, Discretization};
use extruder_thermal::reference;
use extruder_thermal::sensor::{augment_and_discretize, cut_model, design_gain, flux_density, AugmentedObserver, AxialCut, Estimator};
use extruder_thermal::TimeSeries;

use crate::config::{InitialConfig, ProjectConfig};
use crate::csvio::{parse_record, read_header, SeriesWriter};
use crate::error::{CliError, CliResult};

/// Sample period of `ts`, resampling by hold when `requested` differs.
pub fn resolve_dt(ts: TimeSeries, requested: Option<f64>) -> CliResult<(f64, TimeSeries)> {
    let native = ts.uniform_dt(1e-6);
    match (requested, native) {
        (Some(dt), _) if !(dt > 0.0) => Err(CliError::Config(format!("--dt must be positive, got {dt}"))),
        (Some(dt), Some(n)) if (dt - n).abs() <= 1e-9 * dt => Ok((dt, ts)),
        (Some(dt), _) => {
            info!("resampling input to dt = {dt} s by sample-and-hold");
            let r = ts.resample_hold(dt)?;
            Ok((dt, r))
        }
        (None, Some(n)) => Ok((n, ts)),
        (None, None) if ts.len() < 2 => Err(CliError::Data(
            "input has a single sample; pass --dt to set the step".into(),
        )),
        (None, None) => Err(CliError::Data(
            "input is not uniformly sampled; pass --dt to resample".into(),
        )),
    }
}

fn require_channels(ts: &TimeSeries, labels: &[String], what: &str) -> CliResult<()> {
    let missing: Vec<&str> = labels
        .iter()
        .filter(|l| ts.channel(l).is_none())
        .map(String::as_str)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{what} lacks channel(s): {}", missing.join(", "))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildSummary {
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub max_real_eigenvalue: f64,
    pub metzler: bool,
}

impl BuildSummary {
    pub fn stable(&self) -> bool {
        self.max_real_eigenvalue < 0.0
    }
}

impl fmt::Display for BuildSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "states={}, inputs={}, outputs={}, stable={}",
            self.states,
            self.inputs,
            self.outputs,
            self.stable()
        )
    }
}

pub fn cmd_build(cfg: &ProjectConfig) -> CliResult<BuildSummary> {
    let spec = cfg.spec()?;
    let model = spec.build(cfg.simulation.probe_selection())?;
    let lti = &model.lti;
    Ok(BuildSummary {
        states: lti.n_states(),
        inputs: lti.n_inputs(),
        outputs: lti.sensor_rows().len(),
        max_real_eigenvalue: lti.max_real_eigenvalue(),
        metzler: lti.is_metzler(0.0),
    })
}

fn initial_state(cfg: &ProjectConfig, model: &ExtruderModel, u0: &DVector<f64>) -> CliResult<DVector<f64>> {
    match cfg.simulation.initial {
        InitialConfig::Equilibrium => Ok(equilibrium(&model.lti, u0)?),
        InitialConfig::Uniform => {
            let t = cfg.simulation.initial_temperature.ok_or_else(|| {
                CliError::Config("simulation.initial_temperature is required for initial = \"uniform\"".into())
            })?;
            Ok(DVector::from_element(model.lti.n_states(), t))
        }
    }
}

/// Sensor outputs and configured probes for the inputs in `input`.
pub fn cmd_simulate(cfg: &ProjectConfig, input: TimeSeries, dt: Option<f64>) -> CliResult<TimeSeries> {
    let spec = cfg.spec()?;
    let model = spec.build(cfg.simulation.probe_selection())?;
    let labels = model.lti.input_labels();
    require_channels(&input, &labels, "input")?;
    let (dt, input) = resolve_dt(input, dt)?;
    let method = cfg.simulation.method.resolve(model.lti.n_states());
    let d = discretize(&model.lti, dt, method)?;
    let u0 = input_vectors(&labels, &input)?.swap_remove(0);
    let x0 = initial_state(cfg, &model, &u0)?;
    Ok(simulate(&d, &x0, &input, false)?.outputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorDeviation {
    pub label: String,
    pub max_abs: f64,
    pub rms: f64,
}

#[derive(Debug, Clone)]
pub struct FeComparison {
    pub sensors: Vec<SensorDeviation>,
    pub fv: TimeSeries,
    pub fe: TimeSeries,
}

impl FeComparison {
    pub fn max_abs(&self) -> f64 {
        self.sensors.iter().map(|s| s.max_abs).fold(0.0, f64::max)
    }

    pub fn max_rms(&self) -> f64 {
        self.sensors.iter().map(|s| s.rms).fold(0.0, f64::max)
    }

    /// RMS over all sensors and samples.
    pub fn rms(&self) -> f64 {
        let n = self.sensors.len().max(1) as f64;
        (self.sensors.iter().map(|s| s.rms * s.rms).sum::<f64>() / n).sqrt()
    }
}

/// Run the FV model (zero-order hold) and the nested FE model (backward
/// Euler) on the same inputs, both from their steady state at the first
/// sample.
pub fn fe_compare(spec: &ExtruderSpec, input: &TimeSeries, dt: f64, refine: usize) -> CliResult<FeComparison> {
    let model = spec.build(ProbeSelection::default())?;
    let labels = model.lti.input_labels();
    require_channels(input, &labels, "input")?;
    let u0 = input_vectors(&labels, input)?.swap_remove(0);

    let d = discretize(&model.lti, dt, Discretization::ZeroOrderHold)?;
    let x0 = equilibrium(&model.lti, &u0)?;
    let fv = simulate(&d, &x0, input, false)?.outputs;

    let mesh = build_fe_mesh(&model.mesh, &Region::Full, refine)?;
    let probes = mesh.sensor_probes(&spec.geometry.sensors)?;
    let sys = assemble_variational(&model.mesh, &mesh, &model.conditions, dt)?;
    let u0_fe = input_vectors(&sys.input_labels(), input)?.swap_remove(0);
    let t0 = fe_steady_state(&sys.ops, &u0_fe)?;
    let fe = fe_simulate(&sys, &t0, input, &probes)?;

    let sensors = spec
        .geometry
        .sensors
        .iter()
        .map(|s| {
            let a = fv.channel(&s.label).expect("fv sensor");
            let b = fe.channel(&s.label).expect("fe sensor");
            let (mut max_abs, mut sq) = (0.0f64, 0.0);
            for (x, y) in a.iter().zip(b) {
                max_abs = max_abs.max((x - y).abs());
                sq += (x - y).powi(2);
            }
            SensorDeviation {
                label: s.label.clone(),
                max_abs,
                rms: (sq / a.len() as f64).sqrt(),
            }
        })
        .collect();
    Ok(FeComparison { sensors, fv, fe })
}

pub fn cmd_fe_compare(cfg: &ProjectConfig, input: TimeSeries, dt: Option<f64>, refine: usize) -> CliResult<FeComparison> {
    let spec = cfg.spec()?;
    let (dt, input) = resolve_dt(input, dt)?;
    fe_compare(&spec, &input, dt, refine)
}

pub fn fe_report_series(cmp: &FeComparison) -> String {
    let mut s = String::from("sensor,max_abs_dev,rms_dev\n");
    for d in &cmp.sensors {
        s += &format!(
            "{},{},{}\n",
            d.label,
            crate::csvio::format_f64(d.max_abs),
            crate::csvio::format_f64(d.rms)
        );
    }
    s
}

/// Calibration problem from a config and a record holding inputs and sensors.
pub fn fit_problem(cfg: &ProjectConfig, data: TimeSeries, dt: Option<f64>) -> CliResult<FitProblem> {
    let spec = cfg.spec()?;
    let model = spec.build(ProbeSelection::default())?;
    let inputs = model.lti.input_labels();
    let sensors: Vec<String> = spec.geometry.sensors.iter().map(|s| s.label.clone()).collect();
    require_channels(&data, &inputs, "input data")?;
    require_channels(&data, &sensors, "measurement data")?;
    let (dt, data) = resolve_dt(data, dt)?;
    let params = cfg.fit.params(&spec)?;
    let problem = FitProblem {
        measurement: data.select(&sensors)?,
        input: data.select(&inputs)?,
        method: cfg.fit.method.resolve(model.lti.n_states()),
        spec,
        params,
        dt,
        initial_state: InitialState::EquilibriumFromMeasured,
        weights: cfg.fit.weights.clone(),
    };
    problem.validate()?;
    Ok(problem)
}

pub fn cmd_fit(cfg: &ProjectConfig, data: TimeSeries, dt: Option<f64>) -> CliResult<(FitProblem, FitResult)> {
    let problem = fit_problem(cfg, data, dt)?;
    let mut options = FitOptions::default();
    if let Some(n) = cfg.fit.max_iterations {
        options.max_iterations = n;
    }
    let result = fit(&problem, &options)?;
    Ok((problem, result))
}

pub fn fit_report(problem: &FitProblem, r: &FitResult) -> String {
    let energy = problem.signal_energy();
    let mut s = String::new();
    s += &format!("convergence: {}\n", r.convergence);
    s += &format!("iterations: {}\n", r.iterations);
    s += &format!("evaluations: {}\n", r.evaluations);
    s += &format!("residuals: {}\n", r.n_residuals);
    s += &format!("initial_cost: {:e}\n", r.initial_cost);
    s += &format!("final_cost: {:e}\n", r.cost);
    s += &format!("cost_per_residual: {:e}\n", r.cost / r.n_residuals as f64);
    s += &format!("relative_cost: {:e}\n", if energy > 0.0 { r.cost / energy } else { 0.0 });
    s += "parameters:\n";
    s += &format!("  {:<12} {:>16} {:>12} {:>12} {:>12}\n", "name", "estimate", "rel_std", "lower", "upper");
    for (i, name) in r.names.iter().enumerate() {
        let p = &problem.params[i];
        s += &format!(
            "  {:<12} {:>16.9e} {:>12.3e} {:>12.4e} {:>12.4e}{}\n",
            name,
            r.p_hat[i],
            r.relative_std[i],
            p.lower,
            p.upper,
            if r.unidentifiable.contains(name) { "  unidentifiable" } else { "" }
        );
    }
    s
}

/// Designed observer plus the axial grouping behind its `q` entries.
pub struct ObserverSetup {
    pub model: ExtruderModel,
    pub axial: AxialCut,
    pub observer: AugmentedObserver,
}

pub fn design_observer(cfg: &ProjectConfig, dt: f64) -> CliResult<ObserverSetup> {
    if !(dt > 0.0) {
        return Err(CliError::Config(format!("observer dt must be positive, got {dt}")));
    }
    let spec = cfg.spec()?;
    let model = spec.build(ProbeSelection::default())?;
    let oc = &cfg.observer;
    let axial = oc.axial_cut(model.mesh.n_axial())?;
    let cut = cut_model(&model, &axial, &oc.radial_cut(&model))?;
    let obs = augment_and_discretize(&cut, dt)?;
    let (qw, rv) = oc.tuning().covariances(&cut, dt)?;
    let observer = design_gain(&obs, &qw, &rv)?;
    Ok(ObserverSetup { model, axial, observer })
}

/// Step between the first two samples of a stream.
pub fn leading_dt<R: Read>(src: R, src_name: &Path) -> CliResult<f64> {
    let mut rdr = crate::csvio::csv_reader(src);
    let names = read_header(&mut rdr, src_name)?;
    let mut times = Vec::with_capacity(2);
    for rec in rdr.records().take(2) {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", src_name.display())))?;
        times.push(parse_record(&rec, names.len(), src_name)?.0);
    }
    match times[..] {
        [a, b] if b > a => Ok(b - a),
        [_, _] => Err(CliError::Data(format!("{}: time must increase", src_name.display()))),
        _ => Err(CliError::Data(format!(
            "{}: need two samples to infer the observer step; set observer.dt or --dt",
            src_name.display()
        ))),
    }
}

/// Last estimate of a stream, for the profile snapshot.
#[derive(Debug, Clone)]
pub struct StreamSummary {
    pub samples: usize,
    pub skipped: usize,
    pub snapshot: Option<(f64, DVector<f64>)>,
}

/// Feed CSV records from `src` through the filter and write one row of
/// estimates per sample to `out`, flushing after each row.
pub fn observe_stream<R: Read, W: Write>(
    setup: &ObserverSetup,
    src: R,
    src_name: &Path,
    out: W,
    with_states: bool,
    snapshot_time: Option<f64>,
) -> CliResult<StreamSummary> {
    let obs = &setup.observer;
    let mut rdr = crate::csvio::csv_reader(src);
    let names = read_header(&mut rdr, src_name)?;
    let find = |label: &String| names.iter().position(|n| n == label);
    let col = |labels: &[String], what: &str| -> CliResult<Vec<usize>> {
        labels
            .iter()
            .map(|l| find(l).ok_or_else(|| CliError::Data(format!("{what} lacks channel {l}"))))
            .collect()
    };
    let u_cols = col(&obs.input_labels(), "observer input stream")?;
    let y_cols = col(&obs.sensor_labels, "observer input stream")?;

    let mut out_names = obs.q_labels.clone();
    if with_states {
        out_names.extend(obs.state_labels.iter().cloned());
    }
    let io = |e: std::io::Error| CliError::Data(format!("writing estimates: {e}"));
    let mut writer = SeriesWriter::new(out, &out_names).map_err(io)?;
    writer.flush().map_err(io)?;

    let mut est: Option<Estimator> = None;
    let mut last_t: Option<f64> = None;
    let mut summary = StreamSummary {
        samples: 0,
        skipped: 0,
        snapshot: None,
    };
    let mut record = csv::StringRecord::new();
    let mut row = Vec::with_capacity(out_names.len());
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| CliError::Data(format!("{}: {e}", src_name.display())))?;
        if !more {
            break;
        }
        let (t, values) = parse_record(&record, names.len(), src_name)?;
        if let Some(prev) = last_t {
            let step = t - prev;
            if (step - obs.dt).abs() > 1e-6 * obs.dt {
                return Err(CliError::Data(format!(
                    "{}: sample at t = {t} is {step} s after the previous one; observer runs at dt = {} s",
                    src_name.display(),
                    obs.dt
                )));
            }
        }
        last_t = Some(t);
        let u = DVector::from_iterator(u_cols.len(), u_cols.iter().map(|&c| values[c]));
        if u.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Data(format!("{}: non-finite input at t = {t}", src_name.display())));
        }
        let y = DVector::from_iterator(y_cols.len(), y_cols.iter().map(|&c| values[c]));
        let e = match est.as_mut() {
            Some(e) => e,
            None => est.insert(Estimator::new(obs, &u)?),
        };
        let step = e.update(&u, &y);
        if !step.updated {
            warn!("t = {t}: missing sensor value, prediction only");
        }
        row.clear();
        row.extend(step.q.iter());
        if with_states {
            row.extend(step.x_c.iter());
        }
        writer.row(t, &row).map_err(io)?;
        writer.flush().map_err(io)?;
        summary.samples += 1;
        if snapshot_time.is_none_or(|ts| t <= ts + 1e-9 * obs.dt) {
            summary.snapshot = Some((t, step.q.clone()));
        }
    }
    summary.skipped = est.map_or(0, |e| e.skipped);
    if summary.samples == 0 {
        return Err(CliError::Data(format!("{}: no samples", src_name.display())));
    }
    Ok(summary)
}

/// `q` versus axial position at one instant, with flux densities.
pub fn profile_snapshot(setup: &ObserverSetup, t: f64, q: &DVector<f64>) -> String {
    let obs = &setup.observer;
    let mesh = &setup.model.mesh;
    let flux = flux_density(obs, q);
    let n_axial = mesh.n_axial();
    let groups: Vec<Vec<usize>> = match &setup.axial {
        AxialCut::PerElement => (0..n_axial).map(|ix| vec![ix]).collect(),
        AxialCut::Groups(g) => g.clone(),
    };
    let edges = &mesh.axial_edges;
    let mut s = format!("# t = {}\nlabel,x_start,x_end,q,flux_density\n", crate::csvio::format_f64(t));
    for (j, label) in obs.q_labels.iter().enumerate() {
        let (a, b) = match groups.get(j) {
            Some(g) => (
                edges[*g.iter().min().expect("non-empty")],
                edges[*g.iter().max().expect("non-empty") + 1],
            ),
            // radial entries sit at the discharge end
            None => (edges[0], edges[1]),
        };
        s += &format!(
            "{label},{},{},{},{}\n",
            crate::csvio::format_f64(a),
            crate::csvio::format_f64(b),
            crate::csvio::format_f64(q[j]),
            crate::csvio::format_f64(flux[j])
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GenerateKind {
    /// Tape temperatures of a heat-up from ambient.
    HeatUp,
    /// Heat-up inputs plus simulated (optionally noisy) sensors.
    Measured,
    /// Twin plant with process heat in the granulate next to the barrel:
    /// inputs, sensors and the true interface flows `q_true_<ix>`.
    Twin,
    /// The built-in reference configuration.
    ReferenceConfig,
}

pub struct GenerateOptions {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub noise: f64,
}

fn add_noise(ts: &mut TimeSeries, labels: &[String], sigma: f64, seed: u64) -> CliResult<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CliError::Config(format!("--noise: {e}")))?;
    let mut rng = StdRng::seed_from_u64(seed);
    for l in labels {
        for v in ts.channel_mut(l).expect("simulated channel") {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(())
}

pub fn cmd_generate(cfg: &ProjectConfig, kind: GenerateKind, o: &GenerateOptions) -> CliResult<TimeSeries> {
    if !(o.dt > 0.0) || !(o.duration >= 0.0) {
        return Err(CliError::Config("--dt must be > 0 and --duration >= 0".into()));
    }
    let spec = cfg.spec()?;
    let n_zones = spec.geometry.num_heating_zones;
    let mut inputs = reference::heat_up_inputs_for(n_zones, o.dt, o.duration);
    if spec.heat.ambient_channel != "T_0" {
        let t0 = inputs.channel("T_0").expect("ambient").to_vec();
        let mut renamed = inputs.select(&(1..=n_zones).map(|z| format!("T_h{z}")).collect::<Vec<_>>())?;
        renamed.push_channel(&spec.heat.ambient_channel, t0)?;
        inputs = renamed;
    }
    let sensors: Vec<String> = spec.geometry.sensors.iter().map(|s| s.label.clone()).collect();
    match kind {
        GenerateKind::HeatUp => Ok(inputs),
        GenerateKind::Measured => {
            let mut y = cmd_simulate(cfg, inputs.clone(), Some(o.dt))?.select(&sensors)?;
            add_noise(&mut y, &sensors, o.noise, o.seed)?;
            Ok(crate::csvio::merge_series(vec![("inputs".into(), inputs), ("sensors".into(), y)])?)
        }
        GenerateKind::Twin => {
            let model = reference::twin_plant(&spec)?;
            let n_a = model.mesh.n_axial();
            let profile = reference::process_heat_profile(n_a);
            let mut u = inputs.clone();
            for (ix, q) in profile.iter().enumerate() {
                u.push_channel(&reference::source_channel(ix), vec![*q; u.len()])?;
            }
            let d = discretize(&model.lti, o.dt, Discretization::default_for(model.lti.n_states()))?;
            let u0 = input_vectors(&model.lti.input_labels(), &u)?.swap_remove(0);
            let x0 = equilibrium(&model.lti, &u0)?;
            let out = simulate(&d, &x0, &u, false)?.outputs;
            let mut y = out.select(&sensors)?;
            add_noise(&mut y, &sensors, o.noise, o.seed)?;
            let mut truth = TimeSeries::new(out.time().to_vec())?;
            for ix in 0..n_a {
                let flow = out.channel(&format!("q_gamma3_{ix}")).expect("interface probe");
                // the probe counts flow into the screw; report flow into the barrel
                truth.push_channel(&format!("q_true_{ix}"), flow.iter().map(|v| -v).collect())?;
            }
            Ok(crate::csvio::merge_series(vec![
                ("inputs".into(), inputs),
                ("sensors".into(), y),
                ("truth".into(), truth),
            ])?)
        }
        GenerateKind::ReferenceConfig => Err(CliError::Config("reference-config is not a time series".into())),
    }
}
