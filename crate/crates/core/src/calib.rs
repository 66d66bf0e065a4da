//! Least-squares calibration of the unknown heat transfer and granulate
//! parameters against measured sensor trajectories.
//!
//! The optimizer is a bound-constrained Levenberg-Marquardt iteration on the
//! logarithm of the parameters with a forward-difference Jacobian.

use std::fmt;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{config, Error, Result};
use crate::fvnet::{ExtruderSpec, ProbeSelection};
use crate::lti::{discretize, equilibrium, input_vectors, simulate, Discretization};
use crate::timeseries::TimeSeries;

/// Residual entries used when the model cannot be built or simulated.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Heat capacity of the screw-conveyor zone, `cp_s`.
    HeatCapacityScrew,
    /// Conductivity of the screw-conveyor zone, `lambda_s`.
    ConductivityScrew,
    /// `alpha_ht<j>`, 1-based tape number.
    AlphaHt(usize),
    /// `alpha_<k>`, 1-based ambient coefficient number.
    AlphaAmbient(usize),
}

impl ParamKind {
    pub fn parse(name: &str) -> Result<Self> {
        let index = |rest: &str| -> Result<usize> {
            match rest.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(config(format!("fit parameter `{name}`: expected a 1-based index"))),
            }
        };
        match name {
            "cp_s" => Ok(ParamKind::HeatCapacityScrew),
            "lambda_s" => Ok(ParamKind::ConductivityScrew),
            _ if name.starts_with("alpha_ht") => Ok(ParamKind::AlphaHt(index(&name[8..])?)),
            _ if name.starts_with("alpha_") => Ok(ParamKind::AlphaAmbient(index(&name[6..])?)),
            _ => Err(config(format!(
                "unknown fit parameter `{name}` (expected cp_s, lambda_s, alpha_ht<j> or alpha_<k>)"
            ))),
        }
    }

    fn slot<'a>(&self, spec: &'a mut ExtruderSpec) -> Result<&'a mut f64> {
        let out_of_range = |what: &str, k: usize, n: usize| config(format!("fit parameter {what}{k}: only {n} available"));
        match *self {
            ParamKind::HeatCapacityScrew => Ok(&mut spec.materials.screw_conveyor.heat_capacity),
            ParamKind::ConductivityScrew => Ok(&mut spec.materials.screw_conveyor.conductivity),
            ParamKind::AlphaHt(j) => {
                let n = spec.heat.alpha_ht.len();
                spec.heat.alpha_ht.get_mut(j - 1).ok_or_else(|| out_of_range("alpha_ht", j, n))
            }
            ParamKind::AlphaAmbient(k) => {
                let v = spec.heat.ambient.values_mut();
                let n = v.len();
                v.get_mut(k - 1).ok_or_else(|| out_of_range("alpha_", k, n))
            }
        }
    }

    pub fn get(&self, spec: &ExtruderSpec) -> Result<f64> {
        let mut copy = spec.clone();
        self.slot(&mut copy).map(|v| *v)
    }

    pub fn set(&self, spec: &mut ExtruderSpec, value: f64) -> Result<()> {
        *self.slot(spec)? = value;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl ParamSpec {
    pub fn new(name: &str, lower: f64, upper: f64, initial: f64) -> Result<Self> {
        let p = Self {
            name: name.to_string(),
            kind: ParamKind::parse(name)?,
            lower,
            upper,
            initial,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lower > 0.0 && self.lower <= self.initial && self.initial <= self.upper && self.upper.is_finite();
        if !ok {
            return Err(config(format!(
                "fit parameter {}: need 0 < lower <= initial <= upper < inf, got {} / {} / {}",
                self.name, self.lower, self.initial, self.upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Steady state of the candidate model at the first input sample.
    EquilibriumFromMeasured,
    Explicit(DVector<f64>),
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    /// Model template; fitted parameters overwrite its entries.
    pub spec: ExtruderSpec,
    pub params: Vec<ParamSpec>,
    /// Measured sensor channels, labelled like the model outputs.
    pub measurement: TimeSeries,
    /// Input channels on the same time grid.
    pub input: TimeSeries,
    pub dt: f64,
    pub initial_state: InitialState,
    pub method: Discretization,
    /// Per-sensor residual weights, model output order; `None` is uniform.
    pub weights: Option<Vec<f64>>,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(config("fit: no parameters to estimate"));
        }
        for (i, p) in self.params.iter().enumerate() {
            p.validate()?;
            p.kind.get(&self.spec)?;
            if self.params[..i].iter().any(|q| q.kind == p.kind) {
                return Err(config(format!("fit parameter {} listed twice", p.name)));
            }
        }
        if self.measurement.time() != self.input.time() {
            return Err(Error::Data("measurement and input series must share the time grid".into()));
        }
        if self.measurement.is_empty() {
            return Err(Error::Data("measurement series is empty".into()));
        }
        let sensors: Vec<&str> = self.spec.geometry.sensors.iter().map(|s| s.label.as_str()).collect();
        self.measurement.require(&sensors)?;
        if let Some(w) = &self.weights {
            if w.len() != sensors.len() || w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(config("fit.weights: one positive weight per sensor required"));
            }
        }
        Ok(())
    }

    pub fn initial(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.initial).collect()
    }

    /// Template with the given parameter values written in.
    pub fn spec_at(&self, p: &[f64]) -> Result<ExtruderSpec> {
        let mut spec = self.spec.clone();
        for (ps, &v) in self.params.iter().zip(p) {
            ps.kind.set(&mut spec, v)?;
        }
        Ok(spec)
    }

    pub fn n_residuals(&self) -> usize {
        self.measurement.len() * self.spec.geometry.sensors.len()
    }

    /// Sum of squared (weighted) measurements; scale for relative tolerances.
    pub fn signal_energy(&self) -> f64 {
        let labels = self.sensor_labels();
        let cols = self.measurement.require(&labels).expect("validated");
        cols.iter()
            .enumerate()
            .map(|(i, c)| {
                let w = self.weight(i);
                c.iter().filter(|v| v.is_finite()).map(|v| (w * v).powi(2)).sum::<f64>()
            })
            .sum()
    }

    fn sensor_labels(&self) -> Vec<String> {
        self.spec.geometry.sensors.iter().map(|s| s.label.clone()).collect()
    }

    fn weight(&self, sensor: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[sensor])
    }

    /// Model sensor trajectories at parameter values `p`.
    pub fn simulate_at(&self, p: &[f64]) -> Result<TimeSeries> {
        let model = self.spec_at(p)?.build(ProbeSelection::default())?;
        let d = discretize(&model.lti, self.dt, self.method)?;
        let x0 = match &self.initial_state {
            InitialState::Explicit(x) => x.clone(),
            InitialState::EquilibriumFromMeasured => {
                let u0 = input_vectors(&model.lti.input_labels(), &self.input)?.swap_remove(0);
                equilibrium(&model.lti, &u0)?
            }
        };
        Ok(simulate(&d, &x0, &self.input, false)?.outputs)
    }

    /// Stacked `w (y_meas - y)`, sample-major. Missing measurements give 0.
    pub fn residual_checked(&self, p: &[f64]) -> Result<DVector<f64>> {
        let y = self.simulate_at(p)?;
        let labels = self.sensor_labels();
        let meas = self.measurement.require(&labels)?;
        let model = y.require(&labels)?;
        let ns = labels.len();
        let mut r = DVector::zeros(self.n_residuals());
        for k in 0..self.measurement.len() {
            for i in 0..ns {
                let m = meas[i][k];
                r[k * ns + i] = if m.is_finite() { self.weight(i) * (m - model[i][k]) } else { 0.0 };
            }
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite model output".into()));
        }
        Ok(r)
    }

    /// Residual with failures mapped to a large constant penalty.
    pub fn residual(&self, p: &[f64]) -> DVector<f64> {
        match self.residual_checked(p) {
            Ok(r) => r,
            Err(e) => {
                warn!("residual at p = {p:?} failed ({e}); using penalty");
                DVector::from_element(self.n_residuals(), PENALTY)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Forward-difference step relative to each parameter.
    pub fd_step: f64,
    /// Largest cosine between the residual and any Jacobian column.
    pub gtol: f64,
    /// Relative step size in log-parameters.
    pub xtol: f64,
    /// Relative cost reduction.
    pub ftol: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            fd_step: 1e-6,
            gtol: 1e-10,
            xtol: 1e-10,
            ftol: 1e-14,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    ZeroResidual,
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// No decrease could be found.
    Stalled,
}

impl fmt::Display for Convergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Convergence::ZeroResidual => "zero_residual",
            Convergence::Gradient => "gradient_tolerance",
            Convergence::Step => "step_tolerance",
            Convergence::Cost => "cost_tolerance",
            Convergence::MaxIterations => "max_iterations",
            Convergence::Stalled => "stalled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub p_hat: Vec<f64>,
    /// `||r||^2` at `p_hat`.
    pub cost: f64,
    pub initial_cost: f64,
    pub n_residuals: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub convergence: Convergence,
    /// Relative standard deviation of each parameter from `s^2 (J^T J)^-1`
    /// in log coordinates; infinite for unidentifiable parameters.
    pub relative_std: Vec<f64>,
    pub unidentifiable: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.p_hat[i])
    }
}

struct Evaluator<'a> {
    problem: &'a FitProblem,
    evaluations: usize,
}

impl Evaluator<'_> {
    fn residual(&mut self, theta: &DVector<f64>) -> DVector<f64> {
        self.evaluations += 1;
        let p: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        self.problem.residual(&p)
    }

    /// Forward differences in log space; backward at an upper bound.
    fn jacobian(&mut self, theta: &DVector<f64>, r: &DVector<f64>, hi: &DVector<f64>, step: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(r.len(), theta.len());
        for i in 0..theta.len() {
            let h = if theta[i] + step <= hi[i] { step } else { -step };
            let mut t = theta.clone();
            t[i] += h;
            let ri = self.residual(&t);
            // residual = y_meas - y, so dr/dtheta = -(dy/dtheta)
            j.set_column(i, &((ri - r) / h));
        }
        j
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Columns whose norm is below `1e-8` of the largest.
fn weak_columns(j: &DMatrix<f64>) -> Vec<bool> {
    let norms: Vec<f64> = j.column_iter().map(|c| c.norm()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    norms.iter().map(|&n| !(n > 1e-8 * max)).collect()
}

pub fn fit(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    let n = problem.params.len();
    let lo = DVector::from_iterator(n, problem.params.iter().map(|p| p.lower.ln()));
    let hi = DVector::from_iterator(n, problem.params.iter().map(|p| p.upper.ln()));
    let mut theta = DVector::from_iterator(n, problem.params.iter().map(|p| p.initial.ln()));
    let mut ev = Evaluator { problem, evaluations: 0 };

    let energy = problem.signal_energy().max(f64::MIN_POSITIVE);
    let mut r = ev.residual(&theta);
    let initial_cost = cost(&r);
    let mut f = initial_cost;
    let mut lambda = options.initial_lambda;
    let mut iterations = 0;
    let mut reason = Convergence::MaxIterations;
    let mut jac = None;
    info!("fit: {} parameters, {} residuals, initial cost {f:.6e}", n, r.len());

    while iterations < options.max_iterations {
        if f <= 1e-28 * energy {
            reason = Convergence::ZeroResidual;
            break;
        }
        let j = ev.jacobian(&theta, &r, &hi, options.fd_step);
        let weak = weak_columns(&j);
        let g = j.transpose() * &r;
        let rn = r.norm();
        let cosine = (0..n)
            .filter(|&i| !weak[i])
            .map(|i| {
                // ignore gradient components pushing into an active bound
                let at_lo = theta[i] <= lo[i] && g[i] > 0.0;
                let at_hi = theta[i] >= hi[i] && g[i] < 0.0;
                if at_lo || at_hi {
                    0.0
                } else {
                    g[i].abs() / (j.column(i).norm() * rn)
                }
            })
            .fold(0.0, f64::max);
        jac = Some(j.clone());
        if cosine <= options.gtol {
            reason = Convergence::Gradient;
            break;
        }
        iterations += 1;

        let jtj = j.transpose() * &j;
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for i in 0..n {
                if weak[i] {
                    m.row_mut(i).fill(0.0);
                    m.column_mut(i).fill(0.0);
                    m[(i, i)] = 1.0;
                } else {
                    m[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
                }
            }
            // minimise ||r + J d||: J is dr/dtheta
            let mut rhs = -&g;
            for i in 0..n {
                if weak[i] {
                    rhs[i] = 0.0;
                }
            }
            let Some(delta) = m.clone().cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = DVector::from_iterator(n, (0..n).map(|i| (theta[i] + delta[i]).clamp(lo[i], hi[i])));
            let step = &trial - &theta;
            if step.norm() <= options.xtol * (options.xtol + theta.norm()) {
                small_step = true;
                break;
            }
            let r_trial = ev.residual(&trial);
            let f_trial = cost(&r_trial);
            let predicted = f - cost(&(&r + &j * &step));
            let actual = f - f_trial;
            if actual > 0.0 && f_trial.is_finite() {
                let rho = if predicted > 0.0 { actual / predicted } else { 1.0 };
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                let rel = actual / f;
                debug!("fit iter {iterations}: cost {f_trial:.6e} lambda {lambda:.3e}");
                theta = trial;
                r = r_trial;
                f = f_trial;
                accepted = true;
                if rel <= options.ftol {
                    reason = Convergence::Cost;
                }
                break;
            }
            lambda *= 4.0;
        }
        if small_step {
            reason = Convergence::Step;
            break;
        }
        if !accepted {
            reason = Convergence::Stalled;
            break;
        }
        if reason == Convergence::Cost {
            break;
        }
    }

    let j = match jac {
        Some(j) if reason != Convergence::Cost && reason != Convergence::MaxIterations => j,
        _ => ev.jacobian(&theta, &r, &hi, options.fd_step),
    };
    let weak = weak_columns(&j);
    let names: Vec<String> = problem.params.iter().map(|p| p.name.clone()).collect();
    let unidentifiable: Vec<String> = names.iter().zip(&weak).filter(|(_, w)| **w).map(|(n, _)| n.clone()).collect();
    if !unidentifiable.is_empty() {
        warn!("fit: unidentifiable parameters {unidentifiable:?} kept at their initial values");
    }
    let dof = (r.len() as f64 - n as f64).max(1.0);
    let s2 = f / dof;
    let cov = (j.transpose() * &j).pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::zeros(n, n));
    let relative_std = (0..n)
        .map(|i| if weak[i] { f64::INFINITY } else { (s2 * cov[(i, i)]).max(0.0).sqrt() })
        .collect();
    info!("fit: {reason} after {iterations} iterations, cost {f:.6e}");
    Ok(FitResult {
        names,
        p_hat: theta.iter().map(|t| t.exp()).collect(),
        cost: f,
        initial_cost,
        n_residuals: r.len(),
        iterations,
        evaluations: ev.evaluations,
        convergence: reason,
        relative_std,
        unidentifiable,
    })
}

/// The 18 parameters of the reference calibration: `cp_s`, `lambda_s`, one
/// `alpha_ht` per tape and one `alpha` per ambient group, each bounded to
/// `[value / 20, value * 20]` around `initial`.
pub fn default_params(spec: &ExtruderSpec, initial: &ExtruderSpec) -> Result<Vec<ParamSpec>> {
    let mut names = vec!["cp_s".to_string(), "lambda_s".to_string()];
    names.extend((1..=spec.heat.alpha_ht.len()).map(|j| format!("alpha_ht{j}")));
    names.extend((1..=spec.heat.ambient.values().len()).map(|k| format!("alpha_{k}")));
    names
        .iter()
        .map(|n| {
            let v = ParamKind::parse(n)?.get(initial)?;
            ParamSpec::new(n, v / 20.0, v * 20.0, v)
        })
        .collect()
}
