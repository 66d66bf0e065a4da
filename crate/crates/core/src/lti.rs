//! Continuous and discrete linear state-space models.

use nalgebra::{DMatrix, DVector};

use crate::error::{config, numeric, Error, Result};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Temperature source [K].
    Temperature,
    /// Heat-flow source [W].
    HeatFlow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputChannel {
    pub label: String,
    pub kind: ChannelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Thermocouple temperature; depends on the state only.
    Sensor,
    /// Heat-flow monitor; affine in state and input.
    Probe,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputChannel {
    pub label: String,
    pub kind: OutputKind,
}

/// State indices of the cylinder, screw conveyor and screw core zones.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZonePartition {
    pub cylinder: Vec<usize>,
    pub screw_conveyor: Vec<usize>,
    pub screw_core: Vec<usize>,
}

/// `x' = A x + B u`, `y = C x + D u`.
///
/// `D` is zero on sensor rows; only heat-flow probe rows carry feed-through.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Mesh cell index of every state.
    pub state_cells: Vec<usize>,
    pub state_labels: Vec<String>,
    pub partition: ZonePartition,
    pub inputs: Vec<InputChannel>,
    pub outputs: Vec<OutputChannel>,
    /// Thermal capacitance of every state [J/K].
    pub capacitance: DVector<f64>,
}

impl LtiModel {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn input_labels(&self) -> Vec<String> {
        self.inputs.iter().map(|c| c.label.clone()).collect()
    }

    pub fn output_labels(&self) -> Vec<String> {
        self.outputs.iter().map(|c| c.label.clone()).collect()
    }

    pub fn input_index(&self, label: &str) -> Option<usize> {
        self.inputs.iter().position(|c| c.label == label)
    }

    pub fn output_index(&self, label: &str) -> Option<usize> {
        self.outputs.iter().position(|c| c.label == label)
    }

    pub fn sensor_rows(&self) -> Vec<usize> {
        (0..self.outputs.len())
            .filter(|&i| self.outputs[i].kind == OutputKind::Sensor)
            .collect()
    }

    /// Indicator over the input columns that carry temperatures.
    pub fn temperature_inputs(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|c| if c.kind == ChannelKind::Temperature { 1.0 } else { 0.0 }),
        )
    }

    /// Off-diagonal entries non-negative (within `tol`) and diagonal strictly negative.
    pub fn is_metzler(&self, tol: f64) -> bool {
        let n = self.n_states();
        (0..n).all(|i| {
            (0..n).all(|j| if i == j { self.a[(i, i)] < 0.0 } else { self.a[(i, j)] >= -tol })
        })
    }

    /// Largest real part among the eigenvalues of `A`.
    pub fn max_real_eigenvalue(&self) -> f64 {
        max_real_eigenvalue(&self.a)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.max_real_eigenvalue() < 0.0
    }

    /// Sub-block `A[rows, cols]`.
    pub fn a_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.a[(rows[i], cols[j])])
    }

    /// Model with the given output rows only.
    pub fn with_outputs(&self, rows: &[usize]) -> LtiModel {
        let mut m = self.clone();
        m.c = self.c.select_rows(rows.iter());
        m.d = self.d.select_rows(rows.iter());
        m.outputs = rows.iter().map(|&r| self.outputs[r].clone()).collect();
        m
    }
}

pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Exact for inputs held constant over each step.
    ZeroOrderHold,
    /// Implicit Euler, `x_{k+1} = x_k + dt (A x_{k+1} + B u_k)`.
    BackwardEuler,
}

impl Discretization {
    /// ZOH up to this many states, backward Euler above.
    pub const ZOH_LIMIT: usize = 2000;

    pub fn default_for(n_states: usize) -> Self {
        if n_states <= Self::ZOH_LIMIT {
            Discretization::ZeroOrderHold
        } else {
            Discretization::BackwardEuler
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLti {
    pub ad: DMatrix<f64>,
    pub bd: DMatrix<f64>,
    pub cd: DMatrix<f64>,
    pub dd: DMatrix<f64>,
    pub dt: f64,
    pub method: Discretization,
    pub state_labels: Vec<String>,
    pub inputs: Vec<InputChannel>,
    pub outputs: Vec<OutputChannel>,
}

impl DiscreteLti {
    pub fn n_states(&self) -> usize {
        self.ad.nrows()
    }

    pub fn input_labels(&self) -> Vec<String> {
        self.inputs.iter().map(|c| c.label.clone()).collect()
    }

    pub fn output_labels(&self) -> Vec<String> {
        self.outputs.iter().map(|c| c.label.clone()).collect()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.ad * x + &self.bd * u
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.cd * x + &self.dd * u
    }
}

/// ZOH discretization of `(A, B)` through the exponential of the augmented
/// matrix `[[A, B], [0, 0]] dt`, which also covers singular `A`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

pub fn discretize(model: &LtiModel, dt: f64, method: Discretization) -> Result<DiscreteLti> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(config(format!("dt must be positive, got {dt}")));
    }
    if model.a.iter().chain(model.b.iter()).any(|v| !v.is_finite()) {
        return Err(numeric("model matrices contain non-finite entries"));
    }
    let n = model.n_states();
    let (ad, bd) = match method {
        Discretization::ZeroOrderHold => zoh(&model.a, &model.b, dt),
        Discretization::BackwardEuler => {
            let m = DMatrix::identity(n, n) - &model.a * dt;
            let lu = m.lu();
            let ad = lu
                .try_inverse()
                .ok_or_else(|| numeric("I - dt A is singular"))?;
            let bd = &ad * (&model.b * dt);
            (ad, bd)
        }
    };
    if ad.iter().chain(bd.iter()).any(|v| !v.is_finite()) {
        return Err(numeric("discretization produced non-finite entries"));
    }
    Ok(DiscreteLti {
        ad,
        bd,
        cd: model.c.clone(),
        dd: model.d.clone(),
        dt,
        method,
        state_labels: model.state_labels.clone(),
        inputs: model.inputs.clone(),
        outputs: model.outputs.clone(),
    })
}

/// Result of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Model outputs at every input timestamp.
    pub outputs: TimeSeries,
    /// State at every input timestamp, when requested.
    pub states: Option<Vec<DVector<f64>>>,
}

/// Inputs of `u` arranged as one vector per sample, in model input order.
pub fn input_vectors(labels: &[String], u: &TimeSeries) -> Result<Vec<DVector<f64>>> {
    let cols = u.require(labels)?;
    let rows: Vec<DVector<f64>> = (0..u.len())
        .map(|k| DVector::from_iterator(cols.len(), cols.iter().map(|c| c[k])))
        .collect();
    if let Some(k) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("non-finite input at t = {}", u.time()[k])));
    }
    Ok(rows)
}

fn check_sampling(model: &DiscreteLti, u: &TimeSeries) -> Result<()> {
    if u.is_empty() {
        return Err(Error::Data("input series is empty".into()));
    }
    if u.len() > 1 {
        let ok = u
            .time()
            .windows(2)
            .all(|w| ((w[1] - w[0]) - model.dt).abs() <= 1e-6 * model.dt);
        if !ok {
            return Err(config(format!(
                "input series is not sampled at the model step dt = {} s; resample first",
                model.dt
            )));
        }
    }
    Ok(())
}

/// March `x_{k+1} = Ad x_k + Bd u_k` over the timestamps of `u` and report
/// `y_k = C x_k + D u_k` at every sample (the first one is the initial state).
pub fn simulate(model: &DiscreteLti, x0: &DVector<f64>, u: &TimeSeries, keep_states: bool) -> Result<Simulation> {
    if x0.len() != model.n_states() {
        return Err(config(format!(
            "initial state has {} entries, model has {} states",
            x0.len(),
            model.n_states()
        )));
    }
    check_sampling(model, u)?;
    let inputs = input_vectors(&model.input_labels(), u)?;
    let p = model.cd.nrows();
    let mut ys: Vec<Vec<f64>> = vec![Vec::with_capacity(u.len()); p];
    let mut states = keep_states.then(|| Vec::with_capacity(u.len()));
    let mut x = x0.clone();
    for (k, uk) in inputs.iter().enumerate() {
        let y = model.output(&x, uk);
        for (i, yi) in y.iter().enumerate() {
            ys[i].push(*yi);
        }
        if let Some(s) = states.as_mut() {
            s.push(x.clone());
        }
        if k + 1 < inputs.len() {
            x = model.step(&x, uk);
        }
    }
    let mut outputs = TimeSeries::new(u.time().to_vec())?;
    for (label, vals) in model.output_labels().iter().zip(ys) {
        outputs.push_channel(label, vals)?;
    }
    Ok(Simulation { outputs, states })
}

/// Steady state `x* = -A^{-1} B u` for constant input `u`.
pub fn equilibrium(model: &LtiModel, u: &DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != model.n_inputs() {
        return Err(config(format!(
            "input vector has {} entries, model has {} inputs",
            u.len(),
            model.n_inputs()
        )));
    }
    solve_checked(&model.a, &(-(&model.b * u)))
        .ok_or_else(|| numeric("A is singular (fully adiabatic model?); no unique equilibrium"))
}

/// Solve `M x = rhs`, rejecting numerically singular `M`.
pub(crate) fn solve_checked(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows().min(u.ncols())).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-13 * max {
        return None;
    }
    lu.solve(rhs)
}
