//! Heat-flow observer ("smart sensor") on the cylinder-only model.
//!
//! The full model is cut along the cylinder/granulate interface. The coupling
//! to the screw region is replaced by unknown heat flows `q` into the cylinder
//! cells, modelled as constant (`q' = 0`) and appended to the state. A
//! steady-state Kalman filter on the discretized augmented system estimates
//! the cylinder temperatures and `q` from the thermocouples.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{config, Error, Result};
use crate::fvnet::ExtruderModel;
use crate::lti::{input_vectors, max_real_eigenvalue, spectral_radius, zoh, ChannelKind, InputChannel, OutputKind};
use crate::timeseries::TimeSeries;

/// Which cylinder cells receive a radial cut entry `q^r`, as `(ix, ir)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadialCut {
    pub cells: Vec<(usize, usize)>,
}

impl RadialCut {
    pub fn none() -> Self {
        Self { cells: Vec::new() }
    }

    /// Cylinder cells at the discharge end (`x = 0`) outside the innermost
    /// ring, which already carries an axial entry.
    pub fn discharge_end(model: &ExtruderModel) -> Self {
        let m = &model.mesh;
        Self {
            cells: (m.cylinder_ring + 1..m.n_radial()).map(|ir| (0, ir)).collect(),
        }
    }
}

/// How the axial interface flows are parameterized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AxialCut {
    /// One unknown per axial element.
    PerElement,
    /// One unknown per group of consecutive axial elements, spread over the
    /// group at uniform flux density.
    Groups(Vec<Vec<usize>>),
}

impl AxialCut {
    /// `n_groups` contiguous groups of (nearly) equal element count.
    pub fn even_groups(n_axial: usize, n_groups: usize) -> Result<Self> {
        if n_groups == 0 || n_groups > n_axial {
            return Err(config(format!(
                "observer.axial_groups must be in 1..={n_axial}, got {n_groups}"
            )));
        }
        Ok(AxialCut::Groups(
            (0..n_groups)
                .map(|g| (g * n_axial / n_groups..(g + 1) * n_axial / n_groups).collect())
                .collect(),
        ))
    }
}

/// Cylinder-zone model with the interface flows as inputs:
/// `x_c' = A11 x_c + Bq q + Bc u`, `y = C1 x_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutModel {
    pub a11: DMatrix<f64>,
    pub bq: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub q_labels: Vec<String>,
    /// Interface area behind each `q` entry [m^2], for flux-density views.
    pub q_areas: Vec<f64>,
    pub state_labels: Vec<String>,
    /// Mesh cell of every cut-model state.
    pub state_cells: Vec<usize>,
    pub inputs: Vec<InputChannel>,
    pub sensor_labels: Vec<String>,
}

impl CutModel {
    pub fn n_states(&self) -> usize {
        self.a11.nrows()
    }

    pub fn n_q(&self) -> usize {
        self.bq.ncols()
    }

    pub fn input_labels(&self) -> Vec<String> {
        self.inputs.iter().map(|c| c.label.clone()).collect()
    }

    /// Steady-state map from `q` to the sensors, `-C1 A11^-1 Bq`.
    pub fn q_gain(&self) -> Result<DMatrix<f64>> {
        let lu = self.a11.clone().lu();
        let x = lu
            .solve(&self.bq)
            .ok_or_else(|| Error::Numeric("cut model A11 is singular".into()))?;
        Ok(-(&self.c1 * x))
    }

    /// `x_c = -A11^-1 (Bq q + Bc u)`.
    pub fn equilibrium(&self, q: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = -(&self.bq * q + &self.bc * u);
        self.a11
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("cut model A11 is singular".into()))
    }
}

/// Cut the full three-zone model along the cylinder/granulate interface.
pub fn cut_model(full: &ExtruderModel, axial: &AxialCut, radial: &RadialCut) -> Result<CutModel> {
    let lti = &full.lti;
    let mesh = &full.mesh;
    let cyl = &lti.partition.cylinder;
    let screw: Vec<usize> = lti
        .partition
        .screw_conveyor
        .iter()
        .chain(&lti.partition.screw_core)
        .copied()
        .collect();
    if cyl.is_empty() || screw.is_empty() {
        return Err(config("cut model needs a full model with cylinder and screw zones"));
    }
    let n_c = cyl.len();
    let mut a11 = lti.a_block(cyl, cyl);
    let a12 = lti.a_block(cyl, &screw);
    // interface made adiabatic: the coupling a_ij (T_j - T_i) is dropped
    for i in 0..n_c {
        a11[(i, i)] += a12.row(i).sum();
    }

    let mut state_of_cell = vec![usize::MAX; mesh.len()];
    for (k, &s) in cyl.iter().enumerate() {
        state_of_cell[lti.state_cells[s]] = k;
    }
    let cap = |k: usize| lti.capacitance[cyl[k]];
    let n_a = mesh.n_axial();
    let inner = |ix: usize| state_of_cell[mesh.cell_index(ix, mesh.cylinder_ring)];
    let interface_area = |ix: usize| mesh.facets[mesh.radial_facet(mesh.cylinder_ring, ix)].area;

    let groups: Vec<Vec<usize>> = match axial {
        AxialCut::PerElement => (0..n_a).map(|ix| vec![ix]).collect(),
        AxialCut::Groups(g) => {
            let mut seen = vec![false; n_a];
            for &ix in g.iter().flatten() {
                if ix >= n_a || std::mem::replace(&mut seen[ix], true) {
                    return Err(config(format!("observer axial groups: element {ix} invalid or repeated")));
                }
            }
            if g.iter().any(|grp| grp.is_empty()) {
                return Err(config("observer axial groups: empty group"));
            }
            g.clone()
        }
    };
    let n_q = groups.len() + radial.cells.len();
    let mut bq = DMatrix::zeros(n_c, n_q);
    let mut q_labels = Vec::with_capacity(n_q);
    let mut q_areas = Vec::with_capacity(n_q);
    for (j, grp) in groups.iter().enumerate() {
        let area: f64 = grp.iter().map(|&ix| interface_area(ix)).sum();
        for &ix in grp {
            let k = inner(ix);
            bq[(k, j)] = interface_area(ix) / area / cap(k);
        }
        q_labels.push(format!("qa_{}", j + 1));
        q_areas.push(area);
    }
    for (j, &(ix, ir)) in radial.cells.iter().enumerate() {
        if ix >= n_a || ir >= mesh.n_radial() {
            return Err(config(format!("observer radial cut cell ({ix}, {ir}) outside the grid")));
        }
        let k = state_of_cell[mesh.cell_index(ix, ir)];
        if k == usize::MAX {
            return Err(config(format!("observer radial cut cell ({ix}, {ir}) is not a cylinder cell")));
        }
        if bq.column_iter().take(groups.len() + j).any(|c| c[k] != 0.0 && c.iter().filter(|v| **v != 0.0).count() == 1) {
            warn!("radial cut cell ({ix}, {ir}) duplicates an axial entry");
        }
        bq[(k, groups.len() + j)] = 1.0 / cap(k);
        q_labels.push(format!("qr_{}", j + 1));
        let c = mesh.cell(ix, ir);
        q_areas.push(std::f64::consts::PI * (c.r_outer().powi(2) - c.r_inner().powi(2)));
    }

    let keep: Vec<usize> = (0..lti.n_inputs())
        .filter(|&k| cyl.iter().any(|&s| lti.b[(s, k)] != 0.0))
        .collect();
    if let Some(&k) = keep.iter().find(|&&k| lti.inputs[k].kind == ChannelKind::HeatFlow) {
        warn!("heat-flow input {} acts on the cylinder directly", lti.inputs[k].label);
    }
    let bc = DMatrix::from_fn(n_c, keep.len(), |i, j| lti.b[(cyl[i], keep[j])]);

    let sensor_rows: Vec<usize> = lti
        .outputs
        .iter()
        .enumerate()
        .filter(|(_, o)| o.kind == OutputKind::Sensor)
        .map(|(i, _)| i)
        .collect();
    if sensor_rows.is_empty() {
        return Err(config("cut model: the full model has no sensor outputs"));
    }
    for &row in &sensor_rows {
        if screw.iter().any(|&s| lti.c[(row, s)] != 0.0) {
            return Err(config(format!(
                "sensor {} is not in the cylinder zone; the observer cannot use it",
                lti.outputs[row].label
            )));
        }
    }
    let c1 = DMatrix::from_fn(sensor_rows.len(), n_c, |i, j| lti.c[(sensor_rows[i], cyl[j])]);

    Ok(CutModel {
        a11,
        bq,
        bc,
        c1,
        q_labels,
        q_areas,
        state_labels: cyl.iter().map(|&s| lti.state_labels[s].clone()).collect(),
        state_cells: cyl.iter().map(|&s| lti.state_cells[s]).collect(),
        inputs: keep.iter().map(|&k| lti.inputs[k].clone()).collect(),
        sensor_labels: sensor_rows.iter().map(|&r| lti.outputs[r].label.clone()).collect(),
    })
}

/// Discrete augmented system `z = [x_c; q]`:
/// `z_{k+1} = Abar z_k + Bbar u_k`, `y_k = Cbar z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedObserver {
    pub abar: DMatrix<f64>,
    pub bbar: DMatrix<f64>,
    pub cbar: DMatrix<f64>,
    pub dt: f64,
    pub n_c: usize,
    pub q_labels: Vec<String>,
    pub q_areas: Vec<f64>,
    pub state_labels: Vec<String>,
    pub inputs: Vec<InputChannel>,
    pub sensor_labels: Vec<String>,
    /// Equilibrium map of the cut model for the initial estimate, `-A11^-1 Bc`.
    pub x_eq: DMatrix<f64>,
    /// Filter gain, set by [`design_gain`].
    pub k: Option<DMatrix<f64>>,
    /// A priori error covariance, set by [`design_gain`].
    pub p: Option<DMatrix<f64>>,
    pub qw: Option<DMatrix<f64>>,
    pub rv: Option<DMatrix<f64>>,
}

impl AugmentedObserver {
    pub fn n(&self) -> usize {
        self.abar.nrows()
    }

    pub fn n_q(&self) -> usize {
        self.q_labels.len()
    }

    pub fn input_labels(&self) -> Vec<String> {
        self.inputs.iter().map(|c| c.label.clone()).collect()
    }

    pub fn gain(&self) -> Result<&DMatrix<f64>> {
        self.k
            .as_ref()
            .ok_or_else(|| Error::Design("observer gain not designed".into()))
    }

    /// Filter-form error dynamics `(I - K Cbar) Abar`.
    pub fn error_dynamics(&self) -> Result<DMatrix<f64>> {
        let k = self.gain()?;
        Ok((DMatrix::identity(self.n(), self.n()) - k * &self.cbar) * &self.abar)
    }
}

/// ZOH of the cut model with `q` held; the `q` block of `Abar` is exactly `I`.
pub fn augment_and_discretize(cut: &CutModel, dt: f64) -> Result<AugmentedObserver> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(config(format!("observer dt must be positive, got {dt}")));
    }
    let (n_c, n_q, m) = (cut.n_states(), cut.n_q(), cut.bc.ncols());
    let mut b = DMatrix::zeros(n_c, n_q + m);
    b.columns_mut(0, n_q).copy_from(&cut.bq);
    b.columns_mut(n_q, m).copy_from(&cut.bc);
    let (ad, bd) = zoh(&cut.a11, &b, dt);
    let n = n_c + n_q;
    let mut abar = DMatrix::zeros(n, n);
    abar.view_mut((0, 0), (n_c, n_c)).copy_from(&ad);
    abar.view_mut((0, n_c), (n_c, n_q)).copy_from(&bd.columns(0, n_q));
    for j in 0..n_q {
        abar[(n_c + j, n_c + j)] = 1.0;
    }
    let mut bbar = DMatrix::zeros(n, m);
    bbar.view_mut((0, 0), (n_c, m)).copy_from(&bd.columns(n_q, m));
    let mut cbar = DMatrix::zeros(cut.c1.nrows(), n);
    cbar.view_mut((0, 0), (cut.c1.nrows(), n_c)).copy_from(&cut.c1);
    let x_eq = cut
        .a11
        .clone()
        .lu()
        .solve(&(-&cut.bc))
        .ok_or_else(|| Error::Numeric("cut model A11 is singular".into()))?;
    Ok(AugmentedObserver {
        abar,
        bbar,
        cbar,
        dt,
        n_c,
        q_labels: cut.q_labels.clone(),
        q_areas: cut.q_areas.clone(),
        state_labels: cut.state_labels.clone(),
        inputs: cut.inputs.clone(),
        sensor_labels: cut.sensor_labels.clone(),
        x_eq,
        k: None,
        p: None,
        qw: None,
        rv: None,
    })
}

/// Outcome of the detectability test of `(Abar, Cbar)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detectability {
    /// Unstable or marginal eigenvalue magnitudes outside the `q` block.
    pub plant_spectral_radius: f64,
    /// Rank of the steady-state `q`-to-sensor map (PBH rank at z = 1 minus n_c).
    pub q_rank: usize,
    pub n_q: usize,
    /// `q` labels participating in unobservable directions.
    pub unobservable: Vec<String>,
    /// Singular values of the steady-state map, descending.
    pub singular_values: Vec<f64>,
}

impl Detectability {
    pub fn is_detectable(&self) -> bool {
        self.plant_spectral_radius < 1.0 && self.q_rank == self.n_q
    }
}

/// PBH test at the only marginal eigenvalue `z = 1`.
///
/// With `Abar_xx` stable, `rank [I - Abar; Cbar] = n_c + rank(G)` where
/// `G = Cbar_x (I - Abar_xx)^-1 Abar_xq + Cbar_q` is the steady-state
/// `q`-to-sensor map.
pub fn detectability(obs: &AugmentedObserver) -> Result<Detectability> {
    let (n_c, n_q) = (obs.n_c, obs.n_q());
    let ad = obs.abar.view((0, 0), (n_c, n_c)).into_owned();
    let bq = obs.abar.view((0, n_c), (n_c, n_q)).into_owned();
    let c1 = obs.cbar.columns(0, n_c).into_owned();
    let (rho, x) = if n_c == 0 {
        (0.0, DMatrix::zeros(0, n_q))
    } else {
        let m = DMatrix::identity(n_c, n_c) - &ad;
        let x = m
            .lu()
            .solve(&bq)
            .ok_or_else(|| Error::Design("plant part of the observer has an eigenvalue at 1".into()))?;
        (spectral_radius(&ad), x)
    };
    let g = &c1 * x + obs.cbar.columns(n_c, n_q);
    let svd = g.clone().svd(false, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let tol = 1e-9 * sv.first().copied().unwrap_or(0.0) * (n_q.max(g.nrows()) as f64);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let mut unobservable = Vec::new();
    if rank < n_q {
        // null space of G: eigenvectors of G'G for the n_q - rank smallest eigenvalues
        let eig = (g.transpose() * &g).symmetric_eigen();
        let mut order: Vec<usize> = (0..n_q).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let null = &order[..n_q - rank];
        for j in 0..n_q {
            if null.iter().any(|&v| eig.eigenvectors[(j, v)].abs() > 1e-6) {
                unobservable.push(obs.q_labels[j].clone());
            }
        }
    }
    Ok(Detectability {
        plant_spectral_radius: rho,
        q_rank: rank,
        n_q,
        unobservable,
        singular_values: sv,
    })
}

/// Solve the filter DARE `P = A P A' - A P C' (C P C' + R)^-1 C P A' + Q`
/// by the structure-preserving doubling algorithm.
pub fn solve_dare(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Design("measurement covariance is not positive definite".into()))?
        .inverse();
    // dual control form: A_k <- A', G <- C' R^-1 C, H <- Q
    let mut ak = a.transpose();
    let mut gk = c.transpose() * r_inv * c;
    let mut hk = q.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    for it in 0..200 {
        let w = (&eye + &gk * &hk)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Design("Riccati doubling hit a singular matrix".into()))?;
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let change = (&h_next - &hk).norm();
        let scale = h_next.norm();
        if !scale.is_finite() {
            return Err(Error::Design("Riccati iteration diverged".into()));
        }
        ak = a_next;
        gk = g_next;
        hk = 0.5 * (&h_next + h_next.transpose());
        debug!("dare iteration {it}: relative change {:.3e}", change / scale);
        if change <= rel_tol * scale {
            return Ok(hk);
        }
    }
    Err(Error::Design("Riccati iteration did not converge in 200 doublings".into()))
}

/// Noise covariances from standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverTuning {
    /// Thermocouple noise [K].
    pub meas_std: f64,
    /// Process noise on the cylinder temperatures per step [K].
    pub state_std: f64,
    /// Random-walk step of every `q` entry [W]; `None` picks it from the
    /// plant so the `q` loop is about ten times slower than the slowest pole.
    pub q_std: Option<f64>,
}

impl Default for ObserverTuning {
    fn default() -> Self {
        Self {
            meas_std: 0.25,
            state_std: 1e-4,
            q_std: None,
        }
    }
}

impl ObserverTuning {
    pub fn q_std_for(&self, cut: &CutModel, dt: f64) -> Result<f64> {
        if let Some(s) = self.q_std {
            return Ok(s);
        }
        let g = cut.q_gain()?;
        let typical = g.column_iter().map(|c| c.amax()).sum::<f64>() / g.ncols().max(1) as f64;
        let slowest = -max_real_eigenvalue(&cut.a11);
        let tau_target = 10.0 / slowest;
        Ok(self.meas_std * dt / (typical * tau_target))
    }

    pub fn covariances(&self, cut: &CutModel, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !(self.meas_std > 0.0) || !(self.state_std >= 0.0) {
            return Err(config("observer: meas_std must be > 0 and state_std >= 0"));
        }
        let q_std = self.q_std_for(cut, dt)?;
        if !(q_std > 0.0) {
            return Err(config("observer: q_std must be > 0"));
        }
        let (n_c, n_q) = (cut.n_states(), cut.n_q());
        let mut qw = DMatrix::zeros(n_c + n_q, n_c + n_q);
        for i in 0..n_c {
            qw[(i, i)] = self.state_std.powi(2);
        }
        for j in 0..n_q {
            qw[(n_c + j, n_c + j)] = q_std.powi(2);
        }
        let p = cut.c1.nrows();
        Ok((qw, DMatrix::identity(p, p) * self.meas_std.powi(2)))
    }
}

/// Steady-state filter gain `K = P C' (C P C' + R)^-1`.
pub fn design_gain(obs: &AugmentedObserver, qw: &DMatrix<f64>, rv: &DMatrix<f64>) -> Result<AugmentedObserver> {
    let n = obs.n();
    let p = obs.cbar.nrows();
    if qw.shape() != (n, n) || rv.shape() != (p, p) {
        return Err(config(format!(
            "covariance shapes: Qw must be {n}x{n}, Rv {p}x{p}"
        )));
    }
    let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * m.amax().max(f64::MIN_POSITIVE);
    if !sym(qw) || !sym(rv) {
        return Err(config("observer covariances must be symmetric"));
    }
    if qw.clone().symmetric_eigen().eigenvalues.min() < -1e-12 * qw.amax() {
        return Err(config("process covariance Qw must be positive semidefinite"));
    }
    if (obs.n_c..n).any(|i| !(qw[(i, i)] > 0.0)) {
        return Err(config("process covariance Qw needs strictly positive entries on the q block"));
    }
    if rv.clone().cholesky().is_none() {
        return Err(config("measurement covariance Rv must be positive definite"));
    }
    let det = detectability(obs)?;
    if !det.is_detectable() {
        return Err(Error::Design(format!(
            "(Abar, Cbar) is not detectable: {} sensors determine only {} of {} heat-flow states at steady state; unobservable components: {}",
            p,
            det.q_rank,
            det.n_q,
            det.unobservable.join(", ")
        )));
    }
    let pm = solve_dare(&obs.abar, &obs.cbar, qw, rv, 1e-10)?;
    let s = &obs.cbar * &pm * obs.cbar.transpose() + rv;
    let s_inv = s
        .cholesky()
        .ok_or_else(|| Error::Design("innovation covariance is not positive definite".into()))?
        .inverse();
    let k = &pm * obs.cbar.transpose() * s_inv;
    let mut out = obs.clone();
    out.k = Some(k);
    out.p = Some(pm);
    out.qw = Some(qw.clone());
    out.rv = Some(rv.clone());
    let rho = spectral_radius(&out.error_dynamics()?);
    if !(rho < 1.0) {
        return Err(Error::Design(format!("error dynamics not stable (spectral radius {rho})")));
    }
    info!("observer gain designed: n = {n}, error spectral radius {rho:.6}");
    Ok(out)
}

/// One estimate `(x_c, q)` after the measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub x_c: DVector<f64>,
    pub q: DVector<f64>,
    /// False when the sample had a non-finite measurement and was skipped.
    pub updated: bool,
}

/// Running filter; one instance per measurement stream.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    obs: &'a AugmentedObserver,
    k: &'a DMatrix<f64>,
    /// Prediction `z_{k|k-1}`.
    z_pred: DVector<f64>,
    pub skipped: usize,
}

impl<'a> Estimator<'a> {
    /// Start from the cut-model equilibrium at `u0` with `q = 0`.
    pub fn new(obs: &'a AugmentedObserver, u0: &DVector<f64>) -> Result<Self> {
        let mut z = DVector::zeros(obs.n());
        z.rows_mut(0, obs.n_c).copy_from(&(&obs.x_eq * u0));
        Self::with_state(obs, z)
    }

    pub fn with_state(obs: &'a AugmentedObserver, z0: DVector<f64>) -> Result<Self> {
        Ok(Self {
            k: obs.gain()?,
            obs,
            z_pred: z0,
            skipped: 0,
        })
    }

    pub fn update(&mut self, u: &DVector<f64>, y: &DVector<f64>) -> Estimate {
        let updated = y.iter().all(|v| v.is_finite());
        let z = if updated {
            let innovation = y - &self.obs.cbar * &self.z_pred;
            &self.z_pred + self.k * innovation
        } else {
            self.skipped += 1;
            self.z_pred.clone()
        };
        self.z_pred = &self.obs.abar * &z + &self.obs.bbar * u;
        Estimate {
            x_c: z.rows(0, self.obs.n_c).into_owned(),
            q: z.rows(self.obs.n_c, self.obs.n_q()).into_owned(),
            updated,
        }
    }
}

/// Run the filter over a record of inputs and sensors.
///
/// Output channels are the `q` labels, followed by the cylinder state labels
/// when `with_states` is set.
pub fn estimate(obs: &AugmentedObserver, u_o: &TimeSeries, with_states: bool) -> Result<TimeSeries> {
    if u_o.is_empty() {
        return Err(Error::Data("observer input series is empty".into()));
    }
    if let Some(dt) = u_o.uniform_dt(1e-6) {
        if (dt - obs.dt).abs() > 1e-6 * obs.dt {
            return Err(config(format!(
                "observer designed for dt = {} s but data is sampled at {dt} s",
                obs.dt
            )));
        }
    } else if u_o.len() > 1 {
        return Err(config("observer input series is not uniformly sampled"));
    }
    let inputs = input_vectors(&obs.input_labels(), u_o)?;
    let sensors = u_o.require(&obs.sensor_labels)?;
    let mut est = Estimator::new(obs, &inputs[0])?;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(u_o.len()); obs.n_q() + if with_states { obs.n_c } else { 0 }];
    for (k, uk) in inputs.iter().enumerate() {
        let y = DVector::from_iterator(sensors.len(), sensors.iter().map(|c| c[k]));
        let e = est.update(uk, &y);
        if !e.updated {
            warn!("t = {}: non-finite measurement, time update only", u_o.time()[k]);
        }
        for (j, v) in e.q.iter().enumerate() {
            cols[j].push(*v);
        }
        if with_states {
            for (i, v) in e.x_c.iter().enumerate() {
                cols[obs.n_q() + i].push(*v);
            }
        }
    }
    let mut out = TimeSeries::new(u_o.time().to_vec())?;
    let labels = obs
        .q_labels
        .iter()
        .cloned()
        .chain(if with_states { obs.state_labels.clone() } else { Vec::new() });
    for (label, c) in labels.zip(cols) {
        out.push_channel(&label, c)?;
    }
    Ok(out)
}

/// Fixed point of the filter for constant `u` and `y`: the stationary
/// estimate the recursion converges to.
pub fn stationary_estimate(obs: &AugmentedObserver, u: &DVector<f64>, y: &DVector<f64>) -> Result<Estimate> {
    let k = obs.gain()?;
    let n = obs.n();
    // z = z_pred + K (y - C z_pred), z_pred = Abar z + Bbar u
    let ikc = DMatrix::identity(n, n) - k * &obs.cbar;
    let m = DMatrix::identity(n, n) - &ikc * &obs.abar;
    let rhs = &ikc * (&obs.bbar * u) + k * y;
    let z = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("observer fixed point is singular".into()))?;
    Ok(Estimate {
        x_c: z.rows(0, obs.n_c).into_owned(),
        q: z.rows(obs.n_c, obs.n_q()).into_owned(),
        updated: true,
    })
}

/// `q` divided by the interface area behind each entry [W/m^2].
pub fn flux_density(obs: &AugmentedObserver, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(q.len(), q.iter().zip(&obs.q_areas).map(|(v, a)| v / a))
}
