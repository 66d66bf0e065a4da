use crate::error::{Error, Result};

/// Sampled channels sharing one strictly increasing time axis [s].
///
/// Channels keep their insertion order, which is also the column order used
/// when writing files.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    time: Vec<f64>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(time: Vec<f64>) -> Result<Self> {
        if time.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("timestamps must be finite".into()));
        }
        if let Some(k) = time.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!(
                "timestamps must be strictly increasing (t[{}] = {}, t[{}] = {})",
                k,
                time[k],
                k + 1,
                time[k + 1]
            )));
        }
        Ok(Self {
            time,
            names: Vec::new(),
            values: Vec::new(),
        })
    }

    /// Uniform time axis `t_k = t0 + k dt`, `k = 0..len`.
    pub fn uniform(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Data(format!("sample period must be positive, got {dt}")));
        }
        Self::new((0..len).map(|k| t0 + k as f64 * dt).collect())
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push_channel(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.time.len() {
            return Err(Error::Data(format!(
                "channel {name} has {} samples, time axis has {}",
                values.len(),
                self.time.len()
            )));
        }
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Data(format!("duplicate channel {name}")));
        }
        self.names.push(name.to_string());
        self.values.push(values);
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_slice())
    }

    pub fn channel_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.values[i])
    }

    /// Look up several channels at once; a missing name is a configuration error.
    pub fn require<'a, S: AsRef<str>>(&'a self, names: &[S]) -> Result<Vec<&'a [f64]>> {
        names
            .iter()
            .map(|n| {
                self.channel(n.as_ref())
                    .ok_or_else(|| Error::Config(format!("missing channel {}", n.as_ref())))
            })
            .collect()
    }

    /// Sample `k` of the named channels, in the given order.
    pub fn row<S: AsRef<str>>(&self, names: &[S], k: usize) -> Result<Vec<f64>> {
        Ok(self.require(names)?.iter().map(|c| c[k]).collect())
    }

    /// Keep only the named channels (in the given order).
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<TimeSeries> {
        let cols = self.require(names)?;
        let mut out = TimeSeries::new(self.time.clone())?;
        for (n, c) in names.iter().zip(cols) {
            out.push_channel(n.as_ref(), c.to_vec())?;
        }
        Ok(out)
    }

    /// Sample period if the axis is uniform within `rel_tol`.
    pub fn uniform_dt(&self, rel_tol: f64) -> Option<f64> {
        if self.time.len() < 2 {
            return None;
        }
        let dt = (self.time[self.time.len() - 1] - self.time[0]) / (self.time.len() - 1) as f64;
        let uniform = self
            .time
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt);
        uniform.then_some(dt)
    }

    /// Resample onto `t0, t0 + dt, ...` (up to the last timestamp) by
    /// previous-value hold.
    pub fn resample_hold(&self, dt: f64) -> Result<TimeSeries> {
        if self.is_empty() {
            return Err(Error::Data("cannot resample an empty series".into()));
        }
        let t0 = self.time[0];
        let t_end = self.time[self.time.len() - 1];
        let n = ((t_end - t0) / dt + 1e-9).floor() as usize + 1;
        let mut out = TimeSeries::uniform(t0, dt, n)?;
        let mut src = 0;
        let idx: Vec<usize> = out
            .time
            .iter()
            .map(|&t| {
                while src + 1 < self.time.len() && self.time[src + 1] <= t + 1e-9 * dt {
                    src += 1;
                }
                src
            })
            .collect();
        for (name, vals) in self.names.iter().zip(&self.values) {
            out.push_channel(name, idx.iter().map(|&i| vals[i]).collect())?;
        }
        log::info!(
            "resampled {} samples onto {} uniform samples at dt = {} s (previous-value hold)",
            self.len(),
            n,
            dt
        );
        Ok(out)
    }
}
