//! Comma-separated time series: header row, `time` first, LF line endings,
//! `NaN` for missing samples, floats in shortest round-trip form.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use extruder_thermal::TimeSeries;

use crate::error::{io_data, CliError, CliResult};

pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        // Display gives the shortest decimal that parses back to the same value
        format!("{v}")
    }
}

pub fn parse_f64(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    f.parse().ok()
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Header names after `time`.
pub fn read_header<R: Read>(rdr: &mut csv::Reader<R>, path: &Path) -> CliResult<Vec<String>> {
    let header = rdr.headers().map_err(|e| io_data(path, e))?;
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Data(format!("{}: empty file", path.display())));
    }
    if &header[0] != "time" {
        return Err(CliError::Data(format!(
            "{}: first column must be `time`, found `{}`",
            path.display(),
            &header[0]
        )));
    }
    Ok(header.iter().skip(1).map(str::to_string).collect())
}

/// Parse one record into `(time, values)`.
pub fn parse_record(record: &csv::StringRecord, n: usize, path: &Path) -> CliResult<(f64, Vec<f64>)> {
    let line = record.position().map_or(0, |p| p.line());
    if record.len() != n + 1 {
        return Err(CliError::Data(format!(
            "{}:{line}: expected {} fields, found {}",
            path.display(),
            n + 1,
            record.len()
        )));
    }
    let mut values = Vec::with_capacity(n + 1);
    for field in record.iter() {
        let v = parse_f64(field)
            .ok_or_else(|| CliError::Data(format!("{}:{line}: `{field}` is not a number", path.display())))?;
        values.push(v);
    }
    let t = values.remove(0);
    if !t.is_finite() {
        return Err(CliError::Data(format!("{}:{line}: time must be finite", path.display())));
    }
    Ok((t, values))
}

pub fn read_series(path: &Path) -> CliResult<TimeSeries> {
    let file = File::open(path).map_err(|e| io_data(path, e))?;
    let mut rdr = reader(file);
    let names = read_header(&mut rdr, path)?;
    let mut time = Vec::new();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_data(path, e))?;
        let (t, values) = parse_record(&rec, names.len(), path)?;
        time.push(t);
        for (c, v) in cols.iter_mut().zip(values) {
            c.push(v);
        }
    }
    if time.is_empty() {
        return Err(CliError::Data(format!("{}: no samples", path.display())));
    }
    let mut ts = TimeSeries::new(time).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for (name, c) in names.iter().zip(cols) {
        ts.push_channel(name, c)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(ts)
}

/// Join the channels of several files recorded on the same time grid.
pub fn merge_series(parts: Vec<(std::path::PathBuf, TimeSeries)>) -> CliResult<TimeSeries> {
    let mut iter = parts.into_iter();
    let (_, mut out) = iter
        .next()
        .ok_or_else(|| CliError::Data("no input files".into()))?;
    for (path, ts) in iter {
        if ts.time() != out.time() {
            return Err(CliError::Data(format!(
                "{}: time column differs from the first input file",
                path.display()
            )));
        }
        for name in ts.names() {
            if out.channel(name).is_some() {
                return Err(CliError::Data(format!(
                    "{}: channel `{name}` appears in more than one input file",
                    path.display()
                )));
            }
            out.push_channel(name, ts.channel(name).expect("listed").to_vec())?;
        }
    }
    Ok(out)
}

/// Row-wise writer with the fixed dialect.
pub struct SeriesWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(out: W, names: &[String]) -> io::Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        inner.write_record(std::iter::once("time").chain(names.iter().map(String::as_str)))?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, t: f64, values: &[f64]) -> io::Result<()> {
        self.inner
            .write_record(std::iter::once(t).chain(values.iter().copied()).map(format_f64))?;
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn write_series(path: &Path, ts: &TimeSeries) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_data(path, e))?;
    let mut w = SeriesWriter::new(io::BufWriter::new(file), ts.names()).map_err(|e| io_data(path, e))?;
    let cols: Vec<&[f64]> = ts.names().iter().map(|n| ts.channel(n).expect("listed")).collect();
    let mut row = vec![0.0; cols.len()];
    for (k, &t) in ts.time().iter().enumerate() {
        for (r, c) in row.iter_mut().zip(&cols) {
            *r = c[k];
        }
        w.row(t, &row).map_err(|e| io_data(path, e))?;
    }
    w.flush().map_err(|e| io_data(path, e))
}

/// Reader over a file that is still being written: at end of file it polls
/// for new bytes and reports EOF only after `idle` without growth.
pub struct FollowReader {
    file: File,
    idle: Option<Duration>,
    poll: Duration,
}

impl FollowReader {
    pub fn new(file: File, idle: Option<Duration>) -> Self {
        Self {
            file,
            idle,
            poll: Duration::from_millis(100),
        }
    }
}

impl Read for FollowReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let since = Instant::now();
        loop {
            let n = self.file.read(buf)?;
            if n > 0 {
                return Ok(n);
            }
            if self.idle.is_some_and(|idle| since.elapsed() >= idle) {
                return Ok(0);
            }
            std::thread::sleep(self.poll);
        }
    }
}

pub fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    reader(r)
}
