//! Flat parameter vectors, running means, and the vector geometry shared by
//! every other module. All reductions use fixed left-to-right summation so
//! repeated runs are bit-identical.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Flat vector of all model parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    /// Left-to-right accumulation, deterministic across runs.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for v in &self.values {
            acc += v * v;
        }
        acc.sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        Ok(acc)
    }

    /// a * x + y.
    pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
        x.check_dim(y)?;
        let values = x
            .values
            .iter()
            .zip(&y.values)
            .map(|(xi, yi)| a * xi + yi)
            .collect();
        Ok(ParamVector::new(values))
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        ParamVector::axpy(1.0, self, other)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        ParamVector::axpy(-1.0, other, self)
    }

    pub fn scale(&self, a: f64) -> ParamVector {
        ParamVector::new(self.values.iter().map(|v| a * v).collect())
    }

    /// Unit vector uniform on the sphere (normalized Gaussian sample).
    pub fn sample_unit_sphere(rng: &mut SeededRng, dim: usize) -> Result<ParamVector> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "unit sphere sample requires dim >= 1".into(),
            ));
        }
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            let v = ParamVector::new(v);
            let norm = v.l2_norm();
            if norm > 1e-30 {
                return Ok(v.scale(1.0 / norm));
            }
        }
    }

    /// Binary form: 8-byte little-endian dim header, then dim f64 values.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<ParamVector> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut header = [0u8; 8];
        r.read_exact(&mut header)
            .map_err(|_| Error::MalformedFile(format!("{}: missing dim header", path.display())))?;
        let dim = u64::from_le_bytes(header) as usize;
        let mut values = Vec::with_capacity(dim);
        let mut buf = [0u8; 8];
        for i in 0..dim {
            r.read_exact(&mut buf).map_err(|_| {
                Error::MalformedFile(format!(
                    "{}: truncated at value {i} of {dim}",
                    path.display()
                ))
            })?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(ParamVector::new(values))
    }

    /// Debug text form, one value per line.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<ParamVector> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse::<f64>().map_err(|e| {
                Error::MalformedFile(format!("{}: line {}: {e}", path.display(), i + 1))
            })?);
        }
        Ok(ParamVector::new(values))
    }
}

/// Incremental arithmetic mean of parameter vectors.
#[derive(Debug, Clone)]
pub struct RunningMean {
    mean: ParamVector,
    count: u64,
}

impl RunningMean {
    pub fn empty() -> Self {
        Self {
            mean: ParamVector::zeros(0),
            count: 0,
        }
    }

    pub fn mean(&self) -> &ParamVector {
        &self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// mean += (v - mean) / (count + 1). An empty accumulator adopts v's dim.
    pub fn update(&mut self, v: &ParamVector) -> Result<()> {
        if self.count == 0 {
            self.mean = v.clone();
            self.count = 1;
            return Ok(());
        }
        self.mean.check_dim(v)?;
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (m, x) in self.mean.values.iter_mut().zip(&v.values) {
            *m += (x - *m) * inv;
        }
        Ok(())
    }

    /// Count-weighted combination of two accumulators.
    pub fn merge(&mut self, other: &RunningMean) -> Result<()> {
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        self.mean.check_dim(&other.mean)?;
        let total = self.count + other.count;
        let w = other.count as f64 / total as f64;
        for (m, o) in self.mean.values.iter_mut().zip(&other.mean.values) {
            *m += (o - *m) * w;
        }
        self.count = total;
        Ok(())
    }
}
