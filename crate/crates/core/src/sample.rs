//! Joint draws of `(X, X̃)` and the sampler interface shared by every
//! knockoff construction.

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Rng};
use crate::swap::SwapSet;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::sync::Arc;

/// Rows generated per random substream.
pub const BLOCK_ROWS: usize = 1024;

/// An `n × 2p` row-major matrix of draws of `(X, X̃)`, columns ordered
/// `X_1..X_p, X̃_1..X̃_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSampleMatrix {
    p: usize,
    data: Vec<f64>,
}

impl JointSampleMatrix {
    pub fn empty(p: usize) -> Self {
        Self { p, data: Vec::new() }
    }

    pub fn from_rows(p: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::empty(p);
        for r in rows {
            check_dim(2 * p, r.len())?;
            m.data.extend_from_slice(r);
        }
        Ok(m)
    }

    pub fn from_blocks(x: &[Vec<f64>], xt: &[Vec<f64>]) -> Result<Self> {
        check_dim(x.len(), xt.len())?;
        let p = x.first().map_or(0, Vec::len);
        let mut m = Self::empty(p);
        for (a, b) in x.iter().zip(xt) {
            m.push_row(a, b)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, x: &[f64], xt: &[f64]) -> Result<()> {
        check_dim(self.p, x.len())?;
        check_dim(self.p, xt.len())?;
        self.data.extend_from_slice(x);
        self.data.extend_from_slice(xt);
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn nrows(&self) -> usize {
        if self.p == 0 {
            0
        } else {
            self.data.len() / (2 * self.p)
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * 2 * self.p..(i + 1) * 2 * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(2 * self.p.max(1))
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.p]
    }

    pub fn xt(&self, i: usize) -> &[f64] {
        &self.row(i)[self.p..]
    }

    /// Column `j` in `0..2p`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn x_block(&self) -> Vec<Vec<f64>> {
        (0..self.nrows()).map(|i| self.x(i).to_vec()).collect()
    }

    pub fn xt_block(&self) -> Vec<Vec<f64>> {
        (0..self.nrows()).map(|i| self.xt(i).to_vec()).collect()
    }

    pub fn select_rows(&self, range: std::ops::Range<usize>) -> Self {
        let w = 2 * self.p;
        Self { p: self.p, data: self.data[range.start * w..range.end * w].to_vec() }
    }

    /// Applies `f_S` to every row.
    pub fn swapped(&self, s: &SwapSet) -> Result<Self> {
        check_dim(self.p, s.p())?;
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(2 * self.p) {
            s.apply_in_place(row)?;
        }
        Ok(Self { p: self.p, data })
    }

    pub fn csv_header(p: usize) -> String {
        let names: Vec<String> = (1..=p)
            .map(|i| format!("X{i}"))
            .chain((1..=p).map(|i| format!("XK{i}")))
            .collect();
        names.join(",")
    }

    /// CSV with header `X1..Xp,XK1..XKp`. Values use the shortest decimal
    /// representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.p);
        out.push('\n');
        for row in self.rows() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols == 0 || cols % 2 != 0 {
            return Err(Error::InvalidInput(format!("CSV header has {cols} columns, expected 2p")));
        }
        let p = cols / 2;
        if header.trim() != Self::csv_header(p) {
            return Err(Error::InvalidInput(format!(
                "CSV header must be `{}`",
                Self::csv_header(p)
            )));
        }
        let mut m = Self::empty(p);
        for (k, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("CSV line {}: {e}", k + 2)))?;
            if vals.len() != 2 * p {
                return Err(Error::InvalidInput(format!(
                    "CSV line {}: expected {} values, got {}",
                    k + 2,
                    2 * p,
                    vals.len()
                )));
            }
            m.data.extend(vals);
        }
        Ok(m)
    }
}

type CdfFn = dyn Fn(f64) -> f64 + Send + Sync;
type PmfFn = dyn Fn(u64) -> f64 + Send + Sync;

/// The law of one coordinate `X_i`, as needed by marginal diagnostics.
#[derive(Clone)]
pub enum MarginalLaw {
    Continuous(Arc<CdfFn>),
    /// A law on the nonnegative integers given by its pmf.
    Discrete(Arc<PmfFn>),
}

impl std::fmt::Debug for MarginalLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarginalLaw::Continuous(_) => f.write_str("Continuous(..)"),
            MarginalLaw::Discrete(_) => f.write_str("Discrete(..)"),
        }
    }
}

/// A model of `L(X)` together with a knockoff construction given `X = x`.
pub trait KnockoffSampler: Send + Sync {
    fn p(&self) -> usize;

    /// One draw of `X`.
    fn sample_x(&self, rng: &mut Rng) -> Vec<f64>;

    /// One draw of `X̃` given `X = x`.
    fn knockoff(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;

    fn marginal_laws(&self) -> Vec<MarginalLaw>;

    /// `n` i.i.d. draws of `(X, X̃)`. Rows are produced in blocks of
    /// [`BLOCK_ROWS`], each from its own substream, so the output is the
    /// same regardless of how blocks are scheduled.
    fn sample_joint(&self, n: usize, seed: u64) -> Result<JointSampleMatrix> {
        sample_in_blocks(self.p(), n, seed, |rng| {
            let x = self.sample_x(rng);
            let xt = self.knockoff(&x, rng)?;
            Ok((x, xt))
        })
    }
}

/// Generates `n` rows in parallel blocks with per-block substreams.
pub fn sample_in_blocks<F>(p: usize, n: usize, seed: u64, draw: F) -> Result<JointSampleMatrix>
where
    F: Fn(&mut Rng) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
{
    let blocks = n.div_ceil(BLOCK_ROWS);
    let parts: Vec<Result<Vec<f64>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::substream(seed, b as u64);
            let rows = BLOCK_ROWS.min(n - b * BLOCK_ROWS);
            let mut data = Vec::with_capacity(rows * 2 * p);
            for _ in 0..rows {
                let (x, xt) = draw(&mut rng)?;
                check_dim(p, x.len())?;
                check_dim(p, xt.len())?;
                data.extend(x);
                data.extend(xt);
            }
            Ok(data)
        })
        .collect();
    let mut out = JointSampleMatrix::empty(p);
    for part in parts {
        out.data.extend(part?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let m = JointSampleMatrix::from_rows(
            1,
            &[vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 123456789.12345679]],
        )
        .unwrap();
        let text = m.to_csv();
        assert!(text.starts_with("X1,XK1\n"));
        assert_eq!(JointSampleMatrix::from_csv(&text).unwrap(), m);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = JointSampleMatrix::from_csv("X1,XK1\n1,2\n3,x\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(JointSampleMatrix::from_csv("A,B\n1,2\n").is_err());
    }

    #[test]
    fn swapped_rows() {
        let m = JointSampleMatrix::from_rows(2, &[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let s = SwapSet::new(2, &[2]).unwrap();
        assert_eq!(m.swapped(&s).unwrap().row(0), &[1.0, 4.0, 3.0, 2.0]);
    }
}
