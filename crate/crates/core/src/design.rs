//! Random design matrices with full row rank.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{ensure, MemlabError, Result};
use crate::linalg::SymEigen;
use crate::rng::{seeded, standard_normal};
use crate::scalar::Scalar;
use crate::spectral::SpectralMeasure;

/// Distribution of the i.i.d. design entries (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EntryLaw {
    #[default]
    Gaussian,
    Rademacher,
}

impl fmt::Display for EntryLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryLaw::Gaussian => "gaussian",
            EntryLaw::Rademacher => "rademacher",
        })
    }
}

impl FromStr for EntryLaw {
    type Err = MemlabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(EntryLaw::Gaussian),
            "rademacher" | "sign" => Ok(EntryLaw::Rademacher),
            other => Err(MemlabError::Precondition(format!(
                "unknown entry law `{other}`"
            ))),
        }
    }
}

/// An `n×d` design with `d ≥ n` and full row rank, together with the
/// eigendecomposition of `XXᵀ/d`.
#[derive(Debug, Clone)]
pub struct DesignMatrix<T: Scalar> {
    x: DMatrix<T>,
    gram: SymEigen<T>,
}

const RANK_TOLERANCE: f64 = 1e-10;

/// Draws an `n×d` design with i.i.d. entries from `law` under `seed`.
///
/// Entries are drawn row by row. If the draw is numerically rank deficient
/// the design is redrawn once under `seed + 1`.
pub fn make_design<T: Scalar>(
    n: usize,
    d: usize,
    law: EntryLaw,
    seed: u64,
) -> Result<DesignMatrix<T>> {
    ensure!(n >= 1, "design needs at least one row");
    ensure!(d >= n, "design must have d >= n (got n={n}, d={d})");
    match DesignMatrix::new(draw_entries(n, d, law, seed)) {
        Err(MemlabError::RankDeficient { .. }) => {
            DesignMatrix::new(draw_entries(n, d, law, seed.wrapping_add(1)))
        }
        other => other,
    }
}

fn draw_entries<T: Scalar>(n: usize, d: usize, law: EntryLaw, seed: u64) -> DMatrix<T> {
    let mut rng = seeded(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        data.push(match law {
            EntryLaw::Gaussian => standard_normal(&mut rng),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            }
        });
    }
    DMatrix::from_row_slice(n, d, &data)
}

impl<T: Scalar> DesignMatrix<T> {
    /// Wraps an existing matrix after checking shape and row rank.
    pub fn new(x: DMatrix<T>) -> Result<Self> {
        let (n, d) = x.shape();
        ensure!(n >= 1, "design needs at least one row");
        ensure!(d >= n, "design must have d >= n (got n={n}, d={d})");
        ensure!(
            x.iter().all(|v| v.is_finite()),
            "design entries must be finite"
        );
        let gram = SymEigen::psd(&x * x.transpose() / T::of_usize(d));
        let largest = gram.largest();
        let ratio = if largest > T::zero() {
            (gram.smallest() / largest).sqrt().as_f64()
        } else {
            0.0
        };
        if !(ratio >= RANK_TOLERANCE) {
            return Err(MemlabError::RankDeficient { ratio });
        }
        Ok(Self { x, gram })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Aspect ratio `d/n`.
    pub fn gamma(&self) -> T {
        T::of_usize(self.d()) / T::of_usize(self.n())
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.x
    }

    /// Eigendecomposition of `XXᵀ/d`, eigenvalues descending.
    pub fn gram_eigen(&self) -> &SymEigen<T> {
        &self.gram
    }

    /// Empirical spectral measure of `XXᵀ/d`.
    pub fn spectrum(&self) -> SpectralMeasure<T> {
        SpectralMeasure::empirical(self.gram.values.as_slice()).expect("nonempty spectrum")
    }

    /// Row-major CSV with `n,d` on the first line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{},{}", self.n(), self.d())?;
        for row in self.x.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Parses the format written by [`DesignMatrix::write_csv`].
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MemlabError::Precondition("empty design CSV".into()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| MemlabError::Precondition(format!("bad design header: {e}")))?;
        ensure!(dims.len() == 2, "design header must be `n,d`");
        let (n, d) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(n * d);
        for line in lines {
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| MemlabError::Precondition(format!("bad design entry: {e}")))?;
                data.push(T::lit(v));
            }
        }
        ensure!(
            data.len() == n * d,
            "design CSV has {} entries, expected {}",
            data.len(),
            n * d
        );
        Self::new(DMatrix::from_row_slice(n, d, &data))
    }
}
