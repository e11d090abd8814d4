//! Cartan data of A_n and decoding of 0/1 grading vectors.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct CartanData {
    pub n: usize,
    pub k: Matrix<i64>,
    pub kinv: Matrix<Rational>,
}

impl CartanData {
    pub fn rank(&self) -> usize {
        self.n
    }
}

pub fn cartan_matrix(n: usize) -> Result<CartanData> {
    if n == 0 {
        return Err(Error::InvalidRank(n));
    }
    let k = Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2,
        1 => -1,
        _ => 0,
    });
    let kinv = Matrix::<Rational>::from_i64(&k)
        .inverse()
        .ok_or_else(|| Error::Construction("Cartan matrix is singular".into()))?;
    Ok(CartanData { n, k, kinv })
}

/// 0/1 marks on the simple roots; at least one root must be black (1).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GradingVector(Vec<u8>);

impl GradingVector {
    pub fn new(c: Vec<i64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidGrading("empty grading vector".into()));
        }
        if let Some(bad) = c.iter().find(|&&v| v != 0 && v != 1) {
            return Err(Error::InvalidGrading(format!("entry {bad} is not 0 or 1")));
        }
        if c.iter().all(|&v| v == 0) {
            return Err(Error::InvalidGrading(
                "no black root (all entries zero)".into(),
            ));
        }
        Ok(GradingVector(c.into_iter().map(|v| v as u8).collect()))
    }

    /// The principal grading: every root black.
    pub fn main(n: usize) -> Self {
        GradingVector(vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entry for the 1-based root index `i`.
    pub fn get(&self, i: usize) -> u8 {
        self.0[i - 1]
    }

    pub fn entries(&self) -> &[u8] {
        &self.0
    }
}

impl FromStr for GradingVector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parsed: std::result::Result<Vec<i64>, _> =
            s.split(',').map(|t| t.trim().parse::<i64>()).collect();
        let c = parsed.map_err(|e| Error::InvalidGrading(format!("cannot parse {s:?}: {e}")))?;
        GradingVector::new(c)
    }
}

impl fmt::Display for GradingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// `K^{-1} c`: the coefficients of the grading operator `H` on the `h_i`.
pub fn grading_coefficients(cd: &CartanData, c: &GradingVector) -> Result<Vec<Rational>> {
    if c.len() != cd.n {
        return Err(Error::Dimension(format!(
            "grading vector has length {} but rank is {}",
            c.len(),
            cd.n
        )));
    }
    let cv: Vec<Rational> = c
        .entries()
        .iter()
        .map(|&v| Rational::from_i64(v as i64))
        .collect();
    Ok(cd.kinv.mul_vec(&cv))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RedBlock {
    /// 1-based first red root of the run.
    pub m: usize,
    /// Run length (rank of the red algebra).
    pub r: usize,
}

impl RedBlock {
    pub fn mbar(&self) -> usize {
        self.m + self.r - 1
    }

    pub fn b(&self) -> usize {
        self.m + self.r
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedBlockDecomposition {
    pub blocks: Vec<RedBlock>,
    pub black_roots: Vec<usize>,
}

pub fn decompose_red_blocks(c: &GradingVector) -> RedBlockDecomposition {
    let mut blocks = Vec::new();
    let mut black_roots = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 1..=c.len() {
        if c.get(i) == 1 {
            black_roots.push(i);
            if let Some(m) = run_start.take() {
                blocks.push(RedBlock { m, r: i - m });
            }
        } else if run_start.is_none() {
            run_start = Some(i);
        }
    }
    if let Some(m) = run_start {
        blocks.push(RedBlock {
            m,
            r: c.len() + 1 - m,
        });
    }
    RedBlockDecomposition {
        blocks,
        black_roots,
    }
}

/// A lattice site: the gap between consecutive black roots, including gaps
/// with no red roots and the two open ends of the Dynkin diagram.
///
/// In the defining representation the site owns the basis indices
/// `m ..= m + r`; it is preceded by black root `m - 1` and followed by
/// black root `b = m + r` (0 and `n + 1` stand for the trivial ends).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Site {
    pub m: usize,
    pub r: usize,
}

impl Site {
    pub fn b(&self) -> usize {
        self.m + self.r
    }

    /// Last red root; equals `m - 1` for a site without red roots.
    pub fn mbar(&self) -> usize {
        self.m + self.r - 1
    }

    pub fn dim(&self) -> usize {
        self.r + 1
    }

    pub fn prev_black(&self) -> usize {
        self.m - 1
    }

    /// 0-based defining-representation indices owned by the site.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.m - 1..self.m + self.r
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub n: usize,
    pub grading: GradingVector,
    pub sites: Vec<Site>,
}

impl Lattice {
    pub fn new(grading: &GradingVector) -> Self {
        let n = grading.len();
        let mut bounds = vec![0];
        bounds.extend((1..=n).filter(|&i| grading.get(i) == 1));
        bounds.push(n + 1);
        let sites = bounds
            .windows(2)
            .map(|w| Site {
                m: w[0] + 1,
                r: w[1] - w[0] - 1,
            })
            .collect();
        Lattice {
            n,
            grading: grading.clone(),
            sites,
        }
    }

    /// Dimension of the defining representation.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, i: usize) -> &Site {
        &self.sites[i]
    }
}

/// Value of `[H, X^+_i]` for each simple root, computed from `K^{-1}c`.
pub fn grading_eigenvalues(cd: &CartanData, c: &GradingVector) -> Result<Vec<Rational>> {
    let w = grading_coefficients(cd, c)?;
    let kq = Matrix::<Rational>::from_i64(&cd.k);
    Ok((0..cd.n)
        .map(|i| {
            (0..cd.n).fold(Rational::zero(), |acc, j| {
                acc + kq[(i, j)].clone() * w[j].clone()
            })
        })
        .collect())
}
