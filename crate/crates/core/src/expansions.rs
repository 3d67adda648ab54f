//! Nonlinear expansions applied inside a node before linear GSFA.
//!
//! An expansion is an ordered list of terms, each acting on a contiguous
//! slice of the input. The output is the concatenation of the term outputs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    /// `x_i`
    Identity,
    /// `x_i x_j` for `i <= j`, row-major upper triangle.
    Qt,
    /// `x_i x_j / (1 + ‖x‖²)` over the slice.
    Qn,
    /// `|x_i|^0.8`
    E08,
    /// `max(x_i, x_{i+1})`
    Max2,
}

impl TermKind {
    fn output_len(self, k: usize) -> usize {
        match self {
            TermKind::Identity | TermKind::E08 => k,
            TermKind::Qt | TermKind::Qn => k * (k + 1) / 2,
            TermKind::Max2 => k.saturating_sub(1),
        }
    }
}

/// A term over input components `from..to`. `to = None` means up to the end
/// of the input, resolved against the actual input dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub term: TermKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub from: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<usize>,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl Term {
    pub fn new(term: TermKind, from: usize, to: usize) -> Self {
        Term {
            term,
            from,
            to: Some(to),
        }
    }

    /// The term over the whole input.
    pub fn full(term: TermKind) -> Self {
        Term {
            term,
            from: 0,
            to: None,
        }
    }

    fn range(&self, input_dim: usize) -> Result<(usize, usize)> {
        let to = self.to.unwrap_or(input_dim);
        if self.from > to || to > input_dim {
            return Err(Error::InvalidArgument(format!(
                "{:?} term range {}..{} outside input of dimension {input_dim}",
                self.term, self.from, to
            )));
        }
        Ok((self.from, to))
    }
}

/// Ordered list of expansion terms. Serializes as a bare JSON array, e.g.
/// `[{"term":"identity","to":18},{"term":"qt","to":10}]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpansionSpec {
    pub terms: Vec<Term>,
}

impl ExpansionSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        ExpansionSpec { terms }
    }

    pub fn identity() -> Self {
        ExpansionSpec::new(vec![Term::full(TermKind::Identity)])
    }

    /// Identity plus all quadratic terms: `k(k+3)/2` outputs.
    pub fn quadratic() -> Self {
        ExpansionSpec::new(vec![Term::full(TermKind::Identity), Term::full(TermKind::Qt)])
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument("expansion has no terms".into()));
        }
        for t in &self.terms {
            t.range(input_dim)?;
        }
        Ok(())
    }

    pub fn expanded_dim(&self, input_dim: usize) -> Result<usize> {
        self.terms.iter().try_fold(0, |acc, t| {
            let (a, b) = t.range(input_dim)?;
            Ok(acc + t.term.output_len(b - a))
        })
    }

    /// Expands one sample.
    pub fn expand(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        let dim = self.expanded_dim(x.len())?;
        let mut out = Array1::zeros(dim);
        self.expand_into(x, out.as_slice_mut().expect("contiguous"))?;
        Ok(out)
    }

    /// Expands every row of `x`.
    pub fn expand_batch(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let dim = self.expanded_dim(x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), dim));
        for (row, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            self.expand_into(&row, dst.as_slice_mut().expect("contiguous"))?;
        }
        Ok(out)
    }

    fn expand_into(&self, x: &ArrayView1<f64>, out: &mut [f64]) -> Result<()> {
        let mut pos = 0;
        for t in &self.terms {
            let (a, b) = t.range(x.len())?;
            let s = x.slice(ndarray::s![a..b]);
            match t.term {
                TermKind::Identity => {
                    for &v in s.iter() {
                        out[pos] = v;
                        pos += 1;
                    }
                }
                TermKind::Qt | TermKind::Qn => {
                    let factor = if t.term == TermKind::Qn {
                        1.0 / (1.0 + s.dot(&s))
                    } else {
                        1.0
                    };
                    for i in 0..s.len() {
                        for j in i..s.len() {
                            out[pos] = factor * s[i] * s[j];
                            pos += 1;
                        }
                    }
                }
                TermKind::E08 => {
                    for &v in s.iter() {
                        out[pos] = if v == 0.0 { 0.0 } else { v.abs().powf(0.8) };
                        pos += 1;
                    }
                }
                TermKind::Max2 => {
                    for w in s.windows(2) {
                        out[pos] = w[0].max(w[1]);
                        pos += 1;
                    }
                }
            }
        }
        debug_assert_eq!(pos, out.len());
        Ok(())
    }
}

/// Free-function form of [`ExpansionSpec::expanded_dim`].
pub fn expanded_dim(spec: &ExpansionSpec, input_dim: usize) -> Result<usize> {
    spec.expanded_dim(input_dim)
}

/// Free-function form of [`ExpansionSpec::expand`].
pub fn expand(spec: &ExpansionSpec, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
    spec.expand(x)
}
