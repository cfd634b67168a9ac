//! Factor graphs with pairwise factors on a line (chain) or a ring (cycle).
//!
//! Site `l` carries `q_l` states. On a chain the factor `F_l` couples sites
//! `l` and `l + 1` and is a `q_l x q_{l+1}` matrix; a cycle adds a closing
//! factor `F_n` from the last site back to the first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_nonnegative, RMat, RVec};

fn check_factor(f: &RMat, idx: usize) -> Result<()> {
    if !is_nonnegative(f) {
        return Err(Error::NegativeFactor {
            context: format!("factor {idx}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorChain {
    factors: Vec<RMat>,
    left: Option<RVec>,
    right: Option<RVec>,
    measure: f64,
}

impl FactorChain {
    pub fn new(factors: Vec<RMat>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("a chain needs at least one factor".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            check_factor(f, i)?;
            if i + 1 < factors.len() && f.ncols() != factors[i + 1].nrows() {
                return Err(Error::ShapeMismatch {
                    expected: format!("factor {} with {} rows", i + 1, f.ncols()),
                    got: format!("{} rows", factors[i + 1].nrows()),
                });
            }
        }
        Ok(Self {
            factors,
            left: None,
            right: None,
            measure: 1.0,
        })
    }

    /// Attach unary messages on the first and last site. `None` means the
    /// all-ones message.
    pub fn with_boundaries(mut self, left: Option<RVec>, right: Option<RVec>) -> Result<Self> {
        let states = self.states();
        for (vec, site) in [(&left, 0), (&right, states.len() - 1)] {
            if let Some(v) = vec {
                if v.len() != states[site] {
                    return Err(Error::ShapeMismatch {
                        expected: format!("boundary of length {}", states[site]),
                        got: v.len().to_string(),
                    });
                }
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::NegativeFactor {
                        context: format!("boundary at site {site}"),
                    });
                }
            }
        }
        self.left = left;
        self.right = right;
        Ok(self)
    }

    /// Quadrature weight used when the states sample a continuous variable.
    pub fn with_measure(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!("measure must be positive, got {delta}")));
        }
        self.measure = delta;
        Ok(self)
    }

    pub fn factors(&self) -> &[RMat] {
        &self.factors
    }

    pub fn factor(&self, l: usize) -> &RMat {
        &self.factors[l]
    }

    pub fn left(&self) -> Option<&RVec> {
        self.left.as_ref()
    }

    pub fn right(&self) -> Option<&RVec> {
        self.right.as_ref()
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn n_sites(&self) -> usize {
        self.factors.len() + 1
    }

    pub fn states(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.factors.iter().map(|f| f.nrows()).collect();
        s.push(self.factors.last().map_or(0, |f| f.ncols()));
        s
    }

    pub fn left_or_ones(&self) -> RVec {
        self.left
            .clone()
            .unwrap_or_else(|| RVec::from_element(self.factors[0].nrows(), 1.0))
    }

    pub fn right_or_ones(&self) -> RVec {
        self.right.clone().unwrap_or_else(|| {
            RVec::from_element(self.factors.last().map_or(0, |f| f.ncols()), 1.0)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Prep,
    Ext,
    Meas,
    Dec,
    Sim,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorCycle {
    factors: Vec<RMat>,
    roles: Option<Vec<Role>>,
}

impl FactorCycle {
    pub fn new(factors: Vec<RMat>) -> Result<Self> {
        let n = factors.len();
        if n < 2 {
            return Err(Error::InvalidInput("a cycle needs at least two factors".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            check_factor(f, i)?;
            let next = &factors[(i + 1) % n];
            if f.ncols() != next.nrows() {
                return Err(Error::ShapeMismatch {
                    expected: format!("factor {} with {} rows", (i + 1) % n, f.ncols()),
                    got: format!("{} rows", next.nrows()),
                });
            }
        }
        let cycle = Self {
            factors,
            roles: None,
        };
        let trace = cycle.product_from(0).trace();
        if !(trace > 0.0) {
            return Err(Error::ZeroTrace { trace });
        }
        Ok(cycle)
    }

    pub fn with_roles(mut self, roles: Vec<Role>) -> Result<Self> {
        if roles.len() != self.factors.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} roles", self.factors.len()),
                got: roles.len().to_string(),
            });
        }
        self.roles = Some(roles);
        Ok(self)
    }

    pub fn factors(&self) -> &[RMat] {
        &self.factors
    }

    pub fn factor(&self, l: usize) -> &RMat {
        &self.factors[l]
    }

    pub fn roles(&self) -> Option<&[Role]> {
        self.roles.as_deref()
    }

    pub fn n_sites(&self) -> usize {
        self.factors.len()
    }

    pub fn states(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// `F_site F_{site+1} ... F_{site-1}`, unnormalized.
    pub fn product_from(&self, site: usize) -> RMat {
        let n = self.factors.len();
        let mut p = self.factors[site % n].clone();
        for k in 1..n {
            p = &p * &self.factors[(site + k) % n];
        }
        p
    }

    /// Topology as an edge list over site indices, independent of factor
    /// values.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.factors.len();
        (0..n).map(|l| (l, (l + 1) % n)).collect()
    }
}
