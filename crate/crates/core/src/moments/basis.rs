//! Polynomial stencil bases for stochastic estimation.
//!
//! Fifteen nested models (ids 0..=14). Each model appends one group of
//! monomials to the previous one, so the basis vector of model `k` is a
//! prefix of the vector of model `k + 1`. Within a group, terms are ordered
//! by N0 component, then cell (ring order), then neighbor components.
//!
//! Products with the "adjacent" cell pair each ring cell with the next one
//! clockwise; "opposite" pairs are point reflections through N0, each pair
//! taken once.

use super::stencil::{Stencil, C1, C2, N0, N1, N2};
use crate::error::{Error, Result};

/// Basis sizes of models 0..=14.
pub const TERM_COUNTS: [usize; 15] = [2, 4, 5, 13, 21, 37, 53, 77, 85, 133, 149, 173, 197, 261, 293];

pub const MAX_MODEL: u8 = 14;

/// Monomial in stencil values: product of up to three `(cell, component)` factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Term {
    factors: [(u8, u8); 3],
    degree: u8,
}

impl Term {
    fn new(f: &[(usize, usize)]) -> Self {
        let mut factors = [(0u8, 0u8); 3];
        for (slot, &(c, k)) in factors.iter_mut().zip(f) {
            *slot = (c as u8, k as u8);
        }
        Term {
            factors,
            degree: f.len() as u8,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    pub fn factors(&self) -> &[(u8, u8)] {
        &self.factors[..self.degree as usize]
    }

    #[inline]
    pub fn eval(&self, st: &Stencil) -> f64 {
        self.factors()
            .iter()
            .map(|&(c, k)| st.value(c as usize, k as usize))
            .product()
    }
}

fn linear(cells: &[usize], out: &mut Vec<Term>) {
    for &c in cells {
        for j in 0..2 {
            out.push(Term::new(&[(c, j)]));
        }
    }
}

fn n0_times(cells: &[usize], out: &mut Vec<Term>) {
    for a in 0..2 {
        for &c in cells {
            for b in 0..2 {
                out.push(Term::new(&[(N0, a), (c, b)]));
            }
        }
    }
}

fn n0_times_square(cells: &[usize], out: &mut Vec<Term>) {
    for a in 0..2 {
        for &c in cells {
            for (b, d) in [(0, 0), (0, 1), (1, 1)] {
                out.push(Term::new(&[(N0, a), (c, b), (c, d)]));
            }
        }
    }
}

fn n0_times_pair(ring: &[usize; 4], pairs: &[(usize, usize)], out: &mut Vec<Term>) {
    for a in 0..2 {
        for &(i, j) in pairs {
            for b in 0..2 {
                for d in 0..2 {
                    out.push(Term::new(&[(N0, a), (ring[i], b), (ring[j], d)]));
                }
            }
        }
    }
}

const ADJ: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];
const OPP: [(usize, usize); 2] = [(0, 2), (1, 3)];

/// Term groups appended by each model, in model order.
fn groups() -> Vec<Vec<Term>> {
    let mut g = Vec::with_capacity(15);
    let mut push = |f: &dyn Fn(&mut Vec<Term>)| {
        let mut v = Vec::new();
        f(&mut v);
        g.push(v);
    };
    push(&|v| linear(&[N0], v));
    push(&|v| {
        v.push(Term::new(&[(N0, 0), (N0, 0)]));
        v.push(Term::new(&[(N0, 1), (N0, 1)]));
    });
    push(&|v| v.push(Term::new(&[(N0, 0), (N0, 1)])));
    push(&|v| linear(&N1, v));
    push(&|v| linear(&C1, v));
    push(&|v| n0_times(&N1, v));
    push(&|v| n0_times(&C1, v));
    push(&|v| linear(&N2, v));
    push(&|v| linear(&C2, v));
    push(&|v| n0_times(&N2, v));
    push(&|v| n0_times(&C2, v));
    push(&|v| n0_times_square(&N1, v));
    push(&|v| n0_times_square(&C1, v));
    push(&|v| {
        n0_times_pair(&N1, &ADJ, v);
        n0_times_pair(&C1, &ADJ, v);
    });
    push(&|v| {
        n0_times_pair(&N1, &OPP, v);
        n0_times_pair(&C1, &OPP, v);
    });
    g
}

/// A basis: one of the nested models, or the degree-1 subset of one.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    model_id: u8,
    linear_only: bool,
    terms: Vec<Term>,
}

impl BasisSpec {
    pub fn model(id: u8) -> Result<Self> {
        if id > MAX_MODEL {
            return Err(Error::invalid(format!("unknown basis model {id} (expected 0..=14)")));
        }
        let terms: Vec<Term> = groups().into_iter().take(id as usize + 1).flatten().collect();
        debug_assert_eq!(terms.len(), TERM_COUNTS[id as usize]);
        Ok(BasisSpec {
            model_id: id,
            linear_only: false,
            terms,
        })
    }

    /// Only the degree-1 terms of model `id`.
    pub fn linear_subset(id: u8) -> Result<Self> {
        let full = Self::model(id)?;
        Ok(BasisSpec {
            model_id: id,
            linear_only: true,
            terms: full.terms.into_iter().filter(|t| t.degree() == 1).collect(),
        })
    }

    pub fn model_id(&self) -> u8 {
        self.model_id
    }

    pub fn is_linear_subset(&self) -> bool {
        self.linear_only
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Container encoding: model id, plus 256 for a linear subset.
    pub fn wire_id(&self) -> u32 {
        self.model_id as u32 + if self.linear_only { 256 } else { 0 }
    }

    pub fn from_wire_id(id: u32) -> Result<Self> {
        let model = u8::try_from(id & 0xff).expect("masked");
        match id >> 8 {
            0 => Self::model(model),
            1 => Self::linear_subset(model),
            _ => Err(Error::invalid(format!("unknown basis wire id {id}"))),
        }
    }

    pub fn eval_into(&self, st: &Stencil, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(st);
        }
    }

    pub fn eval(&self, st: &Stencil) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(st)).collect()
    }
}

/// Convenience form of [`BasisSpec::eval`].
pub fn basis_eval(spec: &BasisSpec, st: &Stencil) -> Vec<f64> {
    spec.eval(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::stencil::CELLS;
    use proptest::prelude::*;

    #[test]
    fn term_counts_match_table() {
        for id in 0..=MAX_MODEL {
            assert_eq!(BasisSpec::model(id).unwrap().len(), TERM_COUNTS[id as usize], "model {id}");
        }
        assert_eq!(BasisSpec::model(0).unwrap().len(), 2);
        assert_eq!(BasisSpec::model(6).unwrap().len(), 53);
        assert_eq!(BasisSpec::model(13).unwrap().len(), 261);
        assert!(BasisSpec::model(15).is_err());
    }

    #[test]
    fn model_zero_is_center_velocity() {
        let mut st = Stencil::zeros();
        st.values[N0] = [1.5, -2.0];
        assert_eq!(BasisSpec::model(0).unwrap().eval(&st), vec![1.5, -2.0]);
    }

    #[test]
    fn zero_stencil_gives_zero_vector() {
        let st = Stencil::zeros();
        assert!(BasisSpec::model(14).unwrap().eval(&st).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn terms_are_distinct_monomials() {
        let spec = BasisSpec::model(14).unwrap();
        let mut keys: Vec<Vec<(u8, u8)>> = spec
            .terms()
            .iter()
            .map(|t| {
                let mut f = t.factors().to_vec();
                f.sort_unstable();
                f
            })
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 293);
    }

    #[test]
    fn linear_subset_of_model_six() {
        let lin = BasisSpec::linear_subset(6).unwrap();
        assert_eq!(lin.len(), 18);
        assert!(lin.terms().iter().all(|t| t.degree() == 1));
        assert_eq!(BasisSpec::from_wire_id(lin.wire_id()).unwrap(), lin);
    }

    proptest! {
        #[test]
        fn models_are_nested_prefixes(vals in proptest::collection::vec(-3.0f64..3.0, CELLS * 2)) {
            let mut st = Stencil::zeros();
            for (i, v) in vals.iter().enumerate() {
                st.values[i / 2][i % 2] = *v;
            }
            let full = BasisSpec::model(14).unwrap().eval(&st);
            for id in 0..MAX_MODEL {
                let b = BasisSpec::model(id).unwrap().eval(&st);
                prop_assert_eq!(&b[..], &full[..b.len()]);
            }
        }
    }
}
