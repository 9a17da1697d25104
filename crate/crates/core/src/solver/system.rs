use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::kinematics::{SparseColumns, Vec3};

/// Energy term that produced a block of residual rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    ModelToData,
    DataToModel,
    Collision,
    Salient,
    Physics,
    Anatomy,
    Regularization,
}

impl Term {
    pub const ALL: [Term; 7] = [
        Term::ModelToData,
        Term::DataToModel,
        Term::Collision,
        Term::Salient,
        Term::Physics,
        Term::Anatomy,
        Term::Regularization,
    ];
}

/// Stacked residual vector with a row-compressed sparse Jacobian.
#[derive(Clone, Debug, Default)]
pub struct ResidualSystem {
    pub residuals: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    spans: Vec<(Term, Range<usize>)>,
    current: Option<(Term, usize)>,
}

impl ResidualSystem {
    pub fn new() -> Self {
        Self {
            row_ptr: vec![0],
            ..Default::default()
        }
    }

    pub fn rows(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// Starts the row span of `term`; spans end at the next call or at
    /// [`ResidualSystem::finish`].
    pub fn begin(&mut self, term: Term) {
        self.close_span();
        self.current = Some((term, self.rows()));
    }

    fn close_span(&mut self) {
        if let Some((t, start)) = self.current.take() {
            self.spans.push((t, start..self.rows()));
        }
    }

    pub fn finish(mut self) -> Self {
        self.close_span();
        self
    }

    pub fn spans(&self) -> &[(Term, Range<usize>)] {
        &self.spans
    }

    pub fn span(&self, term: Term) -> Option<Range<usize>> {
        self.spans.iter().find(|(t, _)| *t == term).map(|(_, r)| r.clone())
    }

    pub fn push(&mut self, value: f64, entries: impl IntoIterator<Item = (usize, f64)>) {
        self.residuals.push(value);
        for (c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    /// Pushes the three rows `scale * value` with Jacobian `scale * m * J`
    /// where `J` is a sparse `3 x dof` block.
    pub fn push_vec3(&mut self, scale: f64, value: &Vec3, jac: &SparseColumns, m: Option<&nalgebra::Matrix3<f64>>) {
        for k in 0..3 {
            let entries = jac.iter().map(|(c, col)| {
                let x = match m {
                    Some(m) => m.row(k).dot(&col.transpose()),
                    None => col[k],
                };
                (*c, scale * x)
            });
            self.push(scale * value[k], entries.collect::<Vec<_>>());
        }
    }

    pub fn energy(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    pub fn term_energy(&self, term: Term) -> f64 {
        self.span(term)
            .map(|r| self.residuals[r].iter().map(|x| x * x).sum())
            .unwrap_or(0.0)
    }

    pub fn row_entries(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[row]..self.row_ptr[row + 1]).map(move |i| (self.cols[i], self.vals[i]))
    }

    pub fn dense_jacobian(&self, dof: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.rows(), dof);
        for r in 0..self.rows() {
            for (c, v) in self.row_entries(r) {
                j[(r, c)] += v;
            }
        }
        j
    }

    /// `J^T J` and `J^T r`.
    pub fn normal_equations(&self, dof: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut h = DMatrix::zeros(dof, dof);
        let mut g = DVector::zeros(dof);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..self.rows() {
            row.clear();
            row.extend(self.row_entries(r));
            let res = self.residuals[r];
            for &(a, va) in &row {
                g[a] += va * res;
                for &(b, vb) in &row {
                    h[(a, b)] += va * vb;
                }
            }
        }
        (h, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_and_normal_equations() {
        let mut s = ResidualSystem::new();
        s.begin(Term::ModelToData);
        s.push(1.0, [(0, 2.0)]);
        s.push(-1.0, [(1, 1.0), (0, 1.0)]);
        s.begin(Term::Regularization);
        s.push(3.0, [(1, 1.0)]);
        let s = s.finish();
        assert_eq!(s.span(Term::ModelToData), Some(0..2));
        assert_eq!(s.span(Term::Regularization), Some(2..3));
        assert_eq!(s.energy(), 11.0);
        assert_eq!(s.term_energy(Term::Regularization), 9.0);
        let (h, g) = s.normal_equations(2);
        let j = s.dense_jacobian(2);
        let r = DVector::from_vec(s.residuals.clone());
        assert_eq!(h, j.transpose() * &j);
        assert_eq!(g, j.transpose() * r);
    }
}
