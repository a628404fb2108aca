//! Row-level representation of the schemes `sup_a (Mᵃ u - Gᵃ) = 0`.

use arrayvec::ArrayVec;

/// Widest stencil produced by any scheme (the 2D nine-point stencil).
pub const MAX_STENCIL: usize = 9;

pub type StencilEntries = ArrayVec<(usize, f64), MAX_STENCIL>;

/// Row `i` of `Mᵃ` together with the right-hand side `Gᵃ(·)_i` for one control.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub row: usize,
    pub entries: StencilEntries,
    pub rhs: f64,
}

impl StencilRow {
    pub fn new(row: usize) -> Self {
        Self {
            row,
            entries: ArrayVec::new(),
            rhs: 0.0,
        }
    }

    /// Identity row with the given right-hand side (Dirichlet rows, explicit schemes).
    pub fn identity(row: usize, rhs: f64) -> Self {
        let mut r = Self::new(row);
        r.entries.push((row, 1.0));
        r.rhs = rhs;
        r
    }

    /// Adds `value` to column `col`, merging repeated columns.
    pub fn add(&mut self, col: usize, value: f64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == col) {
            e.1 += value;
        } else {
            self.entries.push((col, value));
        }
    }

    pub fn coefficient(&self, col: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 == col)
            .map(|e| e.1)
            .sum()
    }

    pub fn diagonal(&self) -> f64 {
        self.coefficient(self.row)
    }

    /// `(M x)_i`.
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, m)| m * x[j]).sum()
    }

    /// `(M x - G)_i`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.apply(x) - self.rhs
    }

    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = self.row;
        self.entries.iter().copied().filter(move |e| e.0 != row)
    }

    pub fn sort(&mut self) {
        self.entries.sort_by_key(|e| e.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_arithmetic() {
        let mut r = StencilRow::new(1);
        r.add(0, -1.0);
        r.add(1, 2.0);
        r.add(2, -1.0);
        r.add(1, 0.5);
        r.rhs = 1.0;
        assert_eq!(r.diagonal(), 2.5);
        assert_eq!(r.entries.len(), 3);
        assert_eq!(r.apply(&[1.0, 1.0, 1.0]), 0.5);
        assert_eq!(r.residual(&[1.0, 1.0, 1.0]), -0.5);
        assert_eq!(r.off_diagonal().count(), 2);
        let id = StencilRow::identity(4, 3.0);
        assert_eq!(id.residual(&[0.0, 0.0, 0.0, 0.0, 3.0]), 0.0);
    }
}
