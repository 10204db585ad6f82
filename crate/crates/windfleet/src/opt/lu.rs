//! Sparse LU factorization of simplex bases.
//!
//! Left-looking elimination with partial pivoting by magnitude. Columns
//! are factored in the order given (no column permutation); the row
//! permutation is recorded per elimination step. Solves run in original
//! row space for L and in step space for U, so callers see basis
//! positions on the x side and row indices on the dual side.

const PIVOT_TOLERANCE: f64 = 1e-11;

#[derive(Debug)]
pub(crate) struct SingularBasis {
    /// Basis position whose column had no usable pivot. Carried for
    /// diagnostics; the simplex recovers by resetting the basis.
    #[allow(dead_code)]
    pub position: usize,
}

pub(crate) struct LuFactors {
    size: usize,
    /// Per step: (original row, multiplier) below the pivot.
    lower: Vec<Vec<(usize, f64)>>,
    /// Per column: (earlier step, value) strictly above the diagonal.
    upper: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
    pivot_row_of_step: Vec<usize>,
}

impl LuFactors {
    /// Factors the matrix whose column `j` holds `columns[j]` as sparse
    /// (row, value) pairs.
    pub fn factor(columns: &[Vec<(usize, f64)>]) -> Result<Self, SingularBasis> {
        let size = columns.len();
        let mut lower = Vec::with_capacity(size);
        let mut upper = Vec::with_capacity(size);
        let mut diag = Vec::with_capacity(size);
        let mut pivot_row_of_step = Vec::with_capacity(size);
        // usize::MAX marks a row not yet claimed by a pivot.
        let mut step_of_row = vec![usize::MAX; size];

        let mut work = vec![0.0f64; size];
        let mut touched: Vec<usize> = Vec::with_capacity(64);

        for (position, column) in columns.iter().enumerate() {
            for &(row, value) in column {
                debug_assert!(row < size);
                if work[row] == 0.0 {
                    touched.push(row);
                }
                work[row] += value;
            }
            // Apply earlier eliminations in step order; left-looking, so
            // only steps whose pivot row currently holds mass matter.
            let mut u_entries = Vec::new();
            for step in 0..position {
                let pivot_row = pivot_row_of_step[step];
                let value = work[pivot_row];
                if value == 0.0 {
                    continue;
                }
                u_entries.push((step, value));
                for &(row, multiplier) in &lower[step] {
                    if work[row] == 0.0 {
                        touched.push(row);
                    }
                    work[row] -= multiplier * value;
                }
            }
            // Pivot: largest magnitude among rows no pivot has claimed.
            let mut pivot_row = usize::MAX;
            let mut pivot_value = 0.0f64;
            for &row in &touched {
                if step_of_row[row] == usize::MAX && work[row].abs() > pivot_value.abs() {
                    pivot_row = row;
                    pivot_value = work[row];
                }
            }
            if pivot_row == usize::MAX || pivot_value.abs() < PIVOT_TOLERANCE {
                return Err(SingularBasis { position });
            }
            let mut l_entries = Vec::new();
            for &row in &touched {
                if row != pivot_row && step_of_row[row] == usize::MAX && work[row] != 0.0 {
                    l_entries.push((row, work[row] / pivot_value));
                }
            }
            l_entries.sort_unstable_by_key(|&(row, _)| row);
            step_of_row[pivot_row] = position;
            pivot_row_of_step.push(pivot_row);
            lower.push(l_entries);
            upper.push(u_entries);
            diag.push(pivot_value);
            for &row in &touched {
                work[row] = 0.0;
            }
            touched.clear();
        }

        Ok(Self { size, lower, upper, diag, pivot_row_of_step })
    }

    /// Solves `B x = b`. `b` is indexed by row; the result is indexed by
    /// basis position.
    pub fn ftran(&self, rhs: &mut Vec<f64>) {
        debug_assert_eq!(rhs.len(), self.size);
        for step in 0..self.size {
            let value = rhs[self.pivot_row_of_step[step]];
            if value != 0.0 {
                for &(row, multiplier) in &self.lower[step] {
                    rhs[row] -= multiplier * value;
                }
            }
        }
        let mut solution = vec![0.0f64; self.size];
        for step in 0..self.size {
            solution[step] = rhs[self.pivot_row_of_step[step]];
        }
        for position in (0..self.size).rev() {
            let x = solution[position] / self.diag[position];
            solution[position] = x;
            if x != 0.0 {
                for &(step, value) in &self.upper[position] {
                    solution[step] -= value * x;
                }
            }
        }
        *rhs = solution;
    }

    /// Solves `Bᵀ y = c`. `c` is indexed by basis position; the result
    /// is indexed by row.
    pub fn btran(&self, rhs: &mut Vec<f64>) {
        debug_assert_eq!(rhs.len(), self.size);
        // Uᵀ z = c, forward over positions.
        for position in 0..self.size {
            let mut value = rhs[position];
            for &(step, coefficient) in &self.upper[position] {
                value -= coefficient * rhs[step];
            }
            rhs[position] = value / self.diag[position];
        }
        // Scatter into row space, then apply transposed eliminations in
        // reverse step order.
        let mut dual = vec![0.0f64; self.size];
        for step in 0..self.size {
            dual[self.pivot_row_of_step[step]] = rhs[step];
        }
        for step in (0..self.size).rev() {
            let mut adjustment = 0.0f64;
            for &(row, multiplier) in &self.lower[step] {
                adjustment += multiplier * dual[row];
            }
            dual[self.pivot_row_of_step[step]] -= adjustment;
        }
        *rhs = dual;
    }
}
