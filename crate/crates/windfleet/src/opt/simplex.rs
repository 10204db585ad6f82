//! Bounded-variable primal simplex with product-form basis updates.
//!
//! Rows are equalities or `>=` inequalities. Every row gets one logical
//! column (`=` rows fix it to [0, 0], `>=` rows allow (-inf, 0]), so the
//! all-logical basis always exists and phase 1 starts from it. Pricing
//! is full Dantzig with lowest-index ties, the ratio test stops at the
//! first breakpoint, and a stall of degenerate pivots switches to
//! Bland's rule. Terminal verdicts are only accepted on a freshly
//! factored basis, and feasibility lost to eta drift or a singular
//! refactorization is repaired by restarting phase 1. Single-threaded
//! and deterministic throughout.

use super::lu::LuFactors;

pub(crate) const FEASIBILITY_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-9;
const ETA_DROP: f64 = 1e-12;
const REFACTOR_INTERVAL: usize = 100;
const STALL_LIMIT: u32 = 60;
/// Feasibility slack accepted when handing a phase-1 basis to phase 2.
const PHASE1_RESIDUAL_TOL: f64 = 1e-7;
/// Phase-1/phase-2 rounds before numerical trouble is declared terminal.
const MAX_RESTART_ROUNDS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct LpColumn {
    pub cost: f64,
    /// Sorted, deduplicated (row, coefficient) pairs.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    pub num_rows: usize,
    pub cols: Vec<LpColumn>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpStatus {
    Optimal,
    /// Phase 1 stalled with this row still violated.
    Infeasible { row: usize },
    Unbounded { column: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Structural variable values (meaningful when Optimal).
    pub values: Vec<f64>,
    pub iterations: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColStatus {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Eta {
    position: usize,
    pivot: f64,
    /// Off-pivot entries of the transformed entering column.
    rest: Vec<(usize, f64)>,
}

/// Solves min c'x over `lower <= x <= upper` from a cold basis.
pub(crate) fn solve_lp(lp: &LinearProgram, lower: &[f64], upper: &[f64]) -> LpSolution {
    LpEngine::new(lp, lower, upper).solve(lower, upper)
}

/// Reusable solver for one constraint matrix under changing structural
/// bounds. Each `solve` warm-starts from the previous basis; phase 1
/// repairs whatever feasibility the bound change broke, which makes
/// repeated branch-and-bound probes far cheaper than cold solves.
pub(crate) struct LpEngine<'a> {
    worker: Worker<'a>,
}

impl<'a> LpEngine<'a> {
    pub fn new(lp: &'a LinearProgram, lower: &[f64], upper: &[f64]) -> Self {
        assert_eq!(lp.cols.len(), lower.len());
        assert_eq!(lp.cols.len(), upper.len());
        assert_eq!(lp.senses.len(), lp.num_rows);
        assert_eq!(lp.rhs.len(), lp.num_rows);
        Self { worker: Worker::new(lp, lower, upper) }
    }

    pub fn solve(&mut self, lower: &[f64], upper: &[f64]) -> LpSolution {
        self.worker.rebound(lower, upper);
        self.worker.run()
    }
}

struct Worker<'a> {
    lp: &'a LinearProgram,
    num_structural: usize,
    num_total: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<ColStatus>,
    /// Column occupying each basis position.
    basis: Vec<usize>,
    x_basic: Vec<f64>,
    lu: LuFactors,
    etas: Vec<Eta>,
    /// Pivots between refactorizations; halved after a restart round.
    refactor_interval: usize,
    iterations: u64,
    stall: u32,
    bland: bool,
}

impl<'a> Worker<'a> {
    fn new(lp: &'a LinearProgram, lower: &[f64], upper: &[f64]) -> Self {
        let num_structural = lp.cols.len();
        let num_total = num_structural + lp.num_rows;
        let mut all_lower = lower.to_vec();
        let mut all_upper = upper.to_vec();
        for sense in &lp.senses {
            match sense {
                Sense::Eq => {
                    all_lower.push(0.0);
                    all_upper.push(0.0);
                }
                Sense::Ge => {
                    all_lower.push(f64::NEG_INFINITY);
                    all_upper.push(0.0);
                }
            }
        }
        let mut worker = Self {
            lp,
            num_structural,
            num_total,
            lower: all_lower,
            upper: all_upper,
            status: vec![ColStatus::AtLower; num_total],
            basis: Vec::new(),
            x_basic: Vec::new(),
            lu: LuFactors::factor(&[]).expect("empty basis factors"),
            etas: Vec::new(),
            refactor_interval: REFACTOR_INTERVAL,
            iterations: 0,
            stall: 0,
            bland: false,
        };
        worker.reset_to_logical_basis();
        worker
    }

    fn reset_to_logical_basis(&mut self) {
        self.basis = (0..self.lp.num_rows).map(|r| self.num_structural + r).collect();
        for j in 0..self.num_total {
            self.status[j] = self.nonbasic_resting_status(j);
        }
        for (position, &column) in self.basis.clone().iter().enumerate() {
            self.status[column] = ColStatus::Basic(position);
        }
        self.etas.clear();
        self.lu = LuFactors::factor(&self.basis_columns()).expect("identity basis factors");
        self.recompute_basics();
    }

    /// Where a nonbasic column rests: the finite bound, preferring lower.
    fn nonbasic_resting_status(&self, column: usize) -> ColStatus {
        if self.lower[column].is_finite() {
            ColStatus::AtLower
        } else {
            ColStatus::AtUpper
        }
    }

    /// Installs new structural bounds, keeping the basis. Nonbasic
    /// columns stay on their side when that bound is still finite and
    /// fall back to the resting bound otherwise; basics are recomputed
    /// so `run` sees exact values under the new bounds.
    fn rebound(&mut self, lower: &[f64], upper: &[f64]) {
        self.lower[..self.num_structural].copy_from_slice(lower);
        self.upper[..self.num_structural].copy_from_slice(upper);
        for column in 0..self.num_structural {
            self.status[column] = match self.status[column] {
                basic @ ColStatus::Basic(_) => basic,
                ColStatus::AtUpper if self.upper[column].is_finite() => ColStatus::AtUpper,
                _ => self.nonbasic_resting_status(column),
            };
        }
        if self.etas.is_empty() {
            self.recompute_basics();
        } else {
            self.refactor();
        }
        self.refactor_interval = REFACTOR_INTERVAL;
        self.stall = 0;
        self.bland = false;
        self.iterations = 0;
    }

    fn nonbasic_value(&self, column: usize) -> f64 {
        match self.status[column] {
            ColStatus::AtLower => self.lower[column],
            ColStatus::AtUpper => self.upper[column],
            ColStatus::Basic(position) => self.x_basic[position],
        }
    }

    fn column_entries(&self, column: usize) -> &[(usize, f64)] {
        if column < self.num_structural {
            &self.lp.cols[column].entries
        } else {
            // Logical columns are materialized on demand by callers.
            unreachable!("logical columns handled by for_each_entry")
        }
    }

    fn for_each_entry(&self, column: usize, mut f: impl FnMut(usize, f64)) {
        if column < self.num_structural {
            for &(row, coefficient) in &self.lp.cols[column].entries {
                f(row, coefficient);
            }
        } else {
            f(column - self.num_structural, 1.0);
        }
    }

    fn basis_columns(&self) -> Vec<Vec<(usize, f64)>> {
        self.basis
            .iter()
            .map(|&column| {
                if column < self.num_structural {
                    self.column_entries(column).to_vec()
                } else {
                    vec![(column - self.num_structural, 1.0)]
                }
            })
            .collect()
    }

    /// x_B = B^-1 (b - N x_N), from scratch.
    fn recompute_basics(&mut self) {
        let mut rhs = self.lp.rhs.clone();
        for column in 0..self.num_total {
            if matches!(self.status[column], ColStatus::Basic(_)) {
                continue;
            }
            let value = self.nonbasic_value(column);
            if value != 0.0 {
                self.for_each_entry(column, |row, coefficient| {
                    rhs[row] -= coefficient * value;
                });
            }
        }
        self.ftran(&mut rhs);
        self.x_basic = rhs;
    }

    fn ftran(&self, vector: &mut Vec<f64>) {
        self.lu.ftran(vector);
        for eta in &self.etas {
            let step = vector[eta.position] / eta.pivot;
            if step != 0.0 {
                vector[eta.position] = step;
                for &(position, weight) in &eta.rest {
                    vector[position] -= weight * step;
                }
            } else {
                vector[eta.position] = 0.0;
            }
        }
    }

    fn btran(&self, vector: &mut Vec<f64>) {
        // Only the pivot component changes under each transposed eta.
        for eta in self.etas.iter().rev() {
            let off: f64 = eta
                .rest
                .iter()
                .map(|&(position, weight)| weight * vector[position])
                .sum();
            vector[eta.position] = (vector[eta.position] - off) / eta.pivot;
        }
        self.lu.btran(vector);
    }

    /// Refactors the current basis, or falls back to the all-logical
    /// basis when it has gone numerically singular. Either way the
    /// eta file is cleared and `x_basic` is exact afterwards; the
    /// fallback loses feasibility, which `run` repairs by restarting
    /// phase 1.
    fn refactor(&mut self) -> bool {
        match LuFactors::factor(&self.basis_columns()) {
            Ok(lu) => {
                self.lu = lu;
                self.etas.clear();
                self.recompute_basics();
                true
            }
            Err(_) => {
                self.reset_to_logical_basis();
                false
            }
        }
    }

    /// Phase-1 cost of a basic column given its current value.
    fn infeasibility_cost(&self, column: usize, value: f64) -> f64 {
        if value < self.lower[column] - FEASIBILITY_TOL {
            -1.0
        } else if value > self.upper[column] + FEASIBILITY_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn total_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_basic)
            .map(|(&column, &value)| {
                (self.lower[column] - value).max(0.0) + (value - self.upper[column]).max(0.0)
            })
            .sum()
    }

    fn run(&mut self) -> LpSolution {
        // Phase 1 drives bound violations to zero, phase 2 optimizes the
        // real objective. `iterate` only ever returns verdicts confirmed
        // on a freshly factored basis, but eta drift inside phase 2 (or a
        // singular-basis fallback) can still surface as exact infeasibility
        // at its end; each such round restarts phase 1 from the current
        // basis with a tighter refactor window.
        for round in 0..MAX_RESTART_ROUNDS {
            if let Some(bad) = self.iterate(true) {
                return self.finish(bad);
            }
            if self.total_infeasibility() > PHASE1_RESIDUAL_TOL {
                // Exact phase-1 optimum with violations left: no feasible
                // point exists.
                let row = self.worst_violation_row();
                return self.finish(LpStatus::Infeasible { row });
            }
            self.stall = 0;
            self.bland = false;
            if let Some(bad) = self.iterate(false) {
                return self.finish(bad);
            }
            if self.total_infeasibility() <= PHASE1_RESIDUAL_TOL {
                return self.finish(LpStatus::Optimal);
            }
            self.refactor_interval = (self.refactor_interval / 2).max(10);
            self.stall = 0;
            self.bland = round % 2 == 0; // nudge the next round onto a different path
        }
        // Persistent numerical trouble. Reporting the residual violation
        // beats certifying an infeasible point as optimal.
        let row = self.worst_violation_row();
        self.finish(LpStatus::Infeasible { row })
    }

    fn worst_violation_row(&self) -> usize {
        let mut worst = (0usize, -1.0f64);
        for (position, (&column, &value)) in self.basis.iter().zip(&self.x_basic).enumerate() {
            let violation =
                (self.lower[column] - value).max(value - self.upper[column]).max(0.0);
            if violation > worst.1 {
                // Map the position to the row its logical column owns;
                // structural culprits report their first row.
                let row = if column >= self.num_structural {
                    column - self.num_structural
                } else {
                    self.lp.cols[column].entries.first().map_or(position, |&(r, _)| r)
                };
                worst = (row, violation);
            }
        }
        worst.0
    }

    /// Runs pivots until optimal for the phase. Returns early with a
    /// terminal status (infeasible has its own check upstream). Every
    /// exit is confirmed on a drift-free basis: with etas pending the
    /// basis is refactored and the exit condition re-tested, so callers
    /// can trust `x_basic` exactly at return.
    fn iterate(&mut self, phase_one: bool) -> Option<LpStatus> {
        loop {
            if phase_one && self.total_infeasibility() <= FEASIBILITY_TOL {
                if !self.etas.is_empty() {
                    self.refactor();
                    continue;
                }
                return None;
            }
            // Duals for the phase's basic costs.
            let mut duals = vec![0.0f64; self.lp.num_rows];
            for (position, &column) in self.basis.iter().enumerate() {
                duals[position] = if phase_one {
                    self.infeasibility_cost(column, self.x_basic[position])
                } else if column < self.num_structural {
                    self.lp.cols[column].cost
                } else {
                    0.0
                };
            }
            self.btran(&mut duals);

            let entering = self.price(&duals, phase_one);
            let Some((entering, direction)) = entering else {
                if !self.etas.is_empty() {
                    self.refactor();
                    continue;
                }
                return None; // phase optimal, confirmed on exact values
            };

            let mut w = vec![0.0f64; self.lp.num_rows];
            self.for_each_entry(entering, |row, coefficient| w[row] += coefficient);
            self.ftran(&mut w);

            match self.ratio_test(entering, direction, &w) {
                RatioOutcome::Unbounded => {
                    if !self.etas.is_empty() {
                        self.refactor();
                        continue;
                    }
                    return Some(LpStatus::Unbounded { column: entering });
                }
                RatioOutcome::BoundFlip { length } => {
                    self.apply_step(entering, direction, &w, length);
                    self.status[entering] = match self.status[entering] {
                        ColStatus::AtLower => ColStatus::AtUpper,
                        ColStatus::AtUpper => ColStatus::AtLower,
                        ColStatus::Basic(_) => unreachable!("entering is nonbasic"),
                    };
                    self.note_progress(length);
                }
                RatioOutcome::Pivot { position, length, hits_upper } => {
                    self.apply_step(entering, direction, &w, length);
                    let leaving = self.basis[position];
                    let entering_value = self.nonbasic_value(entering)
                        + direction * length;
                    self.status[leaving] =
                        if hits_upper { ColStatus::AtUpper } else { ColStatus::AtLower };
                    self.basis[position] = entering;
                    self.status[entering] = ColStatus::Basic(position);
                    self.x_basic[position] = entering_value;
                    // Product-form update of the basis inverse.
                    let pivot = w[position];
                    let rest: Vec<(usize, f64)> = w
                        .iter()
                        .enumerate()
                        .filter(|&(p, &v)| p != position && v.abs() > ETA_DROP)
                        .map(|(p, &v)| (p, v))
                        .collect();
                    self.etas.push(Eta { position, pivot, rest });
                    if self.etas.len() >= self.refactor_interval {
                        self.refactor();
                    }
                    self.note_progress(length);
                }
            }
            self.iterations += 1;
        }
    }

    fn note_progress(&mut self, step_length: f64) {
        if step_length > RATIO_TOL {
            self.stall = 0;
            self.bland = false;
        } else {
            self.stall += 1;
            if self.stall >= STALL_LIMIT {
                self.bland = true;
            }
        }
    }

    /// Moves the entering variable by `length` along `direction`,
    /// dragging the basics with it.
    fn apply_step(&mut self, _entering: usize, direction: f64, w: &[f64], length: f64) {
        if length == 0.0 {
            return;
        }
        for (position, &weight) in w.iter().enumerate() {
            if weight != 0.0 {
                self.x_basic[position] -= direction * length * weight;
            }
        }
    }

    /// Dantzig pricing (Bland under stall): entering column + direction.
    fn price(&self, duals: &[f64], phase_one: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for column in 0..self.num_total {
            let status = self.status[column];
            if matches!(status, ColStatus::Basic(_)) {
                continue;
            }
            if self.upper[column] - self.lower[column] < RATIO_TOL {
                continue; // fixed columns never move
            }
            let cost = if phase_one {
                0.0
            } else if column < self.num_structural {
                self.lp.cols[column].cost
            } else {
                0.0
            };
            let mut reduced = cost;
            self.for_each_entry(column, |row, coefficient| {
                reduced -= coefficient * duals[row];
            });
            let candidate = match status {
                ColStatus::AtLower if reduced < -DUAL_TOL => Some((1.0, -reduced)),
                ColStatus::AtUpper if reduced > DUAL_TOL => Some((-1.0, reduced)),
                _ => None,
            };
            if let Some((direction, score)) = candidate {
                if self.bland {
                    return Some((column, direction));
                }
                if best.map_or(true, |(_, _, s)| score > s) {
                    best = Some((column, direction, score));
                }
            }
        }
        best.map(|(column, direction, _)| (column, direction))
    }

    /// First-breakpoint ratio test. Violated basics (phase 1) meet
    /// their violated bound first; feasible ones their far bound.
    fn ratio_test(&self, entering: usize, direction: f64, w: &[f64]) -> RatioOutcome {
        let own_range = self.upper[entering] - self.lower[entering];
        let mut best_length = own_range;
        let mut best: Option<(usize, bool, f64)> = None; // (position, hits_upper, |pivot|)

        for (position, &weight) in w.iter().enumerate() {
            if weight.abs() <= RATIO_TOL {
                continue;
            }
            let rate = -direction * weight; // d x_basic / d length
            let column = self.basis[position];
            let value = self.x_basic[position];
            let lower = self.lower[column];
            let upper = self.upper[column];
            let (breakpoint, hits_upper) = if rate > 0.0 {
                if value < lower - FEASIBILITY_TOL {
                    (lower, false)
                } else if upper.is_finite() {
                    (upper, true)
                } else {
                    continue;
                }
            } else if value > upper + FEASIBILITY_TOL {
                (upper, true)
            } else if lower.is_finite() {
                (lower, false)
            } else {
                continue;
            };
            let distance = ((breakpoint - value) / rate).max(0.0);
            let tie = (distance - best_length).abs() <= RATIO_TOL;
            let better = distance < best_length - RATIO_TOL;
            let preferred = match (&best, tie) {
                (_, false) => better,
                (None, true) => true,
                (Some((best_position, _, best_pivot)), true) => {
                    if self.bland {
                        self.basis[position] < self.basis[*best_position]
                    } else {
                        weight.abs() > *best_pivot
                    }
                }
            };
            if preferred {
                best_length = best_length.min(distance);
                best = Some((position, hits_upper, weight.abs()));
            }
        }

        match best {
            Some((position, hits_upper, _)) => RatioOutcome::Pivot {
                position,
                length: best_length.max(0.0),
                hits_upper,
            },
            None if own_range.is_finite() => RatioOutcome::BoundFlip { length: own_range },
            None => RatioOutcome::Unbounded,
        }
    }

    fn finish(&mut self, status: LpStatus) -> LpSolution {
        let mut values = vec![0.0f64; self.num_structural];
        for (column, value) in values.iter_mut().enumerate() {
            *value = self.nonbasic_value(column);
        }
        let objective = self
            .lp
            .cols
            .iter()
            .zip(&values)
            .map(|(col, &x)| col.cost * x)
            .sum();
        LpSolution { status, objective, values, iterations: self.iterations }
    }
}

enum RatioOutcome {
    Pivot { position: usize, length: f64, hits_upper: bool },
    BoundFlip { length: f64 },
    Unbounded,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lp(
        costs: &[f64],
        rows: &[(&[(usize, f64)], Sense, f64)],
    ) -> LinearProgram {
        let num_rows = rows.len();
        let mut cols: Vec<LpColumn> =
            costs.iter().map(|&cost| LpColumn { cost, entries: Vec::new() }).collect();
        for (row_index, (entries, _, _)) in rows.iter().enumerate() {
            for &(column, coefficient) in *entries {
                cols[column].entries.push((row_index, coefficient));
            }
        }
        for col in &mut cols {
            col.entries.sort_unstable_by_key(|&(row, _)| row);
        }
        LinearProgram {
            num_rows,
            cols,
            senses: rows.iter().map(|(_, sense, _)| *sense).collect(),
            rhs: rows.iter().map(|(_, _, rhs)| *rhs).collect(),
        }
    }

    fn free_upper(n: usize) -> Vec<f64> {
        vec![f64::INFINITY; n]
    }

    #[test]
    fn equality_pair_pins_the_point() {
        // min x + y  s.t.  x + y >= 1,  x - y = 0  ->  (0.5, 0.5).
        let problem = lp(
            &[1.0, 1.0],
            &[
                (&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.0),
                (&[(0, 1.0), (1, -1.0)], Sense::Eq, 0.0),
            ],
        );
        let solution = solve_lp(&problem, &[0.0, 0.0], &free_upper(2));
        assert_eq!(solution.status, LpStatus::Optimal);
        assert_relative_eq!(solution.objective, 1.0, epsilon = 1e-9);
        assert_relative_eq!(solution.values[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(solution.values[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn upper_bounds_participate() {
        // min -x - 2y  s.t.  x + y >= 1, x <= 3, y <= 2: push both to
        // their upper bounds.
        let problem = lp(
            &[-1.0, -2.0],
            &[(&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.0)],
        );
        let solution = solve_lp(&problem, &[0.0, 0.0], &[3.0, 2.0]);
        assert_eq!(solution.status, LpStatus::Optimal);
        assert_relative_eq!(solution.objective, -7.0, epsilon = 1e-9);
        assert_relative_eq!(solution.values[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(solution.values[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_system_is_detected() {
        // x >= 2 conflicts with x = 1.
        let problem = lp(
            &[1.0],
            &[
                (&[(0, 1.0)], Sense::Ge, 2.0),
                (&[(0, 1.0)], Sense::Eq, 1.0),
            ],
        );
        let solution = solve_lp(&problem, &[0.0], &free_upper(1));
        assert!(matches!(solution.status, LpStatus::Infeasible { .. }));
    }

    #[test]
    fn unbounded_descent_is_detected() {
        // min -x with x >= 1 and no ceiling.
        let problem = lp(&[-1.0], &[(&[(0, 1.0)], Sense::Ge, 1.0)]);
        let solution = solve_lp(&problem, &[0.0], &free_upper(1));
        assert!(matches!(solution.status, LpStatus::Unbounded { .. }));
    }

    #[test]
    fn negative_rhs_on_ge_rows_is_slack() {
        // x >= -5 is inactive; optimum rests at the variable bound.
        let problem = lp(&[1.0], &[(&[(0, 1.0)], Sense::Ge, -5.0)]);
        let solution = solve_lp(&problem, &[0.0], &free_upper(1));
        assert_eq!(solution.status, LpStatus::Optimal);
        assert_relative_eq!(solution.objective, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn transportation_instance_matches_hand_optimum() {
        // Two supplies (2, 3), two demands (3, 2), costs favoring the
        // diagonal; optimal ships diagonally where possible.
        // Vars: x00 x01 x10 x11; min x00 + 3x01 + 3x10 + x11
        // supply rows (=): x00+x01 = 2, x10+x11 = 3
        // demand rows (>=): x00+x10 >= 3, x01+x11 >= 2
        let problem = lp(
            &[1.0, 3.0, 3.0, 1.0],
            &[
                (&[(0, 1.0), (1, 1.0)], Sense::Eq, 2.0),
                (&[(2, 1.0), (3, 1.0)], Sense::Eq, 3.0),
                (&[(0, 1.0), (2, 1.0)], Sense::Ge, 3.0),
                (&[(1, 1.0), (3, 1.0)], Sense::Ge, 2.0),
            ],
        );
        let solution = solve_lp(&problem, &[0.0; 4], &free_upper(4));
        assert_eq!(solution.status, LpStatus::Optimal);
        // x00 = 2, x10 = 1, x11 = 2: cost 2 + 3 + 2 = 7.
        assert_relative_eq!(solution.objective, 7.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_overlap_still_terminates() {
        // Many redundant constraints through the same vertex.
        let problem = lp(
            &[1.0, 1.0],
            &[
                (&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.0),
                (&[(0, 2.0), (1, 2.0)], Sense::Ge, 2.0),
                (&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.0),
                (&[(0, 3.0), (1, 3.0)], Sense::Ge, 3.0),
            ],
        );
        let solution = solve_lp(&problem, &[0.0, 0.0], &free_upper(2));
        assert_eq!(solution.status, LpStatus::Optimal);
        assert_relative_eq!(solution.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fixed_columns_stay_put() {
        // y fixed at 2 by its bounds; x must cover the rest.
        let problem = lp(
            &[1.0, 0.0],
            &[(&[(0, 1.0), (1, 1.0)], Sense::Ge, 5.0)],
        );
        let solution = solve_lp(&problem, &[0.0, 2.0], &[f64::INFINITY, 2.0]);
        assert_eq!(solution.status, LpStatus::Optimal);
        assert_relative_eq!(solution.values[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(solution.values[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_rows_reduce_to_bound_selection() {
        let problem = lp(&[2.0, -1.0], &[]);
        let solution = solve_lp(&problem, &[1.0, 0.0], &[5.0, 4.0]);
        assert_eq!(solution.status, LpStatus::Optimal);
        assert_relative_eq!(solution.values[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(solution.values[1], 4.0, epsilon = 1e-9);
        assert_relative_eq!(solution.objective, -2.0, epsilon = 1e-9);
    }
}
