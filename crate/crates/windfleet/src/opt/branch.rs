//! Exact branch-and-bound on the LP relaxation.
//!
//! Depth-first: each node probes both children's LP bounds and descends
//! into the better one first, pruning against the incumbent. All
//! variables are integers, so a node with an integral LP optimum is a
//! leaf. Single-threaded and deterministic when limits do not fire.

use std::time::Instant;

use super::simplex::{LpEngine, LpSolution, LpStatus};
use super::{extract_initial_idle, extract_schedules, FleetSolution, IntegerProgram, OptError};

const INTEGRALITY_TOL: f64 = 1e-6;
/// Objective values sit on a lattice spaced by alpha, so this slack
/// can never prune a strictly better solution.
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SolveLimits {
    pub time_limit_s: Option<f64>,
    pub node_limit: Option<u64>,
    /// Absolute objective gap accepted when pruning (0 = exact).
    pub gap: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self { time_limit_s: None, node_limit: None, gap: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverStats {
    /// Branch nodes explored (the root does not count).
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall_time_s: f64,
    /// Final absolute bound gap (0 when proved optimal).
    pub gap: f64,
    pub proved_optimal: bool,
}

/// Solves the program to proven optimality within the limits, or to the
/// best incumbent plus a reported bound gap.
pub fn solve(program: &IntegerProgram, limits: &SolveLimits) -> Result<FleetSolution, OptError> {
    let lp = program.to_linear_program();
    let num_vars = program.variables().len();
    let lower = vec![0.0; num_vars];
    let upper = vec![f64::INFINITY; num_vars];
    let mut search = Search {
        program,
        engine: LpEngine::new(&lp, &lower, &upper),
        lower,
        upper,
        incumbent: None,
        abandoned_bound: f64::INFINITY,
        branch_nodes: 0,
        lp_iterations: 0,
        limit_hit: false,
        started: Instant::now(),
        limits,
    };

    let root = search.engine.solve(&search.lower, &search.upper);
    search.lp_iterations += root.iterations;
    let root_bound = root.objective;
    match root.status {
        LpStatus::Infeasible { row } => {
            return Err(OptError::Infeasible { family: program.row_family(row) });
        }
        LpStatus::Unbounded { .. } => {
            // Impossible with nonnegative costs over nonnegative vars;
            // treat as a modeling failure loudly.
            unreachable!("fleet program objective is bounded below by zero");
        }
        LpStatus::Optimal => {}
    }
    search.descend(root);

    let wall_time_s = search.started.elapsed().as_secs_f64();
    match search.incumbent {
        Some((objective, values)) => {
            let rounded: Vec<f64> = values.iter().map(|v| v.round()).collect();
            let fleet_size: u32 = program
                .variables()
                .iter()
                .zip(&rounded)
                .filter(|(var, _)| var.fleet_member)
                .map(|(_, &v)| v as u32)
                .sum();
            let (flights, charges) = extract_schedules(program, &rounded)?;
            let initial_idle = extract_initial_idle(program, &rounded)?;
            let gap = if search.limit_hit {
                (objective - search.abandoned_bound.min(objective)).max(0.0)
            } else {
                0.0
            };
            Ok(FleetSolution {
                objective,
                fleet_size,
                values: rounded,
                initial_idle,
                flights,
                charges,
                stats: SolverStats {
                    nodes: search.branch_nodes,
                    lp_iterations: search.lp_iterations,
                    wall_time_s,
                    gap,
                    proved_optimal: !search.limit_hit,
                },
            })
        }
        None if search.limit_hit => Err(OptError::NoIncumbent {
            bound: search.abandoned_bound.min(root_bound),
        }),
        None => Err(OptError::IntegerInfeasible { bound: root_bound }),
    }
}

struct Search<'a> {
    program: &'a IntegerProgram,
    /// Warm-started LP solver shared by every node probe.
    engine: LpEngine<'a>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Best integral (objective, LP values) so far.
    incumbent: Option<(f64, Vec<f64>)>,
    /// Least LP bound among subtrees abandoned to limits.
    abandoned_bound: f64,
    branch_nodes: u64,
    lp_iterations: u64,
    limit_hit: bool,
    started: Instant,
    limits: &'a SolveLimits,
}

impl Search<'_> {
    fn out_of_budget(&self) -> bool {
        if let Some(limit) = self.limits.time_limit_s {
            if self.started.elapsed().as_secs_f64() >= limit {
                return true;
            }
        }
        if let Some(limit) = self.limits.node_limit {
            if self.branch_nodes >= limit {
                return true;
            }
        }
        false
    }

    fn prunable(&self, bound: f64) -> bool {
        self.incumbent
            .as_ref()
            .is_some_and(|(best, _)| bound >= best - self.limits.gap - PRUNE_SLACK)
    }

    /// Consumes a node whose LP is already solved (and Optimal).
    fn descend(&mut self, solved: LpSolution) {
        if self.prunable(solved.objective) {
            return;
        }
        let Some((branch_var, value)) = self.pick_branch_variable(&solved.values) else {
            // Integral: new incumbent (pruning already ensured strictly
            // better than anything stored).
            self.incumbent = Some((solved.objective, solved.values));
            return;
        };
        if self.out_of_budget() {
            self.limit_hit = true;
            self.abandoned_bound = self.abandoned_bound.min(solved.objective);
            return;
        }

        let floor = value.floor();
        let saved = (self.lower[branch_var], self.upper[branch_var]);
        let mut children: Vec<(f64, f64, LpSolution)> = Vec::with_capacity(2);
        for (child_lower, child_upper) in [(saved.0, floor), (floor + 1.0, saved.1)] {
            if child_lower > child_upper {
                continue;
            }
            self.lower[branch_var] = child_lower;
            self.upper[branch_var] = child_upper;
            let probe = self.engine.solve(&self.lower, &self.upper);
            self.lp_iterations += probe.iterations;
            self.lower[branch_var] = saved.0;
            self.upper[branch_var] = saved.1;
            if probe.status == LpStatus::Optimal {
                children.push((child_lower, child_upper, probe));
            }
        }
        self.branch_nodes += children.len() as u64;
        // Better LP bound first; equal bounds keep the floor child first.
        children.sort_by(|a, b| a.2.objective.total_cmp(&b.2.objective));
        for (child_lower, child_upper, probe) in children {
            self.lower[branch_var] = child_lower;
            self.upper[branch_var] = child_upper;
            self.descend(probe);
            self.lower[branch_var] = saved.0;
            self.upper[branch_var] = saved.1;
        }
    }

    /// Most fractional variable, fleet members first; None if integral.
    fn pick_branch_variable(&self, values: &[f64]) -> Option<(usize, f64)> {
        let mut best_fleet: Option<(f64, usize)> = None;
        let mut best_any: Option<(f64, usize)> = None;
        for (index, (&value, var)) in
            values.iter().zip(self.program.variables()).enumerate()
        {
            let distance_to_int = (value - value.round()).abs();
            if distance_to_int <= INTEGRALITY_TOL {
                continue;
            }
            // Smaller score = closer to half-integral = more fractional.
            let score = (value - value.floor() - 0.5).abs();
            let slot = if var.fleet_member { &mut best_fleet } else { &mut best_any };
            if slot.map_or(true, |(s, _)| score < s) {
                *slot = Some((score, index));
            }
        }
        best_fleet
            .or(best_any)
            .map(|(_, index)| (index, values[index]))
    }
}

// End-to-end solver behavior is exercised in the parent module's tests
// and the acceptance suite, where full programs are available.
