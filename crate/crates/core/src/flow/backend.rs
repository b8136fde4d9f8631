use std::time::Duration;

use super::{FlowModel, FlowSolution, SolveOptions, SolveStatus};
use crate::error::{Error, Result};

/// A MILP/LP solver able to handle a [`FlowModel`].
pub trait SolverBackend {
    fn name(&self) -> &'static str;

    /// Solves a nonempty model. Integer values may carry solver noise;
    /// [`super::solve`] cleans them up.
    fn solve(&self, model: &FlowModel, relaxed: bool, options: &SolveOptions) -> Result<FlowSolution>;
}

#[cfg(feature = "highs")]
pub const DEFAULT_BACKEND: &str = "highs";
#[cfg(not(feature = "highs"))]
pub const DEFAULT_BACKEND: &str = "microlp";

pub fn available_backends() -> Vec<&'static str> {
    let mut v = Vec::new();
    if cfg!(feature = "highs") {
        v.push("highs");
    }
    v.push("microlp");
    v
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn SolverBackend>> {
    match name {
        #[cfg(feature = "highs")]
        "highs" => Ok(Box::new(HighsBackend)),
        "microlp" => Ok(Box::new(MicroLpBackend)),
        other => Err(Error::Solver {
            backend: other.to_string(),
            message: format!("unknown backend; available: {}", available_backends().join(", ")),
        }),
    }
}

#[cfg(feature = "highs")]
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsBackend;

#[cfg(feature = "highs")]
impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &FlowModel, relaxed: bool, options: &SolveOptions) -> Result<FlowSolution> {
        use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense};

        let fail = |message: String| Error::Solver {
            backend: "highs".into(),
            message,
        };
        let mut pb = RowProblem::default();
        let cols: Vec<highs::Col> = model
            .columns
            .iter()
            .map(|c| {
                if relaxed {
                    pb.add_column(c.cost, 0.0..=c.upper)
                } else {
                    pb.add_integer_column(c.cost, 0.0..=c.upper)
                }
            })
            .collect();
        for row in &model.rows {
            let factors: Vec<(highs::Col, f64)> = row.entries.iter().map(|(c, a)| (cols[*c], *a)).collect();
            pb.add_row(row.rhs..=row.rhs, &factors);
        }
        let mut m = pb.try_optimise(Sense::Minimise).map_err(|s| fail(format!("{s:?}")))?;
        m.make_quiet();
        m.set_option("threads", 1);
        m.set_option("random_seed", (options.seed % i32::MAX as u64) as i32);
        m.set_option("mip_abs_gap", options.gap.absolute);
        m.set_option("mip_rel_gap", options.gap.relative);
        if let Some(t) = options.time_limit {
            m.set_option("time_limit", t.max(1e-3));
        }
        let solved = m.try_solve().map_err(|s| fail(format!("{s:?}")))?;
        let status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let values = if has_primal {
            solved.get_solution().columns().to_vec()
        } else {
            Vec::new()
        };
        let objective = has_primal.then(|| solved.objective_value());
        let dual_bound = if relaxed {
            objective
        } else {
            solved
                .double_info_value(c"mip_dual_bound")
                .ok()
                .filter(|b| b.is_finite())
                .or(objective)
        };
        match status {
            HighsModelStatus::Optimal => Ok(FlowSolution {
                status: SolveStatus::Optimal,
                objective,
                bound: dual_bound,
                values,
                relaxed,
            }),
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                Ok(FlowSolution::infeasible(relaxed))
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt => Ok(FlowSolution {
                status: SolveStatus::TimeLimit,
                objective,
                bound: if relaxed { None } else { dual_bound.filter(|_| has_primal) },
                values,
                relaxed,
            }),
            other => Err(fail(format!("unexpected model status {other:?}"))),
        }
    }
}

/// Pure-Rust backend; slower but free of native dependencies.
#[derive(Clone, Copy, Debug, Default)]
pub struct MicroLpBackend;

impl SolverBackend for MicroLpBackend {
    fn name(&self) -> &'static str {
        "microlp"
    }

    fn solve(&self, model: &FlowModel, relaxed: bool, options: &SolveOptions) -> Result<FlowSolution> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus, TerminationReason};

        let mut pb = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<microlp::Variable> = model
            .columns
            .iter()
            .map(|c| {
                if relaxed {
                    pb.add_var(c.cost, (0.0, c.upper))
                } else if c.binary {
                    pb.add_binary_var(c.cost)
                } else {
                    pb.add_integer_var(c.cost, (0, c.upper as i32))
                }
            })
            .collect();
        for row in &model.rows {
            let expr: Vec<(microlp::Variable, f64)> = row.entries.iter().map(|(c, a)| (vars[*c], *a)).collect();
            pb.add_constraint(expr, ComparisonOp::Eq, row.rhs);
        }
        let mut opts = microlp::SolveOptions::default();
        opts.time_limit = options.time_limit.map(|t| Duration::from_secs_f64(t.max(1e-3)));
        opts.mip_gap = options.gap.relative;
        match pb.solve_with(opts) {
            Ok(microlp::SolveOutcome::Solution(sol)) => {
                let values: Vec<f64> = vars.iter().map(|v| sol.var_value_raw(*v)).collect();
                let optimal = sol.status() == SolutionStatus::Optimal
                    || sol.termination_reason() == TerminationReason::MipGap;
                let objective = sol.objective();
                let bound = if sol.status() == SolutionStatus::Optimal {
                    Some(objective)
                } else {
                    sol.stats().best_bound
                };
                Ok(FlowSolution {
                    status: if optimal { SolveStatus::Optimal } else { SolveStatus::TimeLimit },
                    objective: Some(objective),
                    bound,
                    values,
                    relaxed,
                })
            }
            Ok(microlp::SolveOutcome::Interrupted(_)) => Ok(FlowSolution {
                status: SolveStatus::TimeLimit,
                objective: None,
                bound: None,
                values: Vec::new(),
                relaxed,
            }),
            Err(microlp::Error::Infeasible) => Ok(FlowSolution::infeasible(relaxed)),
            Err(e) => Err(Error::Solver {
                backend: "microlp".into(),
                message: e.to_string(),
            }),
        }
    }
}
