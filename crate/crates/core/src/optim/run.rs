use super::{OptimizerState, StepReport, Stepper};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// A non-finite iterate was produced by iteration `k`.
    Diverged {
        k: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `x_1, x_2, …` up to the last state reached.
    pub iterates: Vec<Point>,
    pub final_state: OptimizerState,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged { .. })
    }

    pub fn into_result(self) -> Result<Self> {
        match self.outcome {
            Outcome::Diverged { k } => Err(Error::Diverged { k }),
            Outcome::Completed => Ok(self),
        }
    }
}

/// Runs `max_iter` iterations from `initial`, calling `recorder` with the
/// state before, the report, and the state after each step.
///
/// Stops early at the first non-finite iterate; the recorder still sees that
/// step.
pub fn run<R>(
    stepper: &Stepper,
    initial: OptimizerState,
    max_iter: usize,
    mut recorder: R,
) -> Result<Trajectory>
where
    R: FnMut(&OptimizerState, &StepReport, &OptimizerState),
{
    let mut iterates = Vec::with_capacity(max_iter + 1);
    iterates.push(initial.x_curr.clone());
    let mut state = initial;
    for _ in 0..max_iter {
        let (next, report) = stepper.step(&state)?;
        recorder(&state, &report, &next);
        iterates.push(next.x_curr.clone());
        let finite = next.is_finite();
        state = next;
        if !finite {
            return Ok(Trajectory {
                iterates,
                final_state: state,
                outcome: Outcome::Diverged { k: report.k },
            });
        }
    }
    Ok(Trajectory {
        iterates,
        final_state: state,
        outcome: Outcome::Completed,
    })
}
