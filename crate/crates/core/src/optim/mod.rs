//! Parameter schedules, the inertial steppers and the iteration driver.
//!
//! All four methods share the extrapolation
//! `y_k = x_k + α_k(x_k − x_{k−1}) − c_k g_k + c'_k g'_k` followed by a
//! gradient step at `y_k`; they differ in where `g_k`, `g'_k` come from and in
//! the coefficients:
//!
//! | method  | `c_k`     | `c'_k`                             | gradients            |
//! |---------|-----------|------------------------------------|----------------------|
//! | I-IGAHD | `β_k√s_k` | `β_{k−1}√s_{k−1}(1 − 1/k)`         | exact + injected     |
//! | S-IGAHD | `β_k√s_k` | `β_k√s_{k−1}(1 − 1/k)`             | three minibatches    |
//! | FISTA   | 0         | 0                                  | either               |
//!
//! The heavy-ball baseline uses a constant damping instead.

mod injector;
mod run;
mod schedule;
mod state;
mod steppers;

pub use injector::{ErrorInjector, FnInjector, PowerLawErrors, ZeroErrors};
pub use run::{run, Outcome, Trajectory};
pub use schedule::{BatchRule, BatchRules, Mode, ScheduleSet, StepRule};
pub use state::OptimizerState;
pub use steppers::{
    fista_step, hbf_step, igahd_step, sigahd_step, GradientSource, Method, StepErrors, StepReport,
    Stepper,
};
