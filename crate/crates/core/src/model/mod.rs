//! Domain types shared by both samplers.

mod dataset;
pub mod prior;
mod state;
mod stick;

pub use dataset::{design_dot, Dataset};
pub use prior::{
    draw_from_base_measure, BaseMeasure, Hyperparameters, PsiAtom, ThetaAtom, Truncation,
};
pub use state::{occupancy_counts, GibbsState};
pub use stick::{stick_break, StickWeights, PROB_TOL};

pub(crate) use stick::beta_dist;
