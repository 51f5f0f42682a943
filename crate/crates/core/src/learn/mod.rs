//! Approximate controllers: trained ReLU networks, polynomial and refitted
//! PWA baselines, and the projection that restores input feasibility.

mod mlp;
mod polynomial;
mod refit;

pub use mlp::{adam_update, init_network, loss_and_gradient, mse, train_mlp, AdamParams, AdamState, TrainConfig, TrainResult};
pub use polynomial::{fit_polynomial, memory_footprint_poly, monomials, n_monomials, poly_eval, Polynomial};
pub use refit::{fit_pwa_gains, project_feasible, project_qp, pwa_fit_objective};

use crate::dynamics::{Controller, LtiSystem};
use crate::error::Result;
use crate::numerics::Vector;
use crate::polytope::Polytope;
use crate::pwa::{eval_pwa, PwaFunction};
use crate::relunet::{ExactRepresentation, ReluNetwork};

impl Controller for ReluNetwork {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        self.eval(x)
    }
}

impl Controller for Polynomial {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        self.eval(x)
    }
}

impl Controller for PwaFunction {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        eval_pwa(self, x)
    }
}

impl Controller for ExactRepresentation {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        self.eval(x)
    }
}

/// Wraps a controller so that every input is projected onto `U` (and onto
/// the one-step preimage of `cinv` when given).
pub struct Projected<'a, C: ?Sized> {
    pub inner: &'a C,
    pub system: &'a LtiSystem,
    pub input_set: &'a Polytope,
    pub cinv: Option<&'a Polytope>,
}

impl<'a, C: Controller + ?Sized> Projected<'a, C> {
    pub fn new(inner: &'a C, system: &'a LtiSystem, input_set: &'a Polytope) -> Self {
        Self { inner, system, input_set, cinv: None }
    }
}

impl<C: Controller + ?Sized> Controller for Projected<'_, C> {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        let raw = self.inner.control(x)?;
        project_feasible(&raw, x, self.system, self.input_set, self.cinv)
    }
}
