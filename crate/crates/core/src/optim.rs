//! Adam with coupled L2 weight decay and independent hyperparameters for the
//! selection scores (`sca`), the first layer (`fc1`) and the second layer
//! (`fc2`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FsgnnParams, Grads, ParamGroup};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupHyper {
    pub lr: f64,
    /// L2 coefficient added to the gradient.
    pub wd: f64,
}

impl GroupHyper {
    pub fn new(lr: f64, wd: f64) -> Self {
        Self { lr, wd }
    }

    /// Accepts `lr = 0` (a frozen group) in addition to positive rates.
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!(
                "{name}: learning rate {} is invalid",
                self.lr
            )));
        }
        if !(self.wd.is_finite() && self.wd >= 0.0) {
            return Err(Error::Config(format!(
                "{name}: weight decay {} is invalid",
                self.wd
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupHypers {
    pub sca: GroupHyper,
    pub fc1: GroupHyper,
    pub fc2: GroupHyper,
}

impl GroupHypers {
    pub fn get(&self, group: ParamGroup) -> GroupHyper {
        match group {
            ParamGroup::Sca => self.sca,
            ParamGroup::Fc1 => self.fc1,
            ParamGroup::Fc2 => self.fc2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sca.validate("sca")?;
        self.fc1.validate("fc1")?;
        self.fc2.validate("fc2")
    }
}

/// First and second moments for every tensor, in [`FsgnnParams::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &FsgnnParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update of `params` in place.
///
/// Fails without touching anything if a gradient is non-finite or the shapes
/// disagree with the state.
pub fn adam_step(
    params: &mut FsgnnParams,
    grads: &Grads,
    hypers: &GroupHypers,
    state: &mut AdamState,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let shapes_match = grad_tensors.len() == state.m.len()
        && grad_tensors
            .iter()
            .zip(&state.m)
            .all(|((_, g), m)| g.len() == m.len());
    if !shapes_match {
        return Err(Error::DimensionMismatch(
            "gradients do not match optimizer state".into(),
        ));
    }
    for (k, (group, g)) in grad_tensors.iter().enumerate() {
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {group:?} tensor #{k} is {} at element {pos}",
                g[pos]
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    for (k, ((group, theta), (_, g))) in params
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .enumerate()
    {
        let GroupHyper { lr, wd } = hypers.get(group);
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..theta.len() {
            let gi = g[i] + wd * theta[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
