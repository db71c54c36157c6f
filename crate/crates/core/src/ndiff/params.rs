//! Named parameter groups, Adam, and the L2 penalty.
//!
//! Freezing is a property of a group: a frozen group (or one whose learning
//! rate multiplier is zero) still receives gradients from the tape but
//! [`adam_step`] leaves both its tensors and its moment estimates untouched.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub group: usize,
    pub tensor: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    fn for_params(params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGroup {
    pub name: String,
    pub params: Vec<Param>,
    pub frozen: bool,
    pub lr_multiplier: f64,
    pub adam: AdamState,
}

impl ParameterGroup {
    pub fn new(name: impl Into<String>, params: Vec<Param>) -> Self {
        let adam = AdamState::for_params(&params);
        Self {
            name: name.into(),
            params,
            frozen: false,
            lr_multiplier: 1.0,
            adam,
        }
    }

    /// True when no optimizer step can change this group.
    pub fn is_static(&self) -> bool {
        self.frozen || self.lr_multiplier == 0.0
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    groups: Vec<ParameterGroup>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_group(&mut self, group: ParameterGroup) -> Result<usize> {
        if self.group_id(&group.name).is_some() {
            return Err(Error::Config(format!("duplicate parameter group '{}'", group.name)));
        }
        self.groups.push(group);
        Ok(self.groups.len() - 1)
    }

    pub fn groups(&self) -> &[ParameterGroup] {
        &self.groups
    }

    pub fn group_id(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn group(&self, name: &str) -> Option<&ParameterGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_at(&self, id: usize) -> &ParameterGroup {
        &self.groups[id]
    }

    fn named_group_mut(&mut self, name: &str) -> Result<&mut ParameterGroup> {
        self.groups
            .iter_mut()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Config(format!("no parameter group named '{name}'")))
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        self.named_group_mut(name)?.frozen = frozen;
        Ok(())
    }

    pub fn set_lr_multiplier(&mut self, name: &str, multiplier: f64) -> Result<()> {
        if !(multiplier >= 0.0 && multiplier.is_finite()) {
            return Err(Error::Config(format!("learning-rate multiplier for '{name}' must be finite and >= 0")));
        }
        self.named_group_mut(name)?.lr_multiplier = multiplier;
        Ok(())
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.groups[id.group].params[id.tensor].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.groups[id.group].params[id.tensor].value
    }

    /// Every parameter id, in group then tensor order.
    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| (0..group.params.len()).map(move |t| ParamId { group: g, tensor: t }))
    }

    pub fn num_scalars(&self) -> usize {
        self.groups.iter().map(ParameterGroup::num_scalars).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            groups: self
                .groups
                .iter()
                .map(|g| g.params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect())
                .collect(),
        }
    }

    /// Row-major little-endian payload of every tensor, in group order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_scalars() * 8);
        for group in &self.groups {
            for p in &group.params {
                for x in p.value.data() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }
}

/// Gradients laid out exactly like a [`ParameterStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    groups: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.groups[id.group][id.tensor]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.groups[id.group][id.tensor]
    }

    pub fn group(&self, group: usize) -> &[Tensor] {
        &self.groups[group]
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.groups.iter_mut().flatten() {
            for x in t.data_mut() {
                *x *= factor;
            }
        }
    }

    fn check_layout(&self, store: &ParameterStore) -> Result<()> {
        let ok = self.groups.len() == store.groups.len()
            && self.groups.iter().zip(&store.groups).all(|(g, sg)| {
                g.len() == sg.params.len() && g.iter().zip(&sg.params).all(|(t, p)| t.shape() == p.value.shape())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("gradient layout does not match the parameter store".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step at `base_lr * lr_multiplier` per group.
pub fn adam_step(store: &mut ParameterStore, grads: &Gradients, base_lr: f64, adam: &Adam) -> Result<()> {
    grads.check_layout(store)?;
    for (group, group_grads) in store.groups.iter_mut().zip(&grads.groups) {
        if group.is_static() {
            continue;
        }
        let lr = base_lr * group.lr_multiplier;
        let state = &mut group.adam;
        state.step += 1;
        let t = state.step as i32;
        let bias1 = 1.0 - adam.beta1.powi(t);
        let bias2 = 1.0 - adam.beta2.powi(t);
        for (i, g) in group_grads.iter().enumerate() {
            let theta = group.params[i].value.data_mut();
            let m = state.first_moment[i].data_mut();
            let v = state.second_moment[i].data_mut();
            for j in 0..theta.len() {
                let gj = g.data()[j];
                m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * gj;
                v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * gj * gj;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                theta[j] -= lr * m_hat / (v_hat.sqrt() + adam.eps);
            }
        }
    }
    Ok(())
}

/// `lambda * ||theta||^2` over one group, with its gradient `2 * lambda * theta`.
pub fn l2_penalty(group: &ParameterGroup, lambda: f64) -> Result<(f64, Vec<Tensor>)> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!("L2 coefficient must be non-negative, got {lambda}")));
    }
    let loss = lambda * group.params.iter().map(|p| p.value.sum_squares()).sum::<f64>();
    let grads = group.params.iter().map(|p| p.value.map(|x| 2.0 * lambda * x)).collect();
    Ok((loss, grads))
}

/// Adds the L2 term for `group` into `grads` and returns the loss contribution.
pub fn accumulate_l2(store: &ParameterStore, group: usize, lambda: f64, grads: &mut Gradients) -> Result<f64> {
    let (loss, penalty) = l2_penalty(&store.groups[group], lambda)?;
    for (g, p) in grads.groups[group].iter_mut().zip(&penalty) {
        g.add_assign(p);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> ParameterStore {
        let mut store = ParameterStore::new();
        store
            .add_group(ParameterGroup::new(
                "g",
                vec![Param::new("w", Tensor::row_vector(values.to_vec()))],
            ))
            .unwrap();
        store
    }

    fn grads_with(store: &ParameterStore, values: &[f64]) -> Gradients {
        let mut grads = store.zero_grads();
        grads.get_mut(ParamId { group: 0, tensor: 0 }).data_mut().copy_from_slice(values);
        grads
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut store = store_with(&[1.0]);
        let grads = grads_with(&store, &[0.2]);
        adam_step(&mut store, &grads, 3e-4, &Adam::default()).unwrap();
        let after = store.get(ParamId { group: 0, tensor: 0 }).data()[0];
        assert!((after - (1.0 - 3e-4)).abs() < 1e-10, "{after}");
        assert_eq!(store.group_at(0).adam.step, 1);
    }

    #[test]
    fn frozen_and_zero_lr_groups_do_not_move() {
        for freeze in [true, false] {
            let mut store = store_with(&[0.3, -1.7]);
            if freeze {
                store.set_frozen("g", true).unwrap();
            } else {
                store.set_lr_multiplier("g", 0.0).unwrap();
            }
            let before = store.clone();
            let grads = grads_with(&store, &[5.0, -2.0]);
            for _ in 0..5 {
                adam_step(&mut store, &grads, 1e-2, &Adam::default()).unwrap();
            }
            assert_eq!(store, before);
        }
    }

    #[test]
    fn lr_multiplier_scales_the_step() {
        let mut store = store_with(&[0.0]);
        store.set_lr_multiplier("g", 0.5).unwrap();
        let grads = grads_with(&store, &[-1.0]);
        adam_step(&mut store, &grads, 1e-3, &Adam::default()).unwrap();
        assert!((store.get(ParamId { group: 0, tensor: 0 }).data()[0] - 5e-4).abs() < 1e-10);
        assert!(store.set_lr_multiplier("g", -1.0).is_err());
    }

    #[test]
    fn adam_rejects_mismatched_grads() {
        let mut store = store_with(&[0.0, 0.0]);
        let other = store_with(&[0.0]);
        assert!(adam_step(&mut store, &other.zero_grads(), 1e-3, &Adam::default()).is_err());
    }

    #[test]
    fn duplicate_group_names_rejected() {
        let mut store = store_with(&[0.0]);
        assert!(store.add_group(ParameterGroup::new("g", vec![])).is_err());
    }

    #[test]
    fn l2_values() {
        let store = store_with(&[3.0, 4.0]);
        let (loss, grad) = l2_penalty(store.group_at(0), 1.0).unwrap();
        assert_eq!(loss, 25.0);
        assert_eq!(grad[0].data(), &[6.0, 8.0]);

        let (loss, grad) = l2_penalty(store.group_at(0), 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad[0].data().iter().all(|&g| g == 0.0));

        let zero = store_with(&[0.0; 4]);
        assert_eq!(l2_penalty(zero.group_at(0), 5e-4).unwrap().0, 0.0);
        assert!(matches!(l2_penalty(store.group_at(0), -1.0), Err(Error::Config(_))));
    }
}
