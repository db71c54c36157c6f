//! Dense and GRU layers recorded on a [`Tape`].
//!
//! Layer parameters live in one [`ParameterGroup`](super::ParameterGroup)
//! per function. An MLP group holds `w0, b0, w1, b1, ...` with weights stored
//! out×in; a GRU group holds the nine tensors listed in [`GRU_TENSORS`].

use rand::Rng;

use super::{orthogonal_init, Param, ParamId, ParameterStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Orthogonal weights (gain 1) and zero biases for a tanh MLP with the given layer widths.
pub fn mlp_params<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Vec<Param>> {
    if widths.len() < 2 {
        return Err(Error::Config("an MLP needs at least input and output widths".into()));
    }
    let mut params = Vec::with_capacity(2 * (widths.len() - 1));
    for (l, pair) in widths.windows(2).enumerate() {
        params.push(Param::new(format!("w{l}"), orthogonal_init(pair[1], pair[0], 1.0, rng)?));
        params.push(Param::new(format!("b{l}"), Tensor::zeros(1, pair[1])));
    }
    Ok(params)
}

/// Affine layers with tanh between them and a linear output.
pub fn mlp(tape: &mut Tape<'_>, group: usize, x: Var) -> Result<Var> {
    let n_params = tape.store().group_at(group).params.len();
    if n_params == 0 || !n_params.is_multiple_of(2) {
        return Err(Error::Shape(format!("group {group} is not an MLP ({n_params} tensors)")));
    }
    let layers = n_params / 2;
    let mut h = x;
    for l in 0..layers {
        let w = ParamId { group, tensor: 2 * l };
        let b = ParamId { group, tensor: 2 * l + 1 };
        h = tape.linear(h, w, Some(b))?;
        if l + 1 < layers {
            h = tape.tanh(h);
        }
    }
    Ok(h)
}

pub fn mlp_apply(store: &ParameterStore, group: usize, x: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new(store);
    let input = tape.input(Tensor::row_vector(x.to_vec()));
    let out = mlp(&mut tape, group, input)?;
    Ok(tape.value(out).data().to_vec())
}

pub const GRU_TENSORS: [&str; 9] = ["w_r", "u_r", "b_r", "w_z", "u_z", "b_z", "w_h", "u_h", "b_h"];

pub fn gru_params<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Vec<Param>> {
    let mut params = Vec::with_capacity(9);
    for gate in ["r", "z", "h"] {
        params.push(Param::new(format!("w_{gate}"), orthogonal_init(hidden, input, 1.0, rng)?));
        params.push(Param::new(format!("u_{gate}"), orthogonal_init(hidden, hidden, 1.0, rng)?));
        params.push(Param::new(format!("b_{gate}"), Tensor::zeros(1, hidden)));
    }
    Ok(params)
}

/// `h' = (1 - z) ⊙ h + z ⊙ ĥ` with reset gate r applied inside the candidate.
pub fn gru(tape: &mut Tape<'_>, group: usize, h: Var, m: Var) -> Result<Var> {
    if tape.store().group_at(group).params.len() != GRU_TENSORS.len() {
        return Err(Error::Shape(format!("group {group} is not a GRU cell")));
    }
    let p = |tensor| ParamId { group, tensor };

    let gate = |tape: &mut Tape<'_>, base: usize, h_in: Var| -> Result<Var> {
        let a = tape.linear(m, p(base), Some(p(base + 2)))?;
        let b = tape.linear(h_in, p(base + 1), None)?;
        tape.add(a, b)
    };
    let r_pre = gate(tape, 0, h)?;
    let r = tape.sigmoid(r_pre);
    let z_pre = gate(tape, 3, h)?;
    let z = tape.sigmoid(z_pre);
    let rh = tape.mul(r, h)?;
    let cand_pre = gate(tape, 6, rh)?;
    let cand = tape.tanh(cand_pre);
    let delta = tape.sub(cand, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}

pub fn gru_cell(store: &ParameterStore, group: usize, h: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new(store);
    let hv = tape.input(Tensor::row_vector(h.to_vec()));
    let mv = tape.input(Tensor::row_vector(m.to_vec()));
    let out = gru(&mut tape, group, hv, mv)?;
    Ok(tape.value(out).data().to_vec())
}
