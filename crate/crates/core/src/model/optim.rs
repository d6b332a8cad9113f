use crate::error::{dim_err, Result};
use crate::numeric::Matrix;

/// Heavy-ball SGD: `b ← μ·b + g`, `θ ← θ − lr·b`. Frozen slots are left
/// alone, buffer included.
pub fn sgd_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    buffers: &mut [Matrix],
    frozen: &[bool],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != buffers.len() || params.len() != frozen.len() {
        return dim_err("optimizer slots disagree in count");
    }
    for i in 0..params.len() {
        if params[i].shape() != grads[i].shape() || params[i].shape() != buffers[i].shape() {
            return dim_err(format!("slot {i}: gradient {:?} for parameter {:?}", grads[i].shape(), params[i].shape()));
        }
    }
    for (((p, g), b), &frozen) in params.iter_mut().zip(grads).zip(buffers.iter_mut()).zip(frozen) {
        if frozen {
            continue;
        }
        for ((x, &gi), bi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(b.as_mut_slice()) {
            *bi = momentum * *bi + gi;
            *x -= lr * *bi;
        }
    }
    Ok(())
}
