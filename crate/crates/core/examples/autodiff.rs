//! Reverse-mode gradients on the tape, checked against finite differences.

use promptcap::numerics::{finite_diff_check, Tape, Tensor};

fn main() -> promptcap::Result<()> {
    let w = Tensor::new(&[3, 2], vec![0.5, -1.0, 0.25, 2.0, -0.75, 1.5])?;
    let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0])?;

    let mut tape = Tape::new();
    let wv = tape.leaf(w.clone());
    let xv = tape.constant(x.clone());
    let h = tape.matmul(xv, wv)?;
    let h = tape.gelu(h)?;
    let loss = tape.cross_entropy(h, &[1, 0], &[true, true])?;
    println!("loss = {:.6}", tape.value(loss).item());
    let grads = tape.backward(loss)?;
    println!("dL/dW = {:?}", grads.get(wv).unwrap());

    let err = finite_diff_check(
        |tape: &mut Tape<'_>, w| {
            let xv = tape.constant(x.clone());
            let h = tape.matmul(xv, w)?;
            let h = tape.gelu(h)?;
            tape.cross_entropy(h, &[1, 0], &[true, true])
        },
        &w,
        1e-5,
    )?;
    println!("max relative error vs central differences: {err:.2e}");
    Ok(())
}
