//! Reverse-mode gradients through a small convolution stack, checked
//! against finite differences, then a few Adam steps.

use sxf::tensor::{adam_step, gradcheck, AdamState, Tensor};

fn model(x: &[Tensor]) -> sxf::tensor::Result<Tensor> {
    let (input, weight, bias) = (&x[0], &x[1], &x[2]);
    let y = input.conv2d(weight, bias, 1, 1)?.leaky_relu();
    let (max, _) = y.channel_max()?;
    Ok(max.upsample_bilinear2x()?.mean_abs(None)?)
}

fn main() -> sxf::tensor::Result<()> {
    let input: Vec<f32> = (0..2 * 6 * 6).map(|i| ((i * 37 % 23) as f32 / 23.0) - 0.4).collect();
    let weight: Vec<f32> = (0..3 * 2 * 9).map(|i| ((i * 11 % 17) as f32 / 17.0) - 0.5).collect();
    let bias = vec![0.1, -0.2, 0.05];
    let inputs = vec![(vec![1, 2, 6, 6], input), (vec![3, 2, 3, 3], weight), (vec![3], bias)];

    let report = gradcheck(model, &inputs, 1e-3)?;
    println!("max relative error {:.2e} (kinks skipped: {})", report.max_rel_error, report.kink_count());

    // fit the weights to shrink the output
    let mut params: Vec<Vec<f32>> = inputs[1..].iter().map(|(_, v)| v.clone()).collect();
    let mut adam = AdamState::new(params.iter().map(Vec::len), 1e-2);
    let x = Tensor::from_vec(&inputs[0].0, inputs[0].1.clone())?;
    for step in 0..=50 {
        let w = Tensor::parameter(&[3, 2, 3, 3], params[0].clone())?;
        let b = Tensor::parameter(&[3], params[1].clone())?;
        let loss = model(&[x.clone(), w.clone(), b.clone()])?;
        if step % 10 == 0 {
            println!("step {step:2}: loss {:.5}", loss.item());
        }
        loss.backward()?;
        adam_step(&mut params, &[w.grad(), b.grad()], &mut adam)?;
    }
    Ok(())
}
