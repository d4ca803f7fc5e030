//! Independent oracles shared by the integration suites: central finite
//! differences, direct-loop convolutions and a power-iteration norm
//! estimate. None of them touch the autodiff or convolution kernels under
//! test.

#![allow(dead_code)]

use alphagan_core::random::SeedStream;
use alphagan_core::{grad, Result, Tensor, Var};

pub fn randn(shape: &[usize], stream: &mut SeedStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| stream.normal())
}

/// Normal draws pushed at least `margin` away from zero, for ops with a kink
/// at the origin.
pub fn randn_away(shape: &[usize], margin: f64, stream: &mut SeedStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v = stream.normal();
        if v.abs() < margin {
            margin.copysign(v) + v
        } else {
            v
        }
    })
}

pub fn positive(shape: &[usize], stream: &mut SeedStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| 0.5 + 1.5 * stream.uniform())
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Central-difference gradient of a scalar function of several tensors.
pub fn numeric_gradient(inputs: &[Tensor<f64>], h: f64, f: &dyn Fn(&[Tensor<f64>]) -> f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].numel()];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = f(&work);
            work[i].data_mut()[j] = orig - h;
            let down = f(&work);
            work[i].data_mut()[j] = orig;
            *gj = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Largest relative error between the reverse-mode gradient of
/// `sum(f(inputs) * probe)` and its central finite difference, with a fixed
/// random probe so the cotangent is not uniform.
pub fn gradient_check(
    inputs: &[Tensor<f64>],
    h: f64,
    seed: u64,
    f: &dyn Fn(&[Var<f64>]) -> Result<Var<f64>>,
) -> Result<f64> {
    let leaves: Vec<Var<f64>> = inputs.iter().cloned().map(Var::leaf).collect();
    let out = f(&leaves)?;
    let mut s = SeedStream::new(seed ^ 0x9e37_79b9);
    let probe = Var::constant(randn(out.shape(), &mut s));
    let root = out.mul(&probe)?.sum()?;
    let refs: Vec<&Var<f64>> = leaves.iter().collect();
    let analytic = grad(&root, &refs, false)?;
    let scalar = |xs: &[Tensor<f64>]| -> f64 {
        let vars: Vec<Var<f64>> = xs.iter().cloned().map(Var::constant).collect();
        let out = f(&vars).expect("forward is valid at perturbed points");
        out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };
    let numeric = numeric_gradient(inputs, h, &scalar);
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a.data(), n))
        .fold(0.0, f64::max))
}

/// Direct seven-loop cross-correlation with zero padding.
pub fn naive_conv3d(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, cin, cout, k) = (xs[0], xs[1], ws[0], ws[2]);
    let ext: Vec<usize> = (0..3).map(|a| (xs[2 + a] + 2 * pad - k) / stride + 1).collect();
    let xi = |b: usize, c: usize, d: isize, h: isize, ww: isize| -> f64 {
        if d < 0 || h < 0 || ww < 0 || d as usize >= xs[2] || h as usize >= xs[3] || ww as usize >= xs[4] {
            return 0.0;
        }
        x.data()[(((b * cin + c) * xs[2] + d as usize) * xs[3] + h as usize) * xs[4] + ww as usize]
    };
    let mut y = vec![0.0; n * cout * ext.iter().product::<usize>()];
    let mut idx = 0;
    for b in 0..n {
        for o in 0..cout {
            for od in 0..ext[0] {
                for oh in 0..ext[1] {
                    for ow in 0..ext[2] {
                        let mut acc = 0.0;
                        for c in 0..cin {
                            for kd in 0..k {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let d = (od * stride + kd) as isize - pad as isize;
                                        let h = (oh * stride + kh) as isize - pad as isize;
                                        let wq = (ow * stride + kw) as isize - pad as isize;
                                        acc += w.data()[(((o * cin + c) * k + kd) * k + kh) * k + kw] * xi(b, c, d, h, wq);
                                    }
                                }
                            }
                        }
                        y[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
    }
    (vec![n, cout, ext[0], ext[1], ext[2]], y)
}

/// Direct scatter form of the transposed convolution, weight `[Cin, Cout, k, k, k]`.
pub fn naive_conv_transpose3d(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, cin, cout, k) = (xs[0], xs[1], ws[1], ws[2]);
    let ext: Vec<usize> = (0..3).map(|a| (xs[2 + a] - 1) * stride + k - 2 * pad).collect();
    let mut y = vec![0.0; n * cout * ext.iter().product::<usize>()];
    for b in 0..n {
        for c in 0..cin {
            for id in 0..xs[2] {
                for ih in 0..xs[3] {
                    for iw in 0..xs[4] {
                        let v = x.data()[(((b * cin + c) * xs[2] + id) * xs[3] + ih) * xs[4] + iw];
                        for o in 0..cout {
                            for kd in 0..k {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let d = (id * stride + kd) as isize - pad as isize;
                                        let h = (ih * stride + kh) as isize - pad as isize;
                                        let q = (iw * stride + kw) as isize - pad as isize;
                                        if d < 0 || h < 0 || q < 0 {
                                            continue;
                                        }
                                        let (d, h, q) = (d as usize, h as usize, q as usize);
                                        if d >= ext[0] || h >= ext[1] || q >= ext[2] {
                                            continue;
                                        }
                                        let wv = w.data()[(((c * cout + o) * k + kd) * k + kh) * k + kw];
                                        y[(((b * cout + o) * ext[0] + d) * ext[1] + h) * ext[2] + q] += wv * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (vec![n, cout, ext[0], ext[1], ext[2]], y)
}

/// Largest singular value of a row-major `rows x cols` matrix by power
/// iteration on `WᵀW`, started from a fixed dense vector.
pub fn largest_singular_value(w: &[f64], rows: usize, cols: usize, iterations: usize) -> f64 {
    let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
    let mut sigma = 0.0;
    for _ in 0..iterations {
        let u: Vec<f64> = (0..rows)
            .map(|r| (0..cols).map(|c| w[r * cols + c] * v[c]).sum())
            .collect();
        let next: Vec<f64> = (0..cols)
            .map(|c| (0..rows).map(|r| w[r * cols + c] * u[r]).sum())
            .collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        sigma = norm.sqrt();
        v = next.into_iter().map(|x| x / norm).collect();
    }
    sigma
}
