use rand::Rng;

/// Fully connected layer, weights stored `[inputs][outputs]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// He-uniform weights, small uniform biases.
    pub(crate) fn random(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / inputs.max(1) as f32).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        let bias = (0..outputs).map(|_| rng.random_range(-0.05f32..0.05)).collect();
        Self { inputs, outputs, weight, bias }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `rows × inputs` → `rows × outputs`, optionally rectified.
    pub fn forward(&self, x: &[f32], rows: usize, relu: bool) -> Vec<f32> {
        debug_assert_eq!(x.len(), rows * self.inputs);
        let mut out = Vec::with_capacity(rows * self.outputs);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        if rows > 0 && self.inputs > 0 {
            // SAFETY: slices hold rows×inputs, inputs×outputs and rows×outputs
            // elements with the row-major strides passed here.
            unsafe {
                matrixmultiply::sgemm(
                    rows,
                    self.inputs,
                    self.outputs,
                    1.0,
                    x.as_ptr(),
                    self.inputs as isize,
                    1,
                    self.weight.as_ptr(),
                    self.outputs as isize,
                    1,
                    1.0,
                    out.as_mut_ptr(),
                    self.outputs as isize,
                    1,
                );
            }
        }
        if relu {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        out
    }
}

/// `a (m×k) · b (k×n)` into `c (m×n)`, all row-major.
pub(crate) fn matmul(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds checked above; strides describe contiguous row-major storage.
    unsafe {
        matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_naive_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let layer = Dense::random(7, 5, &mut rng);
        let x: Vec<f32> = (0..21).map(|i| (i as f32 * 0.37).sin()).collect();
        let y = layer.forward(&x, 3, true);
        for r in 0..3 {
            for o in 0..5 {
                let mut acc = layer.bias[o];
                for i in 0..7 {
                    acc += x[r * 7 + i] * layer.weight[i * 5 + o];
                }
                assert!((y[r * 5 + o] - acc.max(0.0)).abs() < 1e-5);
            }
        }
        assert_eq!(layer.param_count(), 40);
    }
}
