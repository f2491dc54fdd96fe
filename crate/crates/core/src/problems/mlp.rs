use rand::Rng;
use rand_distr::StandardNormal;

use super::{quadratic::gaussian, rng, Objective};
use crate::error::Result;
use crate::param::{Matrix, ParamSet, ShapeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
}

impl MlpShape {
    /// Layers `W1 (h x d)`, `b1 (h x 1)`, `W2 (1 x h)`, `b2 (1 x 1)`.
    pub fn shapes(&self) -> ShapeSpec {
        ShapeSpec::new(vec![
            (self.hidden, self.input),
            (self.hidden, 1),
            (1, self.hidden),
            (1, 1),
        ])
        .expect("positive dimensions")
    }
}

/// Two-layer tanh network `y = W2 tanh(W1 x + b1) + b2` regressed onto a
/// teacher of the same architecture with loss `mean (y - y_teacher)^2 / 2`.
/// The teacher is realizable, so the optimal loss is 0.
#[derive(Debug, Clone)]
pub struct Mlp {
    shape: MlpShape,
    shapes: ShapeSpec,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    teacher: ParamSet,
}

/// Teacher weights are drawn larger than the student's so that the target
/// is clearly nonlinear.
const TEACHER_GAIN: f64 = 2.0;

impl Mlp {
    /// Inputs from stream 2, teacher from stream 3 of `seed`.
    pub fn random(shape: MlpShape, n_data: usize, seed: u64) -> Result<Self> {
        let mut r = rng(seed, 2);
        let inputs: Vec<Vec<f64>> = (0..n_data)
            .map(|_| (0..shape.input).map(|_| r.sample(StandardNormal)).collect())
            .collect();
        let teacher = Self::scaled_init(shape, &mut rng(seed, 3), TEACHER_GAIN);
        Self::with_teacher(shape, inputs, teacher)
    }

    pub fn with_teacher(shape: MlpShape, inputs: Vec<Vec<f64>>, teacher: ParamSet) -> Result<Self> {
        let shapes = shape.shapes();
        let mut m = Self {
            shape,
            shapes,
            inputs,
            targets: Vec::new(),
            teacher,
        };
        m.check_shape(&m.teacher)?;
        m.targets = m.inputs.iter().map(|x| m.forward(&m.teacher, x)).collect();
        Ok(m)
    }

    pub fn teacher(&self) -> &ParamSet {
        &self.teacher
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    /// `W1 ~ N(0, gain^2 / d)`, `W2 ~ N(0, gain^2 / h)`, biases `N(0, 0.01 gain^2)`.
    fn scaled_init(shape: MlpShape, r: &mut impl Rng, gain: f64) -> ParamSet {
        let shapes = shape.shapes();
        let layers = gaussian(&shapes, r, 1.0).into_layers();
        let scales = [
            gain / (shape.input as f64).sqrt(),
            0.1 * gain,
            gain / (shape.hidden as f64).sqrt(),
            0.1 * gain,
        ];
        ParamSet::new(layers.iter().zip(scales).map(|(m, s)| m.scale(s)).collect())
            .expect("finite init")
    }

    pub(crate) fn initial_point(&self, r: &mut impl Rng, scale: f64) -> ParamSet {
        Self::scaled_init(self.shape, r, scale)
    }

    /// Output for one input, writing hidden activations into `act`.
    fn forward_into(&self, p: &ParamSet, x: &[f64], act: &mut [f64]) -> f64 {
        let [w1, b1, w2, b2] = layers(p);
        let d = x.len();
        for (i, (a, row)) in act.iter_mut().zip(w1.as_slice().chunks_exact(d)).enumerate() {
            let z = row.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() + b1.get(i, 0);
            *a = z.tanh();
        }
        w2.as_slice().iter().zip(act.iter()).map(|(u, v)| u * v).sum::<f64>() + b2.get(0, 0)
    }

    fn forward(&self, p: &ParamSet, x: &[f64]) -> f64 {
        self.forward_into(p, x, &mut vec![0.0; self.shape.hidden])
    }
}

fn layers(p: &ParamSet) -> [&Matrix; 4] {
    let l = p.layers();
    [&l[0], &l[1], &l[2], &l[3]]
}

impl Objective for Mlp {
    fn shapes(&self) -> &ShapeSpec {
        &self.shapes
    }

    fn loss(&self, x: &ParamSet) -> Result<f64> {
        self.check_shape(x)?;
        let mut act = vec![0.0; self.shape.hidden];
        let s: f64 = self
            .inputs
            .iter()
            .zip(&self.targets)
            .map(|(inp, t)| (self.forward_into(x, inp, &mut act) - t).powi(2))
            .sum();
        Ok(0.5 * s / self.inputs.len() as f64)
    }

    fn grad(&self, x: &ParamSet) -> Result<ParamSet> {
        Ok(self.loss_and_grad(x)?.1)
    }

    fn loss_and_grad(&self, p: &ParamSet) -> Result<(f64, ParamSet)> {
        self.check_shape(p)?;
        let (d, h) = (self.shape.input, self.shape.hidden);
        let n = self.inputs.len() as f64;
        let w2 = p.layers()[2].as_slice();
        let mut gw1 = vec![0.0; h * d];
        let mut gb1 = vec![0.0; h];
        let mut gw2 = vec![0.0; h];
        let mut gb2 = 0.0;
        let mut loss = 0.0;
        let mut act = vec![0.0; h];
        for (inp, t) in self.inputs.iter().zip(&self.targets) {
            let y = self.forward_into(p, inp, &mut act);
            let e = y - t;
            loss += e * e;
            let r = e / n;
            gb2 += r;
            for i in 0..h {
                gw2[i] += r * act[i];
                let dz = r * w2[i] * (1.0 - act[i] * act[i]);
                gb1[i] += dz;
                for (g, xj) in gw1[i * d..(i + 1) * d].iter_mut().zip(inp) {
                    *g += dz * xj;
                }
            }
        }
        let grad = ParamSet::new(vec![
            Matrix::from_vec(h, d, gw1)?,
            Matrix::from_vec(h, 1, gb1)?,
            Matrix::from_vec(1, h, gw2)?,
            Matrix::from_vec(1, 1, vec![gb2])?,
        ])?;
        Ok((0.5 * loss / n, grad))
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<&ParamSet> {
        Some(&self.teacher)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teacher_is_optimal() {
        let m = Mlp::random(MlpShape { input: 3, hidden: 5 }, 20, 1).unwrap();
        assert_eq!(m.loss(m.teacher()).unwrap(), 0.0);
        assert!(m.grad(m.teacher()).unwrap().is_zero());
        let x0 = m.initial_point(&mut rng(9, 100), 1.0);
        assert!(m.loss(&x0).unwrap() > 0.0);
    }
}
