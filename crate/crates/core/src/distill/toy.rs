use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::num::{sigmoid, Real};

use super::{brier_score, composite_loss, expected_calibration_error, DistillConfig, DistillError, DistillSample, StepLog, DEFAULT_ECE_BINS};

fn normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    T::lit(StandardNormal.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn random(inputs: usize, outputs: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let scale = T::lit(gain / (inputs as f64).sqrt());
        Dense {
            inputs,
            outputs,
            w: (0..inputs * outputs).map(|_| normal::<T>(rng) * scale).collect(),
            b: vec![T::zero(); outputs],
        }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.w.chunks_exact(self.inputs).zip(&self.b).map(|(row, &b)| row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + b).collect()
    }
}

/// Fully connected network: tanh hidden layers and a single linear logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Hidden activations and the output logit of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub hidden: Vec<Vec<T>>,
    pub logit: T,
}

impl<T: Real> Mlp<T> {
    pub fn random(input: usize, hidden: &[usize], gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(Dense::random(prev, h, gain, rng));
            prev = h;
        }
        layers.push(Dense::random(prev, 1, 1.0, rng));
        Mlp { layers }
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn forward(&self, x: &[T]) -> Forward<T> {
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut a = x.to_vec();
        for layer in &self.layers[..self.layers.len() - 1] {
            a = layer.apply(&a).into_iter().map(T::tanh).collect();
            hidden.push(a.clone());
        }
        let logit = self.layers[self.layers.len() - 1].apply(&a)[0];
        Forward { hidden, logit }
    }

    pub fn logit(&self, x: &[T]) -> T {
        self.forward(x).logit
    }

    fn zeros_like(&self) -> Vec<Dense<T>> {
        self.layers
            .iter()
            .map(|l| Dense { inputs: l.inputs, outputs: l.outputs, w: vec![T::zero(); l.w.len()], b: vec![T::zero(); l.b.len()] })
            .collect()
    }

    /// Accumulates parameter gradients for one sample given the gradient
    /// at the logit and at each hidden activation.
    fn backward(&self, x: &[T], fwd: &Forward<T>, g_logit: T, g_hidden: &[Vec<T>], grads: &mut [Dense<T>]) {
        let mut delta = vec![g_logit];
        for l in (0..self.layers.len()).rev() {
            let input: &[T] = if l == 0 { x } else { &fwd.hidden[l - 1] };
            let layer = &self.layers[l];
            let g = &mut grads[l];
            for (o, &d) in delta.iter().enumerate() {
                g.b[o] = g.b[o] + d;
                for (gw, &v) in g.w[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *gw = *gw + d * v;
                }
            }
            if l == 0 {
                break;
            }
            let mut d_in = g_hidden[l - 1].clone();
            for (o, &d) in delta.iter().enumerate() {
                for (acc, &w) in d_in.iter_mut().zip(&layer.w[o * layer.inputs..(o + 1) * layer.inputs]) {
                    *acc = *acc + d * w;
                }
            }
            delta = d_in.iter().zip(input).map(|(&g, &a)| g * (T::one() - a * a)).collect();
        }
    }

    fn step(&mut self, grads: &[Dense<T>], lr: T) {
        for (l, g) in self.layers.iter_mut().zip(grads) {
            l.w.iter_mut().zip(&g.w).for_each(|(w, &d)| *w = *w - lr * d);
            l.b.iter_mut().zip(&g.b).for_each(|(b, &d)| *b = *b - lr * d);
        }
    }
}

/// Fixed linear map with orthonormal rows, reducing teacher features to the
/// student width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection<T> {
    pub rows: usize,
    pub cols: usize,
    pub p: Vec<T>,
}

impl<T: Real> Projection<T> {
    /// Gram-Schmidt on Gaussian rows; requires `rows <= cols`.
    pub fn orthonormal(cols: usize, rows: usize, rng: &mut ChaCha8Rng) -> Result<Self, DistillError> {
        if rows == 0 || rows > cols {
            return Err(DistillError::Config(format!("cannot project width {cols} onto {rows} orthonormal rows")));
        }
        let mut p: Vec<T> = Vec::with_capacity(rows * cols);
        while p.len() < rows * cols {
            let mut v: Vec<T> = (0..cols).map(|_| normal(rng)).collect();
            for prev in p.chunks_exact(cols) {
                let dot: T = prev.iter().zip(&v).map(|(&a, &b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(x, &q)| *x = *x - dot * q);
            }
            let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::lit(1e-6) {
                p.extend(v.into_iter().map(|x| x / norm));
            }
        }
        Ok(Projection { rows, cols, p })
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        self.p.chunks_exact(self.cols).map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub input_dim: usize,
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub train_size: usize,
    pub test_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub cosine_decay: bool,
    /// Scale of the teacher logit; labels are drawn from `σ(teacher logit)`.
    pub teacher_sharpness: f64,
    pub init_gain: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            input_dim: 8,
            teacher_hidden: vec![32; 4],
            student_hidden: vec![16; 2],
            train_size: 128,
            test_size: 4000,
            batch_size: 32,
            learning_rate: 0.05,
            cosine_decay: true,
            teacher_sharpness: 3.0,
            init_gain: 1.5,
        }
    }
}

/// Teacher, data split and feature projections derived from one seed.
#[derive(Debug, Clone)]
pub struct ToyData<T> {
    pub teacher: Mlp<T>,
    pub projections: Vec<Projection<T>>,
    pub x_train: Vec<Vec<T>>,
    pub y_train: Vec<T>,
    pub teacher_logits: Vec<T>,
    /// Per training sample, the projected teacher feature for each pair.
    pub teacher_features: Vec<Vec<Vec<T>>>,
    pub x_test: Vec<Vec<T>>,
    pub y_test: Vec<T>,
    pub p_teacher_test: Vec<T>,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

impl<T: Real> ToyData<T> {
    /// The teacher's logit is the Bayes log-odds: labels are sampled from it.
    pub fn generate(config: &DistillConfig, toy: &ToyConfig, seed: u64) -> Result<Self, DistillError> {
        let mut rng = stream(seed, 1);
        let mut teacher = Mlp::random(toy.input_dim, &toy.teacher_hidden, toy.init_gain, &mut rng);
        let last = teacher.layers.last_mut().expect("output layer");
        let k = T::lit(toy.teacher_sharpness);
        last.w.iter_mut().for_each(|w| *w = *w * k);
        let mut projections = Vec::new();
        for &(t, s) in &config.feature_layer_pairs {
            let (tw, sw) = match (toy.teacher_hidden.get(t), toy.student_hidden.get(s)) {
                (Some(&tw), Some(&sw)) => (tw, sw),
                _ => return Err(DistillError::Config(format!("feature pair ({t}, {s}) names a missing hidden layer"))),
            };
            projections.push(Projection::orthonormal(tw, sw, &mut rng)?);
        }
        let draw = |n: usize, rng: &mut ChaCha8Rng| -> (Vec<Vec<T>>, Vec<T>, Vec<Forward<T>>) {
            let xs: Vec<Vec<T>> = (0..n).map(|_| (0..toy.input_dim).map(|_| normal(rng)).collect()).collect();
            let fwd: Vec<Forward<T>> = xs.iter().map(|x| teacher.forward(x)).collect();
            let ys = fwd
                .iter()
                .map(|f| if T::lit(rng.random::<f64>()) < sigmoid(f.logit) { T::one() } else { T::zero() })
                .collect();
            (xs, ys, fwd)
        };
        let (x_train, y_train, fwd_train) = draw(toy.train_size, &mut stream(seed, 2));
        let (x_test, y_test, fwd_test) = draw(toy.test_size, &mut stream(seed, 3));
        let teacher_features = fwd_train
            .iter()
            .map(|f| {
                config.feature_layer_pairs.iter().zip(&projections).map(|(&(t, _), p)| p.apply(&f.hidden[t])).collect()
            })
            .collect();
        Ok(ToyData {
            teacher,
            projections,
            teacher_logits: fwd_train.iter().map(|f| f.logit).collect(),
            x_train,
            y_train,
            teacher_features,
            x_test,
            y_test,
            p_teacher_test: fwd_test.iter().map(|f| sigmoid(f.logit)).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub log: Vec<StepLog>,
    pub initial_student: Mlp<T>,
    pub student: Mlp<T>,
    /// Held-out Brier score and calibration error of the student.
    pub brier: T,
    pub ece: T,
    /// The same diagnostics for the teacher, the Bayes-optimal reference.
    pub teacher_brier: T,
    /// Mean absolute difference between student and teacher probabilities.
    pub mean_abs_dp: T,
}

/// Trains a student against a fixed teacher with mini-batch SGD.
///
/// Everything random (teacher, data, student init, batch order) derives
/// from `seed`, so runs with different loss configs are paired.
pub fn train_toy<T: Real>(config: &DistillConfig, toy: &ToyConfig, seed: u64) -> Result<TrainReport<T>, DistillError> {
    config.validate()?;
    if toy.train_size == 0 || toy.test_size == 0 || toy.batch_size == 0 {
        return Err(DistillError::Config("train, test and batch sizes must be >= 1".into()));
    }
    let data = ToyData::<T>::generate(config, toy, seed)?;
    let initial_student = Mlp::random(toy.input_dim, &toy.student_hidden, toy.init_gain, &mut stream(seed, 4));
    let mut student = initial_student.clone();
    let mut order = stream(seed, 5);
    let mut log = Vec::with_capacity(config.total_steps);
    let widths = student.hidden_widths();

    for step in 0..config.total_steps {
        let idx: Vec<usize> = (0..toy.batch_size).map(|_| order.random_range(0..toy.train_size)).collect();
        let fwd: Vec<Forward<T>> = idx.iter().map(|&i| student.forward(&data.x_train[i])).collect();
        let batch: Vec<DistillSample<T>> = idx
            .iter()
            .zip(&fwd)
            .map(|(&i, f)| DistillSample {
                student_logit: f.logit,
                teacher_logit: data.teacher_logits[i],
                hard_label: data.y_train[i],
                student_features: config.feature_layer_pairs.iter().map(|&(_, s)| f.hidden[s].clone()).collect(),
                teacher_features: data.teacher_features[i].clone(),
            })
            .collect();
        let loss = composite_loss(&batch, config, step)?;
        if !loss.total.is_finite() {
            return Err(DistillError::Diverged { step });
        }
        log.push(StepLog::of(step, &loss));

        let mut grads = student.zeros_like();
        for (k, (&i, f)) in idx.iter().zip(&fwd).enumerate() {
            let mut g_hidden: Vec<Vec<T>> = widths.iter().map(|&w| vec![T::zero(); w]).collect();
            for (&(_, s), g) in config.feature_layer_pairs.iter().zip(&loss.grad_features[k]) {
                g_hidden[s].iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
            }
            student.backward(&data.x_train[i], f, loss.grad_logits[k], &g_hidden, &mut grads);
        }
        let lr = if toy.cosine_decay {
            let progress = step as f64 / config.total_steps as f64;
            toy.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        } else {
            toy.learning_rate
        };
        student.step(&grads, T::lit(lr));
    }

    let p_student: Vec<T> = data.x_test.iter().map(|x| sigmoid(student.logit(x))).collect();
    let n = T::from_usize_lossy(p_student.len());
    let mean_abs_dp = p_student.iter().zip(&data.p_teacher_test).map(|(&a, &b)| (a - b).abs()).sum::<T>() / n;
    Ok(TrainReport {
        log,
        initial_student,
        brier: brier_score(&p_student, &data.y_test).expect("non-empty test set"),
        ece: expected_calibration_error(&p_student, &data.y_test, DEFAULT_ECE_BINS).expect("non-empty test set"),
        teacher_brier: brier_score(&data.p_teacher_test, &data.y_test).expect("non-empty test set"),
        student,
        mean_abs_dp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_rows_are_orthonormal() {
        let p = Projection::<f64>::orthonormal(32, 16, &mut stream(9, 0)).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = (0..32).map(|k| p.p[i * 32 + k] * p.p[j * 32 + k]).sum();
                assert!((dot - (i == j) as u8 as f64).abs() < 1e-12);
            }
        }
        assert!(Projection::<f64>::orthonormal(4, 8, &mut stream(9, 0)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream(3, 0);
        let net = Mlp::<f64>::random(4, &[5, 3], 1.5, &mut rng);
        let x = [0.3, -1.2, 0.8, 0.1];
        let gh = vec![vec![0.2, -0.1, 0.05, 0.0, 0.3], vec![-0.4, 0.1, 0.2]];
        // objective: 0.7 * logit + <gh, hidden>
        let objective = |n: &Mlp<f64>| {
            let f = n.forward(&x);
            0.7 * f.logit + f.hidden.iter().zip(&gh).flat_map(|(h, g)| h.iter().zip(g).map(|(a, b)| a * b)).sum::<f64>()
        };
        let mut grads = net.zeros_like();
        net.backward(&x, &net.forward(&x), 0.7, &gh, &mut grads);
        for l in 0..net.layers.len() {
            for i in 0..net.layers[l].w.len() {
                let (mut up, mut down) = (net.clone(), net.clone());
                up.layers[l].w[i] += 1e-6;
                down.layers[l].w[i] -= 1e-6;
                let fd = (objective(&up) - objective(&down)) / 2e-6;
                assert!((fd - grads[l].w[i]).abs() < 1e-8, "layer {l} w{i}: {fd} vs {}", grads[l].w[i]);
            }
        }
    }

    #[test]
    fn zero_steps_leave_student_unchanged() {
        let cfg = DistillConfig { phase1_steps: 0, total_steps: 0, ..Default::default() };
        let toy = ToyConfig { test_size: 50, ..Default::default() };
        let r = train_toy::<f64>(&cfg, &toy, 1).unwrap();
        assert_eq!(r.student, r.initial_student);
        assert!(r.log.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = DistillConfig { phase1_steps: 30, total_steps: 40, ..Default::default() };
        let toy = ToyConfig { test_size: 100, ..Default::default() };
        let a = train_toy::<f64>(&cfg, &toy, 5).unwrap();
        let b = train_toy::<f64>(&cfg, &toy, 5).unwrap();
        assert_eq!(a.student, b.student);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log[29].phase, 1);
        assert_eq!(a.log[30].phase, 2);
    }

    #[test]
    fn divergence_reports_step() {
        let cfg = DistillConfig { phase1_steps: 0, total_steps: 200, ..Default::default() };
        let toy = ToyConfig { learning_rate: f64::MAX, cosine_decay: false, test_size: 10, ..Default::default() };
        assert!(matches!(train_toy::<f64>(&cfg, &toy, 2), Err(DistillError::Diverged { .. })));
    }
}
