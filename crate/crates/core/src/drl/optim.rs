use super::mlp::{Gradients, Mlp};

/// Adam with bias correction; `step` descends along the given gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let n = net.num_params();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let mut k = 0;
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            let gw = &grads.weights[li];
            let gb = &grads.bias[li];
            for (p, &g) in layer
                .weights
                .iter_mut()
                .chain(layer.bias.iter_mut())
                .zip(gw.iter().chain(gb.iter()))
            {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::mlp::{mlp_gradients, Objective, OutputActivation};

    #[test]
    fn first_step_moves_each_param_by_lr() {
        let mut net = Mlp::zeros(&[2, 1], OutputActivation::Identity);
        let mut opt = Adam::new(&net, 0.01);
        let batch = vec![vec![1.0, -2.0]];
        let targets = vec![vec![3.0]];
        let (_, g) = mlp_gradients(&net, Objective::Mse(&targets), &batch).unwrap();
        opt.step(&mut net, &g);
        // bias-corrected first step is lr * sign(g)
        let l = &net.layers()[0];
        assert!((l.weights[0] - 0.01).abs() < 1e-9);
        assert!((l.weights[1] + 0.01).abs() < 1e-9);
        assert!((l.bias[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn fits_a_linear_map() {
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity);
        let mut opt = Adam::new(&net, 0.05);
        let batch: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 4.0 - 1.0]).collect();
        let targets: Vec<Vec<f64>> = batch.iter().map(|x| vec![2.0 * x[0] + 0.5]).collect();
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            let (loss, g) = mlp_gradients(&net, Objective::Mse(&targets), &batch).unwrap();
            opt.step(&mut net, &g);
            last = loss;
        }
        assert!(last < 1e-6, "{last}");
    }
}
