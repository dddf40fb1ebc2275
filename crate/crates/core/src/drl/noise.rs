use rand::Rng;
use rand_distr::StandardNormal;

/// Ornstein-Uhlenbeck exploration noise (unit time step).
#[derive(Debug, Clone)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        OuNoise {
            theta,
            sigma,
            mu: 0.0,
            state: vec![0.0; dim],
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = self.mu);
    }

    pub fn step(&mut self, rng: &mut impl Rng) -> &[f64] {
        ou_step(&mut self.state, self.mu, self.theta, self.sigma, rng);
        &self.state
    }
}

/// `x <- x + theta * (mu - x) + sigma * N(0, 1)`, elementwise.
pub fn ou_step(x: &mut [f64], mu: f64, theta: f64, sigma: f64, rng: &mut impl Rng) {
    for v in x.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += theta * (mu - *v) + sigma * n;
    }
}
