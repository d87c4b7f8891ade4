use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network with rectifier hidden layers and a linear output.
/// Also used as the gradient container for its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct Mlp {
    /// `weights[l]` is `inputs × outputs`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations saved by a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (post-rectifier for all but the first).
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Uniform fan-in initialization; the output layer is scaled by `out_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = (1.0 / w[0] as f64).sqrt() * if l + 1 == n { out_scale } else { 3f64.sqrt() };
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-1.0..=1.0) * bound));
            biases.push(Array1::zeros(w[1]));
        }
        Self { weights, biases }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().ncols()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite())) && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// All parameters in a fixed order (layer by layer, weights then bias).
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn forward(&self, x: Array2<f64>) -> MlpCache {
        assert_eq!(x.ncols(), self.input_dim(), "input width");
        let n = self.weights.len();
        let mut inputs = Vec::with_capacity(n);
        let mut h = x;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            if l + 1 < n {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        MlpCache { inputs, output: h }
    }

    pub fn predict(&self, x: Array2<f64>) -> Array2<f64> {
        self.forward(x).output
    }

    /// Reverse pass for `dL/d output`. Returns parameter gradients (if
    /// requested) and `dL/d input`.
    pub fn backward(&self, cache: &MlpCache, grad_out: Array2<f64>, want_params: bool) -> (Option<Mlp>, Array2<f64>) {
        let n = self.weights.len();
        let mut grads = want_params.then(|| self.zeros_like());
        let mut g = grad_out;
        for l in (0..n).rev() {
            let input = &cache.inputs[l];
            if let Some(grads) = grads.as_mut() {
                grads.weights[l] = input.t().dot(&g);
                grads.biases[l] = g.sum_axis(Axis(0));
            }
            let mut g_in = g.dot(&self.weights[l].t());
            if l > 0 {
                Zip::from(&mut g_in).and(input).for_each(|gi, &a| {
                    if a <= 0.0 {
                        *gi = 0.0;
                    }
                });
            }
            g = g_in;
        }
        (grads, g)
    }

    /// `self ← (1 − τ)·self + τ·src`.
    pub fn polyak_from(&mut self, src: &Mlp, tau: f64) {
        for (d, s) in self.weights.iter_mut().zip(&src.weights) {
            Zip::from(d).and(s).for_each(|d, &s| *d = (1.0 - tau) * *d + tau * s);
        }
        for (d, s) in self.biases.iter_mut().zip(&src.biases) {
            Zip::from(d).and(s).for_each(|d, &s| *d = (1.0 - tau) * *d + tau * s);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.params_mut().for_each(|p| *p *= k);
    }

    pub fn add_scaled(&mut self, other: &Mlp, k: f64) {
        for (d, s) in self.weights.iter_mut().zip(&other.weights) {
            d.scaled_add(k, s);
        }
        for (d, s) in self.biases.iter_mut().zip(&other.biases) {
            d.scaled_add(k, s);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MlpRecord {
    sizes: Vec<usize>,
    /// Per layer: weights row-major, then bias.
    layers: Vec<Vec<f64>>,
}

impl From<Mlp> for MlpRecord {
    fn from(m: Mlp) -> Self {
        let sizes = m.sizes();
        let layers = m
            .weights
            .iter()
            .zip(&m.biases)
            .map(|(w, b)| w.iter().chain(b.iter()).copied().collect())
            .collect();
        Self { sizes, layers }
    }
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = String;

    fn try_from(r: MlpRecord) -> Result<Self, String> {
        if r.sizes.len() < 2 || r.layers.len() != r.sizes.len() - 1 {
            return Err(format!("{} layers for sizes {:?}", r.layers.len(), r.sizes));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (w, data) in r.sizes.windows(2).zip(r.layers) {
            if data.len() != w[0] * w[1] + w[1] {
                return Err(format!("layer {}x{} has {} values", w[0], w[1], data.len()));
            }
            let (wd, bd) = data.split_at(w[0] * w[1]);
            weights.push(Array2::from_shape_vec((w[0], w[1]), wd.to_vec()).map_err(|e| e.to_string())?);
            biases.push(Array1::from_vec(bd.to_vec()));
        }
        Ok(Self { weights, biases })
    }
}
