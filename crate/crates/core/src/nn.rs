//! Dense feed-forward networks with exact reverse-mode gradients and an
//! Adam optimizer. Everything is `f64` and single-sample; mini-batches are
//! handled by the caller accumulating into a [`Gradients`] buffer.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SimRng;

pub const INIT_BIAS: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    /// The ReLU derivative at 0 is 0.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "linear" => Activation::Linear,
            _ => return None,
        })
    }
}

/// Activation of a whole layer, or one per output unit (used for the
/// actor head, which mixes a sigmoid and a tanh).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationSpec {
    Uniform(Activation),
    PerUnit(Vec<Activation>),
}

impl From<Activation> for ActivationSpec {
    fn from(a: Activation) -> Self {
        ActivationSpec::Uniform(a)
    }
}

impl ActivationSpec {
    fn at(&self, unit: usize) -> Activation {
        match self {
            ActivationSpec::Uniform(a) => *a,
            ActivationSpec::PerUnit(v) => v[unit],
        }
    }

    fn tag(&self) -> String {
        match self {
            ActivationSpec::Uniform(a) => a.tag().to_owned(),
            ActivationSpec::PerUnit(v) => v.iter().map(|a| a.tag()).collect::<Vec<_>>().join(","),
        }
    }

    fn parse(tag: &str) -> Option<Self> {
        if tag.contains(',') {
            tag.split(',').map(|t| Activation::from_tag(t.trim())).collect::<Option<Vec<_>>>().map(ActivationSpec::PerUnit)
        } else {
            Activation::from_tag(tag.trim()).map(ActivationSpec::Uniform)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: ActivationSpec,
}

impl Layer {
    fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.fan_in..(j + 1) * self.fan_in]
    }
}

#[derive(Debug, Clone, Default)]
struct Cache {
    input: Vec<f64>,
    /// Per layer: pre-activations and outputs.
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    #[serde(skip)]
    cache: Option<Cache>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Parameter-shaped buffer: one `(weights, biases)` pair per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()])).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|x| *x = 0.0);
            b.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|x| *x *= k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn shape_matches(&self, mlp: &Mlp) -> bool {
        self.layers.len() == mlp.layers.len()
            && self
                .layers
                .iter()
                .zip(&mlp.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }
}

/// Samples `N(0, sigma^2)` truncated to `[-2 sigma, 2 sigma]` by rejection.
pub fn truncated_normal(sigma: f64, rng: &mut SimRng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * sigma;
        }
    }
}

impl Mlp {
    /// Weights from a truncated normal with standard deviation
    /// `sqrt(2 / fan_in)`; biases set to [`INIT_BIAS`].
    pub fn new(sizes: &[usize], activations: &[ActivationSpec], rng: &mut SimRng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape(format!("need at least input and output sizes, got {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers need {} activations, got {}",
                sizes.len() - 1,
                sizes.len() - 1,
                activations.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Shape(format!("layer sizes must be positive: {sizes:?}")));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (pair, act) in sizes.windows(2).zip(activations) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if let ActivationSpec::PerUnit(v) = act {
                if v.len() != fan_out {
                    return Err(Error::Shape(format!("{} per-unit activations for {fan_out} units", v.len())));
                }
            }
            let sigma = (2.0 / fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out).map(|_| truncated_normal(sigma, rng)).collect();
            layers.push(Layer { fan_in, fan_out, weights, biases: vec![INIT_BIAS; fan_out], activation: act.clone() });
        }
        Ok(Self { layers, cache: None })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.fan_in * l.fan_out || l.biases.len() != l.fan_out {
                return Err(Error::Shape(format!("layer {i} parameter counts do not match {}x{}", l.fan_out, l.fan_in)));
            }
            if let ActivationSpec::PerUnit(v) = &l.activation {
                if v.len() != l.fan_out {
                    return Err(Error::Shape(format!("layer {i}: {} activations for {} units", v.len(), l.fan_out)));
                }
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out != w[1].fan_in {
                return Err(Error::Shape(format!("layer {i} outputs {} but layer {} takes {}", w[0].fan_out, i + 1, w[1].fan_in)));
            }
        }
        Ok(Self { layers, cache: None })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.fan_out)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} values, network expects {}", input.len(), self.input_dim())));
        }
        Ok(())
    }

    /// Forward pass without touching the backprop cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = (0..layer.fan_out)
                .map(|j| layer.activation.at(j).apply(layer.biases[j] + dot(layer.row(j), &x)))
                .collect();
        }
        Ok(x)
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cache = self.cache.take().unwrap_or_default();
        cache.input.clear();
        cache.input.extend_from_slice(input);
        cache.pre.resize(self.layers.len(), Vec::new());
        cache.post.resize(self.layers.len(), Vec::new());
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.post.split_at_mut(i);
            let x: &[f64] = if i == 0 { &cache.input } else { &done[i - 1] };
            let z = &mut cache.pre[i];
            let a = &mut rest[0];
            z.clear();
            a.clear();
            for j in 0..layer.fan_out {
                let zj = layer.biases[j] + dot(layer.row(j), x);
                z.push(zj);
                a.push(layer.activation.at(j).apply(zj));
            }
        }
        let out = cache.post[self.layers.len() - 1].clone();
        self.cache = Some(cache);
        Ok(out)
    }

    /// Reverse pass for the most recent [`Mlp::forward`]. Parameter
    /// gradients are added into `grads` when given; the gradient with
    /// respect to the input is returned.
    pub fn backward(&self, grad_output: &[f64], mut grads: Option<&mut Gradients>) -> Result<Vec<f64>> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        if grad_output.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, network outputs {}",
                grad_output.len(),
                self.output_dim()
            )));
        }
        if let Some(g) = grads.as_deref() {
            if !g.shape_matches(self) {
                return Err(Error::Shape("gradient buffer does not match network".into()));
            }
        }
        let mut upstream = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x: &[f64] = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let delta: Vec<f64> = (0..layer.fan_out)
                .map(|j| upstream[j] * layer.activation.at(j).derivative(cache.pre[i][j], cache.post[i][j]))
                .collect();
            if let Some(g) = grads.as_deref_mut() {
                let (gw, gb) = &mut g.layers[i];
                for (j, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        axpy(*d, x, &mut gw[j * layer.fan_in..(j + 1) * layer.fan_in]);
                    }
                    gb[j] += d;
                }
            }
            let mut down = vec![0.0; layer.fan_in];
            for (j, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    axpy(*d, layer.row(j), &mut down);
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    /// Writes the portable text checkpoint.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.sizes().iter().map(|n| n.to_string()).collect();
        writeln!(s, "layers: {}", sizes.join(" ")).unwrap();
        for layer in &self.layers {
            writeln!(s, "{}", layer.activation.tag()).unwrap();
            writeln!(s, "{}", join_f64(&layer.weights)).unwrap();
            writeln!(s, "{}", join_f64(&layer.biases)).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty checkpoint")?;
        let sizes: Vec<usize> = header
            .strip_prefix("layers:")
            .ok_or("missing `layers:` header")?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| format!("bad layer size `{t}`")))
            .collect::<std::result::Result<_, _>>()?;
        if sizes.len() < 2 {
            return Err("header lists fewer than two sizes".into());
        }
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let tag = lines.next().ok_or(format!("layer {i}: missing activation line"))?;
            let activation = ActivationSpec::parse(tag).ok_or(format!("layer {i}: unknown activation `{tag}`"))?;
            let weights = parse_f64_line(lines.next(), fan_in * fan_out, i, "weights")?;
            let biases = parse_f64_line(lines.next(), fan_out, i, "biases")?;
            layers.push(Layer { fan_in, fan_out, weights, biases, activation });
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err("trailing data after last layer".into());
        }
        Mlp::from_layers(layers).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_text(&text).map_err(|reason| Error::Checkpoint { path: path.display().to_string(), reason })
    }
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

fn parse_f64_line(line: Option<&str>, expected: usize, layer: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
    let line = line.ok_or(format!("layer {layer}: missing {what} line"))?;
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("layer {layer}: bad number `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != expected {
        return Err(format!("layer {layer}: expected {expected} {what}, found {}", vals.len()));
    }
    Ok(vals)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl OptimState {
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Gradients::zeros_like(mlp), v: Gradients::zeros_like(mlp) }
    }

    /// One bias-corrected Adam step descending along `grads`.
    pub fn apply(&mut self, mlp: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.shape_matches(mlp) || !self.m.shape_matches(mlp) {
            return Err(Error::Shape("optimizer state, gradients and network disagree".into()));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::non_finite("gradient", format!("parameter index {bad}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (li, layer) in mlp.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[li];
            let (mw, mb) = &mut self.m.layers[li];
            let (vw, vb) = &mut self.v.layers[li];
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let g = gw.iter().chain(gb.iter());
            let m = mw.iter_mut().chain(mb.iter_mut());
            let v = vw.iter_mut().chain(vb.iter_mut());
            for (((p, g), m), v) in params.zip(g).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Central finite-difference check of [`Mlp::backward`] for the scalar
/// loss `sum_k w_k * y_k`. Returns the largest relative error over all
/// parameters and inputs.
pub fn gradient_check(mlp: &mut Mlp, input: &[f64], loss_weights: &[f64], eps: f64) -> Result<f64> {
    let loss = |net: &Mlp, x: &[f64]| -> Result<f64> {
        Ok(net.predict(x)?.iter().zip(loss_weights).map(|(y, w)| y * w).sum())
    };
    mlp.forward(input)?;
    let mut grads = Gradients::zeros_like(mlp);
    let input_grad = mlp.backward(loss_weights, Some(&mut grads))?;
    let analytic: Vec<f64> = grads.iter().copied().collect();

    let mut worst = 0.0f64;
    let n = mlp.num_params();
    for idx in 0..n {
        let orig = *mlp.params().nth(idx).unwrap();
        *mlp.params_mut().nth(idx).unwrap() = orig + eps;
        let up = loss(mlp, input)?;
        *mlp.params_mut().nth(idx).unwrap() = orig - eps;
        let down = loss(mlp, input)?;
        *mlp.params_mut().nth(idx).unwrap() = orig;
        worst = worst.max(relative_error(analytic[idx], (up - down) / (2.0 * eps)));
    }
    let mut x = input.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = loss(mlp, &x)?;
        x[i] = orig - eps;
        let down = loss(mlp, &x)?;
        x[i] = orig;
        worst = worst.max(relative_error(input_grad[i], (up - down) / (2.0 * eps)));
    }
    Ok(worst)
}

/// `|a - b| / max(|a|, |b|)`, with differences below `1e-9` absolute treated as exact.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < 1e-9 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Random network and inputs for gradient checking: 2 to 4 layers, widths up to 16.
pub fn random_check_case(rng: &mut SimRng) -> Result<(Mlp, Vec<f64>, Vec<f64>)> {
    const ACTS: [Activation; 4] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Linear];
    let depth = rng.random_range(2..=4);
    let sizes: Vec<usize> = (0..depth).map(|i| if i == 0 { rng.random_range(1..=8) } else { rng.random_range(1..=16) }).collect();
    let acts: Vec<ActivationSpec> = (1..depth).map(|_| ActivationSpec::Uniform(ACTS[rng.random_range(0..4)])).collect();
    let mlp = Mlp::new(&sizes, &acts, rng)?;
    let input = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights = (0..sizes[depth - 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok((mlp, input, weights))
}
