use serde::{Deserialize, Serialize};

use super::{Conv2d, Dense, Dropout, Elu, Flatten, Layer, LayerKind, MaxPool2d, Mode, ELU_ALPHA};
use crate::error::{Error, Result};
use crate::tensor::{glorot_uniform_init, uniform_init, Rng, Scalar, Tensor};

/// NaimishNet layer table: name and per-sample output shape of all 25 rows.
pub const TABLE_I: [(&str, &[usize]); 25] = [
    ("Input1", &[1, 96, 96]),
    ("Convolution2d1", &[32, 93, 93]),
    ("Activation1", &[32, 93, 93]),
    ("Maxpooling2d1", &[32, 46, 46]),
    ("Dropout1", &[32, 46, 46]),
    ("Convolution2d2", &[64, 44, 44]),
    ("Activation2", &[64, 44, 44]),
    ("Maxpooling2d2", &[64, 22, 22]),
    ("Dropout2", &[64, 22, 22]),
    ("Convolution2d3", &[128, 21, 21]),
    ("Activation3", &[128, 21, 21]),
    ("Maxpooling2d3", &[128, 10, 10]),
    ("Dropout3", &[128, 10, 10]),
    ("Convolution2d4", &[256, 10, 10]),
    ("Activation4", &[256, 10, 10]),
    ("Maxpooling2d4", &[256, 5, 5]),
    ("Dropout4", &[256, 5, 5]),
    ("Flatten1", &[6400]),
    ("Dense1", &[1000]),
    ("Activation5", &[1000]),
    ("Dropout5", &[1000]),
    ("Dense2", &[1000]),
    ("Activation6", &[1000]),
    ("Dropout6", &[1000]),
    ("Dense3", &[2]),
];

/// Hyperparameters of the conv/pool/dense stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Side length of the square single-channel input.
    pub input_size: usize,
    pub filters: [usize; 4],
    pub kernels: [usize; 4],
    pub dense_units: [usize; 2],
    pub outputs: usize,
    /// Dropout probabilities, in network order.
    pub dropout: [f64; 6],
    /// Conv weights are drawn from `[-conv_init, conv_init)`.
    pub conv_init: f64,
}

impl NetConfig {
    pub fn naimishnet() -> Self {
        NetConfig {
            input_size: 96,
            filters: [32, 64, 128, 256],
            kernels: [4, 3, 2, 1],
            dense_units: [1000, 1000],
            outputs: 2,
            dropout: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            conv_init: 0.05,
        }
    }

    /// Small clone with the same layer sequence, used for gradient checks. 28 is
    /// the smallest even side that survives all four conv/pool stages with the
    /// NaimishNet kernels while still exercising an odd-sized pool input.
    ///
    /// Conv weights use a wider range than the full build: with only two
    /// filters per stage the default range leaves activations so close
    /// together that a finite-difference step can flip a pooling argmax.
    pub fn reduced() -> Self {
        NetConfig {
            input_size: 28,
            filters: [2, 2, 2, 2],
            kernels: [4, 3, 2, 1],
            dense_units: [8, 8],
            outputs: 2,
            conv_init: 0.5,
            ..Self::naimishnet()
        }
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 4] {
        [batch, 1, self.input_size, self.input_size]
    }

    /// Side length after the four conv/pool stages, if the input survives them.
    fn final_side(&self) -> Option<usize> {
        let mut side = self.input_size;
        for &k in &self.kernels {
            side = side.checked_sub(k.checked_sub(1)?).filter(|&s| s >= 2)? / 2;
        }
        Some(side)
    }

    /// `(name, shape)` of every parameter tensor this configuration builds, in
    /// storage order, computed without allocating the model.
    pub fn param_manifest(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let side = self
            .final_side()
            .ok_or_else(|| Error::invalid(format!("input size {} too small", self.input_size)))?;
        let mut out = Vec::with_capacity(14);
        let mut channels = 1;
        for (i, (&f, &k)) in self.filters.iter().zip(&self.kernels).enumerate() {
            out.push((format!("Convolution2d{}.weight", i + 1), vec![f, channels, k, k]));
            out.push((format!("Convolution2d{}.bias", i + 1), vec![f]));
            channels = f;
        }
        let mut width = channels * side * side;
        for (i, units) in [self.dense_units[0], self.dense_units[1], self.outputs]
            .into_iter()
            .enumerate()
        {
            out.push((format!("Dense{}.weight", i + 1), vec![width, units]));
            out.push((format!("Dense{}.bias", i + 1), vec![units]));
            width = units;
        }
        Ok(out)
    }
}

/// One row of the layer table: name, per-sample shape, trainable parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerRow {
    pub name: String,
    pub shape: Vec<usize>,
    pub params: usize,
}

#[derive(Clone, Debug)]
struct NamedLayer<T: Scalar> {
    name: String,
    layer: Layer<T>,
}

#[derive(Clone, Debug)]
pub struct Model<T: Scalar = f32> {
    config: NetConfig,
    layers: Vec<NamedLayer<T>>,
    mode: Mode,
    rng: Rng,
    forwarded: bool,
    negate_grads: bool,
}

/// Builds the full-size NaimishNet.
pub fn build_naimishnet<T: Scalar>(rng: &mut Rng) -> Result<Model<T>> {
    Model::build(NetConfig::naimishnet(), rng)
}

impl<T: Scalar> Model<T> {
    /// Conv weights uniform, dense weights Glorot uniform, biases zero. Weights
    /// are drawn in layer order; the dropout stream is forked afterwards.
    pub fn build(config: NetConfig, rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(24);
        let mut push = |name: String, layer: Layer<T>| layers.push(NamedLayer { name, layer });
        let mut channels = 1;
        for stage in 0..4 {
            let (f, k) = (config.filters[stage], config.kernels[stage]);
            if f == 0 || k == 0 {
                return Err(Error::invalid(format!(
                    "conv stage {} has zero filters or kernel",
                    stage + 1
                )));
            }
            let weight = uniform_init(&[f, channels, k, k], -config.conv_init, config.conv_init, rng)?;
            let n = stage + 1;
            push(
                format!("Convolution2d{n}"),
                Layer::Conv2d(Conv2d::new(weight, Tensor::zeros(&[f]))?),
            );
            push(format!("Activation{n}"), Layer::Elu(Elu::new(ELU_ALPHA)));
            push(format!("Maxpooling2d{n}"), Layer::MaxPool2d(MaxPool2d::new()));
            push(
                format!("Dropout{n}"),
                Layer::Dropout(Dropout::new(config.dropout[stage])?),
            );
            channels = f;
        }
        push("Flatten1".into(), Layer::Flatten(Flatten::default()));

        let side = config
            .final_side()
            .ok_or_else(|| Error::invalid(format!("input size {} too small", config.input_size)))?;
        let mut width = channels * side * side;
        let widths = [config.dense_units[0], config.dense_units[1], config.outputs];
        for (i, &units) in widths.iter().enumerate() {
            let weight = glorot_uniform_init(width, units, &[width, units], rng)?;
            let n = i + 1;
            push(
                format!("Dense{n}"),
                Layer::Dense(Dense::new(weight, Tensor::zeros(&[units]))?),
            );
            match n {
                1 => {
                    push("Activation5".into(), Layer::Elu(Elu::new(ELU_ALPHA)));
                    push("Dropout5".into(), Layer::Dropout(Dropout::new(config.dropout[4])?));
                }
                2 => {
                    push("Activation6".into(), Layer::Linear);
                    push("Dropout6".into(), Layer::Dropout(Dropout::new(config.dropout[5])?));
                }
                _ => {}
            }
            width = units;
        }

        Ok(Model {
            config,
            layers,
            mode: Mode::Eval,
            rng: rng.fork(),
            forwarded: false,
            negate_grads: false,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Reseeds the dropout stream.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.rng = Rng::new(seed);
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|l| l.name.as_str())
    }

    pub fn layer_kinds(&self) -> impl Iterator<Item = LayerKind> + '_ {
        self.layers.iter().map(|l| l.layer.kind())
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().map(|l| l.layer.param_count()).sum()
    }

    /// Per-sample shapes and parameter counts of every layer, including the
    /// input row, derived by shape inference alone.
    pub fn layer_table(&self) -> Result<Vec<LayerRow>> {
        let mut shape = self.config.input_shape(1).to_vec();
        let mut rows = vec![LayerRow {
            name: "Input1".into(),
            shape: shape[1..].to_vec(),
            params: 0,
        }];
        for l in &self.layers {
            shape = l.layer.output_shape(&shape)?;
            rows.push(LayerRow {
                name: l.name.clone(),
                shape: shape[1..].to_vec(),
                params: l.layer.param_count(),
            });
        }
        Ok(rows)
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        let s = batch.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.config.input_size || s[3] != self.config.input_size {
            return Err(Error::shape(format!(
                "model expects (N,1,{0},{0}), got {s:?}",
                self.config.input_size
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_traced(batch, |_, _| {})
    }

    /// Forward pass that reports every layer's output to `observe`.
    pub fn forward_traced(
        &mut self,
        batch: &Tensor<T>,
        mut observe: impl FnMut(&str, &Tensor<T>),
    ) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        self.forwarded = false;
        let mut x = batch.clone();
        for l in &mut self.layers {
            x = l.layer.forward(&x, self.mode, &mut self.rng)?;
            observe(&l.name, &x);
        }
        self.forwarded = true;
        Ok(x)
    }

    /// Fills every gradient buffer by reverse traversal. Returns the gradient
    /// with respect to the input batch.
    pub fn backward(&mut self, loss_grad: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.forwarded {
            return Err(Error::State("model backward before forward".into()));
        }
        let mut g = loss_grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.layer.backward(&g)?;
        }
        if self.negate_grads {
            for l in &mut self.layers {
                for grad in l.layer.grads_mut() {
                    grad.data_mut().iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
        Ok(g)
    }

    /// Drops activations cached by the last forward pass.
    pub fn clear_cache(&mut self) {
        self.forwarded = false;
        for l in &mut self.layers {
            l.layer.clear_cache();
        }
    }

    /// Test hook: flips the sign of every parameter gradient after backward.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, on: bool) {
        self.negate_grads = on;
    }

    /// `(name, shape)` of every parameter tensor, in storage order.
    pub fn param_manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (suffix, p) in ["weight", "bias"].iter().zip(l.layer.params()) {
                out.push((format!("{}.{suffix}", l.name), p.shape().to_vec()));
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.layer.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.layer.params_mut()).collect()
    }

    pub fn grads(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.layer.grads()).collect()
    }

    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.layer.params_and_grads())
            .collect()
    }

    /// All parameters concatenated in manifest order.
    pub fn export_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.data().iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn import_params(&mut self, values: &[f64]) -> Result<()> {
        let total = self.count_params();
        if values.len() != total {
            return Err(Error::shape(format!(
                "model has {total} parameters, got {} values",
                values.len()
            )));
        }
        let mut rest = values;
        for p in self.params_mut() {
            let (head, tail) = rest.split_at(p.len());
            for (dst, &v) in p.data_mut().iter_mut().zip(head) {
                *dst = T::from_f64(v);
            }
            rest = tail;
        }
        Ok(())
    }

    /// Same architecture and parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Result<Model<U>> {
        let mut out = Model::<U>::build(self.config.clone(), &mut Rng::new(0))?;
        out.import_params(&self.export_params())?;
        out.mode = self.mode;
        out.rng = self.rng.clone();
        Ok(out)
    }
}

/// Display name with unicode subscript digits, e.g. `Dense₃`.
pub fn subscript_name(name: &str) -> String {
    name.chars()
        .enumerate()
        .map(|(i, c)| match c.to_digit(10) {
            // only the trailing index is subscripted; "Convolution2d" keeps its 2
            Some(d) if i + 1 == name.len() => char::from_u32(0x2080 + d).unwrap_or(c),
            _ => c,
        })
        .collect()
}
