use crate::error::{Error, Result};
use crate::nn::dense::Dense;
use crate::nn::gdn::Gdn;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Relu,
    Gdn(Gdn),
    Residual(Residual),
}

/// `y = inner(x) + shortcut(x)`, the shortcut being the identity or a
/// linear projection when the inner stack changes width.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    inner: Vec<Layer>,
    projection: Option<Dense>,
}

impl Residual {
    pub fn new(inner: Vec<Layer>, projection: Option<Dense>) -> Residual {
        Residual { inner, projection }
    }

    pub fn inner(&self) -> &[Layer] {
        &self.inner
    }

    pub fn projection(&self) -> Option<&Dense> {
        self.projection.as_ref()
    }
}

/// A feed-forward stack of layers with a fixed input width.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_width: usize,
    output_width: usize,
    layers: Vec<Layer>,
}

/// Activations recorded by [`Network::forward_traced`] for [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    layers: Vec<LayerTrace>,
}

#[derive(Clone, Debug)]
enum LayerTrace {
    Dense {
        input: Vec<f64>,
    },
    Relu {
        input: Vec<f64>,
    },
    Gdn {
        input: Vec<f64>,
        norms: Vec<f64>,
    },
    Residual {
        input: Vec<f64>,
        inner: Vec<LayerTrace>,
    },
}

fn chain_width(layers: &[Layer], input: usize) -> Result<usize> {
    layers
        .iter()
        .try_fold(input, |w, layer| layer.output_width(w))
}

impl Layer {
    /// Output width for an input of width `input`, or a shape error.
    fn output_width(&self, input: usize) -> Result<usize> {
        match self {
            Layer::Dense(d) => {
                if d.inputs() != input {
                    return Err(Error::Shape(format!(
                        "dense layer expects width {}, preceding width is {input}",
                        d.inputs()
                    )));
                }
                Ok(d.outputs())
            }
            Layer::Relu => Ok(input),
            Layer::Gdn(g) => {
                if g.width() != input {
                    return Err(Error::Shape(format!(
                        "gdn layer expects width {}, preceding width is {input}",
                        g.width()
                    )));
                }
                Ok(input)
            }
            Layer::Residual(r) => {
                let inner = chain_width(&r.inner, input)?;
                let shortcut = match &r.projection {
                    Some(p) => Layer::Dense(p.clone()).output_width(input)?,
                    None => input,
                };
                if inner != shortcut {
                    return Err(Error::Shape(format!(
                        "residual inner width {inner} differs from shortcut width {shortcut}"
                    )));
                }
                Ok(inner)
            }
        }
    }

    fn zeros_like(&self) -> Layer {
        match self {
            Layer::Dense(d) => Layer::Dense(Dense::zeros(d.inputs(), d.outputs())),
            Layer::Relu => Layer::Relu,
            Layer::Gdn(g) => Layer::Gdn(g.zeros_like()),
            Layer::Residual(r) => Layer::Residual(Residual {
                inner: r.inner.iter().map(Layer::zeros_like).collect(),
                projection: r
                    .projection
                    .as_ref()
                    .map(|p| Dense::zeros(p.inputs(), p.outputs())),
            }),
        }
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        match self {
            Layer::Dense(d) => {
                out.push(&d.weights);
                out.push(&d.bias);
            }
            Layer::Relu => {}
            Layer::Gdn(g) => {
                out.push(&g.beta_raw);
                out.push(&g.gamma_raw);
            }
            Layer::Residual(r) => {
                for l in &r.inner {
                    l.collect_params(out);
                }
                if let Some(p) = &r.projection {
                    out.push(&p.weights);
                    out.push(&p.bias);
                }
            }
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        match self {
            Layer::Dense(d) => {
                out.push(&mut d.weights);
                out.push(&mut d.bias);
            }
            Layer::Relu => {}
            Layer::Gdn(g) => {
                out.push(&mut g.beta_raw);
                out.push(&mut g.gamma_raw);
            }
            Layer::Residual(r) => {
                for l in &mut r.inner {
                    l.collect_params_mut(out);
                }
                if let Some(p) = &mut r.projection {
                    out.push(&mut p.weights);
                    out.push(&mut p.bias);
                }
            }
        }
    }
}

fn run(
    layers: &[Layer],
    mut x: Vec<f64>,
    mut trace: Option<&mut Vec<LayerTrace>>,
) -> Result<Vec<f64>> {
    for layer in layers {
        let y = match layer {
            Layer::Dense(d) => d.apply(&x),
            Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            Layer::Gdn(g) => {
                let (y, norms) = g.apply(&x)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(LayerTrace::Gdn { input: x, norms });
                }
                x = y;
                continue;
            }
            Layer::Residual(r) => {
                let mut inner_trace = trace.as_ref().map(|_| Vec::new());
                let mut y = run(&r.inner, x.clone(), inner_trace.as_mut())?;
                match &r.projection {
                    Some(p) => {
                        for (a, b) in y.iter_mut().zip(p.apply(&x)) {
                            *a += b;
                        }
                    }
                    None => {
                        for (a, b) in y.iter_mut().zip(&x) {
                            *a += b;
                        }
                    }
                }
                if let Some(t) = trace.as_deref_mut() {
                    t.push(LayerTrace::Residual {
                        input: x,
                        inner: inner_trace.unwrap(),
                    });
                }
                x = y;
                continue;
            }
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(match layer {
                Layer::Dense(_) => LayerTrace::Dense { input: x },
                _ => LayerTrace::Relu { input: x },
            });
        }
        x = y;
    }
    Ok(x)
}

fn backprop(
    layers: &[Layer],
    trace: &[LayerTrace],
    mut grad: Vec<f64>,
    grads: &mut [Layer],
) -> Result<Vec<f64>> {
    if trace.len() != layers.len() || grads.len() != layers.len() {
        return Err(Error::State(
            "trace does not match network structure".into(),
        ));
    }
    for ((layer, t), g) in layers.iter().zip(trace).zip(grads.iter_mut()).rev() {
        grad = match (layer, t, g) {
            (Layer::Dense(d), LayerTrace::Dense { input }, Layer::Dense(gd)) => {
                d.backward(input, &grad, gd)
            }
            (Layer::Relu, LayerTrace::Relu { input }, Layer::Relu) => grad
                .iter()
                .zip(input)
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect(),
            (Layer::Gdn(l), LayerTrace::Gdn { input, norms }, Layer::Gdn(gl)) => {
                l.backward(input, norms, &grad, gl)
            }
            (Layer::Residual(r), LayerTrace::Residual { input, inner }, Layer::Residual(gr)) => {
                let mut gx = backprop(&r.inner, inner, grad.clone(), &mut gr.inner)?;
                match (&r.projection, &mut gr.projection) {
                    (Some(p), Some(gp)) => {
                        for (a, b) in gx.iter_mut().zip(p.backward(input, &grad, gp)) {
                            *a += b;
                        }
                    }
                    (None, None) => {
                        for (a, b) in gx.iter_mut().zip(&grad) {
                            *a += b;
                        }
                    }
                    _ => return Err(Error::State("gradient buffer shape differs".into())),
                }
                gx
            }
            _ => {
                return Err(Error::State(
                    "trace does not match network structure".into(),
                ))
            }
        };
    }
    Ok(grad)
}

impl Network {
    pub fn new(input_width: usize, layers: Vec<Layer>) -> Result<Network> {
        let output_width = chain_width(&layers, input_width)?;
        Ok(Network {
            input_width,
            output_width,
            layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width {
            return Err(Error::Shape(format!(
                "network expects input width {}, got {}",
                self.input_width,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        run(&self.layers, x.to_vec(), None)
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<(Vec<f64>, Trace)> {
        self.check_input(x)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let y = run(&self.layers, x.to_vec(), Some(&mut layers))?;
        Ok((y, Trace { layers }))
    }

    /// Backpropagates `grad_output` through a recorded forward pass,
    /// accumulating parameter gradients into `grads` (a buffer from
    /// [`Network::zeros_like`]) and returning the gradient w.r.t. the input.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &[f64],
        grads: &mut Network,
    ) -> Result<Vec<f64>> {
        if grad_output.len() != self.output_width {
            return Err(Error::Shape(format!(
                "output gradient width {} for network output {}",
                grad_output.len(),
                self.output_width
            )));
        }
        if grads.input_width != self.input_width || grads.output_width != self.output_width {
            return Err(Error::State("gradient buffer shape differs".into()));
        }
        backprop(
            &self.layers,
            &trace.layers,
            grad_output.to_vec(),
            &mut grads.layers,
        )
    }

    /// A same-shaped network with every parameter zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Network {
        Network {
            input_width: self.input_width,
            output_width: self.output_width,
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    /// Parameter tensors in a fixed traversal order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.collect_params(&mut out);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            l.collect_params_mut(&mut out);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for p in self.params_mut() {
            p.fill(0.0);
        }
    }
}
