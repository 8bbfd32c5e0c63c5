//! Feedforward blocks with tanh hidden layers and linear classification
//! heads, and stacks of such blocks.
//!
//! A block's representation is the activation of its last hidden layer;
//! the head maps that representation to logits with no activation. In a
//! stack, block k consumes block k-1's representation, and parameter
//! gradients never cross block boundaries: each block is updated only from
//! losses attached to its own head and representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

/// Architecture description: the input width plus hidden widths of one
/// block (every block in a stack reuses the hidden profile, its input width
/// chained from the previous representation), and one head size per
/// hierarchy level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// `[input_dim, hidden_1, ..., hidden_L]`; at least one hidden layer.
    pub layer_widths: Vec<usize>,
    /// Classes per hierarchy level, coarse to fine; one block per level.
    pub num_classes_per_level: Vec<usize>,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid(
                "network config: need an input width and at least one hidden layer",
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("network config: zero layer width"));
        }
        if self.num_classes_per_level.is_empty() {
            return Err(Error::invalid("network config: no hierarchy levels"));
        }
        if self.num_classes_per_level.contains(&0) {
            return Err(Error::invalid("network config: zero classes at a level"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn repr_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_classes_per_level.len()
    }
}

/// One affine layer: `y = x W^T + b` with `W` of shape out x in.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn out_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_width(&self) -> usize {
        self.weight.cols()
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_width() {
            return Err(Error::invalid(format!(
                "layer expects width {}, got {}",
                self.in_width(),
                x.cols()
            )));
        }
        let mut out = x.matmul_transb(&self.weight)?;
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// The hidden stack of one block; all layers use tanh.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// A hidden body whose final activation is the representation, plus a
/// linear head projecting it to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LilBlock {
    pub body: MlpParams,
    pub head: Layer,
}

impl LilBlock {
    pub fn input_width(&self) -> usize {
        self.body.layers[0].in_width()
    }

    pub fn repr_width(&self) -> usize {
        self.body.layers.last().unwrap().out_width()
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_width()
    }

    /// Flat parameter tensors in a fixed order: each body layer's weight
    /// then bias, then the head's weight and bias. Gradients use the same
    /// order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.body.layers {
            out.push(layer.weight.data_mut());
            out.push(&mut layer.bias);
        }
        out.push(self.head.weight.data_mut());
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for layer in &self.body.layers {
            out.push(layer.weight.data().len());
            out.push(layer.bias.len());
        }
        out.push(self.head.weight.data().len());
        out.push(self.head.bias.len());
        out
    }
}

/// Ordered LIL blocks; block k's input width equals block k-1's
/// representation width.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedLilNetwork {
    pub blocks: Vec<LilBlock>,
}

/// Per-layer intermediates of one block's forward pass over a batch.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
    pub logits: Matrix,
}

impl ForwardTrace {
    /// The representation carrying the isometry loss: the last hidden
    /// activation.
    pub fn representation(&self) -> &Matrix {
        self.activations.last().unwrap_or(&self.input)
    }
}

/// Glorot-uniform weights (`+-sqrt(6 / (fan_in + fan_out))`), zero biases.
fn init_layer(out_width: usize, in_width: usize, rng: &mut Rng) -> Layer {
    let limit = (6.0 / (in_width + out_width) as f64).sqrt();
    let data = (0..out_width * in_width)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Layer {
        weight: Matrix::from_vec(out_width, in_width, data).expect("finite init"),
        bias: vec![0.0; out_width],
    }
}

/// Initialize one block's hidden stack for the given widths.
pub fn init_params(widths: &[usize], rng: &mut Rng) -> Result<MlpParams> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::invalid("init_params: need chained nonzero widths"));
    }
    let layers = widths
        .windows(2)
        .map(|w| init_layer(w[1], w[0], rng))
        .collect();
    Ok(MlpParams { layers })
}

impl StackedLilNetwork {
    /// Build and initialize the full stack from a config; deterministic
    /// given the RNG state.
    pub fn init(config: &NetworkConfig, rng: &mut Rng) -> Result<StackedLilNetwork> {
        config.validate()?;
        let hidden = &config.layer_widths[1..];
        let mut blocks = Vec::with_capacity(config.num_blocks());
        let mut input_dim = config.input_dim();
        for &classes in &config.num_classes_per_level {
            let mut widths = Vec::with_capacity(hidden.len() + 1);
            widths.push(input_dim);
            widths.extend_from_slice(hidden);
            let body = init_params(&widths, rng)?;
            let head = init_layer(classes, *widths.last().unwrap(), rng);
            input_dim = *widths.last().unwrap();
            blocks.push(LilBlock { body, head });
        }
        Ok(StackedLilNetwork { blocks })
    }

    pub fn input_width(&self) -> usize {
        self.blocks[0].input_width()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Forward through every block; block k receives block k-1's
    /// representation.
    pub fn forward(&self, x: &Matrix) -> Result<Vec<ForwardTrace>> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("empty network"));
        }
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut current = x.clone();
        for block in &self.blocks {
            let trace = forward(block, &current)?;
            current = trace.representation().clone();
            traces.push(trace);
        }
        Ok(traces)
    }
}

/// One block's forward pass: tanh on every hidden layer, linear head.
pub fn forward(block: &LilBlock, x: &Matrix) -> Result<ForwardTrace> {
    if x.cols() != block.input_width() {
        return Err(Error::invalid(format!(
            "forward: input width {} does not match block width {}",
            x.cols(),
            block.input_width()
        )));
    }
    let mut pre_activations = Vec::with_capacity(block.body.layers.len());
    let mut activations = Vec::with_capacity(block.body.layers.len());
    let mut current = x.clone();
    for layer in &block.body.layers {
        let z = layer.affine(&current)?;
        let a = z.map(f64::tanh);
        pre_activations.push(z);
        current = a.clone();
        activations.push(a);
    }
    let logits = block.head.affine(&current)?;
    Ok(ForwardTrace {
        input: x.clone(),
        pre_activations,
        activations,
        logits,
    })
}

/// Gradients for one affine layer.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for a full block, in the same layout as the block itself.
#[derive(Clone, Debug)]
pub struct BlockGrads {
    pub body: Vec<LayerGrads>,
    pub head: LayerGrads,
}

impl BlockGrads {
    pub fn zeros_like(block: &LilBlock) -> BlockGrads {
        BlockGrads {
            body: block
                .body
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Matrix::zeros(l.out_width(), l.in_width()),
                    bias: vec![0.0; l.out_width()],
                })
                .collect(),
            head: LayerGrads {
                weight: Matrix::zeros(block.head.out_width(), block.head.in_width()),
                bias: vec![0.0; block.head.out_width()],
            },
        }
    }

    /// Flat views matching [`LilBlock::param_slices_mut`] ordering.
    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.body {
            out.push(layer.weight.data());
            out.push(&layer.bias);
        }
        out.push(self.head.weight.data());
        out.push(&self.head.bias);
        out
    }
}

/// Reverse-mode gradients of a loss through one block.
///
/// `d_logits` is the loss gradient at the head output, `d_phi` the loss
/// gradient at the representation; either may be all zero. The two paths
/// are summed at the representation. Returns parameter gradients and the
/// gradient with respect to the block's input batch.
pub fn backward(
    block: &LilBlock,
    trace: &ForwardTrace,
    d_logits: &Matrix,
    d_phi: &Matrix,
) -> Result<(BlockGrads, Matrix)> {
    let n = trace.input.rows();
    let repr = trace.representation();
    if d_logits.rows() != n || d_logits.cols() != block.num_classes() {
        return Err(Error::invalid(format!(
            "backward: d_logits is {}x{}, expected {}x{}",
            d_logits.rows(),
            d_logits.cols(),
            n,
            block.num_classes()
        )));
    }
    if d_phi.rows() != n || d_phi.cols() != repr.cols() {
        return Err(Error::invalid(format!(
            "backward: d_phi is {}x{}, expected {}x{}",
            d_phi.rows(),
            d_phi.cols(),
            n,
            repr.cols()
        )));
    }

    let head_grads = LayerGrads {
        weight: d_logits.matmul_transa(repr)?,
        bias: d_logits.col_sums(),
    };
    // gradient at the representation: head path plus direct path
    let mut upstream = d_logits.matmul(&block.head.weight)?;
    upstream.add_in_place(d_phi)?;

    let layer_count = block.body.layers.len();
    let mut body_grads: Vec<LayerGrads> = Vec::with_capacity(layer_count);
    for l in (0..layer_count).rev() {
        let activation = &trace.activations[l];
        // tanh'(z) = 1 - tanh(z)^2
        let dz = {
            let mut dz = upstream;
            for (g, &a) in dz.data_mut().iter_mut().zip(activation.data()) {
                *g *= 1.0 - a * a;
            }
            dz
        };
        let input = if l == 0 {
            &trace.input
        } else {
            &trace.activations[l - 1]
        };
        body_grads.push(LayerGrads {
            weight: dz.matmul_transa(input)?,
            bias: dz.col_sums(),
        });
        upstream = dz.matmul(&block.body.layers[l].weight)?;
    }
    body_grads.reverse();
    Ok((
        BlockGrads {
            body: body_grads,
            head: head_grads,
        },
        upstream,
    ))
}

/// Per-sample Jacobians of the representation map, one `repr_width x D`
/// matrix per row of `x`, computed by repeated backward passes seeded with
/// one-hot representation gradients.
pub fn representation_jacobians(block: &LilBlock, x: &Matrix) -> Result<Vec<Matrix>> {
    let repr_width = block.repr_width();
    let mut out = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = Matrix::from_vec(1, x.cols(), x.row(i).to_vec())?;
        let trace = forward(block, &row)?;
        let zero_logits = Matrix::zeros(1, block.num_classes());
        let mut jac = Matrix::zeros(repr_width, x.cols());
        for c in 0..repr_width {
            let mut seed = Matrix::zeros(1, repr_width);
            seed.set(0, c, 1.0);
            let (_, dx) = backward(block, &trace, &zero_logits, &seed)?;
            jac.row_mut(c).copy_from_slice(dx.row(0));
        }
        out.push(jac);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pairwise_distances;
    use crate::losses::{build_indexing_matrix, combined_loss, softmax_cross_entropy, LossWeights};

    pub(crate) fn random_block(rng: &mut Rng, widths: &[usize], classes: usize) -> LilBlock {
        let body = init_params(widths, rng).unwrap();
        let head = init_layer(classes, *widths.last().unwrap(), rng);
        LilBlock { body, head }
    }

    fn zero_block(widths: &[usize], classes: usize) -> LilBlock {
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        LilBlock {
            body: MlpParams { layers },
            head: Layer {
                weight: Matrix::zeros(classes, *widths.last().unwrap()),
                bias: vec![0.0; classes],
            },
        }
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let cfg = NetworkConfig {
            layer_widths: vec![3, 8, 8],
            num_classes_per_level: vec![2],
        };
        let a = StackedLilNetwork::init(&cfg, &mut Rng::new(5)).unwrap();
        let b = StackedLilNetwork::init(&cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        for block in &a.blocks {
            for layer in &block.body.layers {
                assert!(layer.bias.iter().all(|&v| v == 0.0));
            }
            assert!(block.head.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn glorot_bound_holds() {
        let mut rng = Rng::new(6);
        let layer = init_layer(100, 784, &mut rng);
        let limit = (6.0f64 / 884.0).sqrt();
        assert!((limit - 0.0824).abs() < 1e-4);
        assert!(layer.weight.data().iter().all(|&w| w.abs() <= limit));
        // spread sanity: draws actually reach toward the bound
        let max = layer
            .weight
            .data()
            .iter()
            .cloned()
            .fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max > 0.9 * limit);
    }

    #[test]
    fn zero_block_maps_everything_to_zero() {
        let block = zero_block(&[3, 4, 4], 2);
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let trace = forward(&block, &x).unwrap();
        assert!(trace.representation().data().iter().all(|&v| v == 0.0));
        assert!(trace.logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_hand_value() {
        // 1 -> 1 -> 1 net: hidden weight 2, head weight 1, input 0.5
        let block = LilBlock {
            body: MlpParams {
                layers: vec![Layer {
                    weight: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                    bias: vec![0.0],
                }],
            },
            head: Layer {
                weight: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
                bias: vec![0.0],
            },
        };
        let x = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let trace = forward(&block, &x).unwrap();
        let expect = 1.0f64.tanh();
        assert!((trace.representation().get(0, 0) - expect).abs() < 1e-12);
        assert!((trace.logits.get(0, 0) - expect).abs() < 1e-12);
        assert!((expect - 0.761594).abs() < 1e-6);

        let zero_in = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let t0 = forward(&block, &zero_in).unwrap();
        assert_eq!(t0.representation().get(0, 0), 0.0);
        assert_eq!(t0.logits.get(0, 0), 0.0);
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let mut rng = Rng::new(1);
        let block = random_block(&mut rng, &[3, 4], 2);
        assert!(forward(&block, &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn tanh_outputs_bounded() {
        let mut rng = Rng::new(2);
        let block = random_block(&mut rng, &[3, 6, 6], 2);
        let data: Vec<f64> = (0..30).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let x = Matrix::from_vec(10, 3, data).unwrap();
        let trace = forward(&block, &x).unwrap();
        for a in &trace.activations {
            assert!(a.data().iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }

    #[test]
    fn forward_is_batch_order_equivariant() {
        let mut rng = Rng::new(3);
        let block = random_block(&mut rng, &[4, 5, 5], 3);
        let data: Vec<f64> = (0..24).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x = Matrix::from_vec(6, 4, data).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let xp = x.select_rows(&perm).unwrap();
        let t = forward(&block, &x).unwrap();
        let tp = forward(&block, &xp).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert_eq!(tp.logits.row(k), t.logits.row(p));
            assert_eq!(tp.representation().row(k), t.representation().row(p));
        }
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut rng = Rng::new(4);
        let block = random_block(&mut rng, &[3, 4, 4], 2);
        let x = Matrix::from_vec(2, 3, vec![0.3, -0.1, 0.8, -0.5, 0.2, 0.6]).unwrap();
        let trace = forward(&block, &x).unwrap();
        let (grads, dx) =
            backward(&block, &trace, &Matrix::zeros(2, 2), &Matrix::zeros(2, 4)).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        for layer in &grads.body {
            assert!(layer.weight.data().iter().all(|&v| v == 0.0));
            assert!(layer.bias.iter().all(|&v| v == 0.0));
        }
        assert!(grads.head.weight.data().iter().all(|&v| v == 0.0));
    }

    /// Central finite differences over the combined loss, the oracle for
    /// reverse-mode gradients. Exercises every parameter coordinate and
    /// every input coordinate of random small nets.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(5);
        for trial in 0..8 {
            let widths = [3usize, 4, 4];
            let classes = 2;
            let block = random_block(&mut rng, &widths, classes);
            let n = 4;
            let data: Vec<f64> = (0..n * 3).map(|_| rng.uniform(-1.5, 1.5)).collect();
            let x = Matrix::from_vec(n, 3, data).unwrap();
            let targets: Vec<usize> = (0..n).map(|_| rng.index(classes)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.index(2)).collect();
            let g = build_indexing_matrix(&labels, false);
            let d_in = pairwise_distances(&x).unwrap();
            // mix pure-CSE, pure-ISO, and combined across trials
            let weights = match trial % 3 {
                0 => LossWeights::new(1.0, 0.0).unwrap(),
                1 => LossWeights::new(0.0, 1.0).unwrap(),
                _ => LossWeights::new(0.7, 1.3).unwrap(),
            };

            let loss_of = |block: &LilBlock, x: &Matrix| -> f64 {
                let trace = forward(block, x).unwrap();
                combined_loss(&trace, &d_in, &g, &targets, &weights)
                    .unwrap()
                    .total
            };

            let trace = forward(&block, &x).unwrap();
            let out = combined_loss(&trace, &d_in, &g, &targets, &weights).unwrap();
            let (grads, dx) = backward(&block, &trace, &out.d_logits, &out.d_phi).unwrap();

            let h = 1e-6;
            let analytic: Vec<f64> = grads
                .grad_slices()
                .iter()
                .flat_map(|s| s.iter().copied())
                .collect();
            let sizes = block.param_sizes();
            let mut flat_idx = 0;
            for (slot, &size) in sizes.iter().enumerate() {
                for k in 0..size {
                    let mut plus = block.clone();
                    plus.param_slices_mut()[slot][k] += h;
                    let mut minus = block.clone();
                    minus.param_slices_mut()[slot][k] -= h;
                    let fd = (loss_of(&plus, &x) - loss_of(&minus, &x)) / (2.0 * h);
                    let a = analytic[flat_idx];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                    assert!(rel < 1e-6, "param slot {slot}[{k}]: {a} vs {fd}");
                    flat_idx += 1;
                }
            }

            for idx in 0..x.data().len() {
                let mut xp = x.clone();
                xp.data_mut()[idx] += h;
                let mut xm = x.clone();
                xm.data_mut()[idx] -= h;
                let fd = (loss_of(&block, &xp) - loss_of(&block, &xm)) / (2.0 * h);
                let a = dx.data()[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                assert!(rel < 1e-6, "input[{idx}]: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn single_block_stack_equals_plain_forward() {
        let mut rng = Rng::new(7);
        let cfg = NetworkConfig {
            layer_widths: vec![3, 5, 5],
            num_classes_per_level: vec![2],
        };
        let net = StackedLilNetwork::init(&cfg, &mut Rng::new(9)).unwrap();
        let data: Vec<f64> = (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = Matrix::from_vec(4, 3, data).unwrap();
        let traces = net.forward(&x).unwrap();
        assert_eq!(traces.len(), 1);
        let direct = forward(&net.blocks[0], &x).unwrap();
        assert_eq!(traces[0].logits, direct.logits);
    }

    #[test]
    fn stacked_forward_chains_representations() {
        let cfg = NetworkConfig {
            layer_widths: vec![3, 5, 5],
            num_classes_per_level: vec![2, 4],
        };
        let net = StackedLilNetwork::init(&cfg, &mut Rng::new(11)).unwrap();
        assert_eq!(net.blocks[1].input_width(), net.blocks[0].repr_width());
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, -0.2, -0.3]).unwrap();
        let traces = net.forward(&x).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[1].input, traces[0].representation().clone());
        assert_eq!(traces[1].logits.cols(), 4);
    }

    #[test]
    fn stacked_zero_blocks_give_zero_representations() {
        let widths = [3usize, 4, 4];
        let b0 = zero_block(&widths, 2);
        let b1 = zero_block(&[4, 4, 4], 2);
        let net = StackedLilNetwork {
            blocks: vec![b0, b1],
        };
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0]).unwrap();
        let traces = net.forward(&x).unwrap();
        for t in &traces {
            assert!(t.representation().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = Rng::new(13);
        let block = random_block(&mut rng, &[3, 4, 5], 2);
        let x = Matrix::from_vec(1, 3, vec![0.4, -0.3, 0.7]).unwrap();
        let jac = representation_jacobians(&block, &x).unwrap().remove(0);
        let h = 1e-6;
        for c in 0..block.repr_width() {
            for d in 0..3 {
                let mut xp = x.clone();
                xp.data_mut()[d] += h;
                let mut xm = x.clone();
                xm.data_mut()[d] -= h;
                let fp = forward(&block, &xp).unwrap().representation().get(0, c);
                let fm = forward(&block, &xm).unwrap().representation().get(0, c);
                let fd = (fp - fm) / (2.0 * h);
                let a = jac.get(c, d);
                assert!(
                    (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3) < 1e-6,
                    "jac[{c},{d}]: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn head_gradient_formula_spot_check() {
        // one-layer body, one sample: head weight grad = d_logits^T phi
        let mut rng = Rng::new(15);
        let block = random_block(&mut rng, &[2, 3], 2);
        let x = Matrix::from_vec(1, 2, vec![0.5, -0.25]).unwrap();
        let trace = forward(&block, &x).unwrap();
        let (_, grad) = softmax_cross_entropy(&trace.logits, &[1]).unwrap();
        let (grads, _) = backward(&block, &trace, &grad, &Matrix::zeros(1, 3)).unwrap();
        for c in 0..2 {
            for k in 0..3 {
                let expect = grad.get(0, c) * trace.representation().get(0, k);
                assert!((grads.head.weight.get(c, k) - expect).abs() < 1e-12);
            }
        }
    }
}
