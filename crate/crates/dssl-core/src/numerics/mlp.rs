//! Fully-connected network with rectifier activations on all but the last
//! layer. Used as the backbone for every encoder and decoder in the crate.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// d_in × d_out.
    pub weight: Tensor,
    /// 1 × d_out.
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Node handles for one MLP's parameters inside a graph.
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl Mlp {
    /// Builds an MLP with the given layer widths, e.g. `[100, 512, 512, 32]`
    /// for a 3-layer encoder. Weights start uniform in
    /// ±√(6/(d_in+d_out)), biases at zero.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("mlp needs at least one layer".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("mlp layer widths must be positive".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (d_in, d_out) = (w[0], w[1]);
                let bound = (6.0 / (d_in + d_out) as f64).sqrt();
                Layer {
                    weight: Tensor::uniform(rng, d_in, d_out, -bound, bound),
                    bias: Tensor::zeros(1, d_out),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Config(format!(
                "mlp expects {} input columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Plain forward pass without graph recording. Bit-identical to the
    /// graph path because both run the same tensor kernels in the same
    /// order.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.matmul(&layer.weight).add_row(&layer.bias);
            if i < last {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Inserts the parameters as differentiable leaves.
    pub fn insert_params(&self, g: &mut Graph) -> MlpNodes {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            weights.push(g.param(layer.weight.clone()));
            biases.push(g.param(layer.bias.clone()));
        }
        MlpNodes { weights, biases }
    }

    /// Inserts the parameters as constants (frozen: no gradient flows).
    pub fn insert_frozen(&self, g: &mut Graph) -> MlpNodes {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            weights.push(g.constant(layer.weight.clone()));
            biases.push(g.constant(layer.bias.clone()));
        }
        MlpNodes { weights, biases }
    }

    /// Graph forward pass through previously inserted parameter nodes.
    pub fn forward_graph(&self, g: &mut Graph, nodes: &MlpNodes, x: NodeId) -> Result<NodeId> {
        self.check_input(g.value(x))?;
        Ok(forward_from_nodes(g, &nodes.weights, &nodes.biases, x))
    }

    /// Parameters in checkpoint order: weight then bias per layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Gradients matching [`Mlp::params`] order after a backward pass.
    pub fn grads(&self, g: &Graph, nodes: &MlpNodes) -> Vec<Tensor> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for i in 0..self.layers.len() {
            out.push(g.grad(nodes.weights[i]));
            out.push(g.grad(nodes.biases[i]));
        }
        out
    }
}

/// MLP forward from bare parameter leaves: affine layers with a rectifier
/// on all but the last. Lets callers (gradient checks, custom composites)
/// drive the same architecture from externally owned leaf nodes.
pub fn forward_from_nodes(g: &mut Graph, weights: &[NodeId], biases: &[NodeId], x: NodeId) -> NodeId {
    assert_eq!(weights.len(), biases.len(), "weight/bias layer count mismatch");
    let last = weights.len() - 1;
    let mut h = x;
    for i in 0..weights.len() {
        let mm = g.matmul(h, weights[i]);
        h = g.add_row(mm, biases[i]);
        if i < last {
            h = g.relu(h);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mlp_maps_to_zero() {
        let mut rng = crate::rng::stream(1, "mlp");
        let mut m = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        for layer in &mut m.layers {
            layer.weight = Tensor::zeros(layer.weight.rows(), layer.weight.cols());
        }
        let x = Tensor::uniform(&mut rng, 5, 3, -2.0, 2.0);
        let y = m.forward(&x).unwrap();
        assert_eq!(y, Tensor::zeros(5, 2));
    }

    #[test]
    fn single_layer_identity_keeps_negatives() {
        // Last layer has no rectifier, so an identity layer passes -1 through.
        let mut rng = crate::rng::stream(1, "mlp");
        let mut m = Mlp::new(&[2, 2], &mut rng).unwrap();
        m.layers[0].weight = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let x = Tensor::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        let y = m.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // Independent oracle: direct loops, no tensor kernels, no graph.
        let mut rng = crate::rng::stream(42, "mlp-oracle");
        let m = Mlp::new(&[4, 5, 2], &mut rng).unwrap();
        let x = Tensor::uniform(&mut rng, 3, 4, -1.0, 1.0);

        let mut h: Vec<Vec<f64>> = (0..3).map(|i| x.row(i).to_vec()).collect();
        for (li, layer) in m.layers.iter().enumerate() {
            let (din, dout) = layer.weight.shape();
            let mut next = vec![vec![0.0; dout]; h.len()];
            for (r, row) in h.iter().enumerate() {
                for j in 0..dout {
                    let mut acc = layer.bias.get(0, j);
                    for i in 0..din {
                        acc += row[i] * layer.weight.get(i, j);
                    }
                    if li + 1 < m.layers.len() && acc < 0.0 {
                        acc = 0.0;
                    }
                    next[r][j] = acc;
                }
            }
            h = next;
        }

        let y = m.forward(&x).unwrap();
        for r in 0..3 {
            for j in 0..2 {
                assert!((y.get(r, j) - h[r][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn graph_and_plain_forward_agree_bitwise() {
        let mut rng = crate::rng::stream(9, "mlp-bit");
        let m = Mlp::new(&[3, 8, 4], &mut rng).unwrap();
        let x = Tensor::uniform(&mut rng, 6, 3, -1.0, 1.0);
        let plain = m.forward(&x).unwrap();
        let mut g = Graph::new();
        let xn = g.constant(x);
        let nodes = m.insert_params(&mut g);
        let out = m.forward_graph(&mut g, &nodes, xn).unwrap();
        assert_eq!(g.value(out), &plain);
    }

    #[test]
    fn positively_homogeneous_with_zero_bias() {
        let mut rng = crate::rng::stream(5, "mlp-hom");
        let m = Mlp::new(&[3, 6, 2], &mut rng).unwrap(); // biases start at zero
        let x = Tensor::uniform(&mut rng, 4, 3, -1.0, 1.0);
        let alpha = 2.5;
        let ya = m.forward(&x.scale(alpha)).unwrap();
        let yb = m.forward(&x).unwrap().scale(alpha);
        for (a, b) in ya.data().iter().zip(yb.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut rng = crate::rng::stream(1, "mlp");
        let m = Mlp::new(&[3, 2], &mut rng).unwrap();
        let x = Tensor::zeros(1, 4);
        assert!(matches!(m.forward(&x), Err(Error::Config(_))));
    }
}
