use crate::error::{HeError, Result};
use crate::matrix::Matrix;

use super::{Layer, NetworkSpec};

enum Features {
    Maps(Vec<Matrix>),
    Flat(Vec<f64>),
}

fn valid_conv(image: &Matrix, kernel: &Matrix, bias: f64) -> Matrix {
    let k = kernel.rows();
    let (oh, ow) = (image.rows() - k + 1, image.cols() - k + 1);
    Matrix::from_fn(oh, ow, |a, b| {
        let mut acc = bias;
        for u in 0..k {
            for v in 0..k {
                acc += kernel[(u, v)] * image[(a + u, b + v)];
            }
        }
        acc
    })
}

fn flatten_channels_last(maps: &[Matrix]) -> Vec<f64> {
    let (h, w) = (maps[0].rows(), maps[0].cols());
    let mut out = Vec::with_capacity(h * w * maps.len());
    for a in 0..h {
        for b in 0..w {
            out.extend(maps.iter().map(|m| m[(a, b)]));
        }
    }
    out
}

/// Ordinary floating-point forward pass; one output row per image.
pub fn plaintext_reference_infer(net: &NetworkSpec, images: &[Matrix]) -> Result<Matrix> {
    let out_len = net.output_len()?;
    let mut rows = Vec::with_capacity(images.len() * out_len);
    for image in images {
        if (image.rows(), image.cols()) != (net.height, net.width) {
            return Err(HeError::shape(format!(
                "image is {}x{}, network expects {}x{}",
                image.rows(),
                image.cols(),
                net.height,
                net.width
            )));
        }
        let mut x = Features::Maps(vec![image.clone()]);
        for layer in &net.layers {
            x = match (layer, x) {
                (Layer::Conv(c), Features::Maps(maps)) => Features::Maps(
                    c.kernels
                        .iter()
                        .zip(&c.biases)
                        .map(|(k, &b)| valid_conv(&maps[0], k, b))
                        .collect(),
                ),
                (Layer::Act(p), Features::Maps(maps)) => Features::Maps(
                    maps.iter()
                        .map(|m| Matrix::from_fn(m.rows(), m.cols(), |i, j| p.eval(m[(i, j)])))
                        .collect(),
                ),
                (Layer::Act(p), Features::Flat(v)) => Features::Flat(v.iter().map(|&t| p.eval(t)).collect()),
                (Layer::Fc(fc), x) => {
                    let v = match x {
                        Features::Maps(maps) => flatten_channels_last(&maps),
                        Features::Flat(v) => v,
                    };
                    Features::Flat(
                        (0..fc.weight.rows())
                            .map(|o| {
                                fc.weight.row(o).iter().zip(&v).map(|(w, x)| w * x).sum::<f64>() + fc.bias[o]
                            })
                            .collect(),
                    )
                }
                (Layer::Conv(_), Features::Flat(_)) => {
                    return Err(HeError::shape("convolution after a dense layer"));
                }
            };
        }
        match x {
            Features::Flat(v) => rows.extend(v),
            Features::Maps(_) => return Err(HeError::shape("network does not end in a dense layer")),
        }
    }
    Matrix::from_vec(images.len(), out_len, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ActivationPoly, ConvLayer, FcLayer};

    #[test]
    fn zero_network_propagates_constants() {
        let act1 = ActivationPoly::mnist_act1();
        let act2 = ActivationPoly::mnist_act2();
        let net = NetworkSpec {
            height: 4,
            width: 4,
            layers: vec![
                Layer::Conv(ConvLayer {
                    kernels: vec![Matrix::zeros(2, 2)],
                    biases: vec![0.0],
                }),
                Layer::Act(act1),
                Layer::Fc(FcLayer {
                    weight: Matrix::from_fn(2, 9, |_, _| 1.0),
                    bias: vec![0.0, 1.0],
                }),
                Layer::Act(act2),
            ],
        };
        let out = plaintext_reference_infer(&net, &[Matrix::from_fn(4, 4, |a, b| (a + b) as f64)]).unwrap();
        let h = 9.0 * act1.eval(0.0);
        assert_eq!(out[(0, 0)], act2.eval(h));
        assert_eq!(out[(0, 1)], act2.eval(h + 1.0));
    }

    #[test]
    fn delta_kernel_and_identity_fc() {
        let p = ActivationPoly::new([0.5, 1.0, -0.25, 0.125]);
        let mut delta = Matrix::zeros(1, 1);
        delta[(0, 0)] = 1.0;
        let net = NetworkSpec {
            height: 2,
            width: 2,
            layers: vec![
                Layer::Conv(ConvLayer {
                    kernels: vec![delta],
                    biases: vec![0.0],
                }),
                Layer::Act(p),
                Layer::Fc(FcLayer {
                    weight: Matrix::identity(4),
                    bias: vec![0.0; 4],
                }),
                Layer::Act(p),
            ],
        };
        let im = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]);
        let out = plaintext_reference_infer(&net, std::slice::from_ref(&im)).unwrap();
        for (i, &x) in im.as_slice().iter().enumerate() {
            assert_eq!(out[(0, i)], p.eval(p.eval(x)));
        }
    }
}
