//! Plain-text weight files.
//!
//! ```text
//! #conv k h w channels     then k rows of k values per kernel, then one row of biases
//! #act                     then one row c0,c1,c2,c3
//! #fc out in               then out rows of in values, then one row of out biases
//! ```
//!
//! Values are comma separated; blank lines are ignored. The input
//! geometry comes from the `#conv` header, which must come first.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{HeError, Result};
use crate::matrix::Matrix;

use super::{ActivationPoly, ConvLayer, FcLayer, Layer, NetworkSpec};

pub fn load_weights_csv(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    parse_weights_csv(fs::File::open(path)?)
}

pub fn save_weights_csv(net: &NetworkSpec, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_weights_csv(net, &mut file)?;
    file.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_weights_csv(net: &NetworkSpec, mut out: impl Write) -> Result<()> {
    net.shapes()?;
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                let k = c.kernel_size();
                writeln!(out, "#conv {k} {} {} {}", net.height, net.width, c.kernels.len())?;
                for kernel in &c.kernels {
                    for r in 0..k {
                        writeln!(out, "{}", join(kernel.row(r)))?;
                    }
                }
                writeln!(out, "{}", join(&c.biases))?;
            }
            Layer::Act(p) => {
                writeln!(out, "#act")?;
                writeln!(out, "{}", join(&p.coeffs))?;
            }
            Layer::Fc(fc) => {
                writeln!(out, "#fc {} {}", fc.weight.rows(), fc.weight.cols())?;
                for r in 0..fc.weight.rows() {
                    writeln!(out, "{}", join(fc.weight.row(r)))?;
                }
                writeln!(out, "{}", join(&fc.bias))?;
            }
        }
    }
    Ok(())
}

struct Lines {
    lines: Vec<(usize, String)>,
    pos: usize,
}

impl Lines {
    fn peek(&self) -> Option<&(usize, String)> {
        self.lines.get(self.pos)
    }

    fn eof_line(&self) -> usize {
        self.lines.last().map_or(1, |(n, _)| n + 1)
    }

    /// Next data row of exactly `arity` numbers inside section `section`.
    fn row(&mut self, arity: usize, section: &str, header: usize) -> Result<Vec<f64>> {
        let Some((n, text)) = self.lines.get(self.pos) else {
            return Err(HeError::Parse {
                line: self.eof_line(),
                msg: format!("section {section} starting at line {header} is incomplete"),
            });
        };
        let n = *n;
        if text.starts_with('#') {
            return Err(HeError::Parse {
                line: n,
                msg: format!("section {section} starting at line {header} is incomplete"),
            });
        }
        let values = text
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| HeError::Parse {
                    line: n,
                    msg: format!("non-numeric value {:?}", cell.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != arity {
            return Err(HeError::Parse {
                line: n,
                msg: format!("expected {arity} values, found {}", values.len()),
            });
        }
        self.pos += 1;
        Ok(values)
    }
}

fn header_ints(line: usize, args: &[&str], want: usize, section: &str) -> Result<Vec<usize>> {
    if args.len() != want {
        return Err(HeError::Parse {
            line,
            msg: format!("{section} header needs {want} integers, found {}", args.len()),
        });
    }
    args.iter()
        .map(|a| {
            a.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| HeError::Parse {
                line,
                msg: format!("{section} header value {a:?} is not a positive integer"),
            })
        })
        .collect()
}

pub fn parse_weights_csv(input: impl Read) -> Result<NetworkSpec> {
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            lines.push((i + 1, trimmed.to_string()));
        }
    }
    let mut src = Lines { lines, pos: 0 };
    let mut geometry = None;
    let mut layers = Vec::new();
    let mut header_lines = Vec::new();

    while let Some((line, text)) = src.peek().cloned() {
        src.pos += 1;
        let mut words = text.split_whitespace();
        let tag = words.next().unwrap_or_default();
        let args: Vec<&str> = words.collect();
        if !tag.starts_with('#') {
            return Err(HeError::Parse {
                line,
                msg: "expected a section header".into(),
            });
        }
        if geometry.is_none() && tag != "#conv" {
            return Err(HeError::Parse {
                line,
                msg: "the first section must be #conv".into(),
            });
        }
        let layer = match tag {
            "#conv" => {
                if geometry.is_some() {
                    return Err(HeError::Parse {
                        line,
                        msg: "only one #conv section is supported".into(),
                    });
                }
                let v = header_ints(line, &args, 4, "#conv")?;
                let (k, h, w, ch) = (v[0], v[1], v[2], v[3]);
                geometry = Some((h, w));
                let mut kernels = Vec::with_capacity(ch);
                for _ in 0..ch {
                    let mut data = Vec::with_capacity(k * k);
                    for _ in 0..k {
                        data.extend(src.row(k, "#conv", line)?);
                    }
                    kernels.push(Matrix::from_vec(k, k, data)?);
                }
                let biases = src.row(ch, "#conv", line)?;
                Layer::Conv(ConvLayer { kernels, biases })
            }
            "#act" => {
                if !args.is_empty() {
                    return Err(HeError::Parse {
                        line,
                        msg: "#act takes no arguments".into(),
                    });
                }
                let c = src.row(4, "#act", line)?;
                Layer::Act(ActivationPoly::new([c[0], c[1], c[2], c[3]]))
            }
            "#fc" => {
                let v = header_ints(line, &args, 2, "#fc")?;
                let (out, inp) = (v[0], v[1]);
                let mut data = Vec::with_capacity(out * inp);
                for _ in 0..out {
                    data.extend(src.row(inp, "#fc", line)?);
                }
                let bias = src.row(out, "#fc", line)?;
                Layer::Fc(FcLayer {
                    weight: Matrix::from_vec(out, inp, data)?,
                    bias,
                })
            }
            other => {
                return Err(HeError::Parse {
                    line,
                    msg: format!("unknown section {other}"),
                })
            }
        };
        layers.push(layer);
        header_lines.push(line);
    }

    let Some((height, width)) = geometry else {
        return Err(HeError::Parse {
            line: src.eof_line(),
            msg: "no #conv section".into(),
        });
    };
    let net = NetworkSpec {
        height,
        width,
        layers,
    };
    net.shapes_at().map_err(|(i, msg)| HeError::Parse {
        line: header_lines.get(i).copied().unwrap_or(1),
        msg,
    })?;
    Ok(net)
}
