//! Backbone weight files: a versioned header, the GIN config, a shape table
//! and every value on its own line in shortest round-trip form.
//!
//! ```text
//! LEAPGIN 1
//! in_dim 8
//! hidden 32
//! layers 2
//! epsilon 0e0
//! dropout 5e-1
//! norm 1
//! frozen 1
//! tensors 8
//! 8 32
//! 1 32
//! ...
//! values
//! <one value per line>
//! ```

use std::fmt::Write as _;

use leap_core::gnn::{GinConfig, GinModel};
use leap_core::nn::{Dense, Mlp, Parameters};
use leap_core::Tensor;

use crate::format::ParseError;

pub const MAGIC: &str = "LEAPGIN";
pub const VERSION: u32 = 1;

pub fn serialize_weights(model: &GinModel) -> String {
    let c = &model.config;
    let mut out = format!("{MAGIC} {VERSION}\n");
    let _ = writeln!(out, "in_dim {}", c.in_dim);
    let _ = writeln!(out, "hidden {}", c.hidden);
    let _ = writeln!(out, "layers {}", c.layers);
    let _ = writeln!(out, "epsilon {:e}", c.epsilon);
    let _ = writeln!(out, "dropout {:e}", c.dropout);
    let _ = writeln!(out, "norm {}", u8::from(c.norm));
    let _ = writeln!(out, "frozen {}", u8::from(model.is_frozen()));
    let params = model.params();
    let _ = writeln!(out, "tensors {}", params.len());
    for p in &params {
        let _ = writeln!(out, "{} {}", p.rows(), p.cols());
    }
    out.push_str("values\n");
    for p in &params {
        for v in p.data() {
            let _ = writeln!(out, "{v:e}");
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.trim()))
            }
            None => Err(ParseError {
                line: self.last + 1,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ParseError> {
        let (ln, text) = self.next_line(key)?;
        let err = |m: String| ParseError { line: ln, message: m };
        let rest = text
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| err(format!("expected `{key} <value>`, found `{text}`")))?;
        rest.trim().parse().map_err(|_| err(format!("bad value for {key}: `{rest}`")))
    }
}

pub fn parse_weights(content: &str) -> Result<GinModel, ParseError> {
    let mut lines = Lines {
        inner: content.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next_line("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| ParseError {
            line: ln,
            message: format!("not a weight file: expected `{MAGIC} {VERSION}`"),
        })?;
    if version != VERSION {
        return Err(ParseError {
            line: ln,
            message: format!("unsupported weight file version {version}"),
        });
    }
    let in_dim = lines.field("in_dim")?;
    let hidden = lines.field("hidden")?;
    let layers = lines.field("layers")?;
    let epsilon = lines.field("epsilon")?;
    let dropout = lines.field("dropout")?;
    let norm: u8 = lines.field("norm")?;
    let frozen: u8 = lines.field("frozen")?;
    let count: usize = lines.field("tensors")?;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, text) = lines.next_line("a tensor shape")?;
        let dims: Vec<usize> = text.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        if dims.len() != 2 || text.split_whitespace().count() != 2 {
            return Err(ParseError {
                line: ln,
                message: format!("malformed shape `{text}`"),
            });
        }
        shapes.push((dims[0], dims[1]));
    }
    let (ln, marker) = lines.next_line("`values`")?;
    if marker != "values" {
        return Err(ParseError {
            line: ln,
            message: format!("expected `values`, found `{marker}`"),
        });
    }
    let mut tensors = Vec::with_capacity(count);
    for &(r, c) in &shapes {
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            let (ln, text) = lines.next_line("a value")?;
            let v: f64 = text.parse().map_err(|_| ParseError {
                line: ln,
                message: format!("non-numeric value `{text}`"),
            })?;
            data.push(v);
        }
        tensors.push(Tensor::from_vec(r, c, data).expect("length matches shape"));
    }
    if let Some((i, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(ParseError {
            line: i + 1,
            message: format!("trailing content `{extra}`"),
        });
    }
    if !count.is_multiple_of(4) {
        return Err(ParseError {
            line: 1,
            message: format!("{count} tensors; GIN layers store 4 each"),
        });
    }
    let mut it = tensors.into_iter();
    let mut mlps = Vec::with_capacity(count / 4);
    while let (Some(w0), Some(b0), Some(w1), Some(b1)) = (it.next(), it.next(), it.next(), it.next()) {
        mlps.push(Mlp {
            layers: vec![Dense { weight: w0, bias: b0 }, Dense { weight: w1, bias: b1 }],
        });
    }
    let config = GinConfig {
        in_dim,
        hidden,
        layers,
        epsilon,
        dropout,
        norm: norm != 0,
    };
    GinModel::from_parts(config, mlps, frozen != 0).map_err(|e| ParseError {
        line: 1,
        message: e.to_string(),
    })
}
