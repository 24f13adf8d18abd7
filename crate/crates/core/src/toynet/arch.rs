//! Architecture strings.
//!
//! ```text
//! mlp:<in>-<hidden>-...-<out>            e.g. mlp:2-64-64-32-4
//! cnn:<c>x<h>x<w>-<tok>-...-<out>        e.g. cnn:1x8x8-c8k3-p2-c16k3-p2-f-32-4
//!
//! cnn tokens:
//!   c<out>k<k>[s<stride>][p<pad>]   conv (stride 1, pad k/2 by default) + relu
//!   p<size>                          average pool
//!   f                                flatten
//!   <n>                              linear (+ relu unless it is the last token)
//! ```
//!
//! Errors carry the byte offset of the offending token.

use super::{LayerKind, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub input: Shape,
    pub layers: Vec<LayerKind>,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// `(offset, text)` for each `-`-separated token starting at `base`.
fn tokens(s: &str, base: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        if ch == '-' {
            out.push((base + start, &s[start..i]));
            start = i + 1;
        }
    }
    out.push((base + start, &s[start..]));
    out
}

fn number(tok: &str, offset: usize) -> Result<usize> {
    match unsigned(tok, offset)? {
        0 => Err(parse_err(offset, "sizes must be positive")),
        v => Ok(v),
    }
}

fn unsigned(tok: &str, offset: usize) -> Result<usize> {
    if tok.is_empty() {
        return Err(parse_err(offset, "expected an integer"));
    }
    tok.parse::<usize>()
        .map_err(|_| parse_err(offset, format!("expected an integer, found {tok:?}")))
}

/// Splits `tok` into a leading decimal number and the remainder.
fn leading_number(tok: &str, offset: usize) -> Result<(usize, &str)> {
    let end = tok.find(|c: char| !c.is_ascii_digit()).unwrap_or(tok.len());
    Ok((number(&tok[..end], offset)?, &tok[end..]))
}

pub fn parse(spec: &str) -> Result<ArchSpec> {
    if let Some(body) = spec.strip_prefix("mlp:") {
        parse_mlp(body, 4)
    } else if let Some(body) = spec.strip_prefix("cnn:") {
        parse_cnn(body, 4)
    } else {
        Err(parse_err(0, "architecture must start with \"mlp:\" or \"cnn:\""))
    }
}

fn parse_mlp(body: &str, base: usize) -> Result<ArchSpec> {
    let toks = tokens(body, base);
    let sizes = toks
        .iter()
        .map(|&(off, t)| number(t, off))
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 {
        return Err(parse_err(
            base + body.len(),
            "an mlp needs an input and an output size",
        ));
    }
    let mut layers = Vec::new();
    for (i, pair) in sizes.windows(2).enumerate() {
        layers.push(LayerKind::Linear {
            inputs: pair[0],
            outputs: pair[1],
        });
        if i + 2 < sizes.len() {
            layers.push(LayerKind::Relu);
        }
    }
    Ok(ArchSpec {
        input: Shape::Flat(sizes[0]),
        layers,
    })
}

fn parse_conv(tok: &str, off: usize) -> Result<(usize, usize, usize, Option<usize>)> {
    let (out, rest) = leading_number(&tok[1..], off + 1)?;
    let rest_off = off + tok.len() - rest.len();
    let Some(rest) = rest.strip_prefix('k') else {
        return Err(parse_err(
            rest_off,
            "expected 'k<kernel>' after the channel count",
        ));
    };
    let (kernel, mut rest) = leading_number(rest, rest_off + 1)?;
    let mut stride = 1;
    let mut pad = None;
    while !rest.is_empty() {
        let at = off + tok.len() - rest.len();
        let (key, tail) = rest.split_at(1);
        let end = tail.find(|c: char| !c.is_ascii_digit()).unwrap_or(tail.len());
        match key {
            "s" => stride = number(&tail[..end], at + 1)?,
            "p" => pad = Some(unsigned(&tail[..end], at + 1)?),
            _ => return Err(parse_err(at, format!("unknown conv option {key:?}"))),
        }
        rest = &tail[end..];
    }
    Ok((out, kernel, stride, pad))
}

fn parse_cnn(body: &str, base: usize) -> Result<ArchSpec> {
    let toks = tokens(body, base);
    let (in_off, in_tok) = toks[0];
    let dims: Vec<&str> = in_tok.split('x').collect();
    if dims.len() != 3 {
        return Err(parse_err(in_off, "cnn input must be <channels>x<height>x<width>"));
    }
    let mut off = in_off;
    let mut parsed = [0usize; 3];
    for (slot, d) in parsed.iter_mut().zip(&dims) {
        *slot = number(d, off)?;
        off += d.len() + 1;
    }
    let input = Shape::Spatial {
        channels: parsed[0],
        height: parsed[1],
        width: parsed[2],
    };
    let mut shape = input;
    let mut layers = Vec::new();
    let last = toks.len() - 1;
    if last == 0 {
        return Err(parse_err(
            base + body.len(),
            "a cnn needs at least an output layer",
        ));
    }
    for (idx, &(off, tok)) in toks.iter().enumerate().skip(1) {
        let kind = match tok.as_bytes().first() {
            Some(b'c') => {
                let (out, kernel, stride, pad) = parse_conv(tok, off)?;
                let Shape::Spatial { channels, .. } = shape else {
                    return Err(parse_err(off, "conv after flatten"));
                };
                LayerKind::Conv {
                    in_channels: channels,
                    out_channels: out,
                    kernel,
                    stride,
                    pad: pad.unwrap_or(kernel / 2),
                }
            }
            Some(b'p') => LayerKind::AvgPool {
                size: number(&tok[1..], off + 1)?,
            },
            Some(b'f') if tok == "f" => LayerKind::Flatten,
            Some(d) if d.is_ascii_digit() => {
                let Shape::Flat(inputs) = shape else {
                    return Err(parse_err(off, "linear layer needs a flatten first"));
                };
                LayerKind::Linear {
                    inputs,
                    outputs: number(tok, off)?,
                }
            }
            _ => return Err(parse_err(off, format!("unrecognized token {tok:?}"))),
        };
        shape = kind
            .output_shape(shape)
            .map_err(|e| parse_err(off, e.to_string()))?;
        layers.push(kind);
        if idx == last {
            if !matches!(kind, LayerKind::Linear { .. }) {
                return Err(parse_err(off, "the last token must be the output layer size"));
            }
        } else if kind.is_parametric() {
            layers.push(LayerKind::Relu);
        }
    }
    Ok(ArchSpec { input, layers })
}
