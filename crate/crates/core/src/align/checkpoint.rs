//! Checkpoint layout:
//!
//! ```text
//! evlm-toy-checkpoint 1
//! normalize 1
//! ev_encoder.projection 8 48
//! ...
//! end
//! <little-endian f64 values in header order>
//! ```

use std::path::Path;

use super::decoder::ToyDecoderParams;
use super::encoder::ToyEncoderParams;
use super::linalg::Matrix;
use super::model::ToyModel;
use crate::error::{Error, Result};

const MAGIC: &str = "evlm-toy-checkpoint 1";

pub fn write_checkpoint(model: &ToyModel) -> Vec<u8> {
    let mut head = format!("{MAGIC}\nnormalize {}\n", u8::from(model.ev_encoder.normalize));
    for seg in model.segments() {
        let dims: Vec<String> = seg.shape.iter().map(usize::to_string).collect();
        head.push_str(&format!("{} {}\n", seg.name, dims.join(" ")));
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for v in model.to_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ToyModel> {
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| bad("unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| bad("header is not UTF-8"))?;
        pos += nl + 1;
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    if lines.first() != Some(&MAGIC) {
        return Err(bad("missing magic line"));
    }
    let normalize = match lines.get(1).and_then(|l| l.strip_prefix("normalize ")) {
        Some("0") => false,
        Some("1") => true,
        _ => return Err(bad("missing normalize line")),
    };
    let mut shapes = Vec::new();
    for line in &lines[2..] {
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default().to_string();
        let dims = parts
            .map(|p| p.parse::<usize>().map_err(|_| bad(format!("bad dimension in {line:?}"))))
            .collect::<Result<Vec<_>>>()?;
        shapes.push((name, dims));
    }
    let want = [
        ("ev_encoder.projection", 2),
        ("ev_encoder.bias", 1),
        ("im_encoder.projection", 2),
        ("im_encoder.bias", 1),
        ("decoder.token_embed", 2),
        ("decoder.output", 2),
    ];
    if shapes.len() != want.len() || shapes.iter().zip(want).any(|((n, d), (wn, wd))| n != wn || d.len() != wd) {
        return Err(bad("unexpected parameter blocks"));
    }

    let body = &bytes[pos..];
    if !body.len().is_multiple_of(8) {
        return Err(bad("value section is not a whole number of f64s"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let expected: usize = shapes.iter().map(|(_, d)| d.iter().product::<usize>()).sum();
    if values.len() != expected {
        return Err(bad(format!("header names {expected} values, found {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("checkpoint contains non-finite values".into()));
    }

    let mut rest = values.as_slice();
    let mut take = |n: usize| {
        let (head, tail) = rest.split_at(n);
        rest = tail;
        head.to_vec()
    };
    let d: Vec<&[usize]> = shapes.iter().map(|(_, d)| d.as_slice()).collect();
    let ev_projection = Matrix::from_vec(d[0][0], d[0][1], take(d[0][0] * d[0][1]));
    let ev_bias = take(d[1][0]);
    let im_projection = Matrix::from_vec(d[2][0], d[2][1], take(d[2][0] * d[2][1]));
    let im_bias = take(d[3][0]);
    let token_embed = Matrix::from_vec(d[4][0], d[4][1], take(d[4][0] * d[4][1]));
    let output = Matrix::from_vec(d[5][0], d[5][1], take(d[5][0] * d[5][1]));

    let dim = ev_bias.len();
    let consistent = ev_projection.rows == dim
        && im_projection.rows == dim
        && im_bias.len() == dim
        && im_projection.cols == ev_projection.cols
        && token_embed.cols == dim
        && output.rows == token_embed.rows
        && output.cols == 2 * dim;
    if !consistent {
        return Err(bad("inconsistent parameter shapes"));
    }
    Ok(ToyModel {
        ev_encoder: ToyEncoderParams {
            projection: ev_projection,
            bias: ev_bias,
            normalize,
        },
        im_encoder: ToyEncoderParams {
            projection: im_projection,
            bias: im_bias,
            normalize,
        },
        decoder: ToyDecoderParams { token_embed, output },
    })
}

pub fn save_checkpoint(model: &ToyModel, path: &Path) -> Result<()> {
    std::fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ToyModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
