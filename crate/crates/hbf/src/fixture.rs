//! Text fixtures for complex matrix stacks.
//!
//! Format: a header line `rows,cols,count` followed by `count` blocks of
//! `rows` CSV lines, each holding `2*cols` entries — the real and imaginary
//! parts of one matrix row, interleaved. For channel realizations the header
//! reads `nr,nt,nsub`. Floats are written in Rust's shortest round-trip
//! form, so fixtures are bytewise reproducible.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HbfError, Result};
use crate::linalg::{cx, CMat};
use crate::mmse::HybridBeamformer;

/// Serialize a stack of equally-sized complex matrices.
pub fn write_matrix_stack(matrices: &[CMat]) -> String {
    assert!(!matrices.is_empty());
    let (rows, cols) = matrices[0].shape();
    let mut out = String::new();
    let _ = writeln!(out, "{rows},{cols},{}", matrices.len());
    for m in matrices {
        assert_eq!(m.shape(), (rows, cols));
        for i in 0..rows {
            let mut fields = Vec::with_capacity(2 * cols);
            for j in 0..cols {
                fields.push(format!("{}", m[(i, j)].re));
                fields.push(format!("{}", m[(i, j)].im));
            }
            let _ = writeln!(out, "{}", fields.join(","));
        }
    }
    out
}

/// Parse a stack previously produced by [`write_matrix_stack`].
pub fn parse_matrix_stack(text: &str) -> Result<Vec<CMat>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| HbfError::InvalidInput("empty fixture".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| HbfError::InvalidInput(format!("bad fixture header `{header}`: {e}")))?;
    if dims.len() != 3 {
        return Err(HbfError::InvalidInput(format!(
            "fixture header must be rows,cols,count; got `{header}`"
        )));
    }
    let (rows, cols, count) = (dims[0], dims[1], dims[2]);
    let mut matrices = Vec::with_capacity(count);
    for b in 0..count {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            let line = lines.next().ok_or_else(|| {
                HbfError::InvalidInput(format!("fixture truncated in block {b} row {i}"))
            })?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| HbfError::InvalidInput(format!("bad fixture row: {e}")))?;
            if vals.len() != 2 * cols {
                return Err(HbfError::InvalidInput(format!(
                    "fixture row has {} fields, expected {}",
                    vals.len(),
                    2 * cols
                )));
            }
            for j in 0..cols {
                m[(i, j)] = cx(vals[2 * j], vals[2 * j + 1]);
            }
        }
        matrices.push(m);
    }
    Ok(matrices)
}

pub fn save_matrix_stack(path: &Path, matrices: &[CMat]) -> Result<()> {
    std::fs::write(path, write_matrix_stack(matrices)).map_err(|e| HbfError::io(path, e))
}

pub fn load_matrix_stack(path: &Path) -> Result<Vec<CMat>> {
    let text = std::fs::read_to_string(path).map_err(|e| HbfError::io(path, e))?;
    parse_matrix_stack(&text)
}

/// Serialize a hybrid beamformer as named matrix-stack blocks plus the
/// scaling factors.
pub fn write_beamformer(bf: &HybridBeamformer) -> String {
    let mut out = String::new();
    out.push_str("# v_rf\n");
    out.push_str(&write_matrix_stack(std::slice::from_ref(&bf.v_rf)));
    out.push_str("# w_rf\n");
    out.push_str(&write_matrix_stack(std::slice::from_ref(&bf.w_rf)));
    out.push_str("# v_dig\n");
    out.push_str(&write_matrix_stack(&bf.v_dig));
    out.push_str("# w_dig\n");
    out.push_str(&write_matrix_stack(&bf.w_dig));
    out.push_str("# beta\n");
    let fields: Vec<String> = bf.beta.iter().map(|b| format!("{b}")).collect();
    out.push_str(&fields.join(","));
    out.push('\n');
    out
}

/// Parse a beamformer dump produced by [`write_beamformer`].
pub fn parse_beamformer(text: &str) -> Result<HybridBeamformer> {
    let mut sections: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("# ") {
            sections.push((name.trim().to_string(), String::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let find = |name: &str| -> Result<&String> {
        sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b)
            .ok_or_else(|| HbfError::InvalidInput(format!("missing section `{name}`")))
    };
    let v_rf = parse_matrix_stack(find("v_rf")?)?.remove(0);
    let w_rf = parse_matrix_stack(find("w_rf")?)?.remove(0);
    let v_dig = parse_matrix_stack(find("v_dig")?)?;
    let w_dig = parse_matrix_stack(find("w_dig")?)?;
    let beta: Vec<f64> = find("beta")?
        .trim()
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| HbfError::InvalidInput(format!("bad beta line: {e}")))?;
    Ok(HybridBeamformer {
        v_rf,
        w_rf,
        v_dig,
        w_dig,
        beta,
    })
}

pub fn save_beamformer(path: &Path, bf: &HybridBeamformer) -> Result<()> {
    std::fs::write(path, write_beamformer(bf)).map_err(|e| HbfError::io(path, e))
}
