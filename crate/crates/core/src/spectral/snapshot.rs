//! Portable field snapshots.
//!
//! A snapshot is one line of JSON followed by a block of little-endian
//! `f64`. Fourier fields store, for each wavevector in canonical order
//! (sorted by `|k|²`, ties lexicographic, all `k` in `[-K, K]^d` except 0),
//! each component as `(re, im)`. Diagonal fields store one real per mode.

use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{Coefficients, SpectralField};
use super::model::{ModelSpec, StokesModel};
use crate::error::{domain, Result};

const FOURIER_LAYOUT: &str =
    "per wavevector sorted by (|k|^2, lexicographic), per component: re, im";
const MODAL_LAYOUT: &str = "one real coefficient per mode j = 1..J";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub model: ModelSpec,
    pub n_values: usize,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

pub fn write_snapshot<W: Write>(field: &SpectralField, time: Option<f64>, mut out: W) -> Result<()> {
    let values: Vec<f64> = match field.coefficients() {
        Coefficients::Fourier(c) => c.iter().flat_map(|z| [z.re, z.im]).collect(),
        Coefficients::Modal(c) => c.clone(),
    };
    let header = SnapshotHeader {
        model: *field.model().spec(),
        n_values: values.len(),
        layout: if field.model().is_fourier() { FOURIER_LAYOUT } else { MODAL_LAYOUT }.into(),
        time,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot, rebuilding the model from the header unless an
/// equivalent one is supplied.
pub fn read_snapshot<R: BufRead>(
    mut input: R,
    model: Option<&Arc<StokesModel>>,
) -> Result<(SpectralField, SnapshotHeader)> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
    let model = match model {
        Some(m) if *m.spec() == header.model => m.clone(),
        Some(m) => {
            return Err(crate::Error::ModelMismatch(format!(
                "snapshot has {:?}, expected {:?}",
                header.model,
                m.spec()
            )))
        }
        None => header.model.build()?,
    };
    let mut bytes = vec![0u8; header.n_values * 8];
    input.read_exact(&mut bytes)?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let field = if model.is_fourier() {
        if values.len() % 2 != 0 {
            return domain("odd value count in a Fourier snapshot");
        }
        let c = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        SpectralField::from_fourier(&model, c)?
    } else {
        SpectralField::from_real_modes(&model, &values)?
    };
    Ok((field, header))
}
