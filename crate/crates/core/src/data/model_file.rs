//! Versioned, checksummed model container.
//!
//! ```text
//! "FUNKERNEL" | version: u32 LE | payload length: u64 LE | JSON payload | SHA-256
//! ```
//!
//! The digest covers every preceding byte. Floats in the payload use the
//! shortest round-trip representation, so a reload is bit-exact.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{FitDiagnostics, FittedModel, SolveDiagnostics};
use crate::grid::{Curve, Grid};
use crate::kernels::KernelConfig;
use crate::sample::{CovariateLayout, Sample};

pub const MAGIC: &[u8; 9] = b"FUNKERNEL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 9 + 4 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct StoredSample {
    id: String,
    xd: Vec<f64>,
    xc: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    kernel: KernelConfig,
    lambda: f64,
    t_grid: Grid,
    s_grids: Vec<Grid>,
    layout: CovariateLayout,
    samples: Vec<StoredSample>,
    /// Row `i` is `α_i`.
    alpha: Vec<Vec<f64>>,
    response_offset: Option<Vec<f64>>,
    /// Wall time is left out so identical fits give identical files.
    diagnostics: SolveDiagnostics,
}

pub fn encode_model(model: &FittedModel) -> Result<Vec<u8>> {
    let payload = Payload {
        kernel: model.kernel,
        lambda: model.lambda,
        t_grid: model.t_grid.as_ref().clone(),
        s_grids: model.s_grids.iter().map(|g| g.as_ref().clone()).collect(),
        layout: model.layout.clone(),
        samples: model
            .covariates
            .iter()
            .map(|s| StoredSample {
                id: s.id.clone(),
                xd: s.xd.clone(),
                xc: s.xc.iter().map(|c| c.values().to_vec()).collect(),
            })
            .collect(),
        alpha: model.alpha.row_iter().map(|r| r.iter().copied().collect()).collect(),
        response_offset: model.response_offset.clone(),
        diagnostics: model.diagnostics.solve.clone(),
    };
    let body = serde_json::to_vec(&payload).map_err(|e| Error::Data(format!("cannot encode model: {e}")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<FittedModel> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CorruptModel("missing FUNKERNEL magic".into()));
    }
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::CorruptModel(format!("truncated header ({} bytes)", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptModel(format!("truncated header ({} bytes)", bytes.len())));
    }
    let declared = u64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
    let expected = (HEADER_LEN as u64)
        .checked_add(declared)
        .and_then(|v| v.checked_add(DIGEST_LEN as u64))
        .ok_or_else(|| Error::CorruptModel("payload length overflows".into()))?;
    if bytes.len() as u64 != expected {
        return Err(Error::CorruptModel(format!(
            "length mismatch: header declares {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let split = bytes.len() - DIGEST_LEN;
    if Sha256::digest(&bytes[..split]).as_slice() != &bytes[split..] {
        return Err(Error::CorruptModel("checksum mismatch".into()));
    }
    let payload: Payload = serde_json::from_slice(&bytes[HEADER_LEN..split])
        .map_err(|e| Error::CorruptModel(format!("payload: {e}")))?;
    rebuild(payload)
}

fn rebuild(p: Payload) -> Result<FittedModel> {
    let t_grid = Arc::new(p.t_grid);
    let s_grids: Vec<Arc<Grid>> = p.s_grids.into_iter().map(Arc::new).collect();
    let n = p.samples.len();
    let m = t_grid.len();
    if p.alpha.len() != n || p.alpha.iter().any(|r| r.len() != m) {
        return Err(Error::CorruptModel(format!("coefficients are not {n}×{m}")));
    }
    let covariates = p
        .samples
        .into_iter()
        .map(|s| {
            if s.xc.len() != s_grids.len() {
                return Err(Error::CorruptModel(format!("sample {} has wrong covariate count", s.id)));
            }
            let xc = s
                .xc
                .into_iter()
                .zip(&s_grids)
                .map(|(v, g)| Curve::new(g.clone(), v))
                .collect::<Result<Vec<_>>>()?;
            Ok(Sample::new(s.id, s.xd, xc, None))
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<f64> = p.alpha.into_iter().flatten().collect();
    let alpha = DMatrix::from_row_slice(n, m, &flat);
    Ok(FittedModel {
        covariates,
        alpha,
        t_grid,
        s_grids,
        kernel: p.kernel,
        lambda: p.lambda,
        layout: p.layout,
        response_offset: p.response_offset,
        diagnostics: FitDiagnostics {
            solve: p.diagnostics,
            seconds: 0.0,
        },
    })
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)?)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    let bytes = std::fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    decode_model(&bytes)
}
