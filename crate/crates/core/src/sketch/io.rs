//! Ensemble files: a CSV with one row `gamma,b0,…,b{n−1}` per sketch and a
//! JSON sidecar holding `M, N, L, σ², n`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SketchEnsemble;
use crate::error::{Error, Result};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub version: u32,
    pub m: usize,
    pub n_samples: usize,
    pub l: usize,
    pub sigma2: f64,
    pub n: usize,
}

/// `sketches.csv` → `sketches.json`
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn save_ensemble(ensemble: &SketchEnsemble, csv_path: &Path) -> Result<()> {
    let n = ensemble.dim();
    let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["gamma".to_string()];
    header.extend((0..n).map(|j| format!("b{j}")));
    w.write_record(&header)?;
    for i in 0..ensemble.m() {
        let mut row = Vec::with_capacity(n + 1);
        row.push(ensemble.gamma[i].to_string());
        row.extend(ensemble.b.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let meta = EnsembleMeta {
        version: ENSEMBLE_FORMAT_VERSION,
        m: ensemble.m(),
        n_samples: ensemble.n_samples,
        l: ensemble.l,
        sigma2: ensemble.sigma2,
        n,
    };
    let side = sidecar_path(csv_path);
    let mut f = BufWriter::new(File::create(&side).map_err(|e| Error::io(&side, e))?);
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n").map_err(|e| Error::io(&side, e))?;
    f.flush().map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn load_ensemble(csv_path: &Path) -> Result<SketchEnsemble> {
    let side = sidecar_path(csv_path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: EnsembleMeta = serde_json::from_str(&text)?;
    if meta.version != ENSEMBLE_FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "{}: unsupported ensemble version {}",
            side.display(),
            meta.version
        )));
    }
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    if headers.len() != meta.n + 1 || &headers[0] != "gamma" {
        return Err(Error::invalid(format!(
            "{}: expected header gamma,b0..b{}",
            csv_path.display(),
            meta.n.saturating_sub(1)
        )));
    }
    let mut gamma = Vec::with_capacity(meta.m);
    let mut b = Vec::with_capacity(meta.m * meta.n);
    for rec in r.records() {
        let rec = rec?;
        let mut vals = rec.iter().map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("{}: bad number {f:?}: {e}", csv_path.display())))
        });
        gamma.push(vals.next().transpose()?.unwrap_or(f64::NAN));
        for v in vals {
            b.push(v?);
        }
    }
    if gamma.len() != meta.m || b.len() != meta.m * meta.n {
        return Err(Error::invalid(format!(
            "{}: expected {} rows of {} vectors, found {} rows",
            csv_path.display(),
            meta.m,
            meta.n,
            gamma.len()
        )));
    }
    Ok(SketchEnsemble {
        b: DMatrix::from_row_slice(meta.m, meta.n, &b),
        gamma: DVector::from_vec(gamma),
        n_samples: meta.n_samples,
        l: meta.l,
        sigma2: meta.sigma2,
    })
}
