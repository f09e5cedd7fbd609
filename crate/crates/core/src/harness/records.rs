use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Column order of the iteration log.
pub const CSV_COLUMNS: [&str; 17] = [
    "k", "eta_D", "eta_P", "eta_X", "eta_Z", "eta_W", "eta_S", "eta_I", "eta_qsdp", "eta_gap", "Dw", "dx_cert",
    "dy_cert", "pcg_iters", "skipped", "sigma", "time_s",
];

/// One row of the iteration log. Certificates are `NaN` when not audited.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    #[serde(rename = "eta_D")]
    pub eta_d: f64,
    #[serde(rename = "eta_P")]
    pub eta_p: f64,
    #[serde(rename = "eta_X")]
    pub eta_x: f64,
    #[serde(rename = "eta_Z")]
    pub eta_z: f64,
    #[serde(rename = "eta_W")]
    pub eta_w: f64,
    #[serde(rename = "eta_S")]
    pub eta_s: f64,
    #[serde(rename = "eta_I")]
    pub eta_i: f64,
    pub eta_qsdp: f64,
    pub eta_gap: f64,
    #[serde(rename = "Dw")]
    pub dw: f64,
    pub dx_cert: f64,
    pub dy_cert: f64,
    pub pcg_iters: usize,
    pub skipped: usize,
    pub sigma: f64,
    pub time_s: f64,
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for IterationRecord {
    /// Field-wise, with `NaN` equal to `NaN`.
    fn eq(&self, o: &Self) -> bool {
        self.k == o.k
            && self.pcg_iters == o.pcg_iters
            && self.skipped == o.skipped
            && [
                (self.eta_d, o.eta_d),
                (self.eta_p, o.eta_p),
                (self.eta_x, o.eta_x),
                (self.eta_z, o.eta_z),
                (self.eta_w, o.eta_w),
                (self.eta_s, o.eta_s),
                (self.eta_i, o.eta_i),
                (self.eta_qsdp, o.eta_qsdp),
                (self.eta_gap, o.eta_gap),
                (self.dw, o.dw),
                (self.dx_cert, o.dx_cert),
                (self.dy_cert, o.dy_cert),
                (self.sigma, o.sigma),
                (self.time_s, o.time_s),
            ]
            .iter()
            .all(|&(a, b)| same(a, b))
    }
}

pub fn write_csv<W: Write>(out: W, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
