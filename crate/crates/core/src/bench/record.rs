use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
}

/// One CSV row: the iterate `x_k` and the step taken from it.
///
/// Quantities of the step (`grad_norm_y`, batch sizes, noise norms) are NaN
/// or 0 on the final row, where no step follows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    /// `f(x_k) − f*`.
    pub objective_gap: f64,
    /// `‖∇f(x_k)‖`.
    pub grad_norm_x: f64,
    /// `‖∇f(y_k)‖`.
    pub grad_norm_y: f64,
    /// `k‖x_k − x_{k−1}‖`.
    pub velocity: f64,
    pub step_size: f64,
    pub batch_x: usize,
    pub batch_xm: usize,
    pub batch_y: usize,
    /// `Ê_k` for exact gradients, `V_k` for sampled ones.
    pub lyapunov: f64,
    /// Single-draw error norms; NaN when the estimate was not used.
    pub sigma_x: f64,
    pub sigma_xm: f64,
    pub sigma_y: f64,
    pub status: Status,
}

pub const CSV_HEADER: [&str; 14] = [
    "k",
    "objective_gap",
    "grad_norm_x",
    "grad_norm_y",
    "velocity",
    "step_size",
    "batch_x",
    "batch_xm",
    "batch_y",
    "lyapunov",
    "sigma_x",
    "sigma_xm",
    "sigma_y",
    "status",
];

/// 17 significant digits, enough to round-trip every `f64`.
fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl TrajectoryRecord {
    fn fields(&self) -> [String; 14] {
        [
            self.k.to_string(),
            float(self.objective_gap),
            float(self.grad_norm_x),
            float(self.grad_norm_y),
            float(self.velocity),
            float(self.step_size),
            self.batch_x.to_string(),
            self.batch_xm.to_string(),
            self.batch_y.to_string(),
            float(self.lyapunov),
            float(self.sigma_x),
            float(self.sigma_xm),
            float(self.sigma_y),
            match self.status {
                Status::Ok => "ok".into(),
                Status::Diverged => "diverged".into(),
            },
        ]
    }
}

pub fn write_csv<W: Write>(records: &[TrajectoryRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<TrajectoryRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn save_trajectory(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, BufWriter::new(file)).map_err(|e| Error::Csv {
        path: path.into(),
        source: e,
    })
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file)).map_err(|e| Error::Csv {
        path: path.into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(k: usize, gap: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            k,
            objective_gap: gap,
            grad_norm_x: gap.sqrt(),
            grad_norm_y: f64::NAN,
            velocity: 1.0 / 3.0,
            step_size: 1e-3,
            batch_x: 2 * k * k,
            batch_xm: 0,
            batch_y: 7,
            lyapunov: f64::INFINITY,
            sigma_x: 0.0,
            sigma_xm: -0.0,
            sigma_y: f64::MIN_POSITIVE,
            status: Status::Ok,
        }
    }

    fn same(a: &TrajectoryRecord, b: &TrajectoryRecord) -> bool {
        let f = |x: f64, y: f64| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan());
        a.k == b.k
            && f(a.objective_gap, b.objective_gap)
            && f(a.grad_norm_x, b.grad_norm_x)
            && f(a.grad_norm_y, b.grad_norm_y)
            && f(a.velocity, b.velocity)
            && f(a.step_size, b.step_size)
            && (a.batch_x, a.batch_xm, a.batch_y) == (b.batch_x, b.batch_xm, b.batch_y)
            && f(a.lyapunov, b.lyapunov)
            && f(a.sigma_x, b.sigma_x)
            && f(a.sigma_xm, b.sigma_xm)
            && f(a.sigma_y, b.sigma_y)
            && a.status == b.status
    }

    #[test]
    fn header_and_special_values() {
        let mut buf = Vec::new();
        let mut r = record(3, 0.1);
        r.status = Status::Diverged;
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        assert!(text.contains("NaN") && text.contains("inf") && text.contains("diverged"));
        assert!(same(&read_csv(&buf[..]).unwrap()[0], &r));
    }

    proptest! {
        #[test]
        fn bit_faithful_round_trip(gaps in prop::collection::vec(any::<f64>(), 1..20)) {
            let rows: Vec<_> = gaps.iter().enumerate().map(|(i, &g)| record(i + 1, g)).collect();
            let mut buf = Vec::new();
            write_csv(&rows, &mut buf).unwrap();
            let back = read_csv(&buf[..]).unwrap();
            prop_assert_eq!(back.len(), rows.len());
            for (a, b) in rows.iter().zip(&back) {
                prop_assert!(same(a, b));
            }
        }
    }
}
