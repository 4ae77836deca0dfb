use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hybrid::ActiveSet;

/// One logged state, taken at a step boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub p: DVector<f64>,
    pub v: DVector<f64>,
    /// Input the controller of `segment` produces at this state.
    pub u: DVector<f64>,
    pub segment: usize,
    /// Barrier values of `C_segment` at this state.
    pub h: f64,
    pub h_prime: f64,
    pub lyapunov: f64,
    pub active: ActiveSet,
    /// The supervisor moved to `segment` at this record.
    pub switched: bool,
    /// Gamma halvings needed to evaluate `u`. Not part of the CSV.
    pub backoffs: u32,
}

/// Time-ordered records on a fixed grid `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub n: usize,
    pub records: Vec<Record>,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrajectoryLog {
    pub fn new(n: usize) -> Self {
        Self { n, records: vec![] }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["p", "v", "u"] {
            h.extend((1..=n).map(|j| format!("{prefix}_{j}")));
        }
        h.extend(["segment", "h", "h_prime", "V", "active_set", "switch"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.n)).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![fmt_float(r.t)];
            row.extend(r.p.iter().chain(r.v.iter()).chain(r.u.iter()).map(|&x| fmt_float(x)));
            row.push(r.segment.to_string());
            row.extend([r.h, r.h_prime, r.lyapunov].map(fmt_float));
            row.push(r.active.to_string());
            row.push(if r.switched { "1" } else { "0" }.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Reads a log written by [`TrajectoryLog::write_csv`]; the dimension is
    /// inferred from the header.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
        if header.len() < 7 || !(header.len() - 7).is_multiple_of(3) {
            return Err(Error::Input(format!(
                "unexpected trajectory header with {} columns",
                header.len()
            )));
        }
        let n = (header.len() - 7) / 3;
        if header != Self::header(n) {
            return Err(Error::Input("unexpected trajectory header".into()));
        }
        let mut log = Self::new(n);
        for (line, row) in rd.records().enumerate() {
            let row = row.map_err(csv_err)?;
            let bad = |what: &str| Error::Input(format!("trajectory row {}: bad {what}", line + 1));
            let num = |j: usize| -> Result<f64> { row[j].trim().parse().map_err(|_| bad(&header[j])) };
            let vec = |start: usize| -> Result<DVector<f64>> {
                Ok(DVector::from_vec((start..start + n).map(num).collect::<Result<_>>()?))
            };
            let base = 1 + 3 * n;
            log.records.push(Record {
                t: num(0)?,
                p: vec(1)?,
                v: vec(1 + n)?,
                u: vec(1 + 2 * n)?,
                segment: row[base].trim().parse().map_err(|_| bad("segment"))?,
                h: num(base + 1)?,
                h_prime: num(base + 2)?,
                lyapunov: num(base + 3)?,
                active: row[base + 4].trim().parse().map_err(|_| bad("active_set"))?,
                switched: match row[base + 5].trim() {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("switch")),
                },
                backoffs: 0,
            });
        }
        Ok(log)
    }

    /// Times at which the supervisor advanced, paired with the new segment.
    pub fn switches(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.records.iter().filter(|r| r.switched).map(|r| (r.t, r.segment))
    }

    /// Largest `|u_{k+1} - u_k| / dt` over consecutive records, skipping
    /// switch records where the control law changes.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.records
            .windows(2)
            .filter(|w| !w[1].switched)
            .map(|w| (&w[1].u - &w[0].u).norm() / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(format!("trajectory CSV: {e}"))
}
