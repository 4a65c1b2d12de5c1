//! Per-round CSV trace.
//!
//! Columns: `t`, then for each agent `i` (one-based) `x{i}_{k}` for every
//! coordinate, `z{i}`, `dout{i}`, `s{i}`, `regret{i}`, `regret_over_t{i}`, and
//! finally `disagreement`. Row `t` holds the state at the start of round `t`
//! together with the out-degree and acceptance-set size produced in that round.
//! Floats use the shortest representation that parses back to the same value.

use std::io::{Read, Write};
use std::path::Path;

use super::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub dout: Vec<usize>,
    pub s: Vec<usize>,
    pub regret: Vec<f64>,
    pub regret_over_t: Vec<f64>,
    pub disagreement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub d: usize,
    pub rows: Vec<TraceRow>,
}

pub fn header(n: usize, d: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 1..=n {
        cols.extend((1..=d).map(|k| format!("x{i}_{k}")));
        for name in ["z", "dout", "s", "regret", "regret_over_t"] {
            cols.push(format!("{name}{i}"));
        }
    }
    cols.push("disagreement".into());
    cols
}

impl Trace {
    pub fn new(n: usize, d: usize) -> Self {
        Self { n, d, rows: Vec::new() }
    }

    pub fn write_to(&self, out: impl Write) -> Result<(), SimError> {
        let err = |e: csv::Error| SimError::Trace(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header(self.n, self.d)).map_err(err)?;
        for row in &self.rows {
            let mut rec = vec![row.t.to_string()];
            for i in 0..self.n {
                rec.extend(row.x[i].iter().map(f64::to_string));
                rec.push(row.z[i].to_string());
                rec.push(row.dout[i].to_string());
                rec.push(row.s[i].to_string());
                rec.push(row.regret[i].to_string());
                rec.push(row.regret_over_t[i].to_string());
            }
            rec.push(row.disagreement.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| SimError::Trace(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let file = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from(input: impl Read) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Trace(m);
        let mut r = csv::Reader::from_reader(input);
        let cols: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
        let n = cols.iter().filter(|c| c.starts_with('z')).count();
        if n == 0 || cols.len() < 2 {
            return Err(bad("header has no agent columns".into()));
        }
        let per_agent_fixed = 5;
        let d = (cols.len() - 2 - n * per_agent_fixed) / n;
        if cols != header(n, d) {
            return Err(bad(format!("unexpected header {cols:?}")));
        }
        let mut trace = Trace::new(n, d);
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let float = |k: usize| -> Result<f64, SimError> {
                rec[k].parse().map_err(|_| bad(format!("row {}: column {} is not a number", line + 1, cols[k])))
            };
            let int = |k: usize| -> Result<usize, SimError> {
                rec[k].parse().map_err(|_| bad(format!("row {}: column {} is not an integer", line + 1, cols[k])))
            };
            let t = rec[0].parse().map_err(|_| bad(format!("row {}: bad round index", line + 1)))?;
            let mut row = TraceRow {
                t,
                x: Vec::with_capacity(n),
                z: Vec::with_capacity(n),
                dout: Vec::with_capacity(n),
                s: Vec::with_capacity(n),
                regret: Vec::with_capacity(n),
                regret_over_t: Vec::with_capacity(n),
                disagreement: 0.0,
            };
            let mut k = 1;
            for _ in 0..n {
                row.x.push((k..k + d).map(float).collect::<Result<_, _>>()?);
                k += d;
                row.z.push(float(k)?);
                row.dout.push(int(k + 1)?);
                row.s.push(int(k + 2)?);
                row.regret.push(float(k + 3)?);
                row.regret_over_t.push(float(k + 4)?);
                k += per_agent_fixed;
            }
            row.disagreement = float(k)?;
            trace.rows.push(row);
        }
        if trace.rows.is_empty() {
            return Err(bad("trace has no rows".into()));
        }
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let file = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// `x_t` for every agent, `t = 1..=rows`.
    pub fn trajectory(&self) -> Vec<Vec<Vec<f64>>> {
        self.rows.iter().map(|r| r.x.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let row = |t: u64| TraceRow {
            t,
            x: vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]],
            z: vec![0.5, 0.5],
            dout: vec![2, 1],
            s: vec![1, 2],
            regret: vec![t as f64 * 0.1, 0.0],
            regret_over_t: vec![0.1, 0.0],
            disagreement: 6.7,
        };
        Trace { n: 2, d: 2, rows: vec![row(1), row(2)] }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let trace = sample();
        let text = trace.to_csv_string();
        assert!(text.starts_with("t,x1_1,x1_2,z1,dout1,s1,regret1,regret_over_t1,x2_1,x2_2,z2,"));
        assert!(text.contains("0.3333333333333333"));
        assert_eq!(Trace::read_from(text.as_bytes()).unwrap(), trace);
    }

    #[test]
    fn malformed_traces_are_rejected() {
        let header_only = header(1, 1).join(",") + "\n";
        assert!(Trace::read_from(header_only.as_bytes()).is_err());
        assert!(Trace::read_from("a,b\n1,2\n".as_bytes()).is_err());
        let text = sample().to_csv_string().replace("6.7", "oops");
        assert!(Trace::read_from(text.as_bytes()).is_err());
    }
}
