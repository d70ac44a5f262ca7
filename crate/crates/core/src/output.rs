//! CSV tables with a leading `#` metadata line.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::EigenvalueTrace;
use crate::propagator::{TransitionTable, LOG_OVERFLOW};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest round-trip representation; `nan`, `inf` and `-inf` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|x| num(*x)).collect());
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// `metadata` becomes the first line, prefixed with `# `.
    pub fn render(&self, metadata: &str) -> Result<String> {
        let mut out = String::new();
        for line in metadata.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    /// Parses a table, skipping `#` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let io = |e: csv::Error| Error::InvalidArgument(format!("malformed CSV: {e}"));
        let header = r.headers().map_err(io)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(io)?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }
}

/// Columns `from,to,p_tilde,p_normalized,log_p_tilde`, one-based levels.
pub fn transition_csv(table: &TransitionTable) -> CsvTable {
    let mut t = CsvTable::new(&["from", "to", "p_tilde", "p_normalized", "log_p_tilde"]);
    let n = table.dim();
    for from in 0..n {
        for to in 0..n {
            let lp = table.log_unnormalized()[to][from];
            let p = if lp > LOG_OVERFLOW { f64::INFINITY } else { lp.exp() };
            t.push(vec![
                (from + 1).to_string(),
                (to + 1).to_string(),
                num(p),
                num(table.normalized()[to][from]),
                num(lp),
            ]);
        }
    }
    t
}

/// Columns `t, re_1, im_1, ..., re_N, im_N`.
pub fn trace_csv(trace: &EigenvalueTrace) -> CsvTable {
    let n = trace.eigenvalues.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    for k in 1..=n {
        header.push(format!("re_{k}"));
        header.push(format!("im_{k}"));
    }
    let mut t = CsvTable {
        header,
        rows: Vec::new(),
    };
    for (time, ev) in trace.times.iter().zip(&trace.eigenvalues) {
        let mut row = vec![num(*time)];
        for z in ev {
            row.push(num(z.re));
            row.push(num(z.im));
        }
        t.push(row);
    }
    t
}

/// Reads `log_p_tilde` entries of a transition CSV back into a table
/// indexed `[to][from]`.
pub fn read_log_table(csv: &CsvTable) -> Result<Vec<Vec<f64>>> {
    let col = |name: &str| {
        csv.column_index(name)
            .ok_or_else(|| Error::InvalidArgument(format!("table has no {name:?} column")))
    };
    let (cf, ct, cl) = (col("from")?, col("to")?, col("log_p_tilde")?);
    let parse_idx = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::InvalidArgument(format!("bad level index {s:?}")))
    };
    let mut entries = Vec::new();
    let mut n = 0;
    for r in &csv.rows {
        let (f, t) = (parse_idx(&r[cf])?, parse_idx(&r[ct])?);
        let l: f64 = r[cl]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad log_p_tilde {:?}", r[cl])))?;
        n = n.max(f).max(t);
        entries.push((f - 1, t - 1, l));
    }
    if n == 0 || entries.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "expected a full square table, got {} entries",
            entries.len()
        )));
    }
    let mut out = vec![vec![f64::NAN; n]; n];
    for (f, t, l) in entries {
        out[t][f] = l;
    }
    if out.iter().flatten().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("table has duplicate or missing entries".into()));
    }
    Ok(out)
}
