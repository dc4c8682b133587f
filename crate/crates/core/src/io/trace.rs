//! Optimization trace CSV: iteration, total, e_am, e_sm, clusters,
//! exposure, density_factor, ms.

use crate::error::{Error, Result};
use crate::optimizer::TraceRecord;
use std::io::Read;
use std::path::Path;

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iteration,total,e_am,e_sm,clusters,exposure,density_factor,ms\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.iteration, r.total, r.e_am, r.e_sm, r.clusters, r.exposure, r.density_factor, r.ms
        ));
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    std::fs::write(path, trace_csv(trace))?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut text = String::new();
    std::fs::File::open(path)
        .map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?
        .read_to_string(&mut text)?;
    parse_trace_csv(&text)
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty trace CSV".into()))?;
    if header != "iteration,total,e_am,e_sm,clusters,exposure,density_factor,ms" {
        return Err(Error::Format(format!("unexpected trace header {header:?}")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Format(format!(
                "trace line {} holds {} fields, expected 8",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number {s:?} in trace")))
        };
        out.push(TraceRecord {
            iteration: fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad iteration {:?}", fields[0])))?,
            total: parse_f(fields[1])?,
            e_am: parse_f(fields[2])?,
            e_sm: parse_f(fields[3])?,
            clusters: fields[4]
                .parse()
                .map_err(|_| Error::Format(format!("bad cluster count {:?}", fields[4])))?,
            exposure: parse_f(fields[5])?,
            density_factor: parse_f(fields[6])?,
            ms: parse_f(fields[7])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let trace = vec![
            TraceRecord {
                iteration: 0,
                total: 123.456,
                e_am: 100.0,
                e_sm: 2.3456,
                clusters: 2,
                exposure: 1.5,
                density_factor: 1.0,
                ms: 0.0,
            },
            TraceRecord {
                iteration: 1,
                total: 99.5,
                e_am: 80.25,
                e_sm: 1.925,
                clusters: 4,
                exposure: 1.7,
                density_factor: 2.125,
                ms: 15.5,
            },
        ];
        let text = trace_csv(&trace);
        let parsed = parse_trace_csv(&text).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(parse_trace_csv("").is_err());
        assert!(parse_trace_csv("wrong,header\n").is_err());
        let bad = "iteration,total,e_am,e_sm,clusters,exposure,density_factor,ms\n1,2,3\n";
        assert!(parse_trace_csv(bad).is_err());
    }
}
