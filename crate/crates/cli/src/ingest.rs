//! CSV input: header `id,x[,k]` with optional truth columns `is_null,lambda`.
//! Unknown columns are ignored, so estimate output can be read back.

use std::path::Path;

use chisq_eb::mtest::{Battery, Record, Truth};
use chisq_eb::Df;

use crate::fail::{Failure, Outcome};

struct Columns {
    id: usize,
    x: usize,
    k: Option<usize>,
    truth: Option<(usize, usize)>,
}

fn columns(headers: &csv::StringRecord) -> Outcome<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let need = |name: &str| find(name).ok_or_else(|| Failure::data(format!("missing required column {name:?}")));
    let truth = match (find("is_null"), find("lambda")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(Failure::data("truth columns is_null and lambda must appear together")),
    };
    Ok(Columns { id: need("id")?, x: need("x")?, k: find("k"), truth })
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

fn parse_f64(s: &str, what: &str, line: u64) -> Outcome<f64> {
    s.trim().parse().map_err(|_| Failure::data(format!("line {line}: cannot parse {what} from {s:?}")))
}

/// Reads a battery. Rows without a `k` value take `default_k`.
pub fn ingest_reader<R: std::io::Read>(reader: R, default_k: Option<f64>) -> Outcome<Battery> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = columns(rdr.headers()?)?;
    if cols.k.is_none() && default_k.is_none() {
        return Err(Failure::config("input has no k column and no --k was given"));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let id = field(cols.id).to_string();
        if id.is_empty() {
            return Err(Failure::data(format!("line {line}: empty id")));
        }
        let x = parse_f64(field(cols.x), "x", line)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(Failure::data(format!("line {line}: x must be positive and finite, got {x}")));
        }
        let k = match cols.k.map(field).filter(|s| !s.is_empty()) {
            Some(s) => parse_f64(s, "k", line)?,
            None => default_k.ok_or_else(|| Failure::config(format!("line {line}: no k value and no --k was given")))?,
        };
        Df::positive(k).map_err(|e| Failure::from(e).context(format!("line {line}")))?;
        let truth = match cols.truth {
            Some((a, b)) => {
                let is_null = parse_bool(field(a))
                    .ok_or_else(|| Failure::data(format!("line {line}: cannot parse is_null from {:?}", field(a))))?;
                let lambda = parse_f64(field(b), "lambda", line)?;
                Some(Truth { is_null, lambda })
            }
            None => None,
        };
        records.push(Record { id, x, k, truth });
    }
    if records.is_empty() {
        return Err(Failure::data("input has no data rows"));
    }
    Ok(Battery::new(records)?)
}

pub fn ingest(path: &Path, default_k: Option<f64>) -> Outcome<Battery> {
    let file = std::fs::File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    ingest_reader(file, default_k).map_err(|f| f.context(path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fail::{EXIT_CONFIG, EXIT_DATA};

    fn read(s: &str, k: Option<f64>) -> Outcome<Battery> {
        ingest_reader(s.as_bytes(), k)
    }

    #[test]
    fn two_valid_rows() {
        let b = read("id,x,k\na,3.5,7\nb,20,7\n", None).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.records()[1].x, 20.0);
    }

    #[test]
    fn negative_x_names_the_line() {
        let e = read("id,x\na,3\nb,-1\n", Some(7.0)).unwrap_err();
        assert_eq!(e.code, EXIT_DATA);
        assert!(e.message.contains("line 3"), "{}", e.message);
    }

    #[test]
    fn missing_k_everywhere_is_a_config_error() {
        let e = read("id,x\na,3\n", None).unwrap_err();
        assert_eq!(e.code, EXIT_CONFIG);
    }

    #[test]
    fn blank_k_falls_back_to_flag() {
        let b = read("id,x,k\na,3,\nb,4,5\n", Some(7.0)).unwrap();
        assert_eq!(b.records()[0].k, 7.0);
        assert_eq!(b.records()[1].k, 5.0);
    }

    #[test]
    fn truth_columns_and_extra_columns() {
        let b = read("id,x,k,mean,is_null,lambda\na,3,7,0.5,true,0\nb,30,7,20,0,25\n", None).unwrap();
        assert!(b.has_truth());
        assert!(b.records()[0].truth.unwrap().is_null);
        assert_eq!(b.records()[1].truth.unwrap().lambda, 25.0);
    }

    #[test]
    fn unparseable_x_and_duplicate_ids() {
        assert!(read("id,x\na,abc\n", Some(7.0)).unwrap_err().message.contains("line 2"));
        assert!(read("id,x\na,1\na,2\n", Some(7.0)).is_err());
        assert!(read("id,x\n", Some(7.0)).is_err());
    }
}
