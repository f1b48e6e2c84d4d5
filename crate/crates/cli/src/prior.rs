//! Prior specifications on the command line: `null`, `degenerate:L`,
//! `gamma:SHAPE,SCALE`, `exponential:RATE`, `mixture:PI0:<prior>`, or JSON.

use chisq_eb::PriorSpec;

use crate::fail::{Failure, Outcome};

fn numbers(s: &str, n: usize, form: &str) -> Outcome<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::config(format!("cannot parse prior parameters {s:?}, expected {form}")))?;
    if v.len() != n {
        return Err(Failure::config(format!("expected {form}, got {s:?}")));
    }
    Ok(v)
}

pub fn parse_prior(s: &str) -> Outcome<PriorSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        let p: PriorSpec = serde_json::from_str(s).map_err(|e| Failure::config(format!("prior JSON: {e}")))?;
        p.validate()?;
        return Ok(p);
    }
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let p = match name.to_ascii_lowercase().as_str() {
        "null" => PriorSpec::null(),
        "degenerate" => PriorSpec::degenerate(numbers(rest, 1, "degenerate:LAMBDA")?[0])?,
        "exponential" => PriorSpec::exponential(numbers(rest, 1, "exponential:RATE")?[0])?,
        "gamma" => {
            let v = numbers(rest, 2, "gamma:SHAPE,SCALE")?;
            PriorSpec::gamma(v[0], v[1])?
        }
        "mixture" => {
            let (pi0, base) = rest
                .split_once(':')
                .ok_or_else(|| Failure::config("expected mixture:PI0:<prior>"))?;
            PriorSpec::point_mass_mixture(numbers(pi0, 1, "mixture:PI0:<prior>")?[0], parse_prior(base)?)?
        }
        other => return Err(Failure::config(format!("unknown prior {other:?}"))),
    };
    Ok(p)
}
