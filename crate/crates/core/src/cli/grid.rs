use std::str::FromStr;

use serde::{Serialize, Serializer};

/// Mass-ratio grid `lo:hi:log:n` or `lo:hi:lin:n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MuGrid {
    pub spec: String,
    pub values: Vec<f64>,
}

impl FromStr for MuGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, kind, n] = parts[..] else {
            return Err(format!("grid `{s}` must have the form lo:hi:log:n or lo:hi:lin:n"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("bad grid bound `{v}`: {e}"));
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n: usize = n.trim().parse().map_err(|e| format!("bad grid count `{n}`: {e}"))?;
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(format!("grid bounds must be positive and finite, got {lo}:{hi}"));
        }
        if n == 0 || (n == 1 && lo != hi) || (n > 1 && !(hi > lo)) {
            return Err(format!("grid `{s}` must be strictly increasing (lo < hi, n ≥ 2) or a single point"));
        }
        let t = |k: usize| if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        let values: Vec<f64> = match kind {
            "log" => (0..n).map(|k| (lo.ln() + t(k) * (hi / lo).ln()).exp()).collect(),
            "lin" => (0..n).map(|k| lo + t(k) * (hi - lo)).collect(),
            other => return Err(format!("grid spacing `{other}` must be `log` or `lin`")),
        };
        let mut values = values;
        // land exactly on the endpoints
        values[0] = lo;
        values[n - 1] = hi;
        Ok(Self {
            spec: s.to_string(),
            values,
        })
    }
}

impl Serialize for MuGrid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.spec)
    }
}
