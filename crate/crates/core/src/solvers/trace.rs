use std::io::{self, Write};

/// Columns written to trace files.
pub const TRACE_HEADER: &str = "iter,dual,primal,r_primal,r_dual,eta,oracle_calls";

/// One solver iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Latest evaluated dual objective.
    pub dual: f64,
    /// Value of the assignment rounded from this iteration's marginals.
    pub primal: f64,
    pub r_primal: f64,
    pub r_dual: f64,
    pub eta: f64,
    /// Subproblem solves so far.
    pub oracle_calls: usize,
    /// Largest `|sum_a lambda_ia|` after the iteration. Not written to CSV.
    pub lambda_imbalance: f64,
}

impl TraceRow {
    /// Equality of everything except the work counter.
    pub fn same_iterate(&self, other: &TraceRow) -> bool {
        self.iter == other.iter
            && self.dual.to_bits() == other.dual.to_bits()
            && self.primal.to_bits() == other.primal.to_bits()
            && self.r_primal.to_bits() == other.r_primal.to_bits()
            && self.r_dual.to_bits() == other.r_dual.to_bits()
            && self.eta.to_bits() == other.eta.to_bits()
            && self.lambda_imbalance.to_bits() == other.lambda_imbalance.to_bits()
    }
}

/// Formats like C's `%.12g`.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            format_g12(r.dual),
            format_g12(r.primal),
            format_g12(r.r_primal),
            format_g12(r.r_dual),
            format_g12(r.eta),
            r.oracle_calls
        )?;
    }
    Ok(())
}
