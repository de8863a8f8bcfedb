use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::metrics::RunTrace;

use super::{CellSummary, FieldSnapshot};

pub const TRACE_HEADER: &str =
    "t,e2_norm,cost,alpha_hat,beta_hat,gamma_hat,err2_alpha,err2_beta,err2_gamma";
pub const SUMMARY_HEADER: &str =
    "axis_value,run_id,tail_e2_mean,tail_e2_std,final_err2_alpha,final_err2_beta,final_err2_gamma,status";
pub const FIELD_HEADER: &str = "t,x,u,v,err";

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn push_row(line: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&fmt_f64(*v));
    }
    line.push('\n');
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    let mut line = String::new();
    for i in 0..trace.len() {
        line.clear();
        let th = trace.theta_hat[i];
        let e = trace.param_sq_err[i];
        push_row(
            &mut line,
            &[
                trace.times[i],
                trace.normalized_mse[i],
                trace.cost[i],
                th.alpha,
                th.beta,
                th.gamma,
                e[0],
                e[1],
                e[2],
            ],
        );
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[CellSummary]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        let mut line = String::new();
        if let Some(v) = r.axis_value {
            line.push_str(&fmt_f64(v));
        }
        let _ = write!(line, ",{},", r.run_id);
        push_row(
            &mut line,
            &[
                r.tail_e2_mean,
                r.tail_e2_std,
                r.final_err2[0],
                r.final_err2[1],
                r.final_err2[2],
            ],
        );
        line.pop();
        let _ = writeln!(line, ",{}", r.status.name());
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field(path: &Path, grid: &[f64], snaps: &[FieldSnapshot]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{FIELD_HEADER}")?;
    let mut line = String::new();
    for s in snaps {
        for (j, x) in grid.iter().enumerate() {
            line.clear();
            push_row(&mut line, &[s.t, *x, s.u[j], s.v[j], s.u[j] - s.v[j]]);
            w.write_all(line.as_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_roundtrips() {
        for v in [0.0, 1.0, -0.05, 1e-30, 123456.789, 2.5e-5, 1e20, f64::MIN_POSITIVE, 0.1 + 0.2] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(0.005), "0.005");
        assert_eq!(fmt_f64(1e-30), "1e-30");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }
}
