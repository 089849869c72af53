//! Per-iteration training metrics and their CSV form.

use std::io::Write;

use crate::error::{Error, Result};

pub const SCHEMA_LINE: &str = "# schema=1";
pub const HEADER: &str = "iter,env_steps,success_rate,mean_ep_len,mean_r_task,mean_r_reg,mean_r_safety,loss_surrogate,loss_v1,loss_v2,loss_v3,approx_kl,lr,max_joint_acc";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub iter: usize,
    pub env_steps: u64,
    /// Over the most recent finished episodes (rolling window).
    pub success_rate: f64,
    pub mean_ep_len: f64,
    pub mean_r_task: f64,
    pub mean_r_reg: f64,
    pub mean_r_safety: f64,
    pub loss_surrogate: f64,
    pub loss_v1: f64,
    pub loss_v2: f64,
    pub loss_v3: f64,
    pub approx_kl: f64,
    pub lr: f64,
    /// Mean over collected steps of the largest joint acceleration.
    pub max_joint_acc: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.env_steps,
            self.success_rate,
            self.mean_ep_len,
            self.mean_r_task,
            self.mean_r_reg,
            self.mean_r_safety,
            self.loss_surrogate,
            self.loss_v1,
            self.loss_v2,
            self.loss_v3,
            self.approx_kl,
            self.lr,
            self.max_joint_acc
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 14 {
            return Err(Error::schema(format!("line {lineno}"), format!("expected 14 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>().map_err(|_| Error::schema(format!("line {lineno}"), format!("field {} is not a number: `{}`", i + 1, f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse::<u64>().map_err(|_| Error::schema(format!("line {lineno}"), format!("field {} is not an integer: `{}`", i + 1, f[i])))
        };
        Ok(MetricsRow {
            iter: int(0)? as usize,
            env_steps: int(1)?,
            success_rate: num(2)?,
            mean_ep_len: num(3)?,
            mean_r_task: num(4)?,
            mean_r_reg: num(5)?,
            mean_r_safety: num(6)?,
            loss_surrogate: num(7)?,
            loss_v1: num(8)?,
            loss_v2: num(9)?,
            loss_v3: num(10)?,
            approx_kl: num(11)?,
            lr: num(12)?,
            max_joint_acc: num(13)?,
        })
    }
}

/// Writes the schema line and header.
pub fn write_header<W: Write>(w: &mut W) -> Result<()> {
    writeln!(w, "{SCHEMA_LINE}")?;
    writeln!(w, "{HEADER}")?;
    Ok(())
}

pub fn write_row<W: Write>(w: &mut W, row: &MetricsRow) -> Result<()> {
    writeln!(w, "{}", row.to_csv())?;
    Ok(())
}

/// Parses a metrics file. Errors name the 1-based line.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == SCHEMA_LINE => {}
        Some((i, l)) => return Err(Error::schema(format!("line {}", i + 1), format!("expected `{SCHEMA_LINE}`, found `{l}`"))),
        None => return Err(Error::schema("line 1", "empty metrics file")),
    }
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        Some((i, _)) => return Err(Error::schema(format!("line {}", i + 1), "unexpected header")),
        None => return Err(Error::schema("line 2", "missing header")),
    }
    lines.map(|(i, l)| MetricsRow::parse(l, i + 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let row = MetricsRow { iter: 3, env_steps: 96, success_rate: 0.25, lr: 1.5e-4, approx_kl: 1e-3 / 3.0, ..Default::default() };
        let mut out = Vec::new();
        write_header(&mut out).unwrap();
        write_row(&mut out, &row).unwrap();
        let parsed = parse_metrics(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(parsed, vec![row]);
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = format!("{SCHEMA_LINE}\n{HEADER}\n1,2,3\n");
        let err = parse_metrics(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = format!("{SCHEMA_LINE}\n{HEADER}\n{}\n", "x,".repeat(13) + "x");
        assert!(parse_metrics(&text).unwrap_err().to_string().contains("line 3"));
    }
}
