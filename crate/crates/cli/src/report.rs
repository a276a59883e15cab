use std::fmt::Write as _;

use inertia_core::placement::MetricBundle;
use serde::Serialize;

/// One scenario of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    /// Smallest damping ratio in percent.
    pub zeta_min_pct: f64,
    pub r_inf_mhz_s: f64,
    pub s_inf_mhz: f64,
    pub total_inertia: f64,
    pub total_damping: f64,
    /// Means over all (output, disturbance) pairs.
    pub r1_mhz_s: f64,
    pub s1_mhz: f64,
}

impl ReportRow {
    pub fn from_bundle(label: impl Into<String>, b: &MetricBundle) -> Self {
        ReportRow {
            label: label.into(),
            zeta_min_pct: 100.0 * b.zeta_min,
            r_inf_mhz_s: 1e3 * b.r_inf,
            s_inf_mhz: 1e3 * b.s_inf,
            total_inertia: b.gains.devices.iter().map(|g| g.inertia).sum(),
            total_damping: b.gains.devices.iter().map(|g| g.damping).sum(),
            r1_mhz_s: 1e3 * b.r1,
            s1_mhz: 1e3 * b.s1,
        }
    }

    fn cells(&self) -> [f64; 7] {
        [
            self.zeta_min_pct,
            self.r_inf_mhz_s,
            self.s_inf_mhz,
            self.total_inertia,
            self.total_damping,
            self.r1_mhz_s,
            self.s1_mhz,
        ]
    }
}

pub const HEADER: [&str; 8] =
    ["scenario", "zeta_min_pct", "r_inf_mhz_s", "s_inf_mhz", "sum_inertia", "sum_damping", "r1_mhz_s", "s1_mhz"];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_field(&r.label));
            for v in r.cells() {
                out.push(',');
                out.push_str(&sig6(v));
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width table for the terminal.
    pub fn to_text(&self) -> String {
        let titles = ["scenario", "ζmin %", "R∞ mHz/s", "S∞ mHz", "ΣM̃", "ΣK̃", "R1 mHz/s", "S1 mHz"];
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| std::iter::once(r.label.clone()).chain(r.cells().iter().map(|&v| sig6(v))).collect())
            .collect();
        let widths: Vec<usize> = (0..titles.len())
            .map(|c| {
                cells.iter().map(|row| row[c].chars().count()).chain([titles[c].chars().count()]).max().unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            for (c, cell) in row.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    let _ = write!(out, "{cell}{}", " ".repeat(pad));
                } else {
                    let _ = write!(out, "  {}{cell}", " ".repeat(pad));
                }
            }
            out.push('\n');
        };
        line(&mut out, &titles.map(String::from));
        for row in &cells {
            line(&mut out, row);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-4..6).contains(&exp) { format!("{:.*}", (5 - exp).max(0) as usize, x) } else { format!("{:.5e}", x) };
    trim_zeros(&s)
}

fn trim_zeros(s: &str) -> String {
    let (mantissa, exp) = match s.find('e') {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    };
    let mantissa = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
    format!("{mantissa}{exp}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(193.456789), "193.457");
        assert_eq!(sig6(0.186), "0.186");
        assert_eq!(sig6(-12.5), "-12.5");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(0.0000123456789), "1.23457e-5");
        assert_eq!(sig6(99999.95), "99999.9");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut t = ReportTable::default();
        t.push(ReportRow {
            label: "a,b".into(),
            zeta_min_pct: 18.6,
            r_inf_mhz_s: 193.0,
            s_inf_mhz: 50.0,
            total_inertia: 1.0,
            total_damping: 2.0,
            r1_mhz_s: 100.0,
            s1_mhz: 40.0,
        });
        let csv = t.to_csv();
        assert_eq!(csv.lines().next().unwrap(), HEADER.join(","));
        assert_eq!(csv.lines().nth(1).unwrap(), "\"a,b\",18.6,193,50,1,2,100,40");
        assert_eq!(t.to_text().lines().count(), 2);
    }
}
