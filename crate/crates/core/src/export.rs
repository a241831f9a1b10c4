//! Plain-text table output shared by the CSV exporters.

use std::io::{self, Write};

/// Shortest round-trip decimal representation, switching to exponent form
/// for very small or very large magnitudes.
pub fn format_f64(x: f64) -> String {
    let ax = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&ax) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Writes a header row followed by numeric rows.
pub fn write_csv<W, I, R>(w: W, header: &[&str], rows: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row.as_ref().iter().map(|&v| format_f64(v)))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        for &x in &[0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-20, 6.02e23, -7.5e-9] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn writes_header_and_rows() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a", "b"], [[1.0, 0.5], [2.0, 1e-9]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,0.5\n2,1e-9\n");
    }
}
