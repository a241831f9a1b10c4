//! Artifact writers for tables and Wigner matrices.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use kostin::export::write_csv;
use kostin::wigner::WignerGrid;
use serde_json::json;

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `stem.csv` or `stem.json` and returns the file name.
pub fn write_table(dir: &Path, stem: &str, table: &Table, format: Format) -> io::Result<String> {
    match format {
        Format::Csv => {
            let name = format!("{stem}.csv");
            write_csv(create(dir, &name)?, &table.header, &table.rows)?;
            Ok(name)
        }
        Format::Json => {
            let name = format!("{stem}.json");
            let mut w = create(dir, &name)?;
            serde_json::to_writer(&mut w, &json!({ "columns": table.header, "rows": table.rows }))?;
            writeln!(w)?;
            w.flush()?;
            Ok(name)
        }
    }
}

/// Writes the Wigner matrix (and optionally the gnuplot form); returns the
/// file names.
pub fn write_wigner(dir: &Path, stem: &str, grid: &WignerGrid, format: Format, gnuplot: bool) -> io::Result<Vec<String>> {
    let mut names = Vec::new();
    match format {
        Format::Csv => {
            let name = format!("{stem}.csv");
            let mut w = create(dir, &name)?;
            grid.write_csv(&mut w)?;
            w.flush()?;
            names.push(name);
        }
        Format::Json => {
            let name = format!("{stem}.json");
            let rows: Vec<&[f64]> = (0..grid.x_axis.len()).map(|i| grid.row(i)).collect();
            let mut w = create(dir, &name)?;
            serde_json::to_writer(
                &mut w,
                &json!({ "t": grid.t, "x": grid.x_axis, "p": grid.p_axis, "f": rows }),
            )?;
            writeln!(w)?;
            w.flush()?;
            names.push(name);
        }
    }
    if gnuplot {
        let name = format!("{stem}.gnuplot.dat");
        let mut w = create(dir, &name)?;
        grid.write_gnuplot(&mut w)?;
        w.flush()?;
        names.push(name);
    }
    Ok(names)
}
