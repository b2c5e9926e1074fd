use std::io::Write;

use crate::error::{Error, Result};

use super::field_file::Field;

/// Column names: coordinates `x0..`, then `f` for scalars, `v0..` for
/// vectors and row-major `u00, u01, ..` for matrices.
pub fn csv_columns(field: &Field) -> Vec<String> {
    let d = field.grid().dim();
    let mut cols: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    match field {
        Field::Scalar(_) => cols.push("f".into()),
        Field::Vector(_) => cols.extend((0..d).map(|a| format!("v{a}"))),
        Field::Matrix(_) => cols.extend((0..d * d).map(|k| format!("u{}{}", k / d, k % d))),
    }
    cols
}

/// One row per node with coordinates then components, 17 significant
/// digits, so values parse back to the stored bits.
pub fn write_csv(field: &Field, out: &mut impl Write) -> Result<()> {
    let grid = field.grid();
    if grid.is_empty() {
        return Err(Error::Format("empty field".into()));
    }
    let comps = field.components();
    writeln!(out, "{}", csv_columns(field).join(","))?;
    let mut x = vec![0.0; grid.dim()];
    let mut line = String::new();
    for n in 0..grid.len() {
        grid.coords_into(n, &mut x);
        line.clear();
        for v in x.iter().chain(comps.iter().map(|c| &c[n])) {
            if !line.is_empty() {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{MatrixField, TorusGrid};

    #[test]
    fn matrix_export_round_trips() {
        let g = TorusGrid::new(vec![8, 10]).unwrap();
        let comps: Vec<Vec<f64>> = (0..4).map(|k| (0..80).map(|n| (n as f64 + 0.1 * k as f64).sin() / 3.0).collect()).collect();
        let f = Field::Matrix(MatrixField::from_components(&g, comps.clone()).unwrap());
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,u00,u01,u10,u11");
        for (n, l) in lines.enumerate() {
            let vals: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            for k in 0..4 {
                assert_eq!(vals[2 + k].to_bits(), comps[k][n].to_bits());
            }
        }
    }
}
