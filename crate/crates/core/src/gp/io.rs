use std::path::Path;

use super::{Dataset, Hyperparams};
use crate::error::{Error, Result};
use crate::textio::{fmt_f64, fmt_list, parse_list, write_text, KeyValues};

pub fn write_hyperparams(path: &Path, h: &Hyperparams) -> Result<()> {
    let mut kv = KeyValues::new();
    kv.set("dim", h.dim())
        .set_f64("signal_std", h.signal_std)
        .set("lengthscales", fmt_list(&h.lengthscales))
        .set_f64("noise_std", h.noise_std)
        .set("mean_slope", fmt_list(&h.mean_slope))
        .set_f64("mean_offset", h.mean_offset);
    kv.write(path)
}

pub fn read_hyperparams(path: &Path) -> Result<Hyperparams> {
    let kv = KeyValues::read(path)?;
    let dim: usize = kv
        .require("dim")?
        .parse()
        .map_err(|_| Error::arg("dim must be an integer"))?;
    let h = Hyperparams::new(
        kv.require_f64("signal_std")?,
        parse_list(kv.require("lengthscales")?, "lengthscales")?,
        kv.require_f64("noise_std")?,
        parse_list(kv.require("mean_slope")?, "mean_slope")?,
        kv.require_f64("mean_offset")?,
    )?;
    if h.dim() != dim {
        return Err(Error::arg(format!("dim = {dim} but {} lengthscales", h.dim())));
    }
    Ok(h)
}

/// `d` feature columns `x1..xd` followed by the label column `y`.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut s = String::new();
    let header: Vec<String> = (1..=data.dim()).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for (x, y) in data.rows().zip(data.labels()) {
        let cells: Vec<String> = x.iter().chain(std::iter::once(y)).map(|v| fmt_f64(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::arg(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::arg(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::arg("dataset needs at least one feature column and a label"));
    }
    let dim = headers.len() - 1;
    let mut data = Dataset::empty(dim);
    let mut row = vec![0.0; dim];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: r + 2,
            column: String::new(),
            message: e.to_string(),
        })?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: r + 2,
                    column: headers[c].to_string(),
                    message: format!("bad value {:?}", rec.get(c).unwrap_or("")),
                })
        };
        for (c, v) in row.iter_mut().enumerate() {
            *v = parse(c)?;
        }
        let y = parse(dim)?;
        data.push(&row, y);
    }
    Ok(data)
}
