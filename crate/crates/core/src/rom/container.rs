//! Container layout: a text header
//!
//! ```text
//! weighted-rb reduced-model 1
//! <name> <rows> <cols>
//! ...
//! end
//! ```
//!
//! followed by every matrix in header order, column-major, as little-endian
//! `f64`. The optional `basis.*` entries carry FE-dimension data for offline
//! tools and are skipped by the online loader.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rom::basis::ReducedBasis;
use crate::rom::operators::{DualBlocks, ReducedOperators};
use crate::rom::riesz::{RieszData, RieszFactor};
use crate::rom::ReducedModel;
use crate::solvers::ThetaMap;
use crate::stochastics::DensityModel;

const MAGIC: &str = "weighted-rb reduced-model 1";
const PRIMAL_BASIS: &str = "basis.primal";
const DUAL_BASIS: &str = "basis.dual";

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn entries(rom: &ReducedModel) -> Vec<(String, DMatrix<f64>)> {
    let ops = &rom.ops;
    let d = &ops.density;
    let mut out = vec![
        ("theta.sqrt_lambda".to_string(), row(&ops.theta.sqrt_lambda)),
        ("time".into(), row(&[ops.dt, ops.steps as f64, ops.alpha_bar])),
        (
            "density".into(),
            row(&[
                d.uniform_half_width,
                d.beta_support.0,
                d.beta_support.1,
                d.beta_shape.0,
                d.beta_shape.1,
            ]),
        ),
        ("primal.mass".into(), ops.mass.clone()),
        ("primal.output".into(), col(&ops.output)),
    ];
    out.extend(
        ops.a
            .iter()
            .enumerate()
            .map(|(q, m)| (format!("primal.a.{q}"), m.clone())),
    );
    out.extend(
        ops.load
            .iter()
            .enumerate()
            .map(|(q, v)| (format!("primal.load.{q}"), col(v))),
    );
    out.push(("riesz.primal".into(), rom.riesz.primal.matrix().clone()));
    if let Some(b) = &ops.dual {
        out.push(("dual.mass".into(), b.mass.clone()));
        out.push(("dual.output".into(), col(&b.output)));
        out.push(("dual.cross_mass".into(), b.cross_mass.clone()));
        out.extend(b.a.iter().enumerate().map(|(q, m)| (format!("dual.a.{q}"), m.clone())));
        out.extend(
            b.cross_a
                .iter()
                .enumerate()
                .map(|(q, m)| (format!("dual.cross_a.{q}"), m.clone())),
        );
        out.extend(
            b.load
                .iter()
                .enumerate()
                .map(|(q, v)| (format!("dual.load.{q}"), col(v))),
        );
    }
    if let Some(r) = &rom.riesz.dual {
        out.push(("riesz.dual".into(), r.matrix().clone()));
    }
    out.push(("riesz.final_condition".into(), row(&rom.riesz.final_condition)));
    out
}

pub(crate) fn write<W: Write>(
    rom: &ReducedModel,
    bases: Option<(&ReducedBasis, Option<&ReducedBasis>)>,
    mut w: W,
) -> Result<()> {
    let mut entries = entries(rom);
    if let Some((primal, dual)) = bases {
        entries.push((PRIMAL_BASIS.into(), primal.vectors().clone()));
        if let Some(d) = dual {
            entries.push((DUAL_BASIS.into(), d.vectors().clone()));
        }
    }
    let mut header = format!("{MAGIC}\n");
    for (name, m) in &entries {
        header.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
    }
    header.push_str("end\n");
    w.write_all(header.as_bytes())?;
    for (_, m) in &entries {
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Header entries `(name, rows, cols)` in payload order.
fn read_header<R: BufRead>(r: &mut R) -> Result<Vec<(String, usize, usize)>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Format("not a reduced-model container".into()));
    }
    let mut out = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("header terminator not found".into()));
        }
        let text = line.trim_end();
        if text == "end" {
            return Ok(out);
        }
        let parts: Vec<&str> = text.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(Error::Format(format!("bad header line `{text}`")));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape in `{text}`")))
        };
        out.push((name.to_string(), parse(rows)?, parse(cols)?));
    }
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("payload truncated".into()))?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_column_slice(rows, cols, &data))
}

fn ensure_consumed<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(())
}

/// Reads the bases stored next to a reduced model (offline use).
pub(crate) fn read_bases<R: BufRead>(mut r: R) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let header = read_header(&mut r)?;
    let (mut primal, mut dual) = (None, None);
    for (name, rows, cols) in header {
        let m = read_matrix(&mut r, rows, cols)?;
        match name.as_str() {
            PRIMAL_BASIS => primal = Some(m),
            DUAL_BASIS => dual = Some(m),
            _ => {}
        }
    }
    ensure_consumed(&mut r)?;
    Ok((
        primal.ok_or_else(|| Error::Format("container holds no basis".into()))?,
        dual,
    ))
}

struct Entries(HashMap<String, DMatrix<f64>>);

impl Entries {
    fn take(&mut self, name: &str) -> Result<DMatrix<f64>> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing entry {name}")))
    }

    fn take_vec(&mut self, name: &str) -> Result<DVector<f64>> {
        let m = self.take(name)?;
        if m.ncols() != 1 && m.nrows() > 0 {
            return Err(Error::Format(format!("{name} is not a column")));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    fn take_row(&mut self, name: &str, len: Option<usize>) -> Result<Vec<f64>> {
        let m = self.take(name)?;
        if m.nrows() > 1 || len.is_some_and(|l| m.len() != l) {
            return Err(Error::Format(format!("{name} has shape {:?}", m.shape())));
        }
        Ok(m.as_slice().to_vec())
    }

    fn take_indexed(&mut self, prefix: &str, count: usize) -> Result<Vec<DMatrix<f64>>> {
        (0..count).map(|q| self.take(&format!("{prefix}.{q}"))).collect()
    }
}

/// Reads the online data; stored bases are skipped without being loaded.
pub(crate) fn read<R: BufRead>(mut r: R) -> Result<ReducedModel> {
    let header = read_header(&mut r)?;
    let mut map = HashMap::new();
    for (name, rows, cols) in header {
        if name == PRIMAL_BASIS || name == DUAL_BASIS {
            let len = (rows * cols * 8) as u64;
            if std::io::copy(&mut (&mut r).take(len), &mut std::io::sink())? != len {
                return Err(Error::Format("payload truncated".into()));
            }
            continue;
        }
        let m = read_matrix(&mut r, rows, cols)?;
        map.insert(name, m);
    }
    ensure_consumed(&mut r)?;
    let mut e = Entries(map);

    let sqrt_lambda = e.take_row("theta.sqrt_lambda", None)?;
    let theta = ThetaMap { sqrt_lambda };
    let (qa, qb) = (theta.num_a(), theta.num_b());
    let time = e.take_row("time", Some(3))?;
    let d = e.take_row("density", Some(5))?;
    let density = DensityModel {
        uniform_half_width: d[0],
        beta_support: (d[1], d[2]),
        beta_shape: (d[3], d[4]),
    };
    let dual = if e.0.contains_key("dual.mass") {
        Some(DualBlocks {
            mass: e.take("dual.mass")?,
            output: e.take_vec("dual.output")?,
            cross_mass: e.take("dual.cross_mass")?,
            a: e.take_indexed("dual.a", qa)?,
            cross_a: e.take_indexed("dual.cross_a", qa)?,
            load: e
                .take_indexed("dual.load", qb)?
                .into_iter()
                .map(|m| DVector::from_column_slice(m.as_slice()))
                .collect(),
        })
    } else {
        None
    };
    let ops = ReducedOperators {
        theta,
        density,
        dt: time[0],
        steps: time[1] as usize,
        alpha_bar: time[2],
        mass: e.take("primal.mass")?,
        output: e.take_vec("primal.output")?,
        a: e.take_indexed("primal.a", qa)?,
        load: e
            .take_indexed("primal.load", qb)?
            .into_iter()
            .map(|m| DVector::from_column_slice(m.as_slice()))
            .collect(),
        dual,
    };
    let riesz = RieszData {
        primal: RieszFactor::from_matrix(e.take("riesz.primal")?),
        dual: match e.0.contains_key("riesz.dual") {
            true => Some(RieszFactor::from_matrix(e.take("riesz.dual")?)),
            false => None,
        },
        final_condition: e.take_row("riesz.final_condition", None)?,
    };
    if let Some(name) = e.0.keys().next() {
        return Err(Error::Format(format!("unexpected entry {name}")));
    }
    let n = ops.num_primal();
    if ops.a.iter().any(|m| m.shape() != (n, n)) || ops.output.len() != n {
        return Err(Error::Format("inconsistent primal block shapes".into()));
    }
    if riesz.primal.ncols() != qb + n * (qa + 1) {
        return Err(Error::Format("residual factor does not match the basis size".into()));
    }
    Ok(ReducedModel { ops, riesz })
}
