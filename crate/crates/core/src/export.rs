//! CSV writers for every result shape the tool emits, plus the one reader
//! needed to feed population vectors back in. Writers emit a header row and
//! data only; callers own any leading comment lines.

use std::io::{self, BufRead, Write};

use crate::dynamics::TimeSeries;
use crate::ensembles::FactorizedSample;
use crate::spectra::Spectrum;
use crate::states::{DensityMatrix, PopulationSet};
use crate::thermo::StateFunction;
use crate::{Error, Result};

fn fmt(x: f64) -> String {
    // round-trippable without drowning the file in digits
    format!("{x:.17e}")
}

pub fn write_spectrum_csv<W: Write>(w: &mut W, spectrum: &Spectrum) -> io::Result<()> {
    writeln!(w, "index,energy,degeneracy_group")?;
    let group_of = spectrum.degeneracy_groups();
    for (i, e) in spectrum.energies().iter().enumerate() {
        writeln!(w, "{i},{},{}", fmt(*e), group_of[i])?;
    }
    Ok(())
}

pub fn write_density_csv<W: Write>(w: &mut W, rho: &DensityMatrix) -> io::Result<()> {
    writeln!(w, "row,col,re,im")?;
    let m = rho.matrix();
    for i in 0..rho.dim() {
        for j in 0..rho.dim() {
            writeln!(w, "{i},{j},{},{}", fmt(m[(i, j)].re), fmt(m[(i, j)].im))?;
        }
    }
    Ok(())
}

pub fn write_populations_csv<W: Write>(w: &mut W, p: &PopulationSet) -> io::Result<()> {
    writeln!(w, "index,population")?;
    for (i, x) in p.iter().enumerate() {
        writeln!(w, "{i},{}", fmt(*x))?;
    }
    Ok(())
}

/// One sample per row, `p_1..p_n` columns.
pub fn write_samples_csv<W: Write>(w: &mut W, samples: &[PopulationSet]) -> io::Result<()> {
    let n = samples.first().map_or(0, |s| s.len());
    let header: Vec<String> = (1..=n).map(|k| format!("p_{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for s in samples {
        let row: Vec<String> = s.iter().map(|x| fmt(*x)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Factorized draws keep their residual diagnostics alongside the raw
/// populations.
pub fn write_factorized_samples_csv<W: Write>(
    w: &mut W,
    samples: &[FactorizedSample],
) -> io::Result<()> {
    let n = samples.first().map_or(0, |s| s.populations.len());
    let mut header: Vec<String> = (1..=n).map(|k| format!("p_{k}")).collect();
    header.push("norm_residual".into());
    header.push("energy_residual".into());
    writeln!(w, "{}", header.join(","))?;
    for s in samples {
        let mut row: Vec<String> = s.populations.iter().map(|x| fmt(*x)).collect();
        row.push(fmt(s.norm_residual));
        row.push(s.energy_residual.map_or_else(String::new, fmt));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_timeseries_csv<W: Write>(w: &mut W, series: &TimeSeries) -> io::Result<()> {
    writeln!(w, "t,value")?;
    for (t, v) in series.times.iter().zip(&series.values) {
        writeln!(w, "{},{}", fmt(*t), fmt(*v))?;
    }
    Ok(())
}

/// Several aligned series over one time grid, e.g. an observable and its
/// running average.
pub fn write_multi_timeseries_csv<W: Write>(
    w: &mut W,
    times: &[f64],
    columns: &[(&str, &[f64])],
) -> io::Result<()> {
    let names: Vec<&str> = std::iter::once("t").chain(columns.iter().map(|(n, _)| *n)).collect();
    writeln!(w, "{}", names.join(","))?;
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![fmt(*t)];
        for (_, vals) in columns {
            row.push(fmt(vals[i]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_state_function_csv<W: Write>(w: &mut W, sf: &StateFunction) -> io::Result<()> {
    writeln!(w, "parameter,u,s_mean,s_std")?;
    for p in sf.points() {
        writeln!(w, "{},{},{},{}", fmt(p.parameter), fmt(p.u), fmt(p.s_mean), fmt(p.s_std))?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(
    w: &mut W,
    centers: &[f64],
    densities: &[f64],
) -> io::Result<()> {
    writeln!(w, "bin_center,density")?;
    for (c, d) in centers.iter().zip(densities) {
        writeln!(w, "{},{}", fmt(*c), fmt(*d))?;
    }
    Ok(())
}

/// Reads a populations file written by [`write_populations_csv`]. Comment
/// lines (`#`) and the header are skipped; indices must be the consecutive
/// row order.
pub fn read_populations_csv<R: BufRead>(r: R) -> Result<PopulationSet> {
    let mut values = Vec::new();
    let mut expected = 0usize;
    for line in r.lines() {
        let line = line.map_err(|e| Error::InvalidArgument(format!("read failed: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed.starts_with("index") {
            continue;
        }
        let mut parts = trimmed.split(',');
        let idx: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("bad index in line: {trimmed}")))?;
        let val: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("bad value in line: {trimmed}")))?;
        if idx != expected {
            return Err(Error::InvalidArgument(format!(
                "expected index {expected}, found {idx}"
            )));
        }
        expected += 1;
        values.push(val);
    }
    PopulationSet::new(values)
}
