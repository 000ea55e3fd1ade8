//! Energy-grid writers.
//!
//! VTK files use the legacy ASCII layout, one token per line after the
//! header:
//!
//! ```text
//! # vtk DataFile Version 3.0
//! monochain energy k=<k> l=<l> beta=<beta>
//! ASCII
//! DATASET STRUCTURED_POINTS
//! DIMENSIONS <n12> <n12> <n3>
//! ORIGIN <-w> <-w> 0
//! SPACING <h12> <h12> <h3>
//! POINT_DATA <n12*n12*n3>
//! SCALARS energy double 1
//! LOOKUP_TABLE default
//! <values, y1 fastest, then y2, then y3>
//! SCALARS phihat_norm2 double 1
//! LOOKUP_TABLE default
//! <values>
//! ```
//!
//! Energy is undefined on the (y₁, y₂) boundary of the lattice and written
//! as `nan` there. Every float is printed with 17 significant digits.

use std::io::Write;

use monochain::nahm::{MonopoleGrid, PointQuality};
use monochain::spectral::ChainParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn quality_label(q: &PointQuality) -> &'static str {
    if q.flagged {
        "flagged"
    } else if !q.gap_ok {
        "gap"
    } else if q.degraded {
        "degraded"
    } else {
        "ok"
    }
}

pub fn write_vtk<W: Write>(mut w: W, grid: &MonopoleGrid, p: &ChainParams) -> Result<(), CliError> {
    let lat = &grid.lattice;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "monochain energy k={} l={} beta={}", p.k, p.l, fmt_f64(p.beta))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", lat.n12, lat.n12, lat.n3)?;
    writeln!(
        w,
        "ORIGIN {} {} {}",
        fmt_f64(-lat.half_width),
        fmt_f64(-lat.half_width),
        fmt_f64(0.0)
    )?;
    writeln!(
        w,
        "SPACING {} {} {}",
        fmt_f64(lat.h12()),
        fmt_f64(lat.h12()),
        fmt_f64(lat.h3())
    )?;
    writeln!(w, "POINT_DATA {}", lat.len())?;
    let fields: [(&str, Box<dyn Fn(usize) -> f64>); 2] = [
        ("energy", Box::new(|i| grid.energy[i].unwrap_or(f64::NAN))),
        ("phihat_norm2", Box::new(|i| grid.phihat_norm2[i])),
    ];
    for (name, value) in fields.iter() {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for c in 0..lat.n3 {
            for b in 0..lat.n12 {
                for a in 0..lat.n12 {
                    writeln!(w, "{}", fmt_f64(value(lat.index(a, b, c))))?;
                }
            }
        }
    }
    Ok(())
}

/// Columns y1,y2,y3,phihat_norm2,energy,quality; energy empty where
/// undefined. Rows run with y₃ fastest.
pub fn write_csv<W: Write>(w: W, grid: &MonopoleGrid) -> Result<(), CliError> {
    let lat = &grid.lattice;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["y1", "y2", "y3", "phihat_norm2", "energy", "quality"])?;
    for a in 0..lat.n12 {
        for b in 0..lat.n12 {
            for c in 0..lat.n3 {
                let i = lat.index(a, b, c);
                let y = lat.point(a, b, c);
                out.write_record([
                    fmt_f64(y[0]),
                    fmt_f64(y[1]),
                    fmt_f64(y[2]),
                    fmt_f64(grid.phihat_norm2[i]),
                    grid.energy[i].map(fmt_f64).unwrap_or_default(),
                    quality_label(&grid.quality[i]).to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub y: [f64; 3],
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub beta: f64,
    pub lattice: monochain::nahm::YLattice,
    pub energy_min: Option<Extremum>,
    pub energy_max: Option<Extremum>,
    pub phihat_norm2_min: Extremum,
    pub phihat_norm2_max: Extremum,
    /// Radius of the (y₁, y₂) disk used for maxima counting.
    pub core_radius: f64,
    pub maxima_per_period: usize,
    pub maxima: Vec<monochain::nahm::EnergyMaximum>,
    /// Expected count k/m of lumps per period.
    pub expected_maxima: usize,
    /// max relative change of ‖φ̂‖² under y₃ → y₃ + β at probe points.
    pub periodicity_residual: Option<f64>,
    pub total_energy: f64,
    pub gap_fraction: f64,
    pub flagged_points: usize,
}

/// Radius of the core disk for maxima counting: half the lattice half-width.
pub fn core_radius(grid: &MonopoleGrid) -> f64 {
    0.5 * grid.lattice.half_width
}

pub fn summarize(grid: &MonopoleGrid, p: &ChainParams, periodicity: Option<f64>) -> EnergySummary {
    let lat = &grid.lattice;
    let mut emin: Option<Extremum> = None;
    let mut emax: Option<Extremum> = None;
    let mut fmin = Extremum {
        y: lat.point(0, 0, 0),
        value: f64::INFINITY,
    };
    let mut fmax = Extremum {
        y: lat.point(0, 0, 0),
        value: f64::NEG_INFINITY,
    };
    for a in 0..lat.n12 {
        for b in 0..lat.n12 {
            for c in 0..lat.n3 {
                let i = lat.index(a, b, c);
                let y = lat.point(a, b, c);
                let f = grid.phihat_norm2[i];
                if f < fmin.value {
                    fmin = Extremum { y, value: f };
                }
                if f > fmax.value {
                    fmax = Extremum { y, value: f };
                }
                if let Some(e) = grid.energy[i] {
                    if emin.as_ref().is_none_or(|m| e < m.value) {
                        emin = Some(Extremum { y, value: e });
                    }
                    if emax.as_ref().is_none_or(|m| e > m.value) {
                        emax = Some(Extremum { y, value: e });
                    }
                }
            }
        }
    }
    let radius = core_radius(grid);
    let maxima = grid.maxima_per_period(radius);
    EnergySummary {
        k: p.k,
        l: p.l,
        m: p.m,
        beta: p.beta,
        lattice: lat.clone(),
        energy_min: emin,
        energy_max: emax,
        phihat_norm2_min: fmin,
        phihat_norm2_max: fmax,
        core_radius: radius,
        maxima_per_period: maxima.len(),
        maxima,
        expected_maxima: p.k / p.m,
        periodicity_residual: periodicity,
        total_energy: grid.total_energy(),
        gap_fraction: grid.gap_fraction(),
        flagged_points: grid.flagged_count(),
    }
}
