//! Artifact files. Every file is written to a temporary sibling and renamed
//! into place, so a reader never sees a half-written artifact.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::bloch::VelocityComb;
use crate::comb::AfcProfile;
use crate::memory::MemoryResult;
use crate::model::AtomicSystem;
use crate::pulses::OfcSpectrum;
use crate::stirapoz::{oz_curves, OzMap};
use crate::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

/// One CSV cell: a number, or empty when undefined.
pub type Cell = Option<f64>;

pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[Cell]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::config("<csv>", e.to_string());
    w.write_record(header).map_err(csv_err)?;
    let mut buf = ryu::Buffer::new();
    for row in rows {
        let fields: Vec<String> = row
            .as_ref()
            .iter()
            .map(|c| match c {
                Some(v) if v.is_finite() => buf.format(*v).to_string(),
                Some(v) => v.to_string(),
                None => String::new(),
            })
            .collect();
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::config("<csv>", e.to_string()))
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[Cell]>,
{
    write_atomic(path, &csv_bytes(header, rows)?)
}

pub const COMB_HEADER: [&str; 3] = ["v_m_s", "rho33", "weighted"];
pub const AFC_HEADER: [&str; 2] = ["delta_rad_s", "rho33"];
pub const SPECTRUM_HEADER: [&str; 4] = ["omega_rad_s", "re", "im", "abs"];
pub const FIELD_HEADER: [&str; 3] = ["t_s", "intensity_input_face", "intensity_far_face"];
pub const SPACETIME_HEADER: [&str; 3] = ["z_m", "t_s", "intensity_scaled"];
pub const MAP_HEADER: [&str; 3] = ["delta_over_omega", "v_m_s", "rho33"];
pub const CURVES_HEADER: [&str; 6] = ["delta_over_omega", "vs_plus_m_s", "vs_minus_m_s", "vp_plus_m_s", "vp_minus_m_s", "threshold"];

pub fn write_comb(path: &Path, comb: &VelocityComb) -> Result<()> {
    let rows = (0..comb.grid.len()).map(|i| [Some(comb.grid.values[i]), Some(comb.rho33[i]), Some(comb.weighted[i])]);
    write_csv(path, &COMB_HEADER, rows)
}

pub fn write_afc(path: &Path, profile: &AfcProfile) -> Result<()> {
    let rows = profile.delta.iter().zip(&profile.rho33).map(|(&d, &p)| [Some(d), Some(p)]);
    write_csv(path, &AFC_HEADER, rows)
}

pub fn write_spectrum(path: &Path, spectrum: &OfcSpectrum) -> Result<()> {
    let rows = spectrum
        .frequencies
        .iter()
        .zip(&spectrum.amplitudes)
        .map(|(&w, a)| [Some(w), Some(a.re), Some(a.im), Some(a.norm())]);
    write_csv(path, &SPECTRUM_HEADER, rows)
}

/// |E(0,t)|² and |E(L,t)|² at every time step.
pub fn write_field(path: &Path, result: &MemoryResult) -> Result<()> {
    let rows = (0..result.times.len()).map(|n| {
        [
            Some(result.times[n]),
            Some(result.field_input_face[n].norm_sqr()),
            Some(result.field_far_face[n].norm_sqr()),
        ]
    });
    write_csv(path, &FIELD_HEADER, rows)
}

/// |E(z,t)|² divided by the input peak intensity |E(0,t_c)|².
pub fn write_spacetime(path: &Path, result: &MemoryResult) -> Result<()> {
    let scale = 1.0 / input_peak_intensity(result);
    let rows = result.map_times.iter().zip(&result.map_intensity).flat_map(|(&t, row)| {
        result.z.iter().zip(row).map(move |(&z, &i)| [Some(z), Some(t), Some(i * scale)])
    });
    write_csv(path, &SPACETIME_HEADER, rows)
}

pub fn input_peak_intensity(result: &MemoryResult) -> f64 {
    let n = result
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - result.photon_center).abs().total_cmp(&(b.1 - result.photon_center).abs()))
        .map_or(0, |(i, _)| i);
    result.field_input_face[n].norm_sqr()
}

pub fn write_map(path: &Path, map: &OzMap) -> Result<()> {
    let rows = map.ratios.iter().zip(&map.rho33).flat_map(|(&r, column)| {
        map.velocities.iter().zip(column).map(move |(&v, &p)| [Some(r), Some(v), Some(p)])
    });
    write_csv(path, &MAP_HEADER, rows)
}

/// Optimal-zone boundaries at each ratio of the map; undefined inner curves are left empty.
pub fn write_curves(path: &Path, map: &OzMap, system: &AtomicSystem) -> Result<()> {
    let rows = map.ratios.iter().map(|&r| {
        let c = oz_curves(r * map.rabi0, map.rabi0, system);
        [Some(r), Some(c.vs_plus), Some(c.vs_minus), c.vp_plus, c.vp_minus, Some(c.threshold)]
    });
    write_csv(path, &CURVES_HEADER, rows)
}
