//! Synthetic measurements and the measured-modal file format.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::NoiseSpec;
use crate::error::{Error, Result};
use crate::fe_model::{assemble_stiffness, ParameterizedModel, Sensor};
use crate::modal::{self, ModeSet};
use crate::residuals::{MeasuredModal, ObjectiveConfig};

/// Minimum share of shape energy in the along-length profile for a bending mode.
pub const BENDING_ENERGY_SHARE: f64 = 0.8;

/// Which analytical modes stand in for the measured ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    /// The lowest elastic modes.
    Lowest,
    /// The lowest modes whose sensor shape is dominated by its variation along `x`.
    Bending,
}

/// Share of `‖v‖²` carried by the per-`x` column means of the sensor values.
pub fn bending_share(sensors: &[Sensor], values: &[f64]) -> f64 {
    let total: f64 = values.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let scale = sensors.iter().map(|s| s.x.abs()).fold(1e-300, f64::max);
    let mut columns: Vec<(f64, f64, usize)> = Vec::new();
    for (s, &v) in sensors.iter().zip(values) {
        match columns.iter_mut().find(|c| (c.0 - s.x).abs() <= 1e-9 * scale) {
            Some(c) => {
                c.1 += v;
                c.2 += 1;
            }
            None => columns.push((s.x, v, 1)),
        }
    }
    columns.iter().map(|&(_, sum, n)| sum * sum / n as f64).sum::<f64>() / total
}

fn select_modes(
    model: &ParameterizedModel,
    modes: &ModeSet,
    count: usize,
    selection: ModeSelection,
) -> Result<Vec<usize>> {
    let dofs = model.sensor_dofs();
    let chosen: Vec<usize> = (0..modes.len())
        .filter(|&j| match selection {
            ModeSelection::Lowest => true,
            ModeSelection::Bending => {
                let v: Vec<f64> = dofs.iter().map(|&d| modes.shapes[(d, j)]).collect();
                bending_share(model.sensors(), &v) >= BENDING_ENERGY_SHARE
            }
        })
        .take(count)
        .collect();
    if chosen.len() < count {
        return Err(Error::ModeRange {
            requested: count,
            available: chosen.len(),
        });
    }
    Ok(chosen)
}

/// Synthetic measured data with its provenance.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub measured: MeasuredModal,
    pub frequencies_hz: Vec<f64>,
    pub frequency_std_hz: Vec<f64>,
    /// Indices of the analytical modes that were "measured".
    pub source_modes: Vec<usize>,
}

/// Solves the model at `true_alpha`, keeps `count` selected modes and perturbs
/// them: `f ← f·(1 + σ_f z)` and `φ_k ← φ_k + σ_s‖φ‖∞ z`, with independent
/// standard normal `z` drawn from a ChaCha generator seeded by `seed`.
pub fn synth_measurements(
    model: &ParameterizedModel,
    true_alpha: &[f64],
    noise: NoiseSpec,
    count: usize,
    selection: ModeSelection,
    objective: &ObjectiveConfig,
    seed: u64,
) -> Result<Synthesized> {
    let (lo, hi) = model.bounds();
    if let Some(i) = (0..true_alpha.len().min(lo.len()))
        .find(|&i| true_alpha[i] < lo[i] || true_alpha[i] > hi[i])
    {
        return Err(Error::validation(
            "damage",
            format!("true parameter of group {} lies outside its bounds", i + 1),
        ));
    }
    let k = assemble_stiffness(model, true_alpha)?;
    let modes = modal::solve_modes_capped(&k, model.mass(), objective.n_series, objective.rigid_threshold)?;
    let chosen = select_modes(model, &modes, count, selection)?;
    let dofs = model.sensor_dofs();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut freqs = Vec::with_capacity(count);
    let mut stds = Vec::with_capacity(count);
    for &j in &chosen {
        let f = modal::eigenvalue_to_hz(modes.eigenvalues[j]);
        freqs.push(f * (1.0 + noise.sigma_f * normal()));
        stds.push(f * noise.sigma_f);
    }
    let mut shapes = DMatrix::zeros(dofs.len(), count);
    for (c, &j) in chosen.iter().enumerate() {
        let amp = dofs.iter().map(|&d| modes.shapes[(d, j)].abs()).fold(0.0, f64::max);
        for (r, &d) in dofs.iter().enumerate() {
            shapes[(r, c)] = modes.shapes[(d, j)] + noise.sigma_s * amp * normal();
        }
    }
    let eigenvalues = freqs.iter().map(|&f| modal::hz_to_eigenvalue(f)).collect();
    Ok(Synthesized {
        measured: MeasuredModal::new(eigenvalues, shapes)?,
        frequencies_hz: freqs,
        frequency_std_hz: stds,
        source_modes: chosen,
    })
}

/// Serialized measured modal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredFile {
    pub frequencies_hz: Vec<f64>,
    pub frequency_std_hz: Vec<f64>,
    /// Row-major, sensors × modes.
    pub shapes: Vec<Vec<f64>>,
    pub sensors: Vec<Sensor>,
}

impl MeasuredFile {
    pub fn from_synthesized(s: &Synthesized, sensors: &[Sensor]) -> Self {
        let m = &s.measured.shapes;
        Self {
            frequencies_hz: s.frequencies_hz.clone(),
            frequency_std_hz: s.frequency_std_hz.clone(),
            shapes: (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect(),
            sensors: sensors.to_vec(),
        }
    }

    /// Measured data with default weights; sensors must match the model's.
    pub fn to_measured(&self, model: &ParameterizedModel) -> Result<MeasuredModal> {
        let ds = self.shapes.len();
        let nm = self.frequencies_hz.len();
        if ds != model.sensors().len() {
            return Err(Error::dimension("sensor rows", model.sensors().len(), ds));
        }
        if let Some(row) = self.shapes.iter().find(|r| r.len() != nm) {
            return Err(Error::dimension("shape columns", nm, row.len()));
        }
        let shapes = DMatrix::from_fn(ds, nm, |r, c| self.shapes[r][c]);
        MeasuredModal::new(self.frequencies_hz.iter().map(|&f| modal::hz_to_eigenvalue(f)).collect(), shapes)
    }

    /// CSV with a header row; the first two rows carry the frequencies.
    pub fn to_csv(&self) -> String {
        let nm = self.frequencies_hz.len();
        let mut out = String::from("kind,sensor,x,y");
        for j in 1..=nm {
            let _ = write!(out, ",mode_{j}");
        }
        out.push('\n');
        for (label, row) in [("frequency_hz", &self.frequencies_hz), ("frequency_std_hz", &self.frequency_std_hz)] {
            out.push_str(label);
            out.push_str(",,,");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        for (k, (s, row)) in self.sensors.iter().zip(&self.shapes).enumerate() {
            let _ = write!(out, "shape,{},{},{}", k + 1, s.x, s.y);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_model::{build_beam_model, BeamSpec};

    fn beam() -> ParameterizedModel {
        build_beam_model(&BeamSpec::default()).unwrap()
    }

    #[test]
    fn noise_free_equals_analytical() {
        let model = beam();
        let alpha = vec![0.0; 13];
        let cfg = ObjectiveConfig::default();
        let s = synth_measurements(&model, &alpha, NoiseSpec::none(), 3, ModeSelection::Lowest, &cfg, 1).unwrap();
        let modes = modal::solve_modes_capped(model.k0(), model.mass(), 30, cfg.rigid_threshold).unwrap();
        for j in 0..3 {
            assert!((s.measured.eigenvalues[j] / modes.eigenvalues[j] - 1.0).abs() < 1e-13);
            for (r, &d) in model.sensor_dofs().iter().enumerate() {
                assert_eq!(s.measured.shapes[(r, j)], modes.shapes[(d, j)]);
            }
        }
        assert!(s.frequency_std_hz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let model = beam();
        let alpha = vec![0.0; 13];
        let cfg = ObjectiveConfig::default();
        let run = |seed| {
            synth_measurements(&model, &alpha, NoiseSpec::default(), 3, ModeSelection::Lowest, &cfg, seed)
                .unwrap()
        };
        let (a, b, c) = (run(7), run(7), run(8));
        assert_eq!(a.frequencies_hz, b.frequencies_hz);
        assert_eq!(a.measured.shapes, b.measured.shapes);
        assert_ne!(a.frequencies_hz, c.frequencies_hz);
    }

    #[test]
    fn bending_share_of_uniform_column() {
        let sensors: Vec<Sensor> = (0..4)
            .map(|k| Sensor { dof: k, x: (k / 2) as f64, y: (k % 2) as f64 })
            .collect();
        assert!((bending_share(&sensors, &[1.0, 1.0, -2.0, -2.0]) - 1.0).abs() < 1e-15);
        assert!(bending_share(&sensors, &[1.0, -1.0, 1.0, -1.0]).abs() < 1e-15);
    }

    #[test]
    fn file_roundtrip() {
        let model = beam();
        let cfg = ObjectiveConfig::default();
        let s = synth_measurements(&model, &[0.0; 13], NoiseSpec::default(), 3, ModeSelection::Lowest, &cfg, 3).unwrap();
        let file = MeasuredFile::from_synthesized(&s, model.sensors());
        let text = serde_json::to_string(&file).unwrap();
        let back: MeasuredFile = serde_json::from_str(&text).unwrap();
        let m = back.to_measured(&model).unwrap();
        assert_eq!(m.shapes, s.measured.shapes);
        let csv = file.to_csv();
        assert_eq!(csv.lines().count(), 3 + model.sensors().len());
        assert!(csv.starts_with("kind,sensor,x,y,mode_1,mode_2,mode_3\n"));
    }
}
