//! Curves of the simplified single-agent return model, written as CSV.

use std::path::Path;

use anyhow::Result;
use crowd_core::analysis::{
    self, coefficient_sweep, curve, discounted_energy_return, exponent_mse_curve, simplified_return,
    trip_energy_return, AnalysisReport, Grid, SimpleModelParams, SweepAxis, MSE_RANGE,
};
use crowd_core::reward::{EnergyModel, RewardConfig};
use crowd_core::Exec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::output::CsvTable;

/// Inputs of `analyze`: the model parameters plus the energy constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeParams {
    #[serde(default)]
    pub reward: RewardConfig,
    /// Travel distance, meters.
    #[serde(default = "defaults::distance")]
    pub d: f64,
    #[serde(default = "defaults::t_max")]
    pub t_max: usize,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default)]
    pub energy: EnergyModel,
}

mod defaults {
    use crowd_core::analysis::SimpleModelParams;
    pub fn distance() -> f64 {
        SimpleModelParams::default().d
    }
    pub fn t_max() -> usize {
        SimpleModelParams::default().t_max
    }
    pub fn dt() -> f64 {
        SimpleModelParams::default().dt
    }
}

impl Default for AnalyzeParams {
    fn default() -> Self {
        let m = SimpleModelParams::default();
        Self { reward: m.reward, d: m.d, t_max: m.t_max, dt: m.dt, energy: EnergyModel::default() }
    }
}

impl AnalyzeParams {
    pub fn model(&self) -> SimpleModelParams {
        SimpleModelParams { reward: self.reward.clone(), d: self.d, t_max: self.t_max, dt: self.dt }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("params serialise").as_bytes()))
    }
}

fn write_pairs(path: &Path, hash: &str, header: [&str; 2], rows: &[(f64, f64)]) -> Result<()> {
    let mut table = CsvTable::create(path, hash, "none", &[], header)?;
    for (a, b) in rows {
        table.record([a.to_string(), b.to_string()])?;
    }
    table.finish()
}

/// Writes every curve into `out` and returns the located optima.
pub fn analyze(params: &AnalyzeParams, out: &Path, exec: Exec) -> Result<AnalysisReport> {
    std::fs::create_dir_all(out)?;
    let hash = params.hash();
    let model = &params.energy;
    let p = &params.model();
    let v = Grid::velocities();

    write_pairs(&out.join("return_curve.csv"), &hash, ["v", "return"], &curve(v, exec, |x| simplified_return(x, p)))?;
    write_pairs(
        &out.join("trip_energy.csv"),
        &hash,
        ["v", "neg_energy"],
        &curve(v, exec, |x| trip_energy_return(x, p, model)),
    )?;
    write_pairs(
        &out.join("exponent_mse.csv"),
        &hash,
        ["c_e", "mse"],
        &exponent_mse_curve(p, Grid::new(1.0, 3.0, 0.01), MSE_RANGE, model, exec)?,
    )?;
    let cv = Grid::new(0.0, 1.0, 1e-3).values();
    write_pairs(
        &out.join("cv_sweep.csv"),
        &hash,
        ["c_v", "v_star"],
        &coefficient_sweep(&p.with_exponent(1.0), SweepAxis::CV, &cv, v, exec),
    )?;
    write_pairs(
        &out.join("discounted_energy.csv"),
        &hash,
        ["v", "discounted_energy_return"],
        &curve(v, exec, |x| discounted_energy_return(x, p, model)),
    )?;
    Ok(analysis::report(p, model, exec)?)
}
