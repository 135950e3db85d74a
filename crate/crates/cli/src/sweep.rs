//! Single runs and frequency sweeps.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use micropump_core::coupling::{
    coupled_resonance, run_cycles_with, CycleResult, ResonanceEstimate, RunOptions, RunOutput, Simulation,
    SimulationSetup,
};
use micropump_core::fluid::{build_grid, FluidGrid};
use micropump_core::plate::Mode;

use crate::config::{log_spaced, RunConfig};
use crate::output::{header_line, write_atomic};

pub const SUMMARY_COLUMNS: &str =
    "freq_hz,net_flow_ul_min,phase_lag_rad,frac_mode01,centroid_x_m,centroid_y_m,periodicity_residual,status";

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub frequency_hz: f64,
    pub outcome: Result<CycleResult, String>,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        match &self.outcome {
            Ok(r) => format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                self.frequency_hz,
                r.net_flow_ul_min,
                r.phase_lag_rad,
                r.fraction(0, 1).unwrap_or(f64::NAN),
                r.mode_centroid.0,
                r.mode_centroid.1,
                r.periodicity_residual,
                if r.periodic { "ok" } else { "non-periodic" }
            ),
            Err(_) => format!("{},NaN,NaN,NaN,NaN,NaN,NaN,failed", self.frequency_hz),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub argmax_hz: Option<f64>,
    pub peak_ul_min: Option<f64>,
    pub resonance: Option<ResonanceEstimate>,
}

impl SweepResult {
    pub fn csv(&self, cfg: &RunConfig) -> String {
        let mut s = header_line(cfg);
        s.push_str(SUMMARY_COLUMNS);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }
}

/// Index of the largest net flow; the first (lowest-frequency) one wins ties.
pub fn argmax(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, row) in rows.iter().enumerate() {
        if let Ok(r) = &row.outcome {
            if best.map_or(true, |(_, v)| r.net_flow_ul_min > v) {
                best = Some((k, r.net_flow_ul_min));
            }
        }
    }
    best.map(|(k, _)| k)
}

fn with_frequency(setup: &SimulationSetup, f: f64) -> SimulationSetup {
    let mut s = setup.clone();
    s.drive.frequency_hz = f;
    s
}

/// Frequencies of the configured sweep, estimating the wet resonance when
/// no explicit list is given.
pub fn sweep_frequencies(cfg: &RunConfig, setup: &SimulationSetup) -> micropump_core::Result<(Vec<f64>, Option<ResonanceEstimate>)> {
    if !cfg.sweep.frequencies_hz.is_empty() {
        return Ok((cfg.sweep.frequencies_hz.clone(), None));
    }
    let res = coupled_resonance(setup)?;
    let hi = cfg.sweep.max_over_resonance * res.frequency_hz;
    info!(
        "estimated wet resonance {:.1} Hz (dry {:.1} Hz); sweeping {} .. {:.1} Hz",
        res.frequency_hz, res.dry_frequency_hz, cfg.sweep.min_hz, hi
    );
    Ok((log_spaced(cfg.sweep.min_hz, hi.max(cfg.sweep.min_hz * 1.0001), cfg.sweep.points), Some(res)))
}

fn run_one(setup: &SimulationSetup, modes: &[Mode], grid: &FluidGrid) -> Result<CycleResult, String> {
    let mut sim = Simulation::from_parts(setup, modes.to_vec(), grid.clone()).map_err(|e| e.to_string())?;
    run_cycles_with(&mut sim, &setup.coupling, RunOptions::default(), &mut |_, _| Ok(()))
        .map(|o| o.result)
        .map_err(|e| e.to_string())
}

/// Runs every frequency on a pool of `jobs` workers. Rows come back in
/// sweep order and do not depend on scheduling.
pub fn run_sweep(cfg: &RunConfig, base_dir: &Path, jobs: usize) -> anyhow::Result<SweepResult> {
    let setup = cfg.setup(base_dir)?;
    let (freqs, resonance) = sweep_frequencies(cfg, &setup)?;
    let modes = setup.plate.modal_basis()?;
    let grid = build_grid(&setup.geometry, setup.target_dx)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        freqs
            .par_iter()
            .map(|&f| {
                let outcome = run_one(&with_frequency(&setup, f), &modes, &grid);
                match &outcome {
                    Ok(r) => info!("{f:.1} Hz: net flow {:.6e} ul/min", r.net_flow_ul_min),
                    Err(e) => warn!("{f:.1} Hz failed: {e}"),
                }
                SweepRow {
                    frequency_hz: f,
                    outcome,
                }
            })
            .collect()
    });
    let best = argmax(&rows);
    Ok(SweepResult {
        argmax_hz: best.map(|k| rows[k].frequency_hz),
        peak_ul_min: best.and_then(|k| rows[k].outcome.as_ref().ok().map(|r| r.net_flow_ul_min)),
        rows,
        resonance,
    })
}

/// One run at the configured (or overridden) drive frequency, writing the
/// summary row, the time series and any field snapshots into `out`.
pub fn run_single(cfg: &RunConfig, base_dir: &Path, out: &Path) -> anyhow::Result<RunOutput> {
    let setup = cfg.setup(base_dir)?;
    let mut sim = Simulation::new(&setup)?;
    let every = cfg.output.snapshot_every;
    let mut observer = |sim: &Simulation, _: &_| -> micropump_core::Result<()> {
        if every > 0 && sim.steps() % every == 0 {
            let grid = sim.fluid().grid();
            let w = sim.sampling().deflection(&sim.plate().q);
            let mut field = vec![0.0; grid.nx * grid.ny];
            for (&c, v) in sim.sampling().cells.iter().zip(w) {
                field[c] = v;
            }
            let text = sim.fluid().snapshot_text(sim.flow(), &field);
            write_atomic(&out.join(format!("fields_{}.dat", sim.steps())), &text)?;
        }
        Ok(())
    };
    let options = RunOptions {
        record_series: cfg.output.time_series,
    };
    let output = run_cycles_with(&mut sim, &setup.coupling, options, &mut observer)?;
    let row = SweepRow {
        frequency_hz: setup.drive.frequency_hz,
        outcome: Ok(output.result.clone()),
    };
    let mut summary = header_line(cfg);
    summary.push_str(SUMMARY_COLUMNS);
    summary.push('\n');
    summary.push_str(&row.csv());
    summary.push('\n');
    write_atomic(&out.join("summary.csv"), &summary)?;
    if let Some(ts) = &output.series {
        let mut text = header_line(cfg);
        text.push_str(&ts.to_csv());
        write_atomic(&out.join("timeseries.csv"), &text)?;
    }
    Ok(output)
}
