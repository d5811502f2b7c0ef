//! Monte-Carlo experiments: configuration, metrics, the trial harness and
//! the preset sweeps, plus CSV output.

pub mod config;
pub mod harness;
pub mod metrics;
pub mod presets;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use harness::{run_trials, trial_seed, write_records, MetricRecord, Sample, Welford};
pub use metrics::{ase, nmse, simulate_ofdm_ber};
pub use presets::{run_experiment, run_preset, Algorithm, Preset, PresetOutput, RunOptions, ScatterRow};

use crate::error::Result;
use crate::linalg::CMat;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_scatter<W: Write>(out: W, rows: &[ScatterRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(out: W, m: &CMat) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "re", "im"])?;
    for ((i, j), z) in m.indexed_iter() {
        w.write_record(&[i.to_string(), j.to_string(), z.re.to_string(), z.im.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

impl PresetOutput {
    /// Writes `<preset>.csv` and, when present, `<preset>_trace.csv` and
    /// `<preset>_phi.csv` into `dir`. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let name = self.preset.name();
        let mut written = Vec::new();
        let main = dir.join(format!("{name}.csv"));
        if self.preset == Preset::Fig10 {
            write_scatter(create(&main)?, &self.scatter)?;
        } else {
            write_records(create(&main)?, &self.records)?;
        }
        written.push(main);
        if !self.trace.is_empty() {
            let path = dir.join(format!("{name}_trace.csv"));
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["iteration", "atom", "residual_norm"])?;
            for t in &self.trace {
                w.write_record(&[t.iteration.to_string(), t.atom.to_string(), t.residual_norm.to_string()])?;
            }
            w.flush()?;
            written.push(path);
        }
        if let Some(m) = &self.measurement_matrix {
            let path = dir.join(format!("{name}_phi.csv"));
            write_matrix(create(&path)?, m)?;
            written.push(path);
        }
        Ok(written)
    }
}
