use std::io::Write;

use super::metrics::{moving_band, BAND_WINDOW};
use super::run::RunRecord;
use crate::error::Result;

/// Tidy rows `series,run,t,variable,value`. Each run contributes its raw
/// columns plus the trailing 40-step mean and 1.96·std of the measured
/// diameter (`d_mean40`, `d_band40`, indexed by the window's last step).
pub fn write_long_format<W: Write>(series: &str, runs: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "run", "t", "variable", "value"])?;
    for (k, run) in runs.iter().enumerate() {
        let run_id = k.to_string();
        for row in &run.rows {
            let t = row.t.to_string();
            for (name, v) in [
                ("d_ref", row.d_ref),
                ("d_measured", row.d_measured),
                ("a_sp", row.a_sp),
                ("a_ex", row.a_ex),
                ("reward", row.reward),
            ] {
                w.write_record([series, &run_id, &t, name, &v.to_string()])?;
            }
        }
        let measured = run.measured();
        if measured.len() >= BAND_WINDOW {
            let (mean, band) = moving_band(&measured, BAND_WINDOW)?;
            for (i, (m, b)) in mean.iter().zip(&band).enumerate() {
                let t = (i + BAND_WINDOW - 1).to_string();
                w.write_record([series, &run_id, &t, "d_mean40", &m.to_string()])?;
                w.write_record([series, &run_id, &t, "d_band40", &b.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Learning curves as `series,run,t,variable,value` with variable
/// `reward_ma`; `t` is the last step of each trailing window.
pub fn write_curves_long<W: Write>(curves: &[(String, Vec<f64>)], window: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "run", "t", "variable", "value"])?;
    for (name, curve) in curves {
        for (i, v) in curve.iter().enumerate() {
            w.write_record([name.as_str(), "0", &(i + window - 1).to_string(), "reward_ma", &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
