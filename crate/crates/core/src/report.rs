//! CSV emitters. Floats are written with `{}` so output is byte-stable.

use std::io::Write;

use crate::error::Result;
use crate::fixed_point::{ErlangRow, FixedPoint};
use crate::ode::Trajectory;
use crate::sim::{KurtzRow, ReplicationSummary};

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// `k,pi_sum,variant` for `k = 0..=K` of each fixed point.
pub fn write_fixed_points<W: Write>(w: W, fps: &[FixedPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["k", "pi_sum", "variant"])?;
    for fp in fps {
        for k in 0..=fp.k_max() {
            out.write_record([
                k.to_string(),
                fp.level_sum(k).to_string(),
                fp.variant().to_string(),
            ])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `k,first_sum,second_sum,ratio`.
pub fn write_erlang<W: Write>(w: W, rows: &[ErlangRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["k", "first_sum", "second_sum", "ratio"])?;
    for r in rows {
        out.write_record([
            r.k.to_string(),
            r.first_sum.to_string(),
            r.second_sum.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `t,k,block_index,value,drift`, keeping every `thin`-th snapshot and the last one.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory, thin: usize) -> Result<()> {
    let thin = thin.max(1);
    let mut out = writer(w);
    out.write_record(["t", "k", "block_index", "value", "drift"])?;
    let snaps = traj.snapshots();
    for (idx, (s, drift)) in snaps.iter().zip(traj.drift_log()).enumerate() {
        if idx % thin != 0 && idx + 1 != snaps.len() {
            continue;
        }
        for k in 0..=s.k_max() {
            for (b, v) in s.level(k).iter().enumerate() {
                out.write_record([
                    s.t().to_string(),
                    k.to_string(),
                    b.to_string(),
                    v.to_string(),
                    drift.to_string(),
                ])?;
            }
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `k,empirical_tail,stderr` for `k = 1..`.
pub fn write_tails<W: Write>(w: W, summary: &ReplicationSummary) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["k", "empirical_tail", "stderr"])?;
    for k in 1..summary.tail_mean.len() {
        out.write_record([
            k.to_string(),
            summary.tail_mean[k].to_string(),
            summary.tail_stderr[k].to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `n,sup_distance,stderr`.
pub fn write_kurtz<W: Write>(w: W, rows: &[KurtzRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["n", "sup_distance", "stderr"])?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            r.mean_distance.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One point of a sojourn-time curve; `value` is `None` for unstable pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournPoint {
    pub d: u32,
    pub mu: f64,
    pub value: Option<f64>,
    pub status: String,
}

/// `d,mu,expected_sojourn,status`.
pub fn write_sojourn_curve<W: Write>(w: W, rows: &[SojournPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["d", "mu", "expected_sojourn", "status"])?;
    for r in rows {
        let v = r.value.map(|x| x.to_string()).unwrap_or_default();
        out.write_record([r.d.to_string(), r.mu.to_string(), v, r.status.clone()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
