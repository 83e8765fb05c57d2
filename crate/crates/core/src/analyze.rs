//! Frozen-scheduling frequency responses, trajectory comparison and
//! empirical convergence order.
//!
//! Under the bilinear map a discrete response at `z = exp(j w Ts)` equals the
//! continuous response at the warped frequency `(2/Ts) tan(w Ts / 2)`.
//! [`warping_residual`] measures how far the assembled step matrices are from
//! satisfying that identity.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::discretize::{dt_step_matrices, DiscretizationConfig, StepMatrices};
use crate::error::{Error, Result};
use crate::model::{FrozenMatrices, LpvStateSpace};
use crate::simulate::{simulate_ct_reference, simulate_dt, samples_for, SignalSpec, Trajectory};

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    /// rad/s, strictly increasing and positive.
    pub omegas: Vec<f64>,
    pub values: Vec<DMatrix<C64>>,
}

impl FrequencyResponse {
    /// Largest entry magnitude over the whole grid.
    pub fn peak_magnitude(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|m| m.iter().map(|v| v.norm()))
            .fold(0.0, f64::max)
    }

    /// `omega_rads,reOut1In1,imOut1In1,...` with channel pairs in row-major order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let (ny, nu) = self.values.first().map(|m| m.shape()).unwrap_or((0, 0));
        let mut header = vec!["omega_rads".to_string()];
        for i in 1..=ny {
            for j in 1..=nu {
                header.push(format!("reOut{i}In{j}"));
                header.push(format!("imOut{i}In{j}"));
            }
        }
        wtr.write_record(&header)?;
        for (w, m) in self.omegas.iter().zip(&self.values) {
            let mut rec = vec![w.to_string()];
            for i in 0..ny {
                for j in 0..nu {
                    rec.push(m[(i, j)].re.to_string());
                    rec.push(m[(i, j)].im.to_string());
                }
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `n` log-spaced points from `w_min` to `w_max` inclusive.
pub fn log_grid(w_min: f64, w_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(w_min > 0.0 && w_max > w_min && w_max.is_finite()) || n < 2 {
        return Err(Error::Config(format!(
            "log grid needs 0 < w_min < w_max and at least 2 points, got [{w_min}, {w_max}] with {n}"
        )));
    }
    let (a, b) = (w_min.log10(), w_max.log10());
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                w_max
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

/// Log grid with a fixed density in points per decade (at least 2 points).
pub fn log_grid_per_decade(w_min: f64, w_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(w_min > 0.0 && w_max > w_min) {
        return log_grid(w_min, w_max, 2);
    }
    let decades = (w_max / w_min).log10();
    let n = ((decades * per_decade as f64).ceil() as usize + 1).max(2);
    log_grid(w_min, w_max, n)
}

fn check_grid(omegas: &[f64]) -> Result<()> {
    if omegas.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Config("frequencies must be positive and finite".into()));
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("frequencies must be strictly increasing".into()));
    }
    Ok(())
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// `C (sI - A)^-1 B + D` by one complex LU solve. `omega` only labels errors.
fn resolvent_response(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    s: C64,
    omega: f64,
) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let mut m = complexify(&(-a));
    for i in 0..n {
        m[(i, i)] += s;
    }
    let scale = m.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let lu = m.lu();
    let det = lu.determinant().norm();
    if !(det > 1e-13 * scale.powi(n as i32)) {
        return Err(Error::SingularResolvent { omega });
    }
    let x = lu
        .solve(&complexify(b))
        .ok_or(Error::SingularResolvent { omega })?;
    let out = complexify(c) * x + complexify(d);
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::SingularResolvent { omega });
    }
    Ok(out)
}

/// Continuous response at any real `omega` (negative allowed).
pub fn ct_response_at(m: &FrozenMatrices, omega: f64) -> Result<DMatrix<C64>> {
    resolvent_response(&m.a, &m.b, &m.c, &m.d, C64::new(0.0, omega), omega)
}

/// Discrete response at `z = exp(j omega Ts)` for any real `omega`.
pub fn dt_response_at(step: &StepMatrices, ts: f64, omega: f64) -> Result<DMatrix<C64>> {
    let z = C64::from_polar(1.0, omega * ts);
    resolvent_response(&step.axi, &step.bxi, &step.cxi, &step.dxi, z, omega)
}

/// `C(p) (j w I - A(p))^-1 B(p) + D(p)` on the given grid.
pub fn freqresp_ct(model: &LpvStateSpace, p: &[f64], omegas: &[f64]) -> Result<FrequencyResponse> {
    check_grid(omegas)?;
    let m = model.frozen(p)?;
    let values = omegas
        .iter()
        .map(|&w| ct_response_at(&m, w))
        .collect::<Result<_>>()?;
    Ok(FrequencyResponse {
        omegas: omegas.to_vec(),
        values,
    })
}

/// `Cxi (z I - Axi)^-1 Bxi + Dxi` at `z = exp(j w Ts)`; requires `w Ts < pi`.
pub fn freqresp_dt(
    step: &StepMatrices,
    cfg: &DiscretizationConfig,
    omegas: &[f64],
) -> Result<FrequencyResponse> {
    check_grid(omegas)?;
    let ts = cfg.ts();
    if let Some(&w) = omegas.iter().find(|&&w| w * ts >= PI) {
        return Err(Error::Nyquist {
            omega: w,
            angle: w * ts,
        });
    }
    let values = omegas
        .iter()
        .map(|&w| dt_response_at(step, ts, w))
        .collect::<Result<_>>()?;
    Ok(FrequencyResponse {
        omegas: omegas.to_vec(),
        values,
    })
}

/// `(2/Ts) tan(w Ts / 2)`.
pub fn warp(omega: f64, ts: f64) -> f64 {
    2.0 / ts * (omega * ts / 2.0).tan()
}

/// Largest entrywise `|G_step(exp(j w Ts)) - G_ct(j warp(w))|` over the grid,
/// for any set of step matrices (the negative-control entry point).
pub fn residual_against_warped_ct(
    step: &StepMatrices,
    model: &LpvStateSpace,
    p: &[f64],
    cfg: &DiscretizationConfig,
    omegas: &[f64],
) -> Result<f64> {
    let dt = freqresp_dt(step, cfg, omegas)?;
    let warped: Vec<f64> = omegas.iter().map(|&w| warp(w, cfg.ts())).collect();
    let ct = freqresp_ct(model, p, &warped)?;
    Ok(dt
        .values
        .iter()
        .zip(&ct.values)
        .map(|(d, c)| (d - c).iter().map(|v| v.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max))
}

/// Deviation of the w' step matrices from the exact frequency-warping identity.
pub fn warping_residual(
    model: &LpvStateSpace,
    p: &[f64],
    cfg: &DiscretizationConfig,
    omegas: &[f64],
) -> Result<f64> {
    let step = dt_step_matrices(model, p, cfg)?;
    residual_against_warped_ct(&step, model, p, cfg, omegas)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelMetrics {
    pub channel: String,
    pub max_abs_error: f64,
    pub rms_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonMetrics {
    pub max_abs_error: f64,
    pub rms_error: f64,
    /// `max(1, max |a|)` over the compared channel.
    pub relative_to: f64,
    pub per_channel: Vec<ChannelMetrics>,
}

/// Max and RMS of entrywise differences in one channel group.
pub fn compare_traj(a: &Trajectory, b: &Trajectory, channel: &str) -> Result<ComparisonMetrics> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "trajectories have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    if (a.ts() - b.ts()).abs() > 1e-12 {
        return Err(Error::Dimension(format!(
            "trajectories sampled at {} and {}",
            a.ts(),
            b.ts()
        )));
    }
    let missing = || Error::Dimension(format!("channel `{channel}` missing"));
    let ma = a.channel(channel).ok_or_else(missing)?;
    let mb = b.channel(channel).ok_or_else(missing)?;
    if ma.shape() != mb.shape() {
        return Err(Error::Dimension(format!(
            "channel `{channel}` has shapes {:?} and {:?}",
            ma.shape(),
            mb.shape()
        )));
    }
    let diff = ma - mb;
    let per_channel = diff
        .column_iter()
        .enumerate()
        .map(|(j, col)| ChannelMetrics {
            channel: format!("{channel}{}", j + 1),
            max_abs_error: col.amax(),
            rms_error: rms(col.iter().copied(), col.len()),
        })
        .collect();
    Ok(ComparisonMetrics {
        max_abs_error: diff.amax(),
        rms_error: rms(diff.iter().copied(), diff.len()),
        relative_to: ma.amax().max(1.0),
        per_channel,
    })
}

fn rms(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (values.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Continuous-time excitation for a convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceScenario {
    pub p: Vec<SignalSpec>,
    pub u: Vec<SignalSpec>,
    pub x0: Vec<f64>,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceEntry {
    pub ts: f64,
    pub max_error: f64,
    /// `log2(e_prev / e)` against the previous (coarser) entry.
    pub pairwise_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    /// Least-squares slope of `log(error)` against `log(Ts)`; NaN when degenerate.
    pub fitted_order: f64,
    /// Errors sit at rounding level, so no order can be fitted.
    pub degenerate: bool,
}

impl ConvergenceReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("Ts, max_error, pairwise_order\n");
        for e in &self.entries {
            let order = e
                .pairwise_order
                .map_or_else(|| "-".to_string(), |o| o.to_string());
            let _ = writeln!(out, "{}, {:e}, {}", e.ts, e.max_error, order);
        }
        if self.degenerate {
            out.push_str("degenerate=true\n");
        }
        let _ = writeln!(out, "fitted_order={}", self.fitted_order);
        out
    }
}

/// Errors below this fraction of the output scale count as exact.
const EXACT_ERROR_REL: f64 = 1e-12;

/// Runs the w' engine at every `Ts` against one RK4 reference computed at
/// `min(Ts) / oversample` and fits the order of `max_k |y_dt - y_ct|`.
pub fn convergence_order(
    model: &LpvStateSpace,
    scenario: &ConvergenceScenario,
    ts_list: &[f64],
    oversample: usize,
) -> Result<ConvergenceReport> {
    if ts_list.len() < 3 {
        return Err(Error::Config("Ts list needs at least 3 entries".into()));
    }
    for w in ts_list.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "Ts list must halve at every step, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &ts in ts_list {
        samples_for(scenario.t_end, ts)?;
    }
    let ts_min = *ts_list.last().expect("non-empty");
    let fine_cfg = DiscretizationConfig::new(ts_min)?;
    let reference = simulate_ct_reference(
        model,
        &scenario.p,
        &scenario.u,
        &scenario.x0,
        scenario.t_end,
        oversample,
        &fine_cfg,
    )?;
    let y_ref = reference.y.as_ref().expect("reference has outputs");
    let scale = y_ref.amax().max(1.0);

    let mut entries: Vec<ConvergenceEntry> = Vec::with_capacity(ts_list.len());
    for &ts in ts_list {
        let cfg = DiscretizationConfig::new(ts)?;
        let n = samples_for(scenario.t_end, ts)?;
        let stride = (ts / ts_min).round() as usize;
        let traj = Trajectory::from_signals(ts, n, &scenario.p, &scenario.u)?;
        let out = simulate_dt(model, &cfg, &traj, &scenario.x0)?;
        let y = out.y.as_ref().expect("simulation has outputs");
        let max_error = (0..n)
            .map(|k| (y.row(k) - y_ref.row(k * stride)).amax())
            .fold(0.0, f64::max);
        let pairwise_order = entries
            .last()
            .map(|prev| (prev.max_error / max_error).log2());
        entries.push(ConvergenceEntry {
            ts,
            max_error,
            pairwise_order,
        });
    }

    let degenerate = entries
        .iter()
        .any(|e| !(e.max_error > EXACT_ERROR_REL * scale));
    if degenerate {
        for e in &mut entries {
            e.pairwise_order = None;
        }
    }
    let fitted_order = if degenerate {
        f64::NAN
    } else {
        let xs: Vec<f64> = entries.iter().map(|e| e.ts.ln()).collect();
        let ys: Vec<f64> = entries.iter().map(|e| e.max_error.ln()).collect();
        least_squares_slope(&xs, &ys)
    };
    Ok(ConvergenceReport {
        entries,
        fitted_order,
        degenerate,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
