use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::Trajectory;
use crate::error::{Error, Result};

/// Reads `k,t,p1..p{np},u1..u{nu}`. Rows must have `k = 0, 1, 2, ...` and
/// `t` within `1e-9` of `k Ts`.
pub fn read_trajectory_csv<R: Read>(reader: R, ts: f64, n_p: usize, n_u: usize) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected: Vec<String> = ["k".to_string(), "t".to_string()]
        .into_iter()
        .chain((1..=n_p).map(|i| format!("p{i}")))
        .chain((1..=n_u).map(|i| format!("u{i}")))
        .collect();
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != expected {
        return Err(Error::Io(format!(
            "trajectory header {headers:?} does not match expected {expected:?}"
        )));
    }
    let mut p = Vec::new();
    let mut u = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let k: usize = rec[0]
            .parse()
            .map_err(|_| Error::Io(format!("line {line}: bad sample index `{}`", &rec[0])))?;
        if k != row {
            return Err(Error::Io(format!("line {line}: expected k = {row}, got {k}")));
        }
        let nums = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Io(format!("line {line}: bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = nums[0];
        if (t - k as f64 * ts).abs() > 1e-9 {
            return Err(Error::Io(format!(
                "line {line}: t = {t} does not match k*Ts = {}",
                k as f64 * ts
            )));
        }
        p.extend_from_slice(&nums[1..1 + n_p]);
        u.extend_from_slice(&nums[1 + n_p..]);
    }
    let n = p.len() / n_p;
    Trajectory::new(
        ts,
        DMatrix::from_row_slice(n, n_p, &p),
        DMatrix::from_row_slice(n, n_u, &u),
    )
}

/// Writes `k,t,y1..y{ny}` and, when `emit_state` is set, the `x` and `xi`
/// columns that are present. Numbers use shortest round-trip formatting.
pub fn write_trajectory_csv<W: Write>(writer: W, traj: &Trajectory, emit_state: bool) -> Result<()> {
    let y = traj
        .y
        .as_ref()
        .ok_or_else(|| Error::Io("trajectory has no output channel".into()))?;
    let mut groups: Vec<(&str, &DMatrix<f64>)> = vec![("y", y)];
    if emit_state {
        if let Some(x) = traj.x.as_ref() {
            groups.push(("x", x));
        }
        if let Some(xi) = traj.xi.as_ref() {
            groups.push(("xi", xi));
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["k".to_string(), "t".to_string()];
    for (name, m) in &groups {
        header.extend((1..=m.ncols()).map(|i| format!("{name}{i}")));
    }
    wtr.write_record(&header)?;
    for k in 0..traj.len() {
        let mut rec = vec![k.to_string(), (k as f64 * traj.ts()).to_string()];
        for (_, m) in &groups {
            rec.extend(m.row(k).iter().map(|v| v.to_string()));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
