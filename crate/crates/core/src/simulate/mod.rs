//! Discrete-time engines and a continuous-time reference integrator.
//!
//! Two independent discrete engines are provided. [`simulate_dt`] steps the
//! closed-form loop-free matrices; [`simulate_dt_loop_oracle`] solves the raw
//! `r^-1` interconnection (`rx = A x + B u`, `x = Ts/2 (xi + rx)`) as one
//! linear system per step. They must agree to rounding.
//!
//! The discrete state `xi` is initialised from a physical `x0` as
//! `xi(0) = (2/Ts) x0 - A(p0) x0 - B(p0) u(0)`, which is the unique value
//! that makes the reconstructed `x(0) = Phi Ts/2 (xi(0) + B u(0))` equal `x0`.

mod csv_io;
mod signal;

pub use csv_io::{read_trajectory_csv, write_trajectory_csv};
pub use signal::{generate_signal, SignalSpec, SignalTable};

use nalgebra::{DMatrix, DVector};

use crate::discretize::{dt_step_matrices, singularity_scale, DiscretizationConfig, SINGULAR_REL_TOL};
use crate::error::{Error, Result};
use crate::model::{matrix_to_rows, LpvStateSpace};

/// Uniformly sampled multichannel signal; row `k` is time `k Ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    ts: f64,
    pub p: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub x: Option<DMatrix<f64>>,
    pub xi: Option<DMatrix<f64>>,
    pub y: Option<DMatrix<f64>>,
}

impl Trajectory {
    /// Input trajectory with scheduling rows `p` and input rows `u`.
    pub fn new(ts: f64, p: DMatrix<f64>, u: DMatrix<f64>) -> Result<Self> {
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::Config(format!("sampling time must be positive, got {ts}")));
        }
        if p.nrows() != u.nrows() {
            return Err(Error::Dimension(format!(
                "p has {} rows but u has {}",
                p.nrows(),
                u.nrows()
            )));
        }
        Ok(Self {
            ts,
            p,
            u,
            x: None,
            xi: None,
            y: None,
        })
    }

    /// Samples `p` and `u` signal specs at `k Ts`, `k = 0..n`.
    pub fn from_signals(
        ts: f64,
        n: usize,
        p_specs: &[SignalSpec],
        u_specs: &[SignalSpec],
    ) -> Result<Self> {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * ts).collect();
        let sample = |specs: &[SignalSpec]| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(n, specs.len());
            for (j, spec) in specs.iter().enumerate() {
                for (k, v) in generate_signal(spec, &times)?.into_iter().enumerate() {
                    m[(k, j)] = v;
                }
            }
            Ok(m)
        };
        Self::new(ts, sample(p_specs)?, sample(u_specs)?)
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel group by name: `p`, `u`, `x`, `xi` or `y`.
    pub fn channel(&self, name: &str) -> Option<&DMatrix<f64>> {
        match name {
            "p" => Some(&self.p),
            "u" => Some(&self.u),
            "x" => self.x.as_ref(),
            "xi" => self.xi.as_ref(),
            "y" => self.y.as_ref(),
            _ => None,
        }
    }

    fn row(m: &DMatrix<f64>, k: usize) -> Vec<f64> {
        m.row(k).iter().copied().collect()
    }

    fn check_against(&self, model: &LpvStateSpace, cfg: &DiscretizationConfig) -> Result<()> {
        if (self.ts - cfg.ts()).abs() > 1e-12 * cfg.ts().max(1.0) {
            return Err(Error::Config(format!(
                "trajectory sampled at Ts = {} but discretization uses Ts = {}",
                self.ts,
                cfg.ts()
            )));
        }
        if self.p.ncols() != model.n_p() || self.u.ncols() != model.n_u() {
            return Err(Error::Dimension(format!(
                "trajectory has {} scheduling and {} input channels, model needs {} and {}",
                self.p.ncols(),
                self.u.ncols(),
                model.n_p(),
                model.n_u()
            )));
        }
        for k in 0..self.len() {
            let p = Self::row(&self.p, k);
            if !model.domain().contains(&p)? {
                return Err(Error::Domain { p, step: Some(k) });
            }
        }
        Ok(())
    }
}

fn check_x0(model: &LpvStateSpace, x0: &[f64]) -> Result<()> {
    if x0.len() != model.n_x() {
        return Err(Error::Dimension(format!(
            "x0 has {} entries, model has n_x = {}",
            x0.len(),
            model.n_x()
        )));
    }
    Ok(())
}

/// `xi(0) = (2/Ts) x0 - A(p0) x0 - B(p0) u0`.
pub fn initial_xi(
    model: &LpvStateSpace,
    p0: &[f64],
    u0: &[f64],
    x0: &[f64],
    cfg: &DiscretizationConfig,
) -> Result<DVector<f64>> {
    check_x0(model, x0)?;
    let m = model.matrices_at(p0)?;
    let x0 = DVector::from_column_slice(x0);
    let u0 = DVector::from_column_slice(u0);
    Ok(&x0 * (2.0 / cfg.ts()) - &m.a * &x0 - &m.b * &u0)
}

/// Steps the loop-free w' matrices from a physical initial state.
pub fn simulate_dt(
    model: &LpvStateSpace,
    cfg: &DiscretizationConfig,
    traj: &Trajectory,
    x0: &[f64],
) -> Result<Trajectory> {
    check_x0(model, x0)?;
    traj.check_against(model, cfg)?;
    if traj.is_empty() {
        return Ok(with_outputs(traj, model, 0));
    }
    let xi0 = initial_xi(
        model,
        &Trajectory::row(&traj.p, 0),
        &Trajectory::row(&traj.u, 0),
        x0,
        cfg,
    )?;
    simulate_dt_from_xi(model, cfg, traj, xi0.as_slice())
}

/// Like [`simulate_dt`] but starts from a given discrete state `xi(0)`.
pub fn simulate_dt_from_xi(
    model: &LpvStateSpace,
    cfg: &DiscretizationConfig,
    traj: &Trajectory,
    xi0: &[f64],
) -> Result<Trajectory> {
    check_x0(model, xi0)?;
    traj.check_against(model, cfg)?;
    let mut out = with_outputs(traj, model, traj.len());
    let mut xi = DVector::from_column_slice(xi0);
    for k in 0..traj.len() {
        let p = Trajectory::row(&traj.p, k);
        let u = traj.u.row(k).transpose();
        let st = dt_step_matrices(model, &p, cfg).map_err(|e| e.at_step(k, &p))?;
        let x = &st.xxi * &xi + &st.xu * &u;
        let y = &st.cxi * &xi + &st.dxi * &u;
        store(&mut out, k, &x, &xi, &y);
        xi = &st.axi * &xi + &st.bxi * &u;
    }
    Ok(out)
}

/// Independent engine: solves the `r^-1` algebraic loop at every step.
///
/// Unknowns `(x, rx)` satisfy
///
/// ```text
/// -A x +        rx = B u
///    x - Ts/2   rx = Ts/2 xi
/// ```
///
/// whose determinant has magnitude `|det(I - A Ts/2)|`.
pub fn simulate_dt_loop_oracle(
    model: &LpvStateSpace,
    cfg: &DiscretizationConfig,
    traj: &Trajectory,
    x0: &[f64],
) -> Result<Trajectory> {
    check_x0(model, x0)?;
    traj.check_against(model, cfg)?;
    let n = model.n_x();
    let ts = cfg.ts();
    let mut out = with_outputs(traj, model, traj.len());
    if traj.is_empty() {
        return Ok(out);
    }
    let mut xi = initial_xi(
        model,
        &Trajectory::row(&traj.p, 0),
        &Trajectory::row(&traj.u, 0),
        x0,
        cfg,
    )?;
    let eye = DMatrix::<f64>::identity(n, n);
    for k in 0..traj.len() {
        let p = Trajectory::row(&traj.p, k);
        let u = traj.u.row(k).transpose();
        let m = model.matrices_at(&p)?;

        let mut lhs = DMatrix::zeros(2 * n, 2 * n);
        lhs.view_mut((0, 0), (n, n)).copy_from(&(-&m.a));
        lhs.view_mut((0, n), (n, n)).copy_from(&eye);
        lhs.view_mut((n, 0), (n, n)).copy_from(&eye);
        lhs.view_mut((n, n), (n, n)).copy_from(&(&eye * (-ts / 2.0)));
        let mut rhs = DVector::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(&(&m.b * &u));
        rhs.rows_mut(n, n).copy_from(&(&xi * (ts / 2.0)));

        let lu = lhs.lu();
        let det = lu.determinant();
        let singular = Error::Wellposedness {
            a: matrix_to_rows(&m.a),
            ts,
            det,
            step: Some(k),
            p: Some(p.clone()),
        };
        if !(det.abs() >= SINGULAR_REL_TOL * singularity_scale(&m.a, cfg)) {
            return Err(singular);
        }
        let sol = lu.solve(&rhs).ok_or(singular)?;
        let x = sol.rows(0, n).into_owned();
        let rx = sol.rows(n, n).into_owned();
        let y = &m.c * &x + &m.d * &u;
        store(&mut out, k, &x, &xi, &y);
        xi += rx * 2.0;
    }
    Ok(out)
}

fn with_outputs(traj: &Trajectory, model: &LpvStateSpace, n: usize) -> Trajectory {
    Trajectory {
        x: Some(DMatrix::zeros(n, model.n_x())),
        xi: Some(DMatrix::zeros(n, model.n_x())),
        y: Some(DMatrix::zeros(n, model.n_y())),
        ..traj.clone()
    }
}

fn store(out: &mut Trajectory, k: usize, x: &DVector<f64>, xi: &DVector<f64>, y: &DVector<f64>) {
    if let Some(m) = out.x.as_mut() {
        m.row_mut(k).copy_from(&x.transpose());
    }
    if let Some(m) = out.xi.as_mut() {
        m.row_mut(k).copy_from(&xi.transpose());
    }
    if let Some(m) = out.y.as_mut() {
        m.row_mut(k).copy_from(&y.transpose());
    }
}

/// Number of samples `k Ts` in `[0, t_end]`, requiring `Ts` to divide `t_end`.
pub fn samples_for(t_end: f64, ts: f64) -> Result<usize> {
    let steps = t_end / ts;
    let rounded = steps.round();
    if !(t_end >= 0.0) || (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::Config(format!(
            "Ts = {ts} does not divide T_end = {t_end}"
        )));
    }
    Ok(rounded as usize + 1)
}

/// Fixed-step classical RK4 solution of the continuous model, sampled at
/// multiples of `Ts` up to `t_end`. Scheduling and input signals are
/// evaluated exactly at the stage times.
pub fn simulate_ct_reference(
    model: &LpvStateSpace,
    p_specs: &[SignalSpec],
    u_specs: &[SignalSpec],
    x0: &[f64],
    t_end: f64,
    oversample: usize,
    cfg: &DiscretizationConfig,
) -> Result<Trajectory> {
    check_x0(model, x0)?;
    if oversample == 0 {
        return Err(Error::Config("oversample must be at least 1".into()));
    }
    if p_specs.len() != model.n_p() || u_specs.len() != model.n_u() {
        return Err(Error::Dimension(format!(
            "got {} scheduling and {} input signals, model needs {} and {}",
            p_specs.len(),
            u_specs.len(),
            model.n_p(),
            model.n_u()
        )));
    }
    for spec in p_specs.iter().chain(u_specs) {
        spec.validate()?;
    }
    let ts = cfg.ts();
    let n = samples_for(t_end, ts)?;
    let mut out = Trajectory::from_signals(ts, n, p_specs, u_specs)?;
    out.check_against(model, cfg)?;

    let eval_all = |specs: &[SignalSpec], t: f64| -> Result<Vec<f64>> {
        specs.iter().map(|s| s.eval(t)).collect()
    };
    let rhs = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let p = eval_all(p_specs, t)?;
        let u = DVector::from_vec(eval_all(u_specs, t)?);
        Ok(model.a().eval(&p)? * x + model.b().eval(&p)? * u)
    };

    let h = ts / oversample as f64;
    let mut x = DVector::from_column_slice(x0);
    let mut xs = DMatrix::zeros(n, model.n_x());
    let mut ys = DMatrix::zeros(n, model.n_y());
    for k in 0..n {
        let t = k as f64 * ts;
        let p = Trajectory::row(&out.p, k);
        let u = out.u.row(k).transpose();
        let y = model.c().eval(&p)? * &x + model.d().eval(&p)? * u;
        xs.row_mut(k).copy_from(&x.transpose());
        ys.row_mut(k).copy_from(&y.transpose());
        if k + 1 == n {
            break;
        }
        for j in 0..oversample {
            let t0 = t + j as f64 * h;
            let k1 = rhs(t0, &x)?;
            let k2 = rhs(t0 + h / 2.0, &(&x + &k1 * (h / 2.0)))?;
            let k3 = rhs(t0 + h / 2.0, &(&x + &k2 * (h / 2.0)))?;
            let k4 = rhs(t0 + h, &(&x + &k3 * h))?;
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    out.x = Some(xs);
    out.y = Some(ys);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::tustin_frozen;
    use crate::model::SchedulingDomain;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn cfg(ts: f64) -> DiscretizationConfig {
        DiscretizationConfig::new(ts).unwrap()
    }

    fn scalar_lti(a: f64, b: f64, c: f64, d: f64) -> LpvStateSpace {
        LpvStateSpace::constant(
            s(a),
            s(b),
            s(c),
            s(d),
            SchedulingDomain::new(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap()
    }

    fn constant_inputs(ts: f64, n: usize, u: f64) -> Trajectory {
        Trajectory::new(ts, DMatrix::zeros(n, 1), DMatrix::from_element(n, 1, u)).unwrap()
    }

    fn column(m: &DMatrix<f64>) -> Vec<f64> {
        m.column(0).iter().copied().collect()
    }

    #[test]
    fn integrator_from_rest_is_exact_ramp() {
        // Trapezoid on u = 1 from x(0) = 0: y(k) = k Ts.
        let m = scalar_lti(0.0, 1.0, 1.0, 0.0);
        let traj = constant_inputs(0.5, 5, 1.0);
        let out = simulate_dt(&m, &cfg(0.5), &traj, &[0.0]).unwrap();
        assert_eq!(column(out.y.as_ref().unwrap()), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let oracle = simulate_dt_loop_oracle(&m, &cfg(0.5), &traj, &[0.0]).unwrap();
        assert_eq!(column(oracle.y.as_ref().unwrap()), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn integrator_from_zero_xi_is_half_step_shifted() {
        // xi(0) = 0: y(0) = Ts/2 u, then +Ts per step.
        let m = scalar_lti(0.0, 1.0, 1.0, 0.0);
        let traj = constant_inputs(0.5, 5, 1.0);
        let out = simulate_dt_from_xi(&m, &cfg(0.5), &traj, &[0.0]).unwrap();
        assert_eq!(
            column(out.y.as_ref().unwrap()),
            vec![0.25, 0.75, 1.25, 1.75, 2.25]
        );
    }

    #[test]
    fn zero_input_zero_state() {
        let m = LpvStateSpace::constant(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
            s(0.7),
            SchedulingDomain::new(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let traj = constant_inputs(0.1, 20, 0.0);
        let out = simulate_dt(&m, &cfg(0.1), &traj, &[0.0, 0.0]).unwrap();
        assert!(out.y.unwrap().iter().all(|&v| v == 0.0));
        assert!(out.x.unwrap().iter().all(|&v| v == 0.0));
        assert!(out.xi.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_state_is_reconstructed() {
        let m = LpvStateSpace::constant(
            DMatrix::from_row_slice(2, 2, &[0.4, 1.0, -2.0, -0.3]),
            DMatrix::from_row_slice(2, 1, &[0.2, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
            s(0.0),
            SchedulingDomain::new(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let traj = constant_inputs(0.2, 3, -1.7);
        let x0 = [0.9, -3.1];
        let out = simulate_dt(&m, &cfg(0.2), &traj, &x0).unwrap();
        let x = out.x.unwrap();
        assert!((x[(0, 0)] - x0[0]).abs() <= 1e-10);
        assert!((x[(0, 1)] - x0[1]).abs() <= 1e-10);
    }

    #[test]
    fn singular_model_fails_at_first_step_in_both_engines() {
        let m = scalar_lti(20.0, 1.0, 1.0, 0.0);
        let traj = constant_inputs(0.1, 4, 1.0);
        for res in [
            simulate_dt(&m, &cfg(0.1), &traj, &[0.0]),
            simulate_dt_loop_oracle(&m, &cfg(0.1), &traj, &[0.0]),
        ] {
            match res {
                Err(Error::Wellposedness { step, .. }) => assert_eq!(step, Some(0)),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn out_of_domain_row_reports_step() {
        let m = scalar_lti(-1.0, 1.0, 1.0, 0.0);
        let mut p = DMatrix::zeros(5, 1);
        p[(3, 0)] = 1.5;
        let traj = Trajectory::new(0.1, p, DMatrix::zeros(5, 1)).unwrap();
        match simulate_dt(&m, &cfg(0.1), &traj, &[0.0]) {
            Err(Error::Domain { step, .. }) => assert_eq!(step, Some(3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frozen_trajectory_matches_tustin_recursion() {
        let m = LpvStateSpace::constant(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -0.4]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            s(0.1),
            SchedulingDomain::new(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let c = cfg(0.05);
        let n = 200;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.05).collect();
        let u = generate_signal(&SignalSpec::sine(1.0, 0.7, 0.2, 0.1), &times).unwrap();
        let traj = Trajectory::new(0.05, DMatrix::zeros(n, 1), DMatrix::from_vec(n, 1, u)).unwrap();
        let x0 = [0.3, -0.2];
        let out = simulate_dt(&m, &c, &traj, &x0).unwrap();

        // The Tustin state is the scaled discrete state (Ts/2) xi.
        let t = tustin_frozen(&m, &[0.0], &c).unwrap();
        let xi0 = initial_xi(&m, &[0.0], &[traj.u[(0, 0)]], &x0, &c).unwrap();
        let mut xd = xi0 * 0.025;
        let y = out.y.unwrap();
        let x = out.x.unwrap();
        for k in 0..n {
            let uk = traj.u.row(k).transpose();
            let yk = &t.cxi * &xd + &t.dxi * &uk;
            let xk = &t.xxi * &xd + &t.xu * &uk;
            assert!((yk[0] - y[(k, 0)]).abs() <= 1e-10 * y.amax().max(1.0));
            assert!((xk - x.row(k).transpose()).amax() <= 1e-10 * x.amax().max(1.0));
            xd = &t.axi * &xd + &t.bxi * &uk;
        }
    }

    #[test]
    fn ct_reference_integrates_constant_exactly() {
        let m = scalar_lti(0.0, 1.0, 1.0, 0.0);
        let out = simulate_ct_reference(
            &m,
            &[SignalSpec::constant(0.5)],
            &[SignalSpec::constant(1.0)],
            &[0.0],
            2.0,
            3,
            &cfg(0.25),
        )
        .unwrap();
        let y = out.y.unwrap();
        assert_eq!(y.nrows(), 9);
        for k in 0..9 {
            assert!((y[(k, 0)] - k as f64 * 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn ct_reference_exponential_decay() {
        let m = scalar_lti(-1.0, 0.0, 1.0, 0.0);
        let out = simulate_ct_reference(
            &m,
            &[SignalSpec::constant(0.0)],
            &[SignalSpec::constant(0.0)],
            &[1.0],
            1.0,
            100,
            &cfg(0.1),
        )
        .unwrap();
        let x = out.x.unwrap();
        assert!((x[(10, 0)] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((x[(10, 0)] - 0.3678794412).abs() < 1e-9);
    }

    #[test]
    fn ct_reference_is_fourth_order() {
        // x' = -2x + 1, x(0) = 0: x(t) = (1 - e^{-2t}) / 2.
        let m = scalar_lti(-2.0, 1.0, 1.0, 0.0);
        let exact = (1.0 - (-2.0f64 * 2.0).exp()) / 2.0;
        let err = |oversample: usize| {
            let out = simulate_ct_reference(
                &m,
                &[SignalSpec::constant(0.0)],
                &[SignalSpec::constant(1.0)],
                &[0.0],
                2.0,
                oversample,
                &cfg(1.0),
            )
            .unwrap();
            (out.x.unwrap()[(2, 0)] - exact).abs()
        };
        for over in [8, 16, 32] {
            let ratio = err(over) / err(2 * over);
            assert!((14.0..18.0).contains(&ratio), "ratio {ratio} at oversample {over}");
        }
    }

    #[test]
    fn samples_for_requires_divisor() {
        assert_eq!(samples_for(10.0, 0.2).unwrap(), 51);
        assert_eq!(samples_for(10.0, 0.025).unwrap(), 401);
        assert!(samples_for(1.0, 0.3).is_err());
    }
}
