//! Polar Newton–Raphson power flow.
//!
//! State vector: angles of PV and PQ buses followed by magnitudes of PQ
//! buses. Mismatch vector: active power at PV and PQ buses followed by
//! reactive power at PQ buses, in per unit. Generator reactive limits are
//! not enforced.

use nalgebra::{DMatrix, DVector};

use super::ybus::{build_admittance, Complex};
use super::{BusKind, GridError, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest absolute mismatch, per unit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

/// Per-bus demand in bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct BusDemands {
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Bus ids in network order.
    pub bus_ids: Vec<u32>,
    pub v_mag_pu: Vec<f64>,
    pub v_ang_rad: Vec<f64>,
    /// Active generation at the slack bus.
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    /// Series and charging losses summed over in-service branches.
    pub losses_mw: f64,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Mismatch equations for one network and demand pattern.
pub struct PowerFlowProblem<'a> {
    net: &'a Network,
    y: &'a DMatrix<Complex<f64>>,
    /// Scheduled net injection (generation minus demand), per unit.
    s_spec: Vec<Complex<f64>>,
    v_init: Vec<f64>,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
}

impl<'a> PowerFlowProblem<'a> {
    pub fn new(
        net: &'a Network,
        y: &'a DMatrix<Complex<f64>>,
        demands: &BusDemands,
    ) -> Result<Self, GridError> {
        let n = net.len();
        for len in [demands.p_mw.len(), demands.q_mvar.len()] {
            if len != n {
                return Err(GridError::DemandLength {
                    expected: n,
                    found: len,
                });
            }
        }
        let base = net.base_mva();
        let mut s_spec: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(-demands.p_mw[i] / base, -demands.q_mvar[i] / base))
            .collect();
        for g in net.generators().iter().filter(|g| g.in_service) {
            let i = net.position(g.bus).expect("validated");
            s_spec[i] += Complex::new(g.p_mw / base, g.q_mvar / base);
        }
        let mut pv = Vec::new();
        let mut pq = Vec::new();
        let mut v_init = Vec::with_capacity(n);
        for (i, b) in net.buses().iter().enumerate() {
            match b.kind {
                BusKind::Pv => pv.push(i),
                BusKind::Pq => pq.push(i),
                BusKind::Slack => {}
            }
            v_init.push(if b.kind == BusKind::Pq {
                1.0
            } else {
                b.v_setpoint_pu
            });
        }
        let pvpq = pv.iter().chain(pq.iter()).copied().collect();
        Ok(PowerFlowProblem {
            net,
            y,
            s_spec,
            v_init,
            pvpq,
            pq,
        })
    }

    pub fn dim(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    /// Flat start: held magnitudes at slack/PV buses, 1 pu elsewhere, zero angles.
    pub fn flat_start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for (k, &i) in self.pq.iter().enumerate() {
            x[self.pvpq.len() + k] = self.v_init[i];
        }
        x
    }

    /// Bus magnitudes and angles for state `x`.
    pub fn polar(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut vm = self.v_init.clone();
        let mut va = vec![0.0; vm.len()];
        for (k, &i) in self.pvpq.iter().enumerate() {
            va[i] = x[k];
        }
        for (k, &i) in self.pq.iter().enumerate() {
            vm[i] = x[self.pvpq.len() + k];
        }
        (vm, va)
    }

    fn voltages(&self, x: &DVector<f64>) -> DVector<Complex<f64>> {
        let (vm, va) = self.polar(x);
        DVector::from_iterator(
            vm.len(),
            vm.iter().zip(&va).map(|(m, a)| Complex::from_polar(*m, *a)),
        )
    }

    fn injections(&self, v: &DVector<Complex<f64>>) -> DVector<Complex<f64>> {
        let i = self.y * v;
        v.zip_map(&i, |vk, ik| vk * ik.conj())
    }

    /// Calculated minus scheduled injection at the unknown buses.
    pub fn mismatch(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = self.injections(&self.voltages(x));
        let np = self.pvpq.len();
        let mut f = DVector::zeros(self.dim());
        for (k, &i) in self.pvpq.iter().enumerate() {
            f[k] = s[i].re - self.s_spec[i].re;
        }
        for (k, &i) in self.pq.iter().enumerate() {
            f[np + k] = s[i].im - self.s_spec[i].im;
        }
        f
    }

    /// Analytic Jacobian of [`Self::mismatch`].
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let v = self.voltages(x);
        let n = v.len();
        let ibus = self.y * &v;
        let vnorm = v.map(|c| c / c.norm());
        // dS/dVa = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/dVm = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let mut ds_dva = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
        let mut ds_dvm = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
        let j = Complex::new(0.0, 1.0);
        for r in 0..n {
            for c in 0..n {
                let yrc = self.y[(r, c)];
                let mut a = -(yrc * v[c]).conj();
                if r == c {
                    a += ibus[r].conj();
                }
                ds_dva[(r, c)] = j * v[r] * a;
                let mut m = v[r] * (yrc * vnorm[c]).conj();
                if r == c {
                    m += ibus[r].conj() * vnorm[r];
                }
                ds_dvm[(r, c)] = m;
            }
        }
        let np = self.pvpq.len();
        let nq = self.pq.len();
        let mut jac = DMatrix::zeros(np + nq, np + nq);
        for (ri, &r) in self.pvpq.iter().enumerate() {
            for (ci, &c) in self.pvpq.iter().enumerate() {
                jac[(ri, ci)] = ds_dva[(r, c)].re;
            }
            for (ci, &c) in self.pq.iter().enumerate() {
                jac[(ri, np + ci)] = ds_dvm[(r, c)].re;
            }
        }
        for (ri, &r) in self.pq.iter().enumerate() {
            for (ci, &c) in self.pvpq.iter().enumerate() {
                jac[(np + ri, ci)] = ds_dva[(r, c)].im;
            }
            for (ci, &c) in self.pq.iter().enumerate() {
                jac[(np + ri, np + ci)] = ds_dvm[(r, c)].im;
            }
        }
        jac
    }

    /// Runs Newton iterations from the flat start.
    pub fn solve(&self, opts: &PowerFlowOptions) -> Result<PowerFlowSolution, GridError> {
        let mut x = self.flat_start();
        let mut iteration = 0;
        loop {
            let f = self.mismatch(&x);
            let max_mismatch = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if !max_mismatch.is_finite() {
                return Err(GridError::NonConvergence {
                    iterations: iteration,
                    max_mismatch,
                });
            }
            if max_mismatch <= opts.tol {
                return Ok(self.solution(&x, iteration, max_mismatch));
            }
            if iteration >= opts.max_iter {
                return Err(GridError::NonConvergence {
                    iterations: iteration,
                    max_mismatch,
                });
            }
            iteration += 1;
            let dx = self
                .jacobian(&x)
                .lu()
                .solve(&(-f))
                .filter(|d| d.iter().all(|v| v.is_finite()))
                .ok_or(GridError::SingularSystem { iteration })?;
            x += dx;
        }
    }

    fn solution(
        &self,
        x: &DVector<f64>,
        iterations: usize,
        max_mismatch: f64,
    ) -> PowerFlowSolution {
        let v = self.voltages(x);
        let s = self.injections(&v);
        let base = self.net.base_mva();
        let slack = self.net.slack_index();
        let slack_bus = &self.net.buses()[slack];
        // Generation at the slack bus = injection + local demand.
        let demand = Complex::new(-self.s_spec[slack].re, -self.s_spec[slack].im);
        let other_gen: Complex<f64> = self
            .net
            .generators()
            .iter()
            .filter(|g| g.in_service && g.bus == slack_bus.id)
            .map(|g| Complex::new(g.p_mw / base, g.q_mvar / base))
            .sum();
        let gen = s[slack] + demand + other_gen;
        let (vm, va) = self.polar(x);
        PowerFlowSolution {
            bus_ids: self.net.bus_ids(),
            v_mag_pu: vm,
            v_ang_rad: va,
            slack_p_mw: gen.re * base,
            slack_q_mvar: gen.im * base,
            losses_mw: branch_losses_pu(self.net, &v) * base,
            iterations,
            max_mismatch,
        }
    }
}

fn branch_losses_pu(net: &Network, v: &DVector<Complex<f64>>) -> f64 {
    let mut loss = 0.0;
    for br in net.branches().iter().filter(|b| b.in_service) {
        let f = net.position(br.from).expect("validated");
        let t = net.position(br.to).expect("validated");
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r_pu, br.x_pu);
        let a = Complex::from_polar(br.tap, br.shift_deg.to_radians());
        let ytt = ys + Complex::new(0.0, br.b_pu / 2.0);
        let i_f = ytt / (a * a.conj()) * v[f] - ys / a.conj() * v[t];
        let i_t = ytt * v[t] - ys / a * v[f];
        loss += (v[f] * i_f.conj() + v[t] * i_t.conj()).re;
    }
    loss
}

/// Builds the admittance matrix and solves from a flat start.
pub fn solve_power_flow(
    net: &Network,
    demands: &BusDemands,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, GridError> {
    let y = build_admittance(net);
    PowerFlowProblem::new(net, &y, demands)?.solve(opts)
}
