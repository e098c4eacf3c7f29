//! Newton–Raphson AC power flow in polar form, used to establish the
//! pre-fault operating point.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::topology::{BusKind, GridCase};

/// Convergence tolerance on the worst bus mismatch (pu).
pub const MISMATCH_TOLERANCE: f64 = 1e-8;
/// Iteration cap before the solve is declared divergent.
pub const MAX_ITERATIONS: usize = 50;

/// Solved steady state: bus voltages plus the classical-model machine
/// quantities derived from them.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    /// Complex bus voltage per bus (pu).
    pub voltage: Vec<Complex64>,
    /// Constant internal EMF behind the transient reactance, per generator.
    pub emf: Vec<Complex64>,
    /// Mechanical power per generator (pu); equals electrical output with
    /// zero stator resistance.
    pub mechanical_power: Vec<f64>,
    /// Net complex injection per bus at the solution (pu).
    pub injection: Vec<Complex64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl OperatingPoint {
    pub fn emf_magnitude(&self) -> Vec<f64> {
        self.emf.iter().map(|e| e.norm()).collect()
    }

    pub fn rotor_angle(&self) -> Vec<f64> {
        self.emf.iter().map(|e| e.arg()).collect()
    }
}

/// Bus admittance matrix of the branch network (series elements plus line
/// charging); load and machine admittances are not included here.
pub fn bus_admittance(case: &GridCase) -> DMatrix<Complex64> {
    let n = case.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for branch in &case.branches {
        let i = branch.from - 1;
        let j = branch.to - 1;
        let series = Complex64::new(branch.resistance, branch.reactance);
        let ys = 1.0 / series;
        let shunt = Complex64::new(0.0, branch.shunt_susceptance / 2.0);
        y[(i, i)] += ys + shunt;
        y[(j, j)] += ys + shunt;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    y
}

/// Solve the case's power flow from a flat start. PV buses hold their
/// setpoint magnitude, the slack bus absorbs the residual.
pub fn solve_power_flow(case: &GridCase) -> Result<OperatingPoint> {
    case.validate_structure()?;
    let n = case.bus_count();
    let y = bus_admittance(case);

    // scheduled injections: generation minus load
    let mut sched_p = vec![0.0; n];
    let mut sched_q = vec![0.0; n];
    for bus in &case.buses {
        sched_p[bus.id - 1] -= bus.load_p;
        sched_q[bus.id - 1] -= bus.load_q;
    }
    for gen in &case.generators {
        sched_p[gen.bus - 1] += gen.active_power;
    }

    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    for bus in &case.buses {
        if bus.kind != BusKind::Pq {
            vm[bus.id - 1] = bus.voltage_setpoint;
        }
    }

    // unknown ordering: angles at all non-slack buses, then magnitudes at PQ buses
    let slack = case.slack_index();
    let angle_buses: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pq_buses: Vec<usize> = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Pq)
        .map(|b| b.id - 1)
        .collect();

    let calc_pq = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let g = y[(i, j)].re;
                let b = y[(i, j)].im;
                let theta = va[i] - va[j];
                p[i] += vm[i] * vm[j] * (g * theta.cos() + b * theta.sin());
                q[i] += vm[i] * vm[j] * (g * theta.sin() - b * theta.cos());
            }
        }
        (p, q)
    };

    let n_unknowns = angle_buses.len() + pq_buses.len();
    let mut iterations = 0;
    let mut max_mismatch = f64::INFINITY;

    for iter in 0..=MAX_ITERATIONS {
        let (p_calc, q_calc) = calc_pq(&vm, &va);

        let mut mismatch = nalgebra::DVector::zeros(n_unknowns);
        for (r, &i) in angle_buses.iter().enumerate() {
            mismatch[r] = sched_p[i] - p_calc[i];
        }
        for (r, &i) in pq_buses.iter().enumerate() {
            mismatch[angle_buses.len() + r] = sched_q[i] - q_calc[i];
        }
        max_mismatch = mismatch.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        iterations = iter;
        if max_mismatch <= MISMATCH_TOLERANCE {
            break;
        }
        if iter == MAX_ITERATIONS {
            return Err(Error::PowerFlowDiverged {
                iterations: iter,
                mismatch: max_mismatch,
            });
        }

        let mut jac = DMatrix::zeros(n_unknowns, n_unknowns);
        for (r, &i) in angle_buses.iter().enumerate() {
            // dP/dθ
            for (c, &j) in angle_buses.iter().enumerate() {
                let g = y[(i, j)].re;
                let b = y[(i, j)].im;
                jac[(r, c)] = if i == j {
                    -q_calc[i] - b * vm[i] * vm[i]
                } else {
                    let theta = va[i] - va[j];
                    vm[i] * vm[j] * (g * theta.sin() - b * theta.cos())
                };
            }
            // dP/dV
            for (c, &j) in pq_buses.iter().enumerate() {
                let g = y[(i, j)].re;
                let b = y[(i, j)].im;
                jac[(r, angle_buses.len() + c)] = if i == j {
                    p_calc[i] / vm[i] + g * vm[i]
                } else {
                    let theta = va[i] - va[j];
                    vm[i] * (g * theta.cos() + b * theta.sin())
                };
            }
        }
        for (r, &i) in pq_buses.iter().enumerate() {
            // dQ/dθ
            for (c, &j) in angle_buses.iter().enumerate() {
                let g = y[(i, j)].re;
                let b = y[(i, j)].im;
                jac[(angle_buses.len() + r, c)] = if i == j {
                    p_calc[i] - g * vm[i] * vm[i]
                } else {
                    let theta = va[i] - va[j];
                    -vm[i] * vm[j] * (g * theta.cos() + b * theta.sin())
                };
            }
            // dQ/dV
            for (c, &j) in pq_buses.iter().enumerate() {
                let g = y[(i, j)].re;
                let b = y[(i, j)].im;
                jac[(angle_buses.len() + r, angle_buses.len() + c)] = if i == j {
                    q_calc[i] / vm[i] - b * vm[i]
                } else {
                    let theta = va[i] - va[j];
                    vm[i] * (g * theta.sin() - b * theta.cos())
                };
            }
        }

        let lu = jac.lu();
        let delta = lu
            .solve(&mismatch)
            .ok_or_else(|| Error::SingularSystem("solving the power-flow Jacobian".into()))?;
        for (r, &i) in angle_buses.iter().enumerate() {
            va[i] += delta[r];
        }
        for (r, &i) in pq_buses.iter().enumerate() {
            vm[i] += delta[angle_buses.len() + r];
        }
    }

    let voltage: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(vm[i], va[i]))
        .collect();

    // net injection at the solution, from the branch network
    let injection: Vec<Complex64> = (0..n)
        .map(|i| {
            let mut current = Complex64::new(0.0, 0.0);
            for j in 0..n {
                current += y[(i, j)] * voltage[j];
            }
            voltage[i] * current.conj()
        })
        .collect();

    // classical-model init: constant EMF behind the d-axis transient reactance
    let mut emf = Vec::with_capacity(case.generators.len());
    let mut mechanical_power = Vec::with_capacity(case.generators.len());
    for gen in &case.generators {
        let b = gen.bus - 1;
        let bus = &case.buses[b];
        let s_gen = injection[b] + Complex64::new(bus.load_p, bus.load_q);
        let v = voltage[b];
        let current = (s_gen / v).conj();
        let e = v + Complex64::new(0.0, gen.xd_transient) * current;
        if e.norm() <= 0.0 {
            return Err(Error::Validation(vec![format!(
                "generator at bus {} has zero internal EMF",
                gen.bus
            )]));
        }
        emf.push(e);
        mechanical_power.push(s_gen.re);
    }

    Ok(OperatingPoint {
        voltage,
        emf,
        mechanical_power,
        injection,
        iterations,
        max_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{BranchRecord, BusRecord, GeneratorRecord};
    use approx::assert_abs_diff_eq;

    fn flat_case() -> GridCase {
        // zero loads, generation only at the slack, no line charging
        GridCase {
            buses: vec![
                BusRecord {
                    id: 1,
                    kind: BusKind::Slack,
                    voltage_setpoint: 1.02,
                    load_p: 0.0,
                    load_q: 0.0,
                },
                BusRecord {
                    id: 2,
                    kind: BusKind::Pq,
                    voltage_setpoint: 1.0,
                    load_p: 0.0,
                    load_q: 0.0,
                },
                BusRecord {
                    id: 3,
                    kind: BusKind::Pq,
                    voltage_setpoint: 1.0,
                    load_p: 0.0,
                    load_q: 0.0,
                },
            ],
            branches: vec![
                BranchRecord {
                    from: 1,
                    to: 2,
                    resistance: 0.01,
                    reactance: 0.1,
                    shunt_susceptance: 0.0,
                },
                BranchRecord {
                    from: 2,
                    to: 3,
                    resistance: 0.02,
                    reactance: 0.2,
                    shunt_susceptance: 0.0,
                },
            ],
            generators: vec![GeneratorRecord {
                bus: 1,
                active_power: 0.0,
                xd: 0.1,
                xq: 0.1,
                xd_transient: 0.05,
                xq_transient: 0.05,
                td0: 5.0,
                tq0: 1.0,
                inertia: 30.0,
                stator_resistance: 0.0,
                xd_subtransient: 0.2,
                xq_subtransient: 0.2,
            }],
        }
    }

    #[test]
    fn no_load_case_is_flat() {
        let op = solve_power_flow(&flat_case()).unwrap();
        for v in &op.voltage {
            assert_abs_diff_eq!(v.norm(), 1.02, epsilon = 1e-10);
            assert_abs_diff_eq!(v.arg(), 0.0, epsilon = 1e-10);
        }
        for s in &op.injection {
            assert_abs_diff_eq!(s.re, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(s.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ne39_converges_to_tight_mismatch() {
        let op = solve_power_flow(&GridCase::ne39bs()).unwrap();
        assert!(op.max_mismatch <= MISMATCH_TOLERANCE);
        assert!(op.iterations <= 10, "took {} iterations", op.iterations);
    }

    #[test]
    fn ne39_voltages_in_operating_band() {
        let op = solve_power_flow(&GridCase::ne39bs()).unwrap();
        for (i, v) in op.voltage.iter().enumerate() {
            let mag = v.norm();
            assert!(
                (0.9..=1.1).contains(&mag),
                "bus {} voltage {} pu out of band",
                i + 1,
                mag
            );
        }
    }

    #[test]
    fn pv_buses_hold_setpoint() {
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        for bus in &case.buses {
            if bus.kind != BusKind::Pq {
                assert_abs_diff_eq!(
                    op.voltage[bus.id - 1].norm(),
                    bus.voltage_setpoint,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn generation_covers_load_plus_losses() {
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        let total_injection: f64 = op.injection.iter().map(|s| s.re).sum();
        let total_load: f64 = case.buses.iter().map(|b| b.load_p).sum();
        let total_gen: f64 = case
            .generators
            .iter()
            .map(|g| {
                let b = g.bus - 1;
                op.injection[b].re + case.buses[b].load_p
            })
            .sum();
        // injections sum to the network losses; generation = load + losses
        assert_abs_diff_eq!(total_gen - total_load, total_injection, epsilon = 1e-6);
        assert!(total_injection > 0.0, "losses should be positive");
    }

    /// Gauss–Seidel solve as an independent cross-check of the same case.
    fn gauss_seidel(case: &GridCase, max_sweeps: usize) -> Vec<Complex64> {
        let n = case.bus_count();
        let y = bus_admittance(case);
        let slack = case.slack_index();
        let mut sched = vec![Complex64::new(0.0, 0.0); n];
        for bus in &case.buses {
            sched[bus.id - 1] -= Complex64::new(bus.load_p, bus.load_q);
        }
        for gen in &case.generators {
            sched[gen.bus - 1] += Complex64::new(gen.active_power, 0.0);
        }
        let mut v: Vec<Complex64> = case
            .buses
            .iter()
            .map(|b| {
                if b.kind == BusKind::Pq {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(b.voltage_setpoint, 0.0)
                }
            })
            .collect();
        for _ in 0..max_sweeps {
            let mut largest_update = 0.0f64;
            for i in 0..n {
                if i == slack {
                    continue;
                }
                let mut sum = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    if j != i {
                        sum += y[(i, j)] * v[j];
                    }
                }
                let s_i = if case.buses[i].kind == BusKind::Pv {
                    // reactive power floats on PV buses
                    let total_current = sum + y[(i, i)] * v[i];
                    let q = (v[i] * total_current.conj()).im;
                    Complex64::new(sched[i].re, q)
                } else {
                    sched[i]
                };
                let mut next = ((s_i / v[i]).conj() - sum) / y[(i, i)];
                if case.buses[i].kind == BusKind::Pv {
                    next *= case.buses[i].voltage_setpoint / next.norm();
                }
                largest_update = largest_update.max((next - v[i]).norm());
                v[i] = next;
            }
            if largest_update < 1e-11 {
                break;
            }
        }
        v
    }

    #[test]
    fn newton_matches_gauss_seidel() {
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        let gs = gauss_seidel(&case, 30_000);
        for i in 0..case.bus_count() {
            assert_abs_diff_eq!(op.voltage[i].norm(), gs[i].norm(), epsilon = 2e-4);
            assert_abs_diff_eq!(op.voltage[i].arg(), gs[i].arg(), epsilon = 2e-4);
        }
    }
}
