//! Network reduction for the classical machine model: loads become constant
//! shunt admittances at the operating point, generators appear as constant
//! EMFs behind their transient reactances, and every bus node is eliminated
//! to leave an admittance matrix over the generator internal nodes.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::power_flow::{bus_admittance, OperatingPoint};
use crate::dynamics::FaultSpec;
use crate::error::{Error, Result};
use crate::topology::GridCase;

/// Which network applies: before the fault, with the fault applied, or after
/// clearing. Clearing restores the pre-fault network, so the pre- and
/// post-fault reductions coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkPhase {
    Prefault,
    FaultOn,
    Postfault,
}

/// Kron-reduced network over generator internal nodes, plus the matrix that
/// recovers full bus voltages from the generator EMF vector.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    /// Dense reduced admittance, one row/column per generator.
    pub matrix: DMatrix<Complex64>,
    /// `bus_count x generators` map from EMFs to bus voltages; the faulted
    /// bus row is zero when the fault is bolted.
    pub recovery: DMatrix<Complex64>,
}

/// Constant shunt admittance equivalent of each bus load at the operating
/// point: `(P - jQ) / |V|^2`.
pub fn load_admittances(case: &GridCase, op: &OperatingPoint) -> Vec<Complex64> {
    case.buses
        .iter()
        .map(|bus| {
            let v2 = op.voltage[bus.id - 1].norm_sqr();
            Complex64::new(bus.load_p, -bus.load_q) / v2
        })
        .collect()
}

/// Eliminate all bus nodes from the augmented admittance matrix, leaving the
/// generator internal nodes. For a bolted fault the faulted bus is removed as
/// a grounded node; a resistive fault impedance is added as a shunt instead.
pub fn kron_reduce(
    case: &GridCase,
    op: &OperatingPoint,
    phase: NetworkPhase,
    fault: &FaultSpec,
) -> Result<ReducedNetwork> {
    let n = case.bus_count();
    let m = case.generators.len();
    if m == 0 {
        return Err(Error::InvalidArgument("case has no generators".into()));
    }

    let mut y_bus = bus_admittance(case);
    for (i, y_load) in load_admittances(case, op).iter().enumerate() {
        y_bus[(i, i)] += y_load;
    }

    let gen_admittance: Vec<Complex64> = case
        .generators
        .iter()
        .map(|g| 1.0 / Complex64::new(g.stator_resistance, g.xd_transient))
        .collect();
    for (g, gen) in case.generators.iter().enumerate() {
        y_bus[(gen.bus - 1, gen.bus - 1)] += gen_admittance[g];
    }

    let faulted = phase == NetworkPhase::FaultOn;
    let bolted = faulted && fault.impedance == 0.0;
    if faulted && !bolted {
        y_bus[(fault.bus, fault.bus)] += Complex64::new(1.0 / fault.impedance, 0.0);
    }

    // kept bus nodes; a bolted fault grounds its bus, which drops out entirely
    let kept: Vec<usize> = (0..n).filter(|&i| !(bolted && i == fault.bus)).collect();
    let k = kept.len();

    let mut y_ll = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for (r, &i) in kept.iter().enumerate() {
        for (c, &j) in kept.iter().enumerate() {
            y_ll[(r, c)] = y_bus[(i, j)];
        }
    }
    let mut y_lg = DMatrix::from_element(k, m, Complex64::new(0.0, 0.0));
    for (g, gen) in case.generators.iter().enumerate() {
        if let Some(r) = kept.iter().position(|&i| i == gen.bus - 1) {
            y_lg[(r, g)] = -gen_admittance[g];
        }
        // a generator on the grounded bus keeps only its own admittance
    }

    let lu = y_ll.lu();
    let x = lu
        .solve(&y_lg)
        .ok_or_else(|| Error::SingularSystem("kron reduction of the bus block".into()))?;

    // Y_red = Y_gg - Y_gl * Y_ll^{-1} * Y_lg, with Y_gl = Y_lg^T
    let mut reduced = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for g in 0..m {
        reduced[(g, g)] = gen_admittance[g];
    }
    reduced -= y_lg.transpose() * &x;

    // V_l = -Y_ll^{-1} Y_lg E; grounded bus rows stay zero
    let mut recovery = DMatrix::from_element(n, m, Complex64::new(0.0, 0.0));
    for (r, &i) in kept.iter().enumerate() {
        for g in 0..m {
            recovery[(i, g)] = -x[(r, g)];
        }
    }

    Ok(ReducedNetwork {
        matrix: reduced,
        recovery,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::power_flow::solve_power_flow;
    use crate::topology::{BranchRecord, BusKind, BusRecord, GeneratorRecord};
    use approx::assert_abs_diff_eq;

    fn toy_two_machine_case() -> GridCase {
        // gens at buses 1 and 2, load at bus 3
        GridCase {
            buses: vec![
                BusRecord {
                    id: 1,
                    kind: BusKind::Slack,
                    voltage_setpoint: 1.0,
                    load_p: 0.0,
                    load_q: 0.0,
                },
                BusRecord {
                    id: 2,
                    kind: BusKind::Pv,
                    voltage_setpoint: 1.0,
                    load_p: 0.0,
                    load_q: 0.0,
                },
                BusRecord {
                    id: 3,
                    kind: BusKind::Pq,
                    voltage_setpoint: 1.0,
                    load_p: 1.0,
                    load_q: 0.2,
                },
            ],
            branches: vec![
                BranchRecord {
                    from: 1,
                    to: 3,
                    resistance: 0.0,
                    reactance: 0.1,
                    shunt_susceptance: 0.0,
                },
                BranchRecord {
                    from: 2,
                    to: 3,
                    resistance: 0.0,
                    reactance: 0.2,
                    shunt_susceptance: 0.0,
                },
            ],
            generators: vec![
                GeneratorRecord {
                    bus: 1,
                    active_power: 0.6,
                    xd: 0.3,
                    xq: 0.3,
                    xd_transient: 0.05,
                    xq_transient: 0.05,
                    td0: 5.0,
                    tq0: 1.0,
                    inertia: 30.0,
                    stator_resistance: 0.0,
                    xd_subtransient: 0.2,
                    xq_subtransient: 0.2,
                },
                GeneratorRecord {
                    bus: 2,
                    active_power: 0.5,
                    xd: 0.3,
                    xq: 0.3,
                    xd_transient: 0.08,
                    xq_transient: 0.08,
                    td0: 5.0,
                    tq0: 1.0,
                    inertia: 25.0,
                    stator_resistance: 0.0,
                    xd_subtransient: 0.2,
                    xq_subtransient: 0.2,
                },
            ],
        }
    }

    fn default_fault(bus: usize) -> FaultSpec {
        FaultSpec {
            bus,
            start: 0.1,
            clearing: 0.2,
            impedance: 0.0,
            horizon: 1.0,
            step: 0.01,
        }
    }

    #[test]
    fn clearing_restores_the_prefault_reduction() {
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        let fault = default_fault(14);
        let pre = kron_reduce(&case, &op, NetworkPhase::Prefault, &fault).unwrap();
        let post = kron_reduce(&case, &op, NetworkPhase::Postfault, &fault).unwrap();
        assert_eq!(pre.matrix, post.matrix);
        assert_eq!(pre.recovery, post.recovery);
    }

    #[test]
    fn fault_changes_the_reduction() {
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        let fault = default_fault(14);
        let pre = kron_reduce(&case, &op, NetworkPhase::Prefault, &fault).unwrap();
        let on = kron_reduce(&case, &op, NetworkPhase::FaultOn, &fault).unwrap();
        let max_diff = (pre.matrix.clone() - on.matrix.clone())
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(max_diff > 0.0);
    }

    #[test]
    fn toy_case_matches_hand_elimination() {
        // Hand elimination of the single load bus:
        //   Y_red = Y_gg - Y_gl Y_ll^{-1} Y_lg with scalar Y_ll.
        let case = toy_two_machine_case();
        let op = solve_power_flow(&case).unwrap();
        let fault = default_fault(2);

        let ya = 1.0 / Complex64::new(0.0, 0.05); // machine 1
        let yb = 1.0 / Complex64::new(0.0, 0.08); // machine 2
        let y13 = 1.0 / Complex64::new(0.0, 0.1);
        let y23 = 1.0 / Complex64::new(0.0, 0.2);
        let v3 = op.voltage[2];
        let yload = Complex64::new(1.0, -0.2) / v3.norm_sqr();

        // order nodes: bus1, bus2, bus3, gen1, gen2 and eliminate buses one by
        // one with the scalar formula y'_ij = y_ij - y_ik y_kj / y_kk.
        let mut y = [[Complex64::new(0.0, 0.0); 5]; 5];
        y[0][0] = y13 + ya;
        y[1][1] = y23 + yb;
        y[2][2] = y13 + y23 + yload;
        y[0][2] = -y13;
        y[2][0] = -y13;
        y[1][2] = -y23;
        y[2][1] = -y23;
        y[3][3] = ya;
        y[4][4] = yb;
        y[0][3] = -ya;
        y[3][0] = -ya;
        y[1][4] = -yb;
        y[4][1] = -yb;
        for k in (0..3).rev() {
            let mut next = [[Complex64::new(0.0, 0.0); 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    if i == k || j == k {
                        continue;
                    }
                    next[i][j] = y[i][j] - y[i][k] * y[k][j] / y[k][k];
                }
            }
            y = next;
        }

        let got = kron_reduce(&case, &op, NetworkPhase::Prefault, &fault).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(got.matrix[(i, j)].re, y[3 + i][3 + j].re, epsilon = 1e-10);
                assert_abs_diff_eq!(got.matrix[(i, j)].im, y[3 + i][3 + j].im, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn recovery_reproduces_operating_voltages() {
        // At the operating point, V = recovery * E must hold exactly.
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        let fault = default_fault(14);
        let red = kron_reduce(&case, &op, NetworkPhase::Prefault, &fault).unwrap();
        let e = nalgebra::DVector::from_vec(op.emf.clone());
        let v = &red.recovery * e;
        for i in 0..case.bus_count() {
            assert_abs_diff_eq!(v[i].re, op.voltage[i].re, epsilon = 1e-7);
            assert_abs_diff_eq!(v[i].im, op.voltage[i].im, epsilon = 1e-7);
        }
    }

    #[test]
    fn bolted_fault_grounds_its_bus_in_recovery() {
        let case = GridCase::ne39bs();
        let op = solve_power_flow(&case).unwrap();
        let fault = default_fault(14);
        let red = kron_reduce(&case, &op, NetworkPhase::FaultOn, &fault).unwrap();
        for g in 0..case.generators.len() {
            assert_eq!(red.recovery[(14, g)], Complex64::new(0.0, 0.0));
        }
    }
}
