//! Transient simulation: classical-model swing dynamics integrated with
//! fixed-step RK4 through pre-fault, fault-on, and post-clearing network
//! phases, recording per-bus electrical quantities and rotor states.

pub mod power_flow;
pub mod reduction;

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{GridCase, DEFAULT_FAULT_BUS};

pub use power_flow::{bus_admittance, solve_power_flow, OperatingPoint};
pub use reduction::{kron_reduce, load_admittances, NetworkPhase, ReducedNetwork};

/// Clearing times of the default scenario set (s).
pub const DEFAULT_CLEARING_TIMES: [f64; 5] = [0.70, 0.72, 0.74, 0.76, 0.78];
/// Fault inception time of the default scenario set (s).
pub const DEFAULT_FAULT_START: f64 = 0.1;
/// Simulation horizon (s).
pub const DEFAULT_HORIZON: f64 = 10.0;
/// Integration and sampling step (s).
pub const DEFAULT_STEP: f64 = 0.01;

/// Rotor angles beyond this magnitude abort the run as unstable.
const MAX_ROTOR_ANGLE: f64 = 10.0 * std::f64::consts::PI;

/// One fault scenario. `start == clearing` degenerates to a no-fault run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// 0-based faulted bus index.
    pub bus: usize,
    /// Fault inception (s).
    pub start: f64,
    /// Fault clearing (s).
    pub clearing: f64,
    /// Resistive fault impedance (pu); 0 is a bolted fault.
    pub impedance: f64,
    /// Simulation horizon (s).
    pub horizon: f64,
    /// Fixed integration step (s).
    pub step: f64,
}

impl FaultSpec {
    /// The default recipe with one clearing time substituted.
    pub fn paper_default(clearing: f64) -> FaultSpec {
        FaultSpec {
            bus: DEFAULT_FAULT_BUS - 1,
            start: DEFAULT_FAULT_START,
            clearing,
            impedance: 0.0,
            horizon: DEFAULT_HORIZON,
            step: DEFAULT_STEP,
        }
    }

    pub fn validate(&self, bus_count: usize) -> Result<()> {
        if self.bus >= bus_count {
            return Err(Error::InvalidFault(format!(
                "fault bus index {} out of range for {} buses",
                self.bus, bus_count
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidFault(format!("step {} must be > 0", self.step)));
        }
        if !(self.start > 0.0 && self.start <= self.clearing && self.clearing < self.horizon) {
            return Err(Error::InvalidFault(format!(
                "need 0 < start <= clearing < horizon, got start={} clearing={} horizon={}",
                self.start, self.clearing, self.horizon
            )));
        }
        if self.impedance < 0.0 {
            return Err(Error::InvalidFault(format!(
                "fault impedance {} must be >= 0",
                self.impedance
            )));
        }
        for (name, value) in [
            ("start", self.start),
            ("clearing", self.clearing),
            ("horizon", self.horizon),
        ] {
            let ratio = value / self.step;
            if (ratio - ratio.round()).abs() > 1e-6 {
                return Err(Error::InvalidFault(format!(
                    "{name} = {value} is not aligned to the step {}",
                    self.step
                )));
            }
        }
        Ok(())
    }

    /// Index of the fault inception sample.
    pub fn start_index(&self) -> usize {
        (self.start / self.step).round() as usize
    }

    /// Index of the clearing sample.
    pub fn clearing_index(&self) -> usize {
        (self.clearing / self.step).round() as usize
    }

    /// Number of integration steps; the trace has one more sample.
    pub fn step_count(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Network phase governing the sample at `index`. The fault holds on the
    /// half-open window `(start, clearing]` so the clearing sample is the
    /// last faulted one.
    pub fn phase_of_index(&self, index: usize) -> NetworkPhase {
        if index <= self.start_index() {
            NetworkPhase::Prefault
        } else if index <= self.clearing_index() {
            NetworkPhase::FaultOn
        } else {
            NetworkPhase::Postfault
        }
    }

    /// True when the sample at `index` lies in the fault-on window.
    pub fn is_fault_on(&self, index: usize) -> bool {
        self.phase_of_index(index) == NetworkPhase::FaultOn
    }
}

/// Simulator knobs not pinned by the scenario itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Uniform damping coefficient (pu power per pu speed deviation). The
    /// classical rotor model carries no exciter or governor, so this term is
    /// the only restoring influence besides the network itself; the default
    /// is sized so the bundled case rides through the longest default
    /// clearing time without losing synchronism.
    pub damping: f64,
    /// Synchronous frequency (Hz).
    pub frequency_hz: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            damping: 400.0,
            frequency_hz: 60.0,
        }
    }
}

/// Time series of one simulated scenario. Bus quantities are indexed
/// `[bus][time]`, generator quantities `[generator][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub fault: FaultSpec,
    /// 0-based terminal bus index per generator.
    pub generator_bus: Vec<usize>,
    pub times: Vec<f64>,
    pub bus_voltage_magnitude: Vec<Vec<f64>>,
    pub bus_voltage_angle: Vec<Vec<f64>>,
    pub bus_active_injection: Vec<Vec<f64>>,
    pub bus_reactive_injection: Vec<Vec<f64>>,
    pub rotor_angle: Vec<Vec<f64>>,
    pub speed_deviation: Vec<Vec<f64>>,
    pub emf_magnitude: Vec<Vec<f64>>,
}

impl ScenarioTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn bus_count(&self) -> usize {
        self.bus_voltage_magnitude.len()
    }

    pub fn generator_count(&self) -> usize {
        self.rotor_angle.len()
    }

    /// One CSV row per sample: time, per-bus Vmag/Vang/P/Q, then per-generator
    /// rotor angle, speed deviation, and EMF magnitude.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let nb = self.bus_count();
        let ng = self.generator_count();
        let mut header = String::from("t");
        for b in 1..=nb {
            header.push_str(&format!(",v{b}_mag,v{b}_ang,p{b},q{b}"));
        }
        for g in 1..=ng {
            header.push_str(&format!(",delta{g},omega{g},e{g}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut row = format!("{}", self.times[k]);
            for b in 0..nb {
                row.push_str(&format!(
                    ",{},{},{},{}",
                    self.bus_voltage_magnitude[b][k],
                    self.bus_voltage_angle[b][k],
                    self.bus_active_injection[b][k],
                    self.bus_reactive_injection[b][k]
                ));
            }
            for g in 0..ng {
                row.push_str(&format!(
                    ",{},{},{}",
                    self.rotor_angle[g][k], self.speed_deviation[g][k], self.emf_magnitude[g][k]
                ));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Read a trace written by [`write_csv`]; the fault spec and generator
    /// placement come from the scenario manifest since the CSV carries only
    /// the series.
    pub fn read_csv<R: BufRead>(
        r: R,
        fault: FaultSpec,
        generator_bus: Vec<usize>,
    ) -> Result<ScenarioTrace> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("trace csv".into()))??;
        let columns: Vec<&str> = header.split(',').collect();
        let nb = columns.iter().filter(|c| c.ends_with("_mag")).count();
        let ng = columns.iter().filter(|c| c.starts_with("delta")).count();
        if columns.len() != 1 + 4 * nb + 3 * ng {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected trace header with {} columns", columns.len()),
            });
        }
        if generator_bus.len() != ng {
            return Err(Error::ShapeMismatch(format!(
                "manifest lists {} generators, trace has {ng}",
                generator_bus.len()
            )));
        }
        let mut trace = ScenarioTrace {
            fault,
            generator_bus,
            times: Vec::new(),
            bus_voltage_magnitude: vec![Vec::new(); nb],
            bus_voltage_angle: vec![Vec::new(); nb],
            bus_active_injection: vec![Vec::new(); nb],
            bus_reactive_injection: vec![Vec::new(); nb],
            rotor_angle: vec![Vec::new(); ng],
            speed_deviation: vec![Vec::new(); ng],
            emf_magnitude: vec![Vec::new(); ng],
        };
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 2,
                    message: format!("bad float '{f}'"),
                })
            });
            let mut next = || {
                fields.next().unwrap_or_else(|| {
                    Err(Error::Parse {
                        line: lineno + 2,
                        message: "short row".into(),
                    })
                })
            };
            trace.times.push(next()?);
            for b in 0..nb {
                trace.bus_voltage_magnitude[b].push(next()?);
                trace.bus_voltage_angle[b].push(next()?);
                trace.bus_active_injection[b].push(next()?);
                trace.bus_reactive_injection[b].push(next()?);
            }
            for g in 0..ng {
                trace.rotor_angle[g].push(next()?);
                trace.speed_deviation[g].push(next()?);
                trace.emf_magnitude[g].push(next()?);
            }
        }
        Ok(trace)
    }
}

/// Electrical power delivered by each machine for rotor angles `delta`,
/// through the reduced admittance `y`.
fn electrical_power(
    y: &DMatrix<Complex64>,
    emf_magnitude: &[f64],
    delta: &[f64],
    out: &mut [f64],
) {
    let m = emf_magnitude.len();
    let emf: Vec<Complex64> = (0..m)
        .map(|g| Complex64::from_polar(emf_magnitude[g], delta[g]))
        .collect();
    for i in 0..m {
        let mut current = Complex64::new(0.0, 0.0);
        for j in 0..m {
            current += y[(i, j)] * emf[j];
        }
        out[i] = (emf[i] * current.conj()).re;
    }
}

struct SwingSystem<'a> {
    reduced: &'a DMatrix<Complex64>,
    emf_magnitude: &'a [f64],
    mechanical_power: &'a [f64],
    /// 2H_i / omega_s per machine.
    inertia_m: &'a [f64],
    damping: f64,
    omega_s: f64,
}

impl SwingSystem<'_> {
    /// d/dt of the stacked state [delta..., omega...].
    fn derivative(&self, state: &[f64], out: &mut [f64]) {
        let m = self.emf_magnitude.len();
        let (delta, omega) = state.split_at(m);
        let (d_delta, d_omega) = out.split_at_mut(m);
        electrical_power(self.reduced, self.emf_magnitude, delta, d_omega);
        for g in 0..m {
            let pe = d_omega[g];
            d_delta[g] = omega[g];
            d_omega[g] = (self.mechanical_power[g] - pe - self.damping * omega[g] / self.omega_s)
                / self.inertia_m[g];
        }
    }

    fn rk4_step(&self, state: &mut [f64], h: f64, scratch: &mut [Vec<f64>]) {
        let n = state.len();
        let [k1, k2, k3, k4, tmp] = scratch else {
            panic!("rk4 scratch must hold 5 buffers");
        };
        self.derivative(state, k1);
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        self.derivative(tmp, k2);
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        self.derivative(tmp, k3);
        for i in 0..n {
            tmp[i] = state[i] + h * k3[i];
        }
        self.derivative(tmp, k4);
        for i in 0..n {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Simulate one scenario with default options.
pub fn simulate_scenario(case: &GridCase, fault: &FaultSpec) -> Result<ScenarioTrace> {
    simulate_scenario_with(case, fault, &SimOptions::default())
}

/// Simulate one scenario: solve the pre-fault power flow, reduce the network
/// per phase, integrate the swing equations, and recover bus quantities at
/// every sample.
pub fn simulate_scenario_with(
    case: &GridCase,
    fault: &FaultSpec,
    options: &SimOptions,
) -> Result<ScenarioTrace> {
    fault.validate(case.bus_count())?;
    let op = solve_power_flow(case)?;

    let phases = [
        kron_reduce(case, &op, NetworkPhase::Prefault, fault)?,
        kron_reduce(case, &op, NetworkPhase::FaultOn, fault)?,
        kron_reduce(case, &op, NetworkPhase::Postfault, fault)?,
    ];
    let network_of = |phase: NetworkPhase| -> &ReducedNetwork {
        match phase {
            NetworkPhase::Prefault => &phases[0],
            NetworkPhase::FaultOn => &phases[1],
            NetworkPhase::Postfault => &phases[2],
        }
    };

    let n = case.bus_count();
    let m = case.generators.len();
    let omega_s = 2.0 * std::f64::consts::PI * options.frequency_hz;
    let emf_magnitude = op.emf_magnitude();
    let inertia_m: Vec<f64> = case
        .generators
        .iter()
        .map(|g| 2.0 * g.inertia / omega_s)
        .collect();

    let steps = fault.step_count();
    let samples = steps + 1;
    let mut trace = ScenarioTrace {
        fault: *fault,
        generator_bus: case.generator_bus_indices(),
        times: Vec::with_capacity(samples),
        bus_voltage_magnitude: vec![Vec::with_capacity(samples); n],
        bus_voltage_angle: vec![Vec::with_capacity(samples); n],
        bus_active_injection: vec![Vec::with_capacity(samples); n],
        bus_reactive_injection: vec![Vec::with_capacity(samples); n],
        rotor_angle: vec![Vec::with_capacity(samples); m],
        speed_deviation: vec![Vec::with_capacity(samples); m],
        emf_magnitude: vec![Vec::with_capacity(samples); m],
    };

    let y_net = bus_admittance(case);
    let mut state = op.rotor_angle();
    state.extend(std::iter::repeat(0.0).take(m));
    let mut scratch = vec![vec![0.0; 2 * m]; 5];

    let record = |trace: &mut ScenarioTrace, index: usize, state: &[f64]| {
        let phase = fault.phase_of_index(index);
        let emf: DVector<Complex64> = DVector::from_fn(m, |g, _| {
            Complex64::from_polar(emf_magnitude[g], state[g])
        });
        let voltages = &network_of(phase).recovery * &emf;
        let currents = &y_net * &voltages;
        for b in 0..n {
            let s = voltages[b] * currents[b].conj();
            trace.bus_voltage_magnitude[b].push(voltages[b].norm());
            trace.bus_voltage_angle[b].push(if voltages[b].norm() > 0.0 {
                voltages[b].arg()
            } else {
                0.0
            });
            trace.bus_active_injection[b].push(s.re);
            trace.bus_reactive_injection[b].push(s.im);
        }
        for g in 0..m {
            trace.rotor_angle[g].push(state[g]);
            trace.speed_deviation[g].push(state[m + g]);
            trace.emf_magnitude[g].push(emf_magnitude[g]);
        }
        trace.times.push(index as f64 * fault.step);
    };

    record(&mut trace, 0, &state);
    for index in 1..=steps {
        let phase = fault.phase_of_index(index);
        let system = SwingSystem {
            reduced: &network_of(phase).matrix,
            emf_magnitude: &emf_magnitude,
            mechanical_power: &op.mechanical_power,
            inertia_m: &inertia_m,
            damping: options.damping,
            omega_s,
        };
        system.rk4_step(&mut state, fault.step, &mut scratch);
        for g in 0..m {
            if !state[g].is_finite() || state[g].abs() > MAX_ROTOR_ANGLE {
                return Err(Error::Unstable {
                    generator: g + 1,
                    angle: state[g],
                    time: index as f64 * fault.step,
                });
            }
        }
        record(&mut trace, index, &state);
    }

    Ok(trace)
}

/// One trace per clearing time under the default recipe.
pub fn generate_scenarios(case: &GridCase, clearing_times: &[f64]) -> Result<Vec<ScenarioTrace>> {
    generate_scenarios_with(case, clearing_times, &SimOptions::default())
}

pub fn generate_scenarios_with(
    case: &GridCase,
    clearing_times: &[f64],
    options: &SimOptions,
) -> Result<Vec<ScenarioTrace>> {
    if clearing_times.is_empty() {
        return Err(Error::EmptyInput("clearing time list".into()));
    }
    clearing_times
        .iter()
        .map(|&ct| simulate_scenario_with(case, &FaultSpec::paper_default(ct), options))
        .collect()
}
