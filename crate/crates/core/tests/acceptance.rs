//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use coupler_cz::calibrate::{optimize_pulse, sweep_detuning, OptimizeSettings, SweepMode};
use coupler_cz::{Device, Pulse};
use coupler_cz::metrics::{simulate_gate, GateReport};
use coupler_cz::num::wrap_angle;
use coupler_cz::propagator::{EvolutionSettings, Propagator};
use coupler_cz::pulse::envelope;
use coupler_cz::spectrum::{zz_exact, zz_perturbative, zz_report};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn gate(device: &Device, preset: &str, dt: f64) -> GateReport {
    let pulse = Pulse::preset(preset).expect("preset");
    simulate_gate(device, &pulse, &EvolutionSettings::default().with_dt(dt)).expect("gate simulation")
}

fn describe(r: &GateReport) -> String {
    format!(
        "F = {:.5}, L1 = {:.2e}, |dtheta| = {:.5}, returns = [{:.4}, {:.4}, {:.4}, {:.4}]",
        r.fidelity,
        r.leakage,
        r.cond_phase.abs(),
        r.return_populations[0],
        r.return_populations[1],
        r.return_populations[2],
        r.return_populations[3]
    )
}

fn criterion_1() -> Outcome {
    let r = zz_report(&Device::paper_table_i()).expect("zz report");
    let pass = within(r.zeta_exact.abs(), 12.57, 0.6) && within(r.zeta_pert4, -12.57, 0.01);
    Outcome {
        id: "1 static ZZ, paper-tableI",
        pass,
        detail: format!(
            "|zeta_exact| = {:.4} kHz (12.57 +- 0.6), zeta_pert4 = {:.4} kHz (-12.57 +- 0.01)",
            r.zeta_exact.abs(),
            r.zeta_pert4
        ),
    }
}

fn criterion_2() -> Outcome {
    let base = Device::paper_table_i();
    let values: Vec<f64> = (0..=60)
        .map(|k| {
            let mut d = base;
            d.q1.frequency = 6.45;
            d.q2.frequency = 4.2 + 0.01 * k as f64;
            zz_exact(&d).expect("zz")
        })
        .collect();
    let crossings: Vec<f64> = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] * w[1] < 0.0)
        .map(|(k, _)| 4.2 + 0.01 * k as f64 + 0.005)
        .collect();
    Outcome {
        id: "2 ZZ zero crossing, omega2 in 4.2-4.8 GHz",
        pass: !crossings.is_empty(),
        detail: format!("{} sign changes near omega2 = {:?} GHz", crossings.len(), crossings),
    }
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let r = gate(&Device::paper_table_i(), "tableII-a", 0.005);
    let secs = t.elapsed().as_secs_f64();
    let pass = r.fidelity >= 0.999 && r.leakage <= 1.5e-3 && within(r.cond_phase.abs(), 3.1410, 0.01) && secs < 60.0;
    Outcome {
        id: "3 replay tableII-a",
        pass,
        detail: format!("{} in {secs:.1} s (F >= 0.999, L1 <= 1.5e-3, |dtheta| = 3.1410 +- 0.01, < 60 s)", describe(&r)),
    }
}

fn criterion_4() -> Outcome {
    let r = gate(&Device::paper_table_i(), "tableII-c", 0.005);
    let pass = r.fidelity >= 0.998 && r.leakage <= 2.5e-3 && within(r.cond_phase.abs(), 3.1321, 0.01);
    Outcome {
        id: "4 replay tableII-c",
        pass,
        detail: format!("{} (F >= 0.998, L1 <= 2.5e-3, |dtheta| = 3.1321 +- 0.01)", describe(&r)),
    }
}

fn criterion_5() -> Outcome {
    let r = gate(&Device::paper_table_i(), "tableII-b", 0.005);
    let pass = within(r.fidelity, 0.58, 0.05) && within(r.leakage, 0.38, 0.05);
    Outcome {
        id: "5 failure replay tableII-b",
        pass,
        detail: format!("{} (F = 0.58 +- 0.05, L1 = 0.38 +- 0.05)", describe(&r)),
    }
}

fn criterion_6() -> Outcome {
    let r = gate(&Device::paper_table_iii(), "sec4-450ns", 0.005);
    let expected = [0.9902, 0.9980, 0.9910, 0.9999];
    let returns_ok = r
        .return_populations
        .iter()
        .zip(expected)
        .all(|(&p, e)| within(p, e, 0.005));
    let pass = within(r.fidelity, 0.9947, 0.003)
        && within(r.leakage, 0.0053, 0.003)
        && within(r.cond_phase.abs(), 3.1355, 0.01)
        && returns_ok;
    Outcome {
        id: "6 replay sec4-450ns on paper-tableIII",
        pass,
        detail: format!(
            "{} (F = 0.9947 +- 0.003, L1 = 0.0053 +- 0.003, |dtheta| = 3.1355 +- 0.01, returns {expected:?} +- 0.005)",
            describe(&r)
        ),
    }
}

fn criterion_7() -> Outcome {
    let settings = OptimizeSettings {
        cost_tol: 1e-3,
        ..OptimizeSettings::default()
    };
    let t = Instant::now();
    let o = optimize_pulse(
        &Device::paper_table_i(),
        250.0,
        -0.015,
        &settings,
        &EvolutionSettings::default(),
    )
    .expect("optimizer");
    let pass = o.cost <= 1e-3 && o.evaluations <= 400;
    Outcome {
        id: "7 optimizer from default seed, 250 ns / -15 MHz",
        pass,
        detail: format!(
            "C_f = {:.3e} after {} evaluations in {:.0} s, F = {:.5}, (amp0, l1, l2) = ({:.4} MHz, {:.4}, {:.4}) (C_f <= 1e-3 within 400)",
            o.cost,
            o.evaluations,
            t.elapsed().as_secs_f64(),
            o.report.fidelity,
            o.pulse.amp0 * 1e3,
            o.pulse.lambda1,
            o.pulse.lambda2
        ),
    }
}

/// Conditional phase of an undriven 1000 ns evolution and `2 pi zeta t`.
fn idle_phase() -> (f64, f64) {
    let dev = Device::paper_table_i();
    let t = 1000.0;
    let pulse = Pulse::new(0.0, 0.3, 0.1, t, -0.015).unwrap();
    let r = simulate_gate(&dev, &pulse, &EvolutionSettings::default()).expect("idle evolution");
    let zeta_ghz = zz_exact(&dev).unwrap() * 1e-6;
    (r.cond_phase, 2.0 * PI * zeta_ghz * t)
}

fn criterion_8(idle: (f64, f64)) -> Vec<Outcome> {
    let (dtheta, two_pi_zeta_t) = idle;
    let stated = wrap_angle(dtheta - (-two_pi_zeta_t)).abs();
    let derived = wrap_angle(dtheta - two_pi_zeta_t).abs();
    vec![
        Outcome {
            id: "8 idle phase, dtheta = -2 pi zeta t",
            pass: stated <= 1e-4,
            detail: format!(
                "dtheta = {dtheta:.6} rad, -2 pi zeta t = {:.6} rad, mismatch {stated:.2e} (<= 1e-4)",
                -two_pi_zeta_t
            ),
        },
        Outcome {
            id: "8' idle phase, dtheta = +2 pi zeta t (theta = -arg U_kk)",
            pass: derived <= 1e-4,
            detail: format!("dtheta = {dtheta:.6} rad, +2 pi zeta t = {two_pi_zeta_t:.6} rad, mismatch {derived:.2e} (<= 1e-4)"),
        },
    ]
}

fn criterion_9() -> Outcome {
    let dev = Device::paper_table_i();
    let pulse = Pulse::preset("tableII-a").unwrap().resolved(&dev).unwrap();
    let prop = Propagator::for_pulse(&dev, &pulse).unwrap();
    let u = prop.unitary(&pulse, &EvolutionSettings::default()).expect("unitary");
    let unitarity = u.unitarity_defect();

    let a = gate(&dev, "tableII-a", 0.005);
    let b = gate(&dev, "tableII-a", 0.0025);
    let d_f = (a.fidelity - b.fidelity).abs();
    let d_l = (a.leakage - b.leakage).abs();
    let d_p = wrap_angle(a.cond_phase - b.cond_phase).abs();

    let mut env_err: f64 = 0.0;
    for name in Pulse::PRESETS {
        let p = Pulse::preset(name).unwrap();
        env_err = env_err
            .max(envelope(&p, 0.0).unwrap().abs() / p.amp0)
            .max(envelope(&p, p.t_f).unwrap().abs() / p.amp0)
            .max((envelope(&p, p.t_f / 2.0).unwrap() - p.amp0).abs() / p.amp0);
    }

    let weak = dev.with_couplings(0.02, 0.02);
    let exact = zz_exact(&weak).unwrap();
    let pert = zz_perturbative(&weak).unwrap();
    let rel = ((pert - exact) / exact).abs();

    let pass = unitarity <= 1e-8 && d_f <= 1e-6 && d_l <= 1e-6 && d_p <= 1e-6 && env_err <= 1e-12 && rel <= 0.05;
    Outcome {
        id: "9 numerical hygiene",
        pass,
        detail: format!(
            "|U^dag U - I| = {unitarity:.1e}; dt halving dF = {d_f:.1e}, dL1 = {d_l:.1e}, ddtheta = {d_p:.1e}; \
             envelope identities {env_err:.1e}; ZZ pert/exact at g = 20 MHz off by {:.3}%",
            rel * 100.0
        ),
    }
}

fn detuning_cut() -> Outcome {
    let dev = Device::paper_table_i();
    let pulse = Pulse::preset("tableII-a").unwrap();
    let grid: Vec<f64> = (0..=20).map(|k| -0.020 + 0.0005 * k as f64).collect();
    let rows = sweep_detuning(&dev, 250.0, &grid, &SweepMode::FixedPulse(pulse), &EvolutionSettings::default())
        .expect("sweep");
    let best = rows
        .iter()
        .filter_map(|r| r.infidelity().map(|i| (i, r.detuning)))
        .fold((f64::INFINITY, 0.0), |b, x| if x.0 < b.0 { x } else { b });
    let dips = rows
        .iter()
        .filter(|r| r.phase_error().is_some_and(|e| e < 1e-2))
        .count();
    Outcome {
        id: "note detuning cut, 250 ns fixed pulse over [-20, -10] MHz",
        pass: best.0 <= 1e-3,
        detail: format!(
            "best 1 - F = {:.2e} at {:.2} MHz; {dips} grid points with phase error < 1e-2",
            best.0,
            best.1 * 1e3
        ),
    }
}

fn main() {
    let start = Instant::now();
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(), criterion_7()];
    outcomes.extend(criterion_8(idle_phase()));
    outcomes.push(criterion_9());
    outcomes.push(detuning_cut());
    for o in &outcomes {
        println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        outcomes.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
