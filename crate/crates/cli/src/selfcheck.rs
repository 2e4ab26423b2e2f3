//! Invariant suite with per-check timing and a JSON summary.

use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;
use zeeman_eit::atomic_structure::{build_level_scheme, wigner3j, DipoleTable, Manifold};
use zeeman_eit::field_geometry::{decompose_probe, decompose_pump, FieldGeometry, SphericalComponents};
use zeeman_eit::liouville::{linear_grid, probe_scan, ScanConfig, VelocityGrid};
use zeeman_eit::magnetometer::field_direction;
use zeeman_eit::toy_model::{
    chi_analytic, chi_quadrature, peak_amplitude_a0, peak_amplitude_a1, DeltaTerm, ToyParameters, VelocityWeight,
};
use zeeman_eit::EitError;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Flip the sign of the pump π component.
    PumpSign,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelfCheckFlags {
    /// Print only the JSON summary
    #[arg(long)]
    pub json: bool,
    /// Inject a known defect; the suite must then fail
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub millis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckResult>,
}

type PumpFn = fn(f64, f64, f64) -> Result<SphericalComponents<f64>, EitError>;

fn pump_sign_fault(e: f64, phi: f64, theta: f64) -> Result<SphericalComponents<f64>, EitError> {
    let mut c = decompose_pump(e, phi, theta)?;
    c.pi = -c.pi;
    Ok(c)
}

type Outcome = Result<String, String>;
type Check = (&'static str, Box<dyn Fn() -> Outcome>);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn wigner_sum_rules() -> Outcome {
    let mut worst = 0.0f64;
    for (j1, j2) in [(2.0, 1.0)] {
        for j3 in [1.0f64, 2.0, 3.0] {
            for m3 in -(j3 as i32)..=j3 as i32 {
                let mut s = 0.0;
                for m1 in -2..=2 {
                    for m2 in -1..=1 {
                        let w: f64 =
                            wigner3j(j1, j2, j3, m1 as f64, m2 as f64, m3 as f64).map_err(|e| e.to_string())?;
                        s += (2.0 * j3 + 1.0) * w * w;
                    }
                }
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    let scheme = build_level_scheme();
    let table = DipoleTable::<f64>::build(&scheme);
    let stray = table.entries().iter().filter(|d| d.q.abs() > 1).count();
    // Σ over the ground sublevels of |μ|² is 1/(2F′+1) per ground manifold
    let mut line_sum = 0.0f64;
    for e in scheme.indices_of(Manifold::ExcitedF2) {
        let s: f64 = scheme
            .indices_of(Manifold::GroundF1)
            .chain(scheme.indices_of(Manifold::GroundF2))
            .map(|g| table.amplitude(e, g).powi(2))
            .sum();
        line_sum = line_sum.max((s - 0.4).abs());
    }
    verdict(
        worst <= 1e-12 && line_sum <= 1e-12 && stray == 0,
        format!("worst sum-rule deviation {worst:.1e}, line strength {line_sum:.1e}, {stray} entries beyond |q| = 1"),
    )
}

fn decomposition(pump: PumpFn) -> Outcome {
    let mut worst_power = 0.0f64;
    let mut worst_inner = 0.0f64;
    for i in 0..12 {
        for j in 0..7 {
            let phi = 0.3 + i as f64 * 0.5;
            let theta = 0.1 + j as f64 * 0.24;
            let e = 2.5;
            let p = decompose_probe(e, phi, theta).map_err(|e| e.to_string())?;
            let c = pump(e, phi, theta).map_err(|e| e.to_string())?;
            worst_power = worst_power
                .max((p.power() / (e * e) - 1.0).abs())
                .max((c.power() / (e * e) - 1.0).abs());
            worst_inner = worst_inner.max(p.inner(&c).norm() / (e * e));
        }
    }
    verdict(
        worst_power <= 1e-12 && worst_inner <= 1e-12,
        format!("power error {worst_power:.1e}, probe/pump overlap {worst_inner:.1e}"),
    )
}

fn density_invariants() -> Outcome {
    let g = FieldGeometry::from_polar(6.004, 44.8f64.to_radians(), 40f64.to_radians()).map_err(|e| e.to_string())?;
    let mut cfg = ScanConfig::from_intensities(g, 0.1, 17.5).map_err(|e| e.to_string())?;
    cfg.velocity = VelocityGrid::sinh_mapped(506.0, 21, 8.0).map_err(|e| e.to_string())?;
    let r = probe_scan(&cfg, &linear_grid(-20.0, 20.0, 41)).map_err(|e| e.to_string())?;
    let d = r.diagnostics;
    verdict(
        d.invariants_hold(),
        format!(
            "{} solves: trace {:.1e}, hermiticity {:.1e}, min eigenvalue {:.2e}",
            d.solves, d.worst_trace_error, d.worst_hermiticity, d.min_eigenvalue
        ),
    )
}

fn analytic_vs_quadrature() -> Outcome {
    let mut p = ToyParameters::new(44.8f64.to_radians(), 40f64.to_radians(), 4.17).map_err(|e| e.to_string())?;
    p.omega_c = 6.066 / 2.0;
    let mut worst = 0.0f64;
    for d in linear_grid(-20.0, 20.0, 41) {
        let a = chi_analytic(d, &p).map_err(|e| e.to_string())?;
        let q = chi_quadrature(d, &p, VelocityWeight::Lorentzian).map_err(|e| e.to_string())?;
        worst = worst.max((a - q).norm() / q.norm());
    }
    verdict(worst <= 0.01, format!("worst relative error {worst:.1e}"))
}

fn ratio_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for deg in [5.0f64, 15.0, 30.0, 45.0, 60.0, 75.0, 85.0] {
        let p = ToyParameters::new(deg.to_radians(), 0.0, 4.17).map_err(|e| e.to_string())?;
        let a0 = peak_amplitude_a0(&p, DeltaTerm::Dropped).map_err(|e| e.to_string())?;
        let a1 = peak_amplitude_a1(&p, DeltaTerm::Dropped).map_err(|e| e.to_string())?;
        let t = field_direction(a1, a0, 0.5).map_err(|e| e.to_string())?;
        worst = worst.max((t.theta_deg - deg).to_radians().abs());
    }
    verdict(worst <= 1e-9, format!("worst theta error {worst:.1e} rad"))
}

pub fn run_checks(fault: Option<Fault>) -> Summary {
    let pump: PumpFn = match fault {
        Some(Fault::PumpSign) => pump_sign_fault,
        None => decompose_pump::<f64>,
    };
    let checks: Vec<Check> = vec![
        ("wigner_sum_rules", Box::new(wigner_sum_rules)),
        ("beam_decomposition", Box::new(move || decomposition(pump))),
        ("density_matrix_invariants", Box::new(density_invariants)),
        ("analytic_vs_quadrature", Box::new(analytic_vs_quadrature)),
        ("ratio_law_round_trip", Box::new(ratio_round_trip)),
    ];
    let results: Vec<CheckResult> = checks
        .into_iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let r = f();
            let millis = t.elapsed().as_secs_f64() * 1e3;
            let (passed, detail) = match r {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                name,
                passed,
                detail,
                millis,
            }
        })
        .collect();
    let passed = results.iter().filter(|r| r.passed).count();
    Summary {
        passed,
        failed: results.len() - passed,
        checks: results,
    }
}

pub fn cmd_selfcheck(f: &SelfCheckFlags) -> Result<(), CliError> {
    let s = run_checks(f.inject_fault);
    if !f.json {
        for c in &s.checks {
            println!(
                "{} {:<28} {:>9.1} ms  {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.millis,
                c.detail
            );
        }
    }
    println!(
        "{}",
        serde_json::to_string(&s).map_err(|e| CliError::Io(e.to_string()))?
    );
    if s.failed > 0 {
        return Err(CliError::SelfCheck { failed: s.failed });
    }
    Ok(())
}
