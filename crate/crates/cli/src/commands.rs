use std::fs;
use std::path::Path;

use fbcool::constants::{AMU, KB};
use fbcool::ensemble::{preset, scenario, scenario_table_csv, CAH_LAMBDA, CAH_MASS_AMU, PRESETS};
use fbcool::force::{force_curve_normalized, LoopGuard};
use fbcool::noise::{
    optimal_unity_gain_velocity, shot_noise_spectrum, temperature_differentiator, thermal_spectrum,
};
use fbcool::optics::{recoil_energy, wavenumber};
use fbcool::sim;
use fbcool::StabilityReport;
use serde::Serialize;

use crate::config::{ConfigFile, CustomSample, EnsembleSection, LoopSection, SpectrumSource};
use crate::output::Run;
use crate::{Cli, CliError, Command, LoopArgs};

fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

impl LoopArgs {
    fn apply(self, spec: &mut LoopSection) {
        if let Some(tag) = self.tag {
            // A new tag replaces any coefficients from the config file.
            spec.tag = tag;
            spec.num = None;
            spec.den = None;
        }
        if self.num.is_some() {
            spec.num = self.num;
        }
        if self.den.is_some() {
            spec.den = self.den;
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = load(cli.config.as_deref())?;
    let cfg_path = cli.config.as_deref();
    let out = cli.out.as_path();
    match cli.command {
        Command::ForceCurve {
            loop_args,
            vmax,
            points,
            r,
            analysis_only,
        } => {
            let mut s = file.force_curve.unwrap_or_default();
            loop_args.apply(&mut s.loop_spec);
            if let Some(v) = vmax {
                s.vmax = v;
            }
            if let Some(p) = points {
                s.points = p;
            }
            if let Some(r) = r {
                s.r = r;
            }
            s.analysis_only |= analysis_only;
            positive("vmax", s.vmax)?;
            if s.points == 0 {
                return Err(CliError::Validation("points must be at least 1".into()));
            }
            let h = s.loop_spec.build()?;
            let grid: Vec<f64> = (0..=s.points)
                .map(|i| i as f64 * s.vmax / s.points as f64)
                .collect();
            let guard = if s.analysis_only {
                LoopGuard::AnalysisOnly
            } else {
                LoopGuard::RequireStable
            };
            let csv = force_curve_normalized(&h, s.r, &grid, guard)?.to_csv();
            print!("{csv}");
            let mut run = Run::new("force-curve", cfg_path, out);
            run.add("force_curve.csv", csv);
            run.finish(&ConfigFile {
                force_curve: Some(s),
                ..Default::default()
            })
        }
        Command::LoopCheck { loop_args } => {
            let mut s = file.loop_check.unwrap_or_default();
            loop_args.apply(&mut s);
            let h = s.build()?;
            let report = h.stability()?;
            #[derive(Serialize)]
            struct LoopCheck<'a> {
                label: &'a str,
                num: &'a [f64],
                den: &'a [f64],
                stable: bool,
                report: &'a StabilityReport,
            }
            let check = LoopCheck {
                label: h.label(),
                num: h.num(),
                den: h.den(),
                stable: report.is_stable(),
                report: &report,
            };
            let mut run = Run::new("loop-check", cfg_path, out);
            run.add_json("loop_check.json", &check)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&check).expect("plain data")
            );
            run.finish(&ConfigFile {
                loop_check: Some(s),
                ..Default::default()
            })?;
            if report.is_stable() {
                Ok(())
            } else {
                Err(fbcool::Error::UnstableLoop {
                    poles: report.offending_poles(),
                }
                .into())
            }
        }
        Command::NoiseSpectrum {
            loop_args,
            source,
            u,
            q,
            omega_max,
            points,
        } => {
            let mut s = file.noise_spectrum.unwrap_or_default();
            loop_args.apply(&mut s.loop_spec);
            if let Some(x) = source {
                s.source = x.into();
            }
            if let Some(x) = u {
                s.u = x;
            }
            if let Some(x) = q {
                s.q = x;
            }
            if let Some(x) = omega_max {
                s.omega_max = x;
            }
            if let Some(x) = points {
                s.points = x;
            }
            positive("u", s.u)?;
            positive("lambda", s.lambda)?;
            positive("omega_max", s.omega_max)?;
            if s.points == 0 {
                return Err(CliError::Validation("points must be at least 1".into()));
            }
            let k = wavenumber(s.lambda);
            let h = s.loop_spec.build()?.with_frequency_unit(2.0 * k * s.u)?;
            h.require_stable()?;
            let omegas: Vec<f64> = (0..=s.points)
                .map(|i| i as f64 * s.omega_max / s.points as f64)
                .collect();
            let shot = || shot_noise_spectrum(s.finesse, s.p_c, k, s.q, &h, &omegas);
            let thermal = || thermal_spectrum(s.n, s.zeta, k, s.v_th, &h, &omegas);
            let spec = match s.source {
                SpectrumSource::Shot => shot()?,
                SpectrumSource::Thermal => thermal()?,
                SpectrumSource::Total => shot()?.add(&thermal()?)?,
            };
            let csv = spec.to_csv();
            print!("{csv}");
            let mut run = Run::new("noise-spectrum", cfg_path, out);
            run.add("spectrum.csv", csv);
            run.finish(&ConfigFile {
                noise_spectrum: Some(s),
                ..Default::default()
            })
        }
        Command::Temperature {
            eta,
            q,
            mass_amu,
            lambda,
        } => {
            let mut s = file.temperature.unwrap_or_default();
            if let Some(x) = eta {
                s.eta = x;
            }
            if let Some(x) = q {
                s.q = x;
            }
            if let Some(x) = mass_amu {
                s.mass_amu = x;
            }
            if let Some(x) = lambda {
                s.lambda = x;
            }
            positive("mass_amu", s.mass_amu)?;
            positive("lambda", s.lambda)?;
            let k = wavenumber(s.lambda);
            let m = s.mass_amu * AMU;
            let e_r = recoil_energy(k, m);
            let u_opt = optimal_unity_gain_velocity(s.q, s.eta, k, m)?;
            let t_d = temperature_differentiator(e_r, s.eta, s.q)?;
            #[derive(Serialize)]
            struct Temperature {
                /// m/s.
                u_opt: f64,
                /// K.
                t_d: f64,
                kbt_over_er: f64,
                /// J.
                e_r: f64,
            }
            let result = Temperature {
                u_opt,
                t_d,
                kbt_over_er: KB * t_d / e_r,
                e_r,
            };
            let mut run = Run::new("temperature", cfg_path, out);
            run.add_json("temperature.json", &result)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).expect("plain data")
            );
            run.finish(&ConfigFile {
                temperature: Some(s),
                ..Default::default()
            })
        }
        Command::Ensemble {
            preset: presets,
            n,
            t,
            mass_amu,
            lambda,
            label,
        } => {
            let mut s = file.ensemble.unwrap_or_default();
            let custom_flags = n.is_some() || t.is_some();
            if !presets.is_empty() {
                s.presets = presets;
            } else if custom_flags {
                s.presets.clear();
            }
            if custom_flags {
                let (Some(n), Some(t)) = (n, t) else {
                    return Err(CliError::Validation(
                        "a custom sample needs both --n and --t".into(),
                    ));
                };
                s.custom = Some(CustomSample {
                    label: label.unwrap_or_else(|| "custom".into()),
                    n,
                    t,
                    mass_amu: mass_amu.unwrap_or(CAH_MASS_AMU),
                    lambda: lambda.unwrap_or(CAH_LAMBDA),
                });
            }
            let rows = ensemble_rows(&s)?;
            let csv = scenario_table_csv(&rows);
            print!("{csv}");
            let mut run = Run::new("ensemble", cfg_path, out);
            run.add("ensemble.csv", csv);
            run.add_json("ensemble.json", &rows)?;
            run.finish(&ConfigFile {
                ensemble: Some(s),
                ..Default::default()
            })
        }
        Command::Simulate {
            seed,
            trajectories,
            steps,
            dt,
            traces,
        } => {
            let Some(mut cfg) = file.simulate else {
                return Err(CliError::Validation(
                    "simulate needs --config pointing at a file with a `simulate` section".into(),
                ));
            };
            if let Some(x) = seed {
                cfg.seed = x;
            }
            if let Some(x) = trajectories {
                cfg.n_trajectories = x;
            }
            if let Some(x) = steps {
                cfg.n_steps = x;
            }
            if let Some(x) = dt {
                cfg.dt = Some(x);
            }
            cfg.record_traces |= traces;
            cfg.validate()?;
            let result = sim::run(&cfg)?;
            let mut run = Run::new("simulate", cfg_path, out);
            run.add_json("result.json", &result.summary())?;
            for tr in &result.trajectories {
                if let Some(trace) = &tr.trace {
                    run.add(&format!("trace_{:04}.csv", tr.index), trace.to_csv());
                }
            }
            if let Some(psd) = &result.psd {
                run.add("psd.csv", psd.to_csv());
            }
            #[derive(Serialize)]
            struct Brief<'a> {
                dt: f64,
                n_steps: u64,
                trajectories: usize,
                temperature: &'a sim::TemperatureEstimate,
            }
            let brief = Brief {
                dt: result.dt,
                n_steps: result.n_steps,
                trajectories: result.trajectories.len(),
                temperature: &result.temperature,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&brief).expect("plain data")
            );
            run.finish(&ConfigFile {
                simulate: Some(cfg),
                ..Default::default()
            })
        }
    }
}

fn ensemble_rows(s: &EnsembleSection) -> Result<Vec<fbcool::ensemble::EnsembleScenario>, CliError> {
    let mut rows = Vec::new();
    for name in &s.presets {
        let row = preset(name).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown preset `{name}` (known: {})",
                PRESETS.join(", ")
            ))
        })?;
        rows.push(row);
    }
    if let Some(c) = &s.custom {
        rows.push(scenario(
            c.label.clone(),
            c.n,
            c.t,
            c.mass_amu * AMU,
            c.lambda,
        )?);
    }
    if rows.is_empty() {
        return Err(CliError::Validation(
            "no presets or custom sample given".into(),
        ));
    }
    Ok(rows)
}
