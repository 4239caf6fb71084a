use std::path::PathBuf;
use std::time::Instant;

use blowfly::analysis::{fit_decay, l2_norm, weighted_difference, FitMode, FitOptions, RateFit};
use blowfly::characteristic::{is_critical, lambda_pair, weight_exponent};
use blowfly::convolution::Field;
use blowfly::delaycalc::{
    l2_decay_fit, relative_l2_gap, spectral_symbols, FrequencyGrid, SpectralSolver, FREQUENCY_POINTS,
};
use blowfly::evolution::{constant_history, evolve_linear_with, evolve_with, init_history};
use blowfly::model::{equilibria, regime};
use blowfly::scenario::{zone_of_delay, zone_of_p, ScenarioConfig, PRESETS};
use blowfly::waveprofile::{solve_profile, WaveProfile};
use blowfly::Error;
use log::{info, warn};
use rayon::prelude::*;

use crate::chart::{line_chart, Series};
use crate::error::CliError;
use crate::output::{ensure_dir, write_summary, CsvOutput, Header};

/// Relative tolerance of the speed table against the reference digits.
pub const TABLE_TOLERANCE: f64 = 1e-3;
/// Largest relative `L^2` gap allowed between the two linear solvers.
pub const ORACLE_TOLERANCE: f64 = 0.05;
/// Times always checked by the linear oracle.
pub const ORACLE_TIMES: [f64; 3] = [0.5, 1.0, 2.0];
/// Window of the spectral `L^2` decay fit.
pub const SPECTRAL_FIT_WINDOW: (f64, f64) = (5.0, 50.0);

pub struct Run {
    pub config: ScenarioConfig,
    /// Set by `--diagnostic-no-viscosity`: blow-up is an expected outcome.
    pub diagnostic: bool,
}

impl Run {
    fn out(&self, name: &str) -> Result<PathBuf, CliError> {
        ensure_dir(&self.config.outputs.dir)?;
        Ok(self.config.outputs.dir.join(name))
    }

    fn profile(&self, c: f64) -> Result<WaveProfile, CliError> {
        let started = Instant::now();
        let profile = solve_profile(&self.config.params, c, &self.config.grid, &self.config.profile)?;
        info!(
            "profile at c = {c}: {} iterations, residual {:.3e}, {:.1}s",
            profile.iterations,
            profile.residual_sup,
            started.elapsed().as_secs_f64()
        );
        Ok(profile)
    }
}

pub fn speeds(run: &Run) -> Result<(), CliError> {
    let params = &run.config.params;
    let (c, critical) = run.config.speed()?;
    let report = regime(params)?;
    println!("case = {}", run.config.case_label);
    println!("c_star = {}", critical.c);
    println!("lambda_star = {}", critical.lambda);
    if report.r_lower.is_finite() {
        println!("r_lower = {}", report.r_lower);
    } else {
        println!("r_lower = none (b'(v+) >= 0, monotone for every delay)");
    }
    match report.r_upper {
        Some(r) => println!("r_upper = {r}"),
        None => println!("r_upper = none (no Hopf threshold)"),
    }
    println!("regime = {}", report.regime.label());
    println!("b_prime_at_vplus = {}", report.b_prime_at_vplus);
    if !is_critical(c, &critical) {
        let pair = lambda_pair(c, params)?;
        println!("c = {c}");
        println!("lambda1 = {}", pair.lambda1);
        println!("lambda2 = {}", pair.lambda2);
    }
    Ok(())
}

pub fn profile(run: &Run) -> Result<(), CliError> {
    let (c, _) = run.config.speed()?;
    let profile = run.profile(c)?;
    let v_plus = equilibria(&run.config.params)?.v_plus;
    let overshoot = profile.field.max() - v_plus;
    if overshoot > 1e-3 {
        info!("profile overshoots v+ by {overshoot:.4e}");
    }
    let header = Header::new(&run.config)?
        .meta("c", c)
        .meta("residual_sup", profile.residual_sup)
        .meta("iterations", profile.iterations)
        .meta("collar", profile.collar)
        .meta("overshoot", overshoot);
    let mut csv = CsvOutput::create(run.out("profile.csv")?, &header, &["xi", "phi"])?;
    let grid = profile.field.grid;
    for (i, v) in profile.field.values.iter().enumerate() {
        csv.numbers(&[grid.xi(i), *v])?;
    }
    let path = csv.finish()?;
    if run.config.outputs.charts {
        let points = profile.field.values.iter().enumerate().map(|(i, &v)| (grid.xi(i), v)).collect();
        line_chart(
            &run.out("profile.svg")?,
            &format!("{} profile, c = {c:.6}", run.config.case_label),
            "xi",
            "phi",
            &[Series { label: "phi".into(), points }],
            false,
        )?;
    }
    println!("c = {c}");
    println!("residual_sup = {:e}", profile.residual_sup);
    println!("iterations = {}", profile.iterations);
    println!("overshoot = {overshoot:e}");
    println!("wrote {}", path.display());
    Ok(())
}

fn fit_entries(prefix: &str, fit: &Result<RateFit, Error>) -> Vec<(String, String)> {
    match fit {
        Ok(f) => vec![
            (format!("{prefix}_mode"), format!("\"{:?}\"", f.mode)),
            (format!("{prefix}_log_amplitude"), f.amplitude.to_string()),
            (format!("{prefix}_exp_rate"), f.exp_rate.to_string()),
            (format!("{prefix}_alg_exponent"), f.alg_exponent.to_string()),
            (format!("{prefix}_window_start"), f.window.0.to_string()),
            (format!("{prefix}_window_end"), f.window.1.to_string()),
            (format!("{prefix}_residual"), f.residual.to_string()),
            (format!("{prefix}_used_envelope"), f.used_envelope.to_string()),
        ],
        Err(e) => vec![(format!("{prefix}_error"), format!("\"{e}\""))],
    }
}

/// Index of the step at time `t` for a run with step `dt`.
fn step_of(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

pub fn evolve(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let params = &config.params;
    let (c, critical) = config.speed()?;
    let profile = run.profile(c)?;
    let lambda = weight_exponent(c, params)?;
    let history = init_history(&profile, config.perturbation.eps, config.perturbation.gamma, params, &config.evolve)?;
    let dt = history.dt;
    let wanted: Vec<usize> = config.outputs.snapshot_times.iter().map(|&t| step_of(t, dt)).collect();
    let mut snapshots: Vec<(f64, Field)> = Vec::new();
    let started = Instant::now();
    let result = evolve_with(history, c, &profile, params, &config.evolve, lambda, |t, v| {
        if wanted.contains(&step_of(t, dt)) {
            snapshots.push((t, v.clone()));
        }
    });
    let record = match result {
        Ok(r) => r,
        Err(e @ Error::BlowUp { .. }) if run.diagnostic => {
            println!("diagnostic = blow-up");
            println!("{e}");
            return Err(CliError::DiagnosticBlowUp(e));
        }
        Err(e) => return Err(e.into()),
    };
    info!("evolution to t = {} in {:.1}s", config.evolve.t_end, started.elapsed().as_secs_f64());

    let positivity_violated = record.min_value < -1e-6;
    let critical_run = is_critical(c, &critical);
    let fit = if critical_run {
        fit_decay(&record.times, &record.weighted_sup_error, FitOptions::new(FitMode::Joint))
    } else {
        fit_decay(&record.times, &record.sup_error, FitOptions::new(FitMode::Exponential))
    };

    let header = Header::new(config)?
        .meta("c", c)
        .meta("lambda", lambda)
        .meta("collar", record.collar)
        .meta("dt", record.dt)
        .meta("profile_residual", profile.residual_sup);
    let grid = profile.field.grid;
    let mut csv = CsvOutput::create(run.out("snapshots.csv")?, &header, &["t", "xi", "v"])?;
    for (t, v) in &snapshots {
        for (i, x) in v.values.iter().enumerate() {
            csv.numbers(&[*t, grid.xi(i), *x])?;
        }
    }
    csv.finish()?;
    let mut csv = CsvOutput::create(run.out("errors.csv")?, &header, &["t", "sup", "weighted_sup"])?;
    for k in 0..record.times.len() {
        csv.numbers(&[record.times[k], record.sup_error[k], record.weighted_sup_error[k]])?;
    }
    csv.finish()?;

    let last = record.times.len() - 1;
    let mut entries = vec![
        ("c".to_string(), c.to_string()),
        ("critical".to_string(), critical_run.to_string()),
        ("lambda".to_string(), lambda.to_string()),
        ("t_end".to_string(), record.times[last].to_string()),
        ("sup_error_initial".to_string(), record.sup_error[0].to_string()),
        ("sup_error_final".to_string(), record.sup_error[last].to_string()),
        ("weighted_sup_error_initial".to_string(), record.weighted_sup_error[0].to_string()),
        ("weighted_sup_error_final".to_string(), record.weighted_sup_error[last].to_string()),
        ("min_value".to_string(), record.min_value.to_string()),
        ("positivity_violated".to_string(), positivity_violated.to_string()),
        ("diagnostic".to_string(), run.diagnostic.to_string()),
    ];
    entries.extend(fit_entries("fit", &fit));
    write_summary(run.out("summary.toml")?, &header, &entries)?;

    if config.outputs.charts {
        let mut series: Vec<Series> = snapshots
            .iter()
            .map(|(t, v)| Series {
                label: format!("t = {t:.2}"),
                points: v.values.iter().enumerate().map(|(i, &x)| (grid.xi(i), x)).collect(),
            })
            .collect();
        series.push(Series {
            label: "phi".into(),
            points: profile.field.values.iter().enumerate().map(|(i, &x)| (grid.xi(i), x)).collect(),
        });
        line_chart(&run.out("snapshots.svg")?, &format!("{} snapshots", config.case_label), "xi", "v", &series, false)?;
        let errors = vec![
            Series {
                label: "sup".into(),
                points: record.times.iter().copied().zip(record.sup_error.iter().copied()).collect(),
            },
            Series {
                label: "weighted sup".into(),
                points: record.times.iter().copied().zip(record.weighted_sup_error.iter().copied()).collect(),
            },
        ];
        line_chart(&run.out("errors.svg")?, &format!("{} errors", config.case_label), "t", "error", &errors, true)?;
    }

    for (k, v) in &entries {
        println!("{k} = {v}");
    }
    if positivity_violated {
        warn!("positivity violated: min value {:.3e}", record.min_value);
    }
    Ok(())
}

pub struct TableRow {
    pub case: u8,
    pub p: f64,
    pub delay: f64,
    pub zone_p: String,
    pub zone_r: String,
    pub c_star: f64,
    pub lambda_star: f64,
    pub behavior: String,
    pub deviation: f64,
}

pub fn table_rows() -> Result<Vec<TableRow>, Error> {
    PRESETS
        .par_iter()
        .map(|preset| {
            let params = blowfly::model::ModelParams::normalized(preset.p, preset.delay);
            let cp = blowfly::characteristic::critical_point(&params)?;
            let report = regime(&params)?;
            let deviation = ((cp.c - preset.c_star) / preset.c_star)
                .abs()
                .max(((cp.lambda - preset.lambda_star) / preset.lambda_star).abs());
            Ok(TableRow {
                case: preset.case,
                p: preset.p,
                delay: preset.delay,
                zone_p: zone_of_p(&params).to_string(),
                zone_r: zone_of_delay(&report, preset.delay),
                c_star: cp.c,
                lambda_star: cp.lambda,
                behavior: report.regime.label().to_string(),
                deviation,
            })
        })
        .collect()
}

pub fn table1(run: &Run) -> Result<(), CliError> {
    let started = Instant::now();
    let rows = table_rows()?;
    let header = Header::new(&run.config)?.meta("tolerance", TABLE_TOLERANCE);
    let mut csv = CsvOutput::create(
        run.out("table1.csv")?,
        &header,
        &["case", "p", "r", "zone_p", "zone_r", "c_star", "lambda_star", "behavior"],
    )?;
    for row in &rows {
        csv.row([
            row.case.to_string(),
            row.p.to_string(),
            row.delay.to_string(),
            row.zone_p.clone(),
            row.zone_r.clone(),
            format!("{:.7}", row.c_star),
            format!("{:.7}", row.lambda_star),
            row.behavior.clone(),
        ])?;
        println!(
            "{} p={} r={} {} {} c*={:.7} lambda*={:.7} {}",
            row.case, row.p, row.delay, row.zone_p, row.zone_r, row.c_star, row.lambda_star, row.behavior
        );
    }
    let path = csv.finish()?;
    println!("wrote {} in {:.2}s", path.display(), started.elapsed().as_secs_f64());
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.deviation > TABLE_TOLERANCE)
        .map(|r| format!("case {} deviates by {:.2e}", r.case, r.deviation))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(bad.join("; ")))
    }
}

pub struct OracleCheckpoint {
    pub t: f64,
    pub l2_stepped: f64,
    pub l2_spectral: f64,
    pub gap: f64,
    /// `min(u+ - e^{-lambda xi} |v - vbar| + 1e-6 (1 + u+))` against the
    /// scheme's evolution `vbar` of the unperturbed profile.
    pub margin: f64,
    /// The same margin measured against the profile itself.
    pub margin_vs_profile: f64,
}

pub struct OracleReport {
    pub c: f64,
    pub lambda: f64,
    pub checkpoints: Vec<OracleCheckpoint>,
    pub fit: Result<RateFit, Error>,
    pub positivity_violated: bool,
}

fn checkpoint_times(config: &ScenarioConfig) -> Vec<f64> {
    let mut times: Vec<f64> = ORACLE_TIMES
        .iter()
        .chain(&config.outputs.snapshot_times)
        .copied()
        .filter(|&t| t <= config.evolve.t_end + 1e-12)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    times
}

/// Per checkpoint: time, stepped and spectral `u+`, and the weighted
/// perturbation against the evolved base and against the profile.
pub type OracleFields = (f64, Field, Field, Vec<f64>, Vec<f64>);

pub fn linear_oracle_report(config: &ScenarioConfig) -> Result<(OracleReport, Vec<OracleFields>), CliError> {
    let params = &config.params;
    let (c, _) = config.speed()?;
    let profile = solve_profile(params, c, &config.grid, &config.profile)?;
    let lambda = weight_exponent(c, params)?;
    let times = checkpoint_times(config);
    let eps = config.perturbation.eps;
    let gamma = config.perturbation.gamma;
    let evolve = &config.evolve;

    let base_history = init_history(&profile, 0.0, gamma, params, evolve)?;
    let dt = base_history.dt;
    let steps: Vec<usize> = times.iter().map(|&t| step_of(t, dt)).collect();
    let capture = |eps: f64| -> Result<Vec<Field>, CliError> {
        let history = init_history(&profile, eps, gamma, params, evolve)?;
        let mut out = Vec::new();
        evolve_with(history, c, &profile, params, evolve, lambda, |t, v| {
            if steps.contains(&step_of(t, dt)) {
                out.push(v.clone());
            }
        })?;
        Ok(out)
    };
    let base = capture(0.0)?;
    let perturbed = capture(eps)?;

    let v0 = init_history(&profile, eps, gamma, params, evolve)?;
    let u0_values = weighted_difference(v0.current(), &profile.field, lambda)?;
    let u0 = Field::new(profile.field.grid, u0_values, 0.0, 0.0)?;
    let mut stepped = Vec::new();
    let linear = evolve_linear_with(
        constant_history(&u0, params.delay, evolve)?,
        c,
        lambda,
        params,
        evolve,
        profile.radius_sigmas,
        |t, u| {
            if steps.contains(&step_of(t, dt)) {
                stepped.push(u.clone());
            }
        },
    )?;

    let symbols = spectral_symbols(c, lambda, params)?;
    let solver = SpectralSolver::new(symbols, &u0, FrequencyGrid::for_spacing(u0.grid.dxi, FREQUENCY_POINTS))?;
    let spectral = solver.solve(&times)?;

    let mut checkpoints = Vec::new();
    let mut fields = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let w = weighted_difference(&perturbed[k], &base[k], lambda)?;
        let w_phi = weighted_difference(&perturbed[k], &profile.field, lambda)?;
        let u = &stepped[k];
        let margin_of = |w: &[f64]| {
            u.values
                .iter()
                .zip(w)
                .map(|(up, wi)| up - wi + 1e-6 * (1.0 + up))
                .fold(f64::INFINITY, f64::min)
        };
        checkpoints.push(OracleCheckpoint {
            t,
            l2_stepped: l2_norm(u),
            l2_spectral: l2_norm(&spectral[k].field),
            gap: relative_l2_gap(u, lambda, &spectral[k], solver.symbols())?,
            margin: margin_of(&w),
            margin_vs_profile: margin_of(&w_phi),
        });
        fields.push((t, u.clone(), spectral[k].field.clone(), w, w_phi));
    }

    let fit_times: Vec<f64> = (0..=90)
        .map(|i| SPECTRAL_FIT_WINDOW.0 + (SPECTRAL_FIT_WINDOW.1 - SPECTRAL_FIT_WINDOW.0) * i as f64 / 90.0)
        .collect();
    let norms = solver.l2_series(&fit_times)?;
    let fit = l2_decay_fit(&fit_times, &norms, Some(SPECTRAL_FIT_WINDOW));
    Ok((
        OracleReport {
            c,
            lambda,
            checkpoints,
            fit,
            positivity_violated: linear.positivity_violated(),
        },
        fields,
    ))
}

pub fn linear_oracle(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let (report, fields) = linear_oracle_report(config)?;
    let header = Header::new(config)?.meta("c", report.c).meta("lambda", report.lambda);
    let mut csv = CsvOutput::create(
        run.out("oracle.csv")?,
        &header,
        &["t", "l2_stepped", "l2_spectral", "relative_gap", "comparison_margin", "comparison_margin_vs_profile"],
    )?;
    for cp in &report.checkpoints {
        csv.numbers(&[cp.t, cp.l2_stepped, cp.l2_spectral, cp.gap, cp.margin, cp.margin_vs_profile])?;
    }
    csv.finish()?;
    let mut csv = CsvOutput::create(
        run.out("oracle_fields.csv")?,
        &header,
        &["t", "xi", "u_stepped", "u_spectral", "pointwise_gap", "weighted_perturbation", "weighted_perturbation_vs_profile"],
    )?;
    for (t, stepped, spectral, w, w_phi) in &fields {
        let grid = stepped.grid;
        for i in 0..grid.n {
            let (a, b) = (stepped.values[i], spectral.values[i]);
            csv.numbers(&[*t, grid.xi(i), a, b, a - b, w[i], w_phi[i]])?;
        }
    }
    csv.finish()?;
    let symbols = spectral_symbols(report.c, report.lambda, &config.params)?;
    let mut csv = CsvOutput::create(run.out("symbols.csv")?, &header, &["eta", "re_a", "im_a", "abs_b"])?;
    for i in 0..=400 {
        let eta = -20.0 + 0.1 * i as f64;
        let a = symbols.a(eta);
        csv.numbers(&[eta, a.re, a.im, symbols.b(eta).norm()])?;
    }
    csv.finish()?;

    let worst_gap = report.checkpoints.iter().filter(|c| c.t > 0.0).map(|c| c.gap).fold(0.0, f64::max);
    let worst_margin = report.checkpoints.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let worst_margin_phi = report.checkpoints.iter().map(|c| c.margin_vs_profile).fold(f64::INFINITY, f64::min);
    let mut entries = vec![
        ("c".to_string(), report.c.to_string()),
        ("lambda".to_string(), report.lambda.to_string()),
        ("max_relative_gap".to_string(), worst_gap.to_string()),
        ("comparison_margin".to_string(), worst_margin.to_string()),
        ("comparison_margin_vs_profile".to_string(), worst_margin_phi.to_string()),
        ("linear_positivity_violated".to_string(), report.positivity_violated.to_string()),
    ];
    entries.extend(fit_entries("spectral_fit", &report.fit));
    write_summary(run.out("oracle_summary.toml")?, &header, &entries)?;
    for (k, v) in &entries {
        println!("{k} = {v}");
    }

    let mut failures = Vec::new();
    if worst_gap > ORACLE_TOLERANCE {
        failures.push(format!("solvers disagree by {worst_gap:.3e} in relative L2"));
    }
    if worst_margin < 0.0 {
        failures.push(format!("comparison margin {worst_margin:.3e} is negative"));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(failures.join("; ")))
    }
}
