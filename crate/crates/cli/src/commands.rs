use crate::config::*;
use crate::output::{json_bytes, summary_path, write_atomic, Meta, Table};
use modecool::cooling::{
    continuous_cool, continuous_steady_state, pulsed_steady_state, run_schedule, BesselParams, ModeSet,
    Schedule,
};
use modecool::crystal::{mode_table, CrystalConfig, TrapConfig};
use modecool::exchange::{ExchangeParams, MomentState};
use modecool::fitkit::{
    fit_heating_rate, fit_kerr_occupations, fit_model, gaussian_noise, FitError, FitOptions,
    FitResult, Model, ScanData, ScanModel,
};
use modecool::spectro::{
    bessel_suppression, freq_scan_model, kerr_spectrum, rsb_rabi, time_scan_model,
    transfer_probability, two_ion_dark_counts, KerrSpectrumParams, ReadoutMode,
};
use serde_json::json;
use std::path::{Path, PathBuf};

/// Why a run did not finish cleanly.
#[derive(Debug)]
pub enum Failure {
    /// Validation or input errors, one diagnostic per line (exit 2).
    Invalid(Vec<String>),
    /// The fit result was written but did not converge (exit 3).
    NotConverged,
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Invalid(vec![s])
    }
}

type Run = Result<(), Failure>;

pub struct Context {
    pub meta: Meta,
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

impl Context {
    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Run {
        write_atomic(path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()).into())
    }

    fn noise(&self, n: usize, bars: &Noise) -> Result<Vec<f64>, String> {
        if !bars.noise {
            return Ok(vec![0.0; n]);
        }
        let seed = self.seed.ok_or("noise requested but no seed given (use --seed or \"seed\")")?;
        Ok(gaussian_noise(n, bars.sigma, seed))
    }
}

pub fn run(cfg: &RunConfig, ctx: &Context) -> Run {
    match &cfg.command {
        Command::Modes(c) => modes(c, ctx),
        Command::CoupleScan(c) => couple_scan(c, ctx),
        Command::Cool(c) => cool(c, ctx),
        Command::Spectrum(c) => spectrum(c, ctx),
        Command::Fit(c) => fit(c, ctx),
    }
}

fn collect<T>(results: Vec<Result<T, String>>) -> Result<Vec<T>, Failure> {
    let mut ok = vec![];
    let mut errs = vec![];
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errs.push(e),
        }
    }
    if errs.is_empty() {
        Ok(ok)
    } else {
        Err(Failure::Invalid(errs))
    }
}

fn modes(c: &ModesConfig, ctx: &Context) -> Run {
    let mut errs = vec![];
    if c.crystal.species_order.is_empty() {
        errs.push("species_order must be non-empty".to_string());
    }
    let species: Vec<_> = c.crystal.species_order.iter().map(SpeciesSpec::resolve).collect();
    let reference = c.trap.reference.resolve();
    for r in species.iter().chain(std::iter::once(&reference)) {
        if let Err(e) = r {
            errs.push(e.clone());
        }
    }
    for (name, v) in [
        ("axial_freq_ref_mhz", c.trap.axial_freq_ref_mhz),
        ("radial_freq_x_ref_mhz", c.trap.radial_freq_x_ref_mhz),
        ("radial_freq_y_ref_mhz", c.trap.radial_freq_y_ref_mhz),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(format!("{name} must be positive"));
        }
    }
    if !errs.is_empty() {
        return Err(Failure::Invalid(errs));
    }
    let crystal = CrystalConfig {
        species_order: species.into_iter().map(Result::unwrap).collect(),
    };
    let trap = TrapConfig {
        reference: reference.unwrap(),
        axial_freq_ref_mhz: c.trap.axial_freq_ref_mhz,
        radial_freq_x_ref_mhz: c.trap.radial_freq_x_ref_mhz,
        radial_freq_y_ref_mhz: c.trap.radial_freq_y_ref_mhz,
    };
    let table = mode_table(&crystal, &trap).map_err(|e| e.to_string())?;

    let n = table.num_ions();
    let mut t = Table::new(
        ["label", "axis", "frequency_mhz"]
            .into_iter()
            .map(String::from)
            .chain((0..n).map(|j| format!("xi_{j}"))),
    );
    let labels: Vec<&str> = table.ions.iter().map(|s| s.label.as_str()).collect();
    t.comment(format!("ions: {}", labels.join(" ")));
    let pos: Vec<String> = table.equilibrium_positions_um.iter().map(|z| z.to_string()).collect();
    t.comment(format!("positions_um: {}", pos.join(" ")));
    for m in &table.modes {
        let mut v = vec![m.frequency_mhz];
        v.extend(&m.participation);
        t.push_labeled(&[&m.label, &m.axis.to_string()], &v);
    }
    ctx.write(&ctx.out, &t.render(&ctx.meta))
}

fn with_error_bars(
    t: &mut Table,
    x: &[f64],
    model: &[f64],
    bars: Option<&Noise>,
    ctx: &Context,
) -> Run {
    match bars {
        None => {
            for (a, b) in x.iter().zip(model) {
                t.push(&[*a, *b]);
            }
        }
        Some(bars) => {
            if !(bars.sigma > 0.0) {
                return Err("error_bars.sigma must be positive".to_string().into());
            }
            let noise = ctx.noise(x.len(), bars)?;
            for i in 0..x.len() {
                t.push(&[x[i], model[i], model[i] + noise[i], bars.sigma]);
            }
        }
    }
    Ok(())
}

fn columns(bars: Option<&Noise>) -> Vec<&'static str> {
    match bars {
        None => vec!["x", "model"],
        Some(_) => vec!["x", "model", "y", "sigma"],
    }
}

fn couple_scan(c: &ScanConfig, ctx: &Context) -> Run {
    let bars = c.error_bars.as_ref();
    let mut t = Table::new(columns(bars));
    let (x, y): (Vec<f64>, Vec<f64>) = match &c.scan {
        ScanSpec::FreqScan { params, grid } => {
            if !(params.r0_khz >= 0.0 && params.tau_us > 0.0) {
                return Err("freq_scan requires r0_khz >= 0 and tau_us > 0".to_string().into());
            }
            t.comment("x: drive frequency offset delta (MHz)");
            let x = grid.values("grid")?;
            let y = x.iter().map(|&d| freq_scan_model(params, d)).collect();
            (x, y)
        }
        ScanSpec::TimeScan { params, grid } => {
            if !(params.gamma_per_ms >= 0.0) {
                return Err("time_scan requires gamma_per_ms >= 0".to_string().into());
            }
            t.comment("x: exchange duration (us)");
            let x = grid.values("grid")?;
            let y = x.iter().map(|&tau| time_scan_model(params, tau)).collect();
            (x, y)
        }
        ScanSpec::Exchange {
            g_khz,
            resonance_mhz,
            drive_phase_rad,
            observable,
            exact,
            sweep,
        } => {
            let base = ExchangeParams {
                g_khz: *g_khz,
                detuning_khz: 0.0,
                drive_phase_rad: *drive_phase_rad,
            };
            base.validate().map_err(|e| e.to_string())?;
            let eval = |p: &ExchangeParams, t: f64| match observable {
                Observable::Transfer => transfer_probability(p, t),
                Observable::DarkW => two_ion_dark_counts(p, t, ReadoutMode::W, *exact),
                Observable::DarkS => two_ion_dark_counts(p, t, ReadoutMode::S, *exact),
            };
            match sweep {
                Sweep::Frequency { grid, duration_us } => {
                    if !(*duration_us >= 0.0) {
                        return Err("duration_us must be non-negative".to_string().into());
                    }
                    t.comment("x: drive frequency (MHz)");
                    let x = grid.values("sweep.grid")?;
                    let y = x
                        .iter()
                        .map(|&f| {
                            let p = ExchangeParams {
                                detuning_khz: (f - resonance_mhz) * 1e3,
                                ..base
                            };
                            eval(&p, *duration_us)
                        })
                        .collect();
                    (x, y)
                }
                Sweep::Duration { grid, detuning_khz } => {
                    t.comment("x: exchange duration (us)");
                    let x = grid.values("sweep.grid")?;
                    if x[0] < 0.0 {
                        return Err("sweep.grid: durations must be non-negative".to_string().into());
                    }
                    let p = ExchangeParams {
                        detuning_khz: *detuning_khz,
                        ..base
                    };
                    let y = x.iter().map(|&tau| eval(&p, tau)).collect();
                    (x, y)
                }
            }
        }
    };
    with_error_bars(&mut t, &x, &y, bars, ctx)?;
    ctx.write(&ctx.out, &t.render(&ctx.meta))
}

fn read_schedule(path: &Path) -> Result<Schedule, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = if v.is_array() {
        serde_json::from_value(v).map(Schedule::new)
    } else {
        serde_json::from_value(v)
    };
    parsed.map_err(|e| format!("{}: {e}", path.display()))
}

fn nbar_object(labels: &[String], v: &[f64]) -> serde_json::Value {
    serde_json::Value::Object(labels.iter().cloned().zip(v.iter().map(|x| json!(x))).collect())
}

fn cool(c: &CoolConfig, ctx: &Context) -> Run {
    match c {
        CoolConfig::Pulsed {
            modes,
            initial_nbar,
            cycle,
            cycle_path,
            repetitions,
        } => {
            let cycle = match (cycle, cycle_path) {
                (Some(c), None) => Schedule::new(c.clone()),
                (None, Some(p)) => read_schedule(&ctx.resolve(p))?,
                _ => return Err("exactly one of cycle or cycle_path is required".to_string().into()),
            };
            let set = ModeSet {
                labels: modes.iter().map(|m| m.label.clone()).collect(),
                rates: modes.iter().map(|m| m.rates).collect(),
            };
            if *repetitions == 0 {
                return Err("repetitions must be at least 1".to_string().into());
            }
            let mut errs: Vec<String> = vec![];
            if let Err(e) = set.validate() {
                errs.push(e.to_string());
            }
            if let Err(e) = cycle.validate(&set.labels) {
                errs.push(e.to_string());
            }
            if initial_nbar.len() != set.labels.len() {
                errs.push(format!(
                    "initial_nbar has {} entries for {} modes",
                    initial_nbar.len(),
                    set.labels.len()
                ));
            }
            if !errs.is_empty() {
                return Err(Failure::Invalid(errs));
            }

            let mut t = Table::new(std::iter::once("time_us".to_string()).chain(set.labels.iter().cloned()));
            let mut state = initial_nbar.clone();
            let mut offset = 0.0;
            let mut after_cycle = vec![];
            for rep in 0..*repetitions {
                let traj = run_schedule(&cycle, &state, &set).map_err(|e| e.to_string())?;
                let skip = if rep == 0 { 0 } else { 1 };
                for (time, row) in traj.times_us.iter().zip(&traj.nbar).skip(skip) {
                    let mut v = vec![offset + time];
                    v.extend(row);
                    t.push(&v);
                }
                offset += traj.times_us.last().copied().unwrap_or(0.0);
                state = traj.final_nbar().to_vec();
                after_cycle.push(state.clone());
            }
            let steady = pulsed_steady_state(&cycle, &set);
            let summary = json!({
                "scheme": "pulsed",
                "modes": set.labels,
                "cycle_duration_us": cycle.duration_us(),
                "repetitions": repetitions,
                "final_nbar": nbar_object(&set.labels, &state),
                "after_cycle": after_cycle,
                "steady_state": steady.as_ref().ok().map(|s| nbar_object(&set.labels, s)),
                "steady_state_error": steady.as_ref().err().map(|e| e.to_string()),
            });
            ctx.write(&ctx.out, &t.render(&ctx.meta))?;
            ctx.write(&summary_path(&ctx.out), &json_bytes(summary, &ctx.meta))
        }
        CoolConfig::Continuous {
            wcm,
            scm,
            cooling,
            initial_nbar,
            g_khz,
            duration_us,
            samples,
        } => {
            let start = MomentState::thermal(initial_nbar[0], initial_nbar[1]);
            let traj = continuous_cool(&start, *g_khz, &wcm.rates, &scm.rates, cooling, *duration_us, *samples)
                .map_err(|e| e.to_string())?;
            let mut t = Table::new([
                "time_us".to_string(),
                wcm.label.clone(),
                scm.label.clone(),
                "cross_re".into(),
                "cross_im".into(),
            ]);
            for (time, s) in &traj {
                t.push(&[*time, s.nbar_w, s.nbar_s, s.cross.re, s.cross.im]);
            }
            let end = traj.last().expect("at least one sample").1;
            let steady = continuous_steady_state(*g_khz, &wcm.rates, &scm.rates, cooling);
            let labels = [wcm.label.clone(), scm.label.clone()];
            let summary = json!({
                "scheme": "continuous",
                "g_khz": g_khz,
                "r0_khz": 2.0 * g_khz,
                "kappa_eff_per_s": cooling.effective_rate(*g_khz),
                "final_nbar": nbar_object(&labels, &[end.nbar_w, end.nbar_s]),
                "steady_state": steady.as_ref().ok().map(|s| nbar_object(&labels, &[s.nbar_w, s.nbar_s])),
                "steady_state_error": steady.as_ref().err().map(|e| e.to_string()),
            });
            ctx.write(&ctx.out, &t.render(&ctx.meta))?;
            ctx.write(&summary_path(&ctx.out), &json_bytes(summary, &ctx.meta))
        }
        CoolConfig::ContinuousSweep {
            wcm,
            scm,
            cooling,
            initial_nbar,
            r0_khz,
            duration_us,
        } => {
            let grid = r0_khz.values("r0_khz")?;
            if grid[0] < 0.0 {
                return Err("r0_khz: values must be non-negative".to_string().into());
            }
            let start = MomentState::thermal(initial_nbar[0], initial_nbar[1]);
            let rows = collect(
                grid.iter()
                    .map(|&r0| {
                        let g = r0 / 2.0;
                        continuous_cool(&start, g, &wcm.rates, &scm.rates, cooling, *duration_us, 1)
                            .map(|tr| (r0, g, tr.last().expect("final sample").1))
                            .map_err(|e| e.to_string())
                    })
                    .collect(),
            )?;
            let mut t = Table::new([
                "r0_khz".to_string(),
                "g_khz".into(),
                "kappa_eff_per_s".into(),
                wcm.label.clone(),
                scm.label.clone(),
            ]);
            for (r0, g, s) in &rows {
                t.push(&[*r0, *g, cooling.effective_rate(*g), s.nbar_w, s.nbar_s]);
            }
            let (k, best) = rows
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .2.nbar_w.total_cmp(&b.1 .2.nbar_w))
                .expect("non-empty grid");
            let summary = json!({
                "scheme": "continuous_sweep",
                "duration_us": duration_us,
                "optimum": {
                    "r0_khz": best.0,
                    "final_nbar": nbar_object(
                        &[wcm.label.clone(), scm.label.clone()],
                        &[best.2.nbar_w, best.2.nbar_s],
                    ),
                    "interior": k > 0 && k + 1 < rows.len(),
                },
            });
            ctx.write(&ctx.out, &t.render(&ctx.meta))?;
            ctx.write(&summary_path(&ctx.out), &json_bytes(summary, &ctx.meta))
        }
    }
}

/// Kerr parameters: Be⁺-Be⁺ defaults with the given fields replaced.
fn kerr_params(overrides: &serde_json::Map<String, serde_json::Value>) -> Result<KerrSpectrumParams, String> {
    let mut v = serde_json::to_value(KerrSpectrumParams::be_be_defaults()).expect("serializable");
    merge(&mut v, overrides);
    let p: KerrSpectrumParams = serde_json::from_value(v).map_err(|e| format!("kerr params: {e}"))?;
    p.validate().map_err(|e| format!("kerr params: {e}"))?;
    Ok(p)
}

fn merge(base: &mut serde_json::Value, overrides: &serde_json::Map<String, serde_json::Value>) {
    let obj = base.as_object_mut().expect("object");
    for (k, v) in overrides {
        match (obj.get_mut(k), v) {
            (Some(inner @ serde_json::Value::Object(_)), serde_json::Value::Object(o)) => merge(inner, o),
            _ => {
                obj.insert(k.clone(), v.clone());
            }
        }
    }
}

fn spectrum(c: &SpectrumConfig, ctx: &Context) -> Run {
    match c {
        SpectrumConfig::Kerr {
            params,
            offset_khz,
            error_bars,
        } => {
            let p = kerr_params(params)?;
            for w in p.truncation_warnings() {
                eprintln!("warning: {w}");
            }
            let offsets = offset_khz.values("offset_khz")?;
            let x: Vec<f64> = offsets.iter().map(|d| p.f_rsb_mhz + d * 1e-3).collect();
            let y: Vec<f64> = x.iter().map(|&f| kerr_spectrum(&p, f)).collect();
            let mut t = Table::new(columns(error_bars.as_ref()));
            t.comment("x: sideband drive frequency (MHz)");
            t.comment(format!("f_rsb_mhz: {}", p.f_rsb_mhz));
            with_error_bars(&mut t, &x, &y, error_bars.as_ref(), ctx)?;
            ctx.write(&ctx.out, &t.render(&ctx.meta))
        }
        SpectrumConfig::Bessel {
            dk_per_m,
            beta_nm_per_khz,
            r0_khz,
        } => {
            let dk = dk_per_m.unwrap_or(BesselParams::MG_RAMAN_DK_PER_M);
            if !(dk >= 0.0) || beta_nm_per_khz.iter().any(|b| !(*b >= 0.0)) {
                return Err("dk_per_m and beta_nm_per_khz must be non-negative".to_string().into());
            }
            let grid = r0_khz.values("r0_khz")?;
            let mut t = Table::new(
                std::iter::once("r0_khz".to_string())
                    .chain(beta_nm_per_khz.iter().map(|b| format!("beta_{b}"))),
            );
            t.comment(format!("dk_per_m: {dk}"));
            for r0 in grid {
                let mut row = vec![r0];
                row.extend(beta_nm_per_khz.iter().map(|&b| bessel_suppression(dk, b, r0)));
                t.push(&row);
            }
            ctx.write(&ctx.out, &t.render(&ctx.meta))
        }
        SpectrumConfig::RsbRabi { rabi, n_max } => {
            rabi.validate()?;
            let mut t = Table::new(["n", "rsb_rabi_khz"]);
            for n in 0..=*n_max {
                t.push(&[n as f64, rsb_rabi(n, rabi)]);
            }
            ctx.write(&ctx.out, &t.render(&ctx.meta))
        }
    }
}

fn ordered(names: &[&'static str], given: &std::collections::BTreeMap<String, f64>, what: &str) -> Result<Vec<f64>, Failure> {
    let mut errs: Vec<String> = given
        .keys()
        .filter(|k| !names.contains(&k.as_str()))
        .map(|k| format!("{what}: unknown parameter '{k}' (expected {})", names.join(", ")))
        .collect();
    let mut out = vec![];
    for n in names {
        match given.get(*n) {
            Some(v) => out.push(*v),
            None => errs.push(format!("{what}: missing parameter '{n}'")),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(Failure::Invalid(errs))
    }
}

fn fit(c: &FitConfig, ctx: &Context) -> Run {
    let path = ctx.resolve(&c.data);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let data = ScanData::from_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?;

    if c.model == "heating" {
        let h = fit_heating_rate(&data).map_err(|e| e.to_string())?;
        let v = serde_json::to_value(h).expect("serializable");
        return ctx.write(&ctx.out, &json_bytes(json!({ "model": "heating", "result": v }), &ctx.meta));
    }

    let model = match c.model.as_str() {
        "kerr_occupations" => ScanModel::KerrOccupations(Box::new(kerr_params(&c.kerr)?)),
        name => ScanModel::by_name(name).ok_or_else(|| {
            format!("unknown model '{name}' (expected freq_scan, time_scan, line, kerr_occupations or heating)")
        })?,
    };
    let names = model.param_names();
    let mut opts = FitOptions {
        seed: ctx.seed.unwrap_or(0),
        ..FitOptions::default()
    };
    if let Some(m) = c.max_iterations {
        opts.max_iterations = m;
    }
    if let Some(r) = c.restarts {
        opts.restarts = r;
    }
    if !c.bounds.is_empty() {
        let unknown: Vec<String> = c
            .bounds
            .keys()
            .filter(|k| !names.contains(&k.as_str()))
            .map(|k| format!("bounds: unknown parameter '{k}'"))
            .collect();
        if !unknown.is_empty() {
            return Err(Failure::Invalid(unknown));
        }
        opts.bounds = names
            .iter()
            .map(|n| match c.bounds.get(*n) {
                Some([lo, hi]) => (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            })
            .collect();
    }

    let result = match &model {
        ScanModel::KerrOccupations(base) => {
            let g = |k: &str| c.guess.get(k).copied().unwrap_or(1.0);
            fit_kerr_occupations(&data, base, (g("nbar_xr"), g("nbar_yr")), &opts)
        }
        _ => {
            let guess = ordered(&names, &c.guess, "guess")?;
            fit_model(&data, &model, &guess, &opts)
        }
    };
    let (res, converged): (FitResult, bool) = match result {
        Ok(r) => (r, true),
        Err(FitError::NoConvergence { best }) => (*best, false),
        Err(e) => return Err(e.to_string().into()),
    };
    ctx.write(&ctx.out, &json_bytes(res.to_json(), &ctx.meta))?;
    if converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}
