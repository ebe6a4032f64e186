//! Run configuration, decay-rate fitting and the experiment drivers behind
//! the command line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    energy_norm, make_profile, norm_x, norm_z, DataPair, Field, Order, ProfileFamily, SourceField,
};
use crate::finalstate::{attach_scaling, build_final_ladder, ladder_norm_report, NormRecord};
use crate::lattice::{GridSpec, Lattice};
use crate::params::{
    a_closed_form, build_ladder, classify_regime, compute_kappas_with, ladder_for, ExponentLadder,
};
use crate::scatter::{
    epsilon_scaling, forward_operator, relative_y_error, sample_times, scattering_map,
    wave_operator_inverse, EnergySeries, MembershipCheck, OperatorConfig, OperatorResult,
};
use crate::solver::{solve_ivp, SolverOptions};
use crate::waveops::{apply_k, apply_l, apply_r, pde_residual, TruncationPolicy, DEFAULT_TAIL_TOL};

/// Version of the JSON summaries.
pub const SUMMARY_VERSION: u32 = 1;

/// Samples at or below this value are dropped before fitting.
pub const FIT_FLOOR: f64 = 1e-14;

/// Allowed distance between fitted and expected decay exponents.
pub const RATE_TOL: f64 = 0.15;

/// Allowed relative distance between observed and expected `ε` powers.
pub const SCALING_REL_TOL: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentsSection {
    pub p: f64,
    pub q: f64,
    /// `κ1` for `p = 2`; ignored otherwise.
    pub kappa1: Option<f64>,
}

impl Default for ExponentsSection {
    fn default() -> Self {
        ExponentsSection {
            p: 3.0,
            q: 3.0,
            kappa1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub family1: ProfileFamily,
    pub family2: ProfileFamily,
    /// Decay index of datum 1; defaults to `κ1`.
    pub nu1: Option<f64>,
    /// Decay index of datum 2; defaults to `κ2`.
    pub nu2: Option<f64>,
    pub eps: f64,
    /// Amplitudes for `rates`; empty means `[eps, eps/2]`.
    pub eps_list: Vec<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            family1: ProfileFamily::Gaussian,
            family2: ProfileFamily::Gaussian,
            nu1: None,
            nu2: None,
            eps: 1e-2,
            eps_list: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub r_max: f64,
    pub t_max: f64,
    pub cells: usize,
    /// Last stored time level; defaults to `2 t_max`.
    pub horizon: Option<f64>,
    /// Cut of the backward integrals; defaults to the horizon.
    pub t_infinity: Option<f64>,
    pub tail_tol: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            r_max: 100.0,
            t_max: 100.0,
            cells: 512,
            horizon: None,
            t_infinity: None,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub rel_tol: Option<f64>,
    pub max_iters: usize,
    pub ratio_bound: f64,
    pub divergence_ratio: f64,
    pub domain_factor: f64,
    /// Probed smallness threshold for the scattering map.
    pub eps0: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverSection {
            tol: d.tol,
            rel_tol: d.rel_tol,
            max_iters: d.max_iters,
            ratio_bound: d.ratio_bound,
            divergence_ratio: d.divergence_ratio,
            domain_factor: d.domain_factor,
            eps0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Fit window `[T1, T2]`; defaults to `[10, 0.8 t_max]`, with the
    /// lower end pulled in on short grids.
    pub fit_window: Option<[f64; 2]>,
    /// Write full field snapshots.
    pub fields: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            fit_window: None,
            fields: false,
        }
    }
}

/// Complete run configuration. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub exponents: ExponentsSection,
    pub data: DataSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks every constraint the downstream modules impose.
    pub fn validate(&self) -> Result<()> {
        self.ladder()?;
        self.grid_spec().validate()?;
        let d = &self.data;
        if !(d.eps.is_finite() && d.eps >= 0.0)
            || d.eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0))
        {
            return Err(Error::Config(
                "amplitudes must be finite and nonnegative".into(),
            ));
        }
        for nu in [d.nu1, d.nu2].into_iter().flatten() {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(Error::Config(format!("decay index {nu} must be positive")));
            }
        }
        let s = &self.solver;
        if !(s.tol >= 0.0 && s.max_iters > 0 && s.ratio_bound > 0.0 && s.ratio_bound < 1.0) {
            return Err(Error::Config(
                "need tol >= 0, max_iters > 0 and 0 < ratio_bound < 1".into(),
            ));
        }
        if !(s.divergence_ratio > 0.0 && s.domain_factor > 0.0) {
            return Err(Error::Config(
                "divergence_ratio and domain_factor must be positive".into(),
            ));
        }
        if let Some(rt) = s.rel_tol {
            if rt.is_nan() || rt <= 0.0 {
                return Err(Error::Config("rel_tol must be positive".into()));
            }
        }
        if self.grid.tail_tol.is_nan() || self.grid.tail_tol <= 0.0 {
            return Err(Error::Config("tail_tol must be positive".into()));
        }
        let lat = Lattice::new(self.grid_spec())?;
        if let Some(ti) = self.grid.t_infinity {
            if !(ti >= self.grid.t_max && ti <= lat.t(lat.levels) + 1e-9) {
                return Err(Error::Config(format!(
                    "t_infinity {ti} must lie in [t_max, horizon]"
                )));
            }
        }
        let [a, b] = self.fit_window();
        if !(a > 0.0 && b > a) {
            return Err(Error::Config(format!("fit window [{a}, {b}] is empty")));
        }
        Ok(())
    }

    pub fn ladder(&self) -> Result<ExponentLadder> {
        let e = &self.exponents;
        match e.kappa1 {
            Some(k1) => {
                let ex = classify_regime(e.p, e.q)?;
                build_ladder(&compute_kappas_with(&ex, Some(k1))?, &ex)
            }
            None => ladder_for(e.p, e.q),
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        let spec = GridSpec::new(g.r_max, g.t_max, g.cells);
        match g.horizon {
            Some(hz) => spec.with_horizon(hz),
            None => spec,
        }
    }

    pub fn fit_window(&self) -> [f64; 2] {
        let hi = 0.8 * self.grid.t_max;
        self.output.fit_window.unwrap_or([10f64.min(hi / 8.0), hi])
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tol: s.tol,
            rel_tol: s.rel_tol,
            max_iters: s.max_iters,
            ratio_bound: s.ratio_bound,
            divergence_ratio: s.divergence_ratio,
            domain_factor: s.domain_factor,
        }
    }

    pub fn operator_config(&self) -> Result<OperatorConfig> {
        let lat = Arc::new(Lattice::new(self.grid_spec())?);
        let mut cfg = OperatorConfig::new(Arc::clone(&lat), self.ladder()?);
        if let Some(ti) = self.grid.t_infinity {
            cfg.trunc.t_infinity = ti;
        }
        cfg.trunc.tail_tol = self.grid.tail_tol;
        cfg.solver = self.solver_options();
        cfg.eps0 = self.solver.eps0;
        Ok(cfg)
    }

    /// The configured data pair at amplitude `eps`.
    pub fn data_at(&self, cfg: &OperatorConfig, eps: f64) -> Result<(DataPair, DataPair)> {
        let k = cfg.ladder.kappas;
        let d = &self.data;
        Ok((
            make_profile(d.family1, d.nu1.unwrap_or(k.kappa1), eps, &cfg.lattice)?,
            make_profile(d.family2, d.nu2.unwrap_or(k.kappa2), eps, &cfg.lattice)?,
        ))
    }

    fn eps_pair(&self) -> (f64, f64) {
        match self.data.eps_list.as_slice() {
            [a, b, ..] => (*a, *b),
            [a] => (*a, a / 2.0),
            [] => (self.data.eps, self.data.eps / 2.0),
        }
    }
}

/// Least-squares fit of `log value` against `log(1+t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Samples inside the window that survived the floor.
    pub series: Vec<(f64, f64)>,
    pub slope: f64,
    pub stderr: f64,
    pub window: [f64; 2],
}

pub fn fit_decay_exponent(series: &[(f64, f64)], window: [f64; 2]) -> Result<RateFit> {
    let in_window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window[0] - 1e-9 && *t <= window[1] + 1e-9)
        .collect();
    let kept: Vec<(f64, f64)> = in_window
        .iter()
        .copied()
        .filter(|(_, v)| *v > FIT_FLOOR)
        .collect();
    if kept.is_empty() && !in_window.is_empty() {
        return Err(Error::DegenerateSeries(format!(
            "all {} samples in [{}, {}] are below {FIT_FLOOR:e}",
            in_window.len(),
            window[0],
            window[1]
        )));
    }
    if kept.len() < 5 {
        return Err(Error::DegenerateSeries(format!(
            "{} usable samples in [{}, {}], need 5",
            kept.len(),
            window[0],
            window[1]
        )));
    }
    let x: Vec<f64> = kept.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let y: Vec<f64> = kept.iter().map(|(_, v)| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        series: kept,
        slope,
        stderr,
        window,
    })
}

/// An observed exponent next to the value it should match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentCheck {
    pub label: String,
    pub observed: Option<f64>,
    pub expected: f64,
    /// Allowed absolute distance.
    pub margin: f64,
    pub passed: bool,
}

impl ExponentCheck {
    pub fn new(
        label: impl Into<String>,
        observed: Option<f64>,
        expected: f64,
        margin: f64,
    ) -> Self {
        let passed = observed.is_some_and(|o| (o - expected).abs() <= margin);
        ExponentCheck {
            label: label.into(),
            observed,
            expected,
            margin,
            passed,
        }
    }
}

/// Fits every energy series of `res` over `window`.
pub fn rate_checks(res: &OperatorResult, window: [f64; 2]) -> Vec<ExponentCheck> {
    res.diagnostics
        .energy
        .iter()
        .map(|s| {
            let slope = fit_decay_exponent(&s.samples, window).ok().map(|f| f.slope);
            ExponentCheck::new(s.label.clone(), slope, s.expected_exponent, RATE_TOL)
        })
        .collect()
}

/// Observed `ε` powers of the datum shifts between two runs.
pub fn scaling_checks(a: &OperatorResult, b: &OperatorResult) -> Vec<ExponentCheck> {
    epsilon_scaling(a, b)
        .into_iter()
        .map(|(c, expected, observed)| {
            ExponentCheck::new(
                format!("shift {c}"),
                observed,
                expected,
                SCALING_REL_TOL * expected,
            )
        })
        .collect()
}

/// JSON run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub command: String,
    pub operator: Option<String>,
    pub regime: String,
    pub p: f64,
    pub q: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub eps: f64,
    pub iterations: Option<usize>,
    pub termination: Option<String>,
    pub fitted_exponents: Vec<ExponentCheck>,
    pub expected_exponents: Vec<(String, f64)>,
    pub scaling_ratios: Vec<ExponentCheck>,
    pub membership_checks: Vec<MembershipCheck>,
    /// Named scalar results, e.g. norms or round-trip errors.
    pub values: Vec<(String, f64)>,
    pub checks: Vec<Check>,
}

/// One item of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol,
            passed: value <= tol,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol,
            passed: value >= tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Final,
    Scatter,
    Rates,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Final => "final",
            Command::Scatter => "scatter",
            Command::Rates => "rates",
            Command::Verify => "verify",
        }
    }
}

/// Runs `cmd`, writes its artifacts under `config.output.dir` and returns
/// the summary. A failed verification is reported as an error after the
/// artifacts are written.
pub fn run(config: &RunConfig, cmd: Command) -> Result<RunSummary> {
    config.validate()?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let summary = match cmd {
        Command::Forward => run_forward(config)?,
        Command::Final => run_final(config)?,
        Command::Scatter => run_scatter(config)?,
        Command::Rates => run_rates(config)?,
        Command::Verify => run_verify(config)?,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    let failed: Vec<&str> = summary
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Error::Verification(failed.join("; ")));
    }
    Ok(summary)
}

fn base_summary(config: &RunConfig, cmd: Command, lp: &ExponentLadder, eps: f64) -> RunSummary {
    RunSummary {
        version: SUMMARY_VERSION,
        command: cmd.name().into(),
        operator: None,
        regime: lp.exponents.regime.name().into(),
        p: config.exponents.p,
        q: config.exponents.q,
        kappa1: lp.kappas.kappa1,
        kappa2: lp.kappas.kappa2,
        eps,
        iterations: None,
        termination: None,
        fitted_exponents: Vec::new(),
        expected_exponents: Vec::new(),
        scaling_ratios: Vec::new(),
        membership_checks: Vec::new(),
        values: Vec::new(),
        checks: Vec::new(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

fn write_series(dir: &Path, series: &[EnergySeries]) -> Result<()> {
    for s in series {
        s.write_csv(create(dir, &format!("energy_{}.csv", slug(&s.label)))?)?;
    }
    Ok(())
}

fn write_fields(config: &RunConfig, u1: &Field, u2: &Field) -> Result<()> {
    if config.output.fields {
        let dir = &config.output.dir;
        u1.write_csv(create(dir, "field_u1.csv")?)?;
        u2.write_csv(create(dir, "field_u2.csv")?)?;
    }
    Ok(())
}

fn fill_operator(s: &mut RunSummary, res: &OperatorResult, window: [f64; 2]) {
    s.operator = Some(res.operator.name().into());
    s.iterations = Some(res.trace.iterations());
    s.termination = Some(format!("{:?}", res.trace.termination).to_lowercase());
    s.fitted_exponents = rate_checks(res, window);
    s.expected_exponents = res
        .diagnostics
        .energy
        .iter()
        .map(|e| (e.label.clone(), e.expected_exponent))
        .collect();
    s.membership_checks = res.diagnostics.membership.clone();
    for (name, dev) in &res.diagnostics.identities {
        s.values.push((format!("identity {name}"), *dev));
    }
}

fn write_operator(config: &RunConfig, res: &OperatorResult) -> Result<()> {
    let dir = &config.output.dir;
    res.trace.write_csv(create(dir, "trace.csv")?)?;
    write_series(dir, &res.diagnostics.energy)?;
    write_fields(config, &res.solution.0, &res.solution.1)
}

fn run_forward(config: &RunConfig) -> Result<RunSummary> {
    let cfg = config.operator_config()?;
    let eps = config.data.eps;
    let (phi1, phi2) = config.data_at(&cfg, eps)?;
    let lp = &cfg.ladder;
    let sol = solve_ivp(&phi1, &phi2, lp, &cfg.lattice, &cfg.solver)?;
    let mut s = base_summary(config, Command::Forward, lp, eps);
    s.iterations = Some(sol.trace.iterations());
    s.termination = Some(format!("{:?}", sol.trace.termination).to_lowercase());
    let (k1, k2) = (lp.kappas.kappa1, lp.kappas.kappa2);
    s.values = vec![
        ("u1 Z2(kappa1)".into(), norm_z(&sol.u1, Order::Two, k1)),
        ("u1 X2(kappa1)".into(), norm_x(&sol.u1, Order::Two, k1)),
        ("u2 X2(kappa2)".into(), norm_x(&sol.u2, Order::Two, k2)),
    ];
    let dir = &config.output.dir;
    sol.trace.write_csv(create(dir, "trace.csv")?)?;
    let series = |label: &str, u: &Field| -> Result<EnergySeries> {
        Ok(EnergySeries {
            label: label.into(),
            expected_exponent: 0.0,
            samples: sample_times(&cfg.lattice)
                .into_iter()
                .map(|t| Ok((t, energy_norm(u, t)?)))
                .collect::<Result<_>>()?,
        })
    };
    write_series(dir, &[series("u1", &sol.u1)?, series("u2", &sol.u2)?])?;
    write_fields(config, &sol.u1, &sol.u2)?;
    Ok(s)
}

fn run_final(config: &RunConfig) -> Result<RunSummary> {
    let cfg = config.operator_config()?;
    let eps = config.data.eps;
    let (f1, f2) = config.data_at(&cfg, eps)?;
    let res = forward_operator(&f1, &f2, &cfg)?;
    let mut s = base_summary(config, Command::Final, &cfg.ladder, eps);
    fill_operator(&mut s, &res, config.fit_window());
    write_operator(config, &res)?;
    Ok(s)
}

fn run_scatter(config: &RunConfig) -> Result<RunSummary> {
    let cfg = config.operator_config()?;
    let eps = config.data.eps;
    let (f1, f2) = config.data_at(&cfg, eps)?;
    let (g1, g2) = scattering_map(&f1, &f2, &cfg)?;
    let plus = forward_operator(&f1, &f2, &cfg)?;
    let back = wave_operator_inverse(&plus.output.0, &plus.output.1, &cfg)?;
    let k = cfg.ladder.kappas;
    let r_max = cfg.lattice.spec.r_max;
    let mut s = base_summary(config, Command::Scatter, &cfg.ladder, eps);
    fill_operator(&mut s, &back, config.fit_window());
    s.values = vec![
        (
            "round trip datum 1".into(),
            relative_y_error(
                &back.output.0,
                &f1.with_differenced_derivatives(),
                k.kappa1,
                r_max,
            )?,
        ),
        (
            "round trip datum 2".into(),
            relative_y_error(
                &back.output.1,
                &f2.with_differenced_derivatives(),
                k.kappa2,
                r_max,
            )?,
        ),
        (
            "scattered shift datum 1".into(),
            relative_y_error(&g1, &f1.with_differenced_derivatives(), k.kappa1, r_max)?,
        ),
        (
            "scattered shift datum 2".into(),
            relative_y_error(&g2, &f2.with_differenced_derivatives(), k.kappa2, r_max)?,
        ),
    ];
    write_operator(config, &back)?;
    let mut w = create(&config.output.dir, "scattered.csv")?;
    write_data(&mut w, &g1, &g2)?;
    Ok(s)
}

fn write_data<W: Write>(w: &mut W, a: &DataPair, b: &DataPair) -> Result<()> {
    writeln!(w, "r,f1,df1,g1,f2,df2,g2")?;
    for j in 0..a.len().min(b.len()) {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            a.r(j),
            a.f[j],
            a.df[j],
            a.g[j],
            b.f[j],
            b.df[j],
            b.g[j]
        )?;
    }
    Ok(())
}

fn run_rates(config: &RunConfig) -> Result<RunSummary> {
    let cfg = config.operator_config()?;
    let (ea, eb) = config.eps_pair();
    let (a1, a2) = config.data_at(&cfg, ea)?;
    let (b1, b2) = config.data_at(&cfg, eb)?;
    let ra = forward_operator(&a1, &a2, &cfg)?;
    let rb = forward_operator(&b1, &b2, &cfg)?;
    let mut s = base_summary(config, Command::Rates, &cfg.ladder, ea);
    fill_operator(&mut s, &ra, config.fit_window());
    s.scaling_ratios = scaling_checks(&ra, &rb);
    s.values.push(("eps pair partner".into(), eb));
    write_operator(config, &ra)?;
    Ok(s)
}

/// Largest deviation of `u` from `want(r, t) = (u, u_t)` on the reporting box.
fn max_deviation(u: &Field, want: impl Fn(f64, f64) -> (f64, f64)) -> f64 {
    let lat = &u.lattice;
    lat.report_nodes()
        .map(|(i, n)| {
            let (v, _, vt) = u.at(i, n);
            let (a, b) = want(lat.r(i), lat.t(n));
            (v - a).abs().max((vt - b).abs())
        })
        .fold(0.0, f64::max)
}

fn lattice(r_max: f64, t_max: f64, cells: usize) -> Result<Arc<Lattice>> {
    Ok(Arc::new(Lattice::new(GridSpec::new(r_max, t_max, cells))?))
}

/// `e^{-r² - (t-2)²}` with its `r` derivative.
fn bump_source(lat: &Arc<Lattice>) -> SourceField {
    SourceField::from_fn(lat, |r, t| {
        let f = (-r * r - (t - 2.0).powi(2)).exp();
        (f, -2.0 * r * f)
    })
}

fn gaussian_datum(lat: &Lattice) -> DataPair {
    DataPair::from_fn(lat.h, lat.data_len(), |r| {
        let f = (-r * r).exp();
        [f, -2.0 * r * f, (4.0 * r * r - 2.0) * f, 0.0, 0.0]
    })
}

/// Interior residual maxima of `K`, `L` and `R` on an `8 × 8` box.
pub fn residuals_at(cells: usize, margin: usize) -> Result<[f64; 3]> {
    let lat = lattice(8.0, 8.0, cells)?;
    let src = bump_source(&lat);
    let zero = SourceField::zeros(&lat);
    let k = apply_k(&gaussian_datum(&lat), &lat)?;
    let l = apply_l(&src);
    let r = apply_r(&src, &TruncationPolicy::for_lattice(&lat))?;
    Ok([
        pde_residual(&k, &zero)?.max_interior(margin),
        pde_residual(&l, &src)?.max_interior(margin),
        pde_residual(&r, &src)?.max_interior(margin),
    ])
}

/// Residual maxima below this count as exact.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// The invariant suite: operator identities, residual orders, norm
/// embeddings, ladder arithmetic and ladder amplitude scalings, all on
/// grids of `cells` characteristic cells.
pub fn verify_suite(cells: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let even = cells + cells % 2;

    let lat = lattice(4.0, 4.0, even)?;
    let one = SourceField::from_fn(&lat, |_, _| (1.0, 0.0));
    out.push(Check::at_most(
        "L(1) = t^2/2",
        max_deviation(&apply_l(&one), |_, t| (0.5 * t * t, t)),
        1e-10,
    ));
    let unit = DataPair::from_fn(lat.h, lat.data_len(), |_| [1.0, 0.0, 0.0, 0.0, 0.0]);
    out.push(Check::at_most(
        "K(1, 0) = 1",
        max_deviation(&apply_k(&unit, &lat)?, |_, _| (1.0, 0.0)),
        1e-12,
    ));
    let lat2 = lattice(2.0, 2.0, even)?;
    let step = SourceField::from_fn(&lat2, |_, t| {
        (if t <= 1.0 + 1e-12 { 1.0 } else { 0.0 }, 0.0)
    });
    let mut trunc = TruncationPolicy::for_lattice(&lat2);
    trunc.t_infinity = 1.0;
    out.push(Check::at_most(
        "R(step) = (1-t)^2/2",
        max_deviation(&apply_r(&step, &trunc)?, |_, t| {
            if t <= 1.0 {
                (0.5 * (1.0 - t).powi(2), t - 1.0)
            } else {
                (0.0, 0.0)
            }
        }),
        1e-8,
    ));

    let res: Vec<[f64; 3]> = [even, 2 * even, 4 * even]
        .iter()
        .map(|&c| residuals_at(c, 2))
        .collect::<Result<_>>()?;
    for (k, name) in ["K", "L", "R"].iter().enumerate() {
        let worst = res.iter().map(|r| r[k]).fold(0.0, f64::max);
        if worst <= RESIDUAL_FLOOR {
            out.push(Check::at_most(
                format!("{name} residual (exact)"),
                worst,
                RESIDUAL_FLOOR,
            ));
            continue;
        }
        let order = (0..2)
            .map(|j| (res[j][k] / res[j + 1][k]).log2())
            .fold(f64::INFINITY, f64::min);
        out.push(Check::at_least(
            format!("{name} residual order"),
            order,
            1.8,
        ));
    }

    out.extend(embedding_checks(200, seed)?);
    out.extend(ladder_arithmetic_checks()?);
    out.extend(ladder_scaling_checks(even)?);
    Ok(out)
}

/// Worst violations of `Z ≤ X` (`ν ≤ 1`) and `X ≤ Z` (`ν = 2`) over
/// random fields.
pub fn embedding_checks(samples: usize, seed: u64) -> Result<Vec<Check>> {
    let lat = lattice(6.0, 6.0, 12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [f64::NEG_INFINITY; 3];
    for _ in 0..samples {
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let vals: Vec<(f64, f64, f64)> = (0..lat.len())
            .map(|_| {
                (
                    scale * rng.gen_range(-1.0..1.0),
                    scale * rng.gen_range(-1.0..1.0),
                    scale * rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let mut u = Field::zeros(&lat);
        for (k, (a, b, c)) in vals.into_iter().enumerate() {
            u.u[k] = a;
            u.u_r[k] = b;
            u.u_t[k] = c;
        }
        for s in [Order::One, Order::Two] {
            for (slot, nu) in [0.5, 1.0].iter().enumerate() {
                worst[slot] = worst[slot].max(norm_z(&u, s, *nu) - norm_x(&u, s, *nu));
            }
            worst[2] = worst[2].max(norm_x(&u, s, 2.0) - norm_z(&u, s, 2.0));
        }
    }
    Ok(vec![
        Check::at_most("Z <= X at nu = 0.5", worst[0], 0.0),
        Check::at_most("Z <= X at nu = 1", worst[1], 0.0),
        Check::at_most("X <= Z at nu = 2", worst[2], 0.0),
    ])
}

/// Depth and closed form of the exponent sequence for the reference pairs.
pub fn ladder_arithmetic_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (p, q, ell) in [(1.8, 4.0, 0usize), (1.5, 5.5, 1)] {
        let lp = ladder_for(p, q)?;
        let got = lp.ell.map_or(f64::INFINITY, |l| l as f64);
        out.push(Check::at_most(
            format!("ell({p}, {q}) = {ell}"),
            (got - ell as f64).abs(),
            0.0,
        ));
        let dev = (0..lp.a.len())
            .map(|j| (lp.a[j] - a_closed_form(&lp.kappas, j)).abs())
            .fold(0.0, f64::max);
        out.push(Check::at_most(
            format!("a_j closed form ({p}, {q})"),
            dev,
            1e-12,
        ));
        let k1 = lp.kappas.kappa1;
        let l = lp.ell();
        let bracket = (k1 * lp.a[l] - 1.0).max(1.0 - k1 * lp.a[l + 1] + f64::EPSILON);
        out.push(Check::at_most(
            format!("k1 a_l <= 1 < k1 a_(l+1) ({p}, {q})"),
            bracket,
            0.0,
        ));
    }
    Ok(out)
}

/// The ladder norms must shrink at least as fast as their `ε` powers, up
/// to the scaling tolerance.
pub fn ladder_scaling_checks(cells: usize) -> Result<Vec<Check>> {
    let lat = lattice(20.0, 20.0, cells)?;
    let lp = ladder_for(1.5, 5.5)?;
    let trunc = TruncationPolicy::for_lattice(&lat);
    let report = |eps: f64| -> Result<Vec<NormRecord>> {
        let f1 = make_profile(ProfileFamily::Algebraic, lp.kappas.kappa1, eps, &lat)?;
        let f2 = make_profile(ProfileFamily::Algebraic, lp.kappas.kappa2, eps, &lat)?;
        ladder_norm_report(&build_final_ladder(&f1, &f2, &lp, &lat, &trunc)?)
    };
    let recs = attach_scaling(&report(0.2)?, &report(0.1)?);
    Ok(recs
        .iter()
        .filter(|r| r.norm_name.contains("step"))
        .map(|r| {
            let observed = r.scaling_exponent.unwrap_or(f64::NEG_INFINITY);
            Check::at_least(
                format!(
                    "ladder j={} {} scales like eps^{}",
                    r.j, r.norm_name, r.expected_exponent
                ),
                observed,
                (1.0 - SCALING_REL_TOL) * r.expected_exponent,
            )
        })
        .collect())
}

fn run_verify(config: &RunConfig) -> Result<RunSummary> {
    let lp = config.ladder()?;
    let mut s = base_summary(config, Command::Verify, &lp, config.data.eps);
    s.checks = verify_suite(config.grid.cells, 0)?;
    let mut w = create(&config.output.dir, "verify.csv")?;
    writeln!(w, "name,value,tol,passed")?;
    for c in &s.checks {
        writeln!(w, "\"{}\",{:e},{:e},{}", c.name, c.value, c.tol, c.passed)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(e: f64, amp: f64) -> Vec<(f64, f64)> {
        [5.0, 10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|t: &f64| (*t, amp * (1.0 + t).powf(e)))
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_decay_exponent(&power(-1.2, 1.0), [5.0, 80.0]).unwrap();
        assert!((fit.slope + 1.2).abs() < 1e-10);
        assert!(fit.stderr < 1e-10);
    }

    #[test]
    fn amplitude_does_not_move_slope() {
        let fit = fit_decay_exponent(&power(-0.76, 3.0), [5.0, 80.0]).unwrap();
        assert!((fit.slope + 0.76).abs() < 1e-10);
    }

    #[test]
    fn oscillating_series() {
        let series: Vec<(f64, f64)> = (0..60)
            .map(|k| {
                let t = 10.0 * (8.0f64).powf(k as f64 / 59.0);
                (t, (1.0 + t).powf(-1.0) * (1.0 + 0.1 * t.sin()))
            })
            .collect();
        let fit = fit_decay_exponent(&series, [10.0, 80.0]).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn degenerate_series() {
        let tiny: Vec<(f64, f64)> = power(-1.0, 1e-20);
        assert!(matches!(
            fit_decay_exponent(&tiny, [5.0, 80.0]),
            Err(Error::DegenerateSeries(_))
        ));
        let short = &power(-1.0, 1.0)[..3];
        assert!(matches!(
            fit_decay_exponent(short, [5.0, 80.0]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn config_defaults_and_overrides() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid.cells, 512);
        assert_eq!(c.fit_window(), [10.0, 80.0]);
        let c = RunConfig::from_toml_str(
            "[exponents]\np = 1.8\nq = 4\n[data]\nfamily1 = \"algebraic\"\n[grid]\ncells = 64\n",
        )
        .unwrap();
        assert_eq!(c.exponents.p, 1.8);
        assert_eq!(c.data.family1, ProfileFamily::Algebraic);
        c.validate().unwrap();
        assert!(RunConfig::from_toml_str("[grid]\nbogus = 1\n").is_err());
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let mut c = RunConfig::default();
        c.exponents.p = 1.5;
        c.exponents.q = 4.0;
        assert!(matches!(
            c.validate(),
            Err(Error::SubcriticalExponents { .. })
        ));
        let mut c = RunConfig::default();
        c.solver.ratio_bound = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.grid.cells = 2;
        assert!(matches!(c.validate(), Err(Error::InvalidGrid(_))));
        let mut c = RunConfig::default();
        c.data.eps = -1.0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn zero_data_forward_run() {
        let dir = std::env::temp_dir().join(format!("radwave-fwd-{}", std::process::id()));
        let mut c = RunConfig {
            grid: GridSection {
                r_max: 10.0,
                t_max: 10.0,
                cells: 32,
                ..GridSection::default()
            },
            ..RunConfig::default()
        };
        c.data.eps = 0.0;
        c.output.dir = dir.clone();
        let s = run(&c, Command::Forward).unwrap();
        assert!(s.values.iter().all(|(_, v)| *v == 0.0));
        assert!(dir.join("summary.json").exists());
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("u1 - K f1"), "u1_k_f1");
    }
}
