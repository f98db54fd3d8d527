//! Command pipelines and their machine-readable reports.

use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::certify::{
    self, BoundReport, CertifyError, DominationScan, Epsilon0, FactoredLevi, LowerBoundSpotCheck, PositivityScan,
    RhoSpec,
};
use crate::exec::Execution;
use crate::flow::{self, CriticalScan, FindC, FlowError, FlowOptions, FlowTrace, PseudoconvexityScan, Termination};
use crate::levi::{CertStatus, Certificate};
use crate::normal_form::{classify, parse_input, reduce_pair, CaseTag, NormalForm, NormalFormError, PlaneInput};
use crate::poly::{rat, Rational};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 1729;
const RESIDUAL_PREVIEW: usize = 400;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] NormalFormError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl ReportError {
    /// `2` for usage and input problems, `1` for a failed claim.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Usage(_) | ReportError::Input(_) => 2,
            ReportError::Flow(FlowError::TubesOverlap { .. } | FlowError::NonPositive(_)) => 2,
            ReportError::Certify(CertifyError::InvalidExponents) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Normalize,
    Certify,
    Bound,
    Scan,
    Flow,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(serialize_with = "ser_case")]
    pub case: Option<CaseTag>,
    /// Input file contents for `normalize`.
    pub input: Option<String>,
    #[serde(serialize_with = "ser_rat")]
    pub a: Option<Rational>,
    #[serde(serialize_with = "ser_rat")]
    pub d: Option<Rational>,
    pub alpha: u32,
    pub beta: u32,
    pub r: f64,
    pub eps: Option<f64>,
    pub samples: Option<usize>,
    pub seed: u64,
}

fn ser_case<S: serde::Serializer>(c: &Option<CaseTag>, s: S) -> Result<S::Ok, S::Error> {
    match c {
        Some(c) => s.serialize_str(c.name()),
        None => s.serialize_none(),
    }
}

fn ser_rat<S: serde::Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match q {
        Some(q) => s.serialize_str(&q.to_string()),
        None => s.serialize_none(),
    }
}

impl RunConfig {
    pub fn new(command: Command) -> RunConfig {
        RunConfig {
            command,
            case: None,
            input: None,
            a: None,
            d: None,
            alpha: 1,
            beta: 1,
            r: 1.0,
            eps: None,
            samples: None,
            seed: DEFAULT_SEED,
        }
    }

    fn case(&self) -> Result<CaseTag, ReportError> {
        self.case.ok_or_else(|| ReportError::Usage("--case is required".into()))
    }

    fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    fn normal_form(&self) -> Result<NormalForm, ReportError> {
        let case = self.case()?;
        let a = self.a.clone().unwrap_or_else(Rational::zero);
        let d = self.d.clone().unwrap_or_else(|| default_d(case));
        Ok(NormalForm::from_params(case, a, d)?)
    }
}

fn default_d(case: CaseTag) -> Rational {
    match case {
        CaseTag::Diag => Rational::zero(),
        _ => rat(1, 1_000_000_000_000),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateRecord {
    pub name: String,
    pub exact: bool,
    pub residual_terms: usize,
    /// Leading part of a nonzero residual.
    pub residual: Option<String>,
    pub notes: Vec<String>,
}

impl From<&Certificate> for CertificateRecord {
    fn from(c: &Certificate) -> CertificateRecord {
        let residual = (c.status == CertStatus::Failed).then(|| {
            let s = c.residual.to_string();
            if s.len() > RESIDUAL_PREVIEW {
                let cut = (0..=RESIDUAL_PREVIEW).rev().find(|&i| s.is_char_boundary(i)).unwrap_or(0);
                format!("{} ...", &s[..cut])
            } else {
                s
            }
        });
        CertificateRecord {
            name: c.name.clone(),
            exact: c.is_exact(),
            residual_terms: c.residual.term_count(),
            residual,
            notes: c.notes.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanDetail {
    Positivity(PositivityScan),
    Domination(DominationScan),
    LowerBound(LowerBoundSpotCheck),
    Epsilon0(Epsilon0),
    Pseudoconvexity(PseudoconvexityScan),
    Convexification(FindC),
    Critical(CriticalScan),
    Factorization(FactorizationSummary),
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRecord {
    pub name: String,
    /// Only asserted scans count toward the overall status.
    pub asserted: bool,
    pub pass: bool,
    pub detail: ScanDetail,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationSummary {
    pub exponents: (u32, u32),
    pub degree: Option<u32>,
    pub p_terms: usize,
    /// `k` with `d_M` keeping its own denominator.
    pub k: String,
    pub content: String,
    pub minimal_k: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFormRecord {
    pub case: String,
    pub a: String,
    pub d: String,
    pub raw_matrix: [[String; 2]; 2],
    /// `T = T_re + i T_im`.
    pub reducing_map: [[[String; 2]; 2]; 2],
    pub conjugator: [[String; 2]; 2],
    pub weinstock: bool,
}

impl From<&NormalForm> for NormalFormRecord {
    fn from(nf: &NormalForm) -> NormalFormRecord {
        let m = |x: &[[Rational; 2]; 2]| x.clone().map(|r| r.map(|c| c.to_string()));
        NormalFormRecord {
            case: nf.case.name().into(),
            a: nf.a.to_string(),
            d: nf.d.to_string(),
            raw_matrix: m(&nf.raw_matrix),
            reducing_map: [m(&nf.reducing_map.re), m(&nf.reducing_map.im)],
            conjugator: m(&nf.conjugator),
            weinstock: nf.weinstock(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSummary {
    pub eps: f64,
    pub r: f64,
    pub runs: usize,
    pub converged: usize,
    pub max_steps: usize,
    pub left_domain: usize,
    pub stalled: usize,
    pub all_monotone: bool,
    pub max_terminal_distance: f64,
    pub max_accepted_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub config: RunConfig,
    pub normal_form: Option<NormalFormRecord>,
    pub certificates: Vec<CertificateRecord>,
    pub bound: Option<BoundReport>,
    pub scans: Vec<ScanRecord>,
    pub flows: Option<FlowSummary>,
    pub warnings: Vec<String>,
    /// Module errors that count as failed claims.
    pub failures: Vec<String>,
    pub status: Status,
}

impl Report {
    fn new(config: RunConfig) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            normal_form: None,
            certificates: Vec::new(),
            bound: None,
            scans: Vec::new(),
            flows: None,
            warnings: Vec::new(),
            failures: Vec::new(),
            status: Status::Pass,
        }
    }

    fn finish(mut self) -> Report {
        let certs = self.certificates.iter().all(|c| c.exact);
        let scans = self.scans.iter().all(|s| !s.asserted || s.pass);
        let flows = self.flows.as_ref().map_or(true, |f| f.converged == f.runs && f.all_monotone);
        self.status = if certs && scans && flows && self.failures.is_empty() { Status::Pass } else { Status::Fail };
        self
    }

    fn push_certs<'a>(&mut self, certs: impl IntoIterator<Item = &'a Certificate>) {
        self.certificates.extend(certs.into_iter().map(CertificateRecord::from));
    }

    fn push_scan(&mut self, name: impl Into<String>, asserted: bool, pass: bool, detail: ScanDetail) {
        self.scans.push(ScanRecord { name: name.into(), asserted, pass, detail });
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 1,
        }
    }
}

/// Classify a matrix or reduce a plane pair given as text.
pub fn run_normalize(config: RunConfig) -> Result<Report, ReportError> {
    let text = config.input.clone().ok_or_else(|| ReportError::Usage("an input file is required".into()))?;
    let nf = match parse_input(&text)? {
        PlaneInput::Matrix(a) => classify(&a)?,
        PlaneInput::Planes(pp) => reduce_pair(&pp)?,
    };
    let mut report = Report::new(config);
    let rec = NormalFormRecord::from(&nf);
    if !rec.weinstock {
        report.warnings.push(format!(
            "WEINSTOCK CONDITION FAILS: M(A) has eigenvalues ±{}i of modulus > 1; M ∪ N is not polynomially convex",
            nf.d
        ));
    }
    report.normal_form = Some(rec);
    Ok(report.finish())
}

fn factorization_summary(fl: &FactoredLevi) -> FactorizationSummary {
    FactorizationSummary {
        exponents: fl.exponents,
        degree: fl.degree,
        p_terms: fl.p.term_count(),
        k: fl.k.to_string(),
        content: fl.content.to_string(),
        minimal_k: fl.minimal_k().to_string(),
    }
}

/// The exact pipeline for `ρ = d_M^{α+1}d_N^β + d_M^α d_N^{β+1}` with symbolic entries.
pub fn run_certify(config: RunConfig) -> Result<Report, ReportError> {
    let case = config.case()?;
    let spec = RhoSpec::symbolic(case, config.alpha, config.beta);
    let rho = certify::build_rho(&spec)?;
    let fl = certify::extract_p(&spec)?;
    let samples = config.samples_or(1000);
    let seed = config.seed;
    let mut report = Report::new(config);
    report.push_certs(&certify::self_constant_certificates(case)?);
    report.push_certs(&certify::zero_set_certificates(&spec)?);
    report.push_certs([&certify::assembly_certificate(&rho), &fl.factorization]);
    let base = (spec.alpha, spec.beta) == (1, 1);
    let degree_ok = if base { fl.degree == Some(10) } else { fl.degree.is_some() };
    let label = if base { "P is homogeneous of degree 10" } else { "P is homogeneous" };
    report.push_scan(label, true, degree_ok, ScanDetail::Factorization(factorization_summary(&fl)));
    if base {
        let (q_closed, _) = certify::closed_form_q();
        report.push_certs([&Certificate::compare("Q at a = d = 0 equals 1/2 w P0", fl.q.clone(), q_closed)]);
        report.push_certs(&certify::sos_certificates());
        let spot = certify::lower_bound_spot_check(samples, seed);
        let pass = spot.p0_failures == 0 && spot.q_failures == 0;
        report.push_scan("P0 >= 63/88 |p|^8 and Q >= 63/176 |p|^10", true, pass, ScanDetail::LowerBound(spot));
    }
    Ok(report.finish())
}

/// `|a|, |d| ≤ δ/2` pairs with `d ≠ 0`, as exact rationals.
pub fn delta_box_pairs(delta: &Rational, n: usize, seed: u64) -> Vec<(Rational, Rational)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = delta / rat(2, 1);
    let mut draw = |nonzero: bool| loop {
        let k: i64 = rng.gen_range(-1000..=1000);
        if !nonzero || k != 0 {
            return &half * rat(k, 1000);
        }
    };
    (0..n).map(|_| (draw(false), draw(true))).collect()
}

fn in_delta_box(bound: &BoundReport, a: &Rational, d: &Rational) -> bool {
    bound.r_vanishes || (a.abs() <= bound.delta_exact && d.abs() <= bound.delta_exact)
}

/// `N₀`, `N₁`, `δ` for a case, with a sampled domination check inside the box.
pub fn run_bound(config: RunConfig) -> Result<Report, ReportError> {
    let case = config.case()?;
    let fl = certify::extract_p(&RhoSpec::symbolic(case, 1, 1))?;
    let bound = certify::parameter_bound(&fl);
    let samples = config.samples_or(10_000);
    let seed = config.seed;
    let mut report = Report::new(config);
    report.push_certs([&fl.factorization]);
    for (i, (a, d)) in delta_box_pairs(&bound.delta_exact, 20, seed).into_iter().enumerate() {
        let (af, df) = (a.to_f64().unwrap_or(0.0), d.to_f64().unwrap_or(0.0));
        let scan = certify::domination_scan(&fl.q, &fl.r, af, df, samples, seed + i as u64, Execution::default());
        let pass = scan.min_gap > 1e-12 * scan.scale;
        report.push_scan(format!("Q - |R| > 0 at pair {i}"), true, pass, ScanDetail::Domination(scan));
    }
    report.bound = Some(bound);
    Ok(report.finish())
}

/// Sampled positivity of `P` and tangential pseudoconvexity of `ρ₀` at fixed entries.
pub fn run_scan(config: RunConfig) -> Result<Report, ReportError> {
    let case = config.case()?;
    let nf = config.normal_form()?;
    let fl = certify::extract_p(&RhoSpec::symbolic(case, 1, 1))?;
    let bound = certify::parameter_bound(&fl);
    let asserted = in_delta_box(&bound, &nf.a, &nf.d);
    let (af, df) = (nf.a.to_f64().unwrap_or(f64::NAN), nf.d.to_f64().unwrap_or(f64::NAN));
    let samples = config.samples_or(10_000);
    let seed = config.seed;
    let eps = match config.eps {
        Some(e) => e,
        None => flow::default_eps(&nf, config.r).ok_or(FlowError::TubesOverlap { eps: 1e-8, r: config.r, limit: 0.0 })?,
    };
    let r = config.r;
    let exec = Execution::default();
    let mut report = Report::new(config);
    report.config.eps = Some(eps);
    if !asserted {
        report.warnings.push(format!("(a, d) lies outside the certified box |a|, |d| <= {}; scans are reported, not asserted", bound.delta));
    }
    let pos = certify::positivity_scan(&fl.p, af, df, samples, seed, exec);
    report.push_scan("P > 0 on the sphere", asserted, pos.all_positive, ScanDetail::Positivity(pos));
    let dom = certify::domination_scan(&fl.q, &fl.r, af, df, samples, seed, exec);
    let pass = dom.min_gap > 1e-12 * dom.scale;
    report.push_scan("Q - |R| > 0 on the sphere", asserted, pass, ScanDetail::Domination(dom));
    let e0 = certify::epsilon0(&fl.q, &fl.r, [af, df], samples, seed, exec)?;
    report.push_scan("sampled eps0 = min Q / max |R|", false, true, ScanDetail::Epsilon0(e0));
    let pf = flow::build_patched(&nf, r, eps)?;
    let sc = flow::pseudoconvexity_scan(&pf, eps, samples, seed, exec)?;
    report.push_scan("tangential Levi form of rho0 > 0 on the level set", asserted, sc.pass, ScanDetail::Pseudoconvexity(sc));
    report.bound = Some(bound);
    Ok(report.finish())
}

pub fn summarize_flows(pf: &flow::PatchedField, traces: &[FlowTrace]) -> FlowSummary {
    let count = |t: Termination| traces.iter().filter(|tr| tr.termination == t).count();
    FlowSummary {
        eps: pf.eps,
        r: pf.r,
        runs: traces.len(),
        converged: count(Termination::Converged),
        max_steps: count(Termination::MaxSteps),
        left_domain: count(Termination::LeftDomain),
        stalled: count(Termination::Stalled),
        all_monotone: traces.iter().all(FlowTrace::is_monotone),
        max_terminal_distance: traces.iter().map(|t| pf.distance_to_union(&t.last().point)).fold(0.0, f64::max),
        max_accepted_steps: traces.iter().map(|t| t.steps).max().unwrap_or(0),
    }
}

/// Gradient-flow retraction, critical-point grid and convexification at one level.
pub fn run_flow(config: RunConfig) -> Result<(Report, Vec<FlowTrace>), ReportError> {
    let nf = config.normal_form()?;
    let r = config.r;
    let eps = match config.eps {
        Some(e) => e,
        None => flow::default_eps(&nf, r).ok_or(FlowError::TubesOverlap { eps: 1e-8, r, limit: 0.0 })?,
    };
    let pf = flow::build_patched(&nf, r, eps)?;
    let runs = config.samples_or(100);
    let seed = config.seed;
    let exec = Execution::default();
    let starts = flow::sublevel_starts(&pf, eps, runs, seed);
    let opts = FlowOptions::default();
    let traces = exec.map_slice(&starts, |s| flow::flow_integrate(&pf, s, &opts));
    let mut report = Report::new(config);
    report.config.eps = Some(eps);
    report.flows = Some(summarize_flows(&pf, &traces));
    let crit = flow::critical_scan(&pf, 8, 8, exec);
    report.push_scan("no critical points of rho0 off M and N", true, crit.pass, ScanDetail::Critical(crit));
    let boundary = flow::boundary_sample(&pf, eps, 2000, seed, exec)?;
    match flow::find_c(&pf, eps, &boundary, exec) {
        Ok(fc) => {
            let pass = fc.min_eigenvalue > 0.0;
            report.push_scan("complex Hessian of the convexified function is positive", true, pass, ScanDetail::Convexification(fc));
        }
        Err(e) => report.failures.push(e.to_string()),
    }
    Ok((report.finish(), traces))
}

pub fn run(config: RunConfig) -> Result<Report, ReportError> {
    match config.command {
        Command::Normalize => run_normalize(config),
        Command::Certify => run_certify(config),
        Command::Bound => run_bound(config),
        Command::Scan => run_scan(config),
        Command::Flow => run_flow(config).map(|(r, _)| r),
    }
}
