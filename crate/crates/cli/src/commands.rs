//! One function per command. Each returns the bytes to write and whether
//! the command's mandatory gate passed.

use crate::config::{CheckCopulaConfig, Command, Format, RunConfig, ScenarioConfig};
use knockoffs::copula::{
    check_generator_conditions, check_nested_condition, default_t_grid, rectangle_volume_check,
    smoothness_condition_check, ArchimedeanGenerator, GeneratorReport, NestedReport, RectangleReport,
    SmoothnessReport,
};
use knockoffs::diagnostics::{diagnose_samples, DiagnoseOptions, EnergyOptions};
use knockoffs::discretization::{tv_decay, TvDecayReport};
use knockoffs::{CopulaModel, JointSampleMatrix, KnockoffSampler, ModelSpec, RegressionScenario, SwapSet};
use serde::Serialize;
use std::path::Path;

pub struct Output {
    pub body: String,
    pub pass: bool,
    pub summary: String,
}

/// Wrapper written around every JSON report.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: Command,
    seed: u64,
    config: &'a RunConfig,
    pass: bool,
    report: T,
}

fn envelope<T: Serialize>(cfg: &RunConfig, pass: bool, report: T) -> String {
    let e = Envelope { command: cfg.command.expect("resolved"), seed: cfg.seed.expect("resolved"), config: cfg, pass, report };
    let mut s = serde_json::to_string_pretty(&e).expect("reports serialize");
    s.push('\n');
    s
}

fn model(cfg: &RunConfig) -> Result<&ModelSpec, String> {
    cfg.model.as_ref().ok_or_else(|| format!("`model` is required for {}", cfg.command.expect("resolved")))
}

fn n(cfg: &RunConfig, what: &str) -> Result<usize, String> {
    match cfg.n {
        Some(0) => Err(format!("`n` ({what}) must be positive")),
        Some(n) => Ok(n),
        None => Err(format!("`n` ({what}) is required for {}", cfg.command.expect("resolved"))),
    }
}

fn build(spec: &ModelSpec) -> Result<std::sync::Arc<dyn KnockoffSampler>, String> {
    spec.build().map_err(|e| format!("model: {e}"))
}

pub fn run(cfg: &RunConfig) -> Result<Output, String> {
    match cfg.command.expect("resolved") {
        Command::Sample => sample(cfg),
        Command::Diagnose => diagnose(cfg),
        Command::CheckCopula => check_copula(cfg),
        Command::FilterSim => filter_sim(cfg),
        Command::TvDecay => tv(cfg),
    }
}

#[derive(Serialize)]
struct SampleReport<'a> {
    p: usize,
    n: usize,
    columns: Vec<&'a str>,
    rows: Vec<&'a [f64]>,
}

fn sample(cfg: &RunConfig) -> Result<Output, String> {
    let rows = n(cfg, "rows")?;
    let sampler = build(model(cfg)?)?;
    let seed = cfg.seed.expect("resolved");
    let m = sampler.sample_joint(rows, seed).map_err(|e| e.to_string())?;
    let summary = format!("sampled {rows} rows of (X, X̃), p = {}", m.p());
    let body = match cfg.format {
        Some(Format::Json) => {
            let header = JointSampleMatrix::csv_header(m.p());
            let report = SampleReport { p: m.p(), n: rows, columns: header.split(',').collect(), rows: m.rows().collect() };
            envelope(cfg, true, report)
        }
        _ => m.to_csv(),
    };
    Ok(Output { body, pass: true, summary })
}

fn diagnose(cfg: &RunConfig) -> Result<Output, String> {
    let sampler = build(model(cfg)?)?;
    let seed = cfg.seed.expect("resolved");
    let d = cfg.diagnostics.clone().unwrap_or_default();
    let p = sampler.p();
    let swap_sets = d
        .swap_sets
        .as_ref()
        .map(|sets| sets.iter().map(|s| SwapSet::new(p, s)).collect::<Result<Vec<_>, _>>())
        .transpose()
        .map_err(|e| format!("diagnostics.swap_sets: {e}"))?;
    if !(d.alpha > 0.0 && d.alpha < 1.0) {
        return Err(format!("diagnostics.alpha must lie in (0,1), got {}", d.alpha));
    }
    let opts = DiagnoseOptions {
        alpha: d.alpha,
        energy: EnergyOptions { n_permutations: d.n_permutations, max_rows: d.max_rows },
        swap_sets,
    };
    let samples = match &cfg.input {
        Some(path) => {
            let text = read(path)?;
            JointSampleMatrix::from_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => sampler.sample_joint(n(cfg, "rows")?, seed).map_err(|e| e.to_string())?,
    };
    let report = diagnose_samples(&samples, &sampler.marginal_laws(), &opts, seed).map_err(|e| e.to_string())?;
    let failed = report.records.iter().filter(|r| !r.pass && !r.advisory).count();
    let summary = format!(
        "{} tests on {} rows: {}",
        report.records.len(),
        samples.nrows(),
        if report.pass { "pass".to_string() } else { format!("{failed} failed") }
    );
    let pass = report.pass;
    Ok(Output { body: envelope(cfg, pass, report), pass, summary })
}

#[derive(Serialize)]
struct GeneratorCheck {
    /// Which copulas use the generator: `C`, `D1`, … .
    used_by: Vec<String>,
    report: GeneratorReport,
}

#[derive(Serialize)]
struct CopulaCheckReport {
    generators: Vec<GeneratorCheck>,
    nested: Vec<NestedReport>,
    rectangle: RectangleReport,
    /// Sufficient condition only; never gates the exit status.
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothness: Option<SmoothnessReport>,
}

fn generator(spec: &knockoffs::copula::GeneratorSpec) -> Result<ArchimedeanGenerator, String> {
    ArchimedeanGenerator::from_spec(spec).map_err(|e| format!("check_copula.nested: {e}"))
}

fn check_copula(cfg: &RunConfig) -> Result<Output, String> {
    let spec = match model(cfg)? {
        ModelSpec::Archimedean { copula, .. } => copula,
        _ => return Err("check-copula needs a model of type `archimedean`".into()),
    };
    let model = CopulaModel::from_spec(spec).map_err(|e| format!("model.copula: {e}"))?;
    let opts: CheckCopulaConfig = cfg.check_copula.clone().unwrap_or_default();
    let p = model.p();
    let grid = opts.t_grid.clone().unwrap_or_else(default_t_grid);

    // group copulas by generator so each distinct generator is checked once
    let common = model.common_generator().is_some();
    let mut uses: Vec<(ArchimedeanGenerator, Vec<String>, usize)> = Vec::new();
    let named = std::iter::once(("C".to_string(), model.c(), if common { 2 * p } else { p }))
        .chain(model.d().iter().enumerate().map(|(i, d)| (format!("D{}", i + 1), d, if common { 2 * p } else { 2 })));
    for (name, c, order) in named {
        if let Some(g) = c.generator() {
            match uses.iter_mut().find(|(h, _, _)| h == g) {
                Some(entry) => {
                    entry.1.push(name);
                    entry.2 = entry.2.max(order);
                }
                None => uses.push((g.clone(), vec![name], order)),
            }
        }
    }
    let generators = uses
        .into_iter()
        .map(|(g, used_by, order)| {
            let report = check_generator_conditions(&g, opts.order.unwrap_or(order), &grid).map_err(|e| e.to_string())?;
            Ok(GeneratorCheck { used_by, report })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let nested = opts
        .nested
        .iter()
        .map(|pair| {
            let (outer, inner) = (generator(&pair.outer)?, generator(&pair.inner)?);
            check_nested_condition(&outer, &inner, opts.order.unwrap_or(2 * p), &grid).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    let rectangle = rectangle_volume_check(&model, opts.resolution, opts.tolerance).map_err(|e| e.to_string())?;
    let smoothness = if opts.smoothness && p <= 3 {
        Some(smoothness_condition_check(&model, opts.resolution).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let pass = rectangle.pass
        && generators.iter().all(|g| g.report.status.passed())
        && nested.iter().all(|r| r.status.passed());
    let summary = format!(
        "min rectangle volume {:e} over {} cells ({} negative); {} generator and {} nested checks: {}",
        rectangle.min_volume,
        rectangle.cells,
        rectangle.negative_cells,
        generators.len(),
        nested.len(),
        if pass { "pass" } else { "fail" }
    );
    let report = CopulaCheckReport { generators, nested, rectangle, smoothness };
    Ok(Output { body: envelope(cfg, pass, report), pass, summary })
}

fn scenario(s: &ScenarioConfig, p: usize) -> Result<RegressionScenario, String> {
    let mut out = match (&s.beta, s.nonnulls, s.amplitude) {
        (Some(beta), None, None) => {
            let sc = RegressionScenario { n_obs: s.n_obs, beta: beta.clone(), noise_sd: s.noise_sd, q: s.q, plus: s.plus };
            sc.validate().map_err(|e| format!("scenario: {e}"))?;
            sc
        }
        (None, Some(k), Some(a)) => {
            RegressionScenario::spread(p, k, a, s.n_obs, s.noise_sd, s.q).map_err(|e| format!("scenario: {e}"))?
        }
        _ => return Err("scenario: give either `beta`, or both `nonnulls` and `amplitude`".into()),
    };
    out.plus = s.plus;
    if out.p() != p {
        return Err(format!("scenario: beta has {} entries but the model has p = {p}", out.p()));
    }
    Ok(out)
}

fn filter_sim(cfg: &RunConfig) -> Result<Output, String> {
    let sampler = build(model(cfg)?)?;
    let reps = n(cfg, "replicates")?;
    let sc = cfg.scenario.as_ref().ok_or("`scenario` is required for filter-sim")?;
    let sc = scenario(sc, sampler.p())?;
    let report =
        knockoffs::fdr_simulation(&sc, sampler.as_ref(), reps, cfg.seed.expect("resolved")).map_err(|e| e.to_string())?;
    let pass = report.pass;
    let summary = format!(
        "{} replicates: FDR {:.4} (SE {:.4}), power {:.4}, target q = {}: {}",
        report.n_reps,
        report.fdr.value,
        report.fdr.se,
        report.power.value,
        report.q,
        if pass { "pass" } else { "fail" }
    );
    let body = match cfg.format {
        Some(Format::Csv) => report.to_csv(),
        _ => envelope(cfg, pass, report),
    };
    Ok(Output { body, pass, summary })
}

fn tv_csv(r: &TvDecayReport) -> String {
    let mut out = String::from("n,tv,bootstrap_se\n");
    for row in &r.rows {
        out.push_str(&format!("{},{},{}\n", row.n, row.tv, row.bootstrap_se));
    }
    out
}

fn tv(cfg: &RunConfig) -> Result<Output, String> {
    let sampler = build(model(cfg)?)?;
    let draws = n(cfg, "draws")?;
    let t = cfg.tv.clone().unwrap_or_default();
    let report = tv_decay(sampler.as_ref(), &t.levels, draws, t.bins, t.bbox.clone(), t.n_boot, cfg.seed.expect("resolved"))
        .map_err(|e| e.to_string())?;
    let last = report.rows.last().map_or(0.0, |r| r.tv);
    let pass = report.monotone_within_2se && t.max_final_tv.is_none_or(|m| last <= m);
    let summary = format!(
        "TV at n = {}: {:.4}; monotone within 2 SE: {}",
        report.rows.last().map_or(0, |r| r.n),
        last,
        report.monotone_within_2se
    );
    let body = match cfg.format {
        Some(Format::Csv) => tv_csv(&report),
        _ => envelope(cfg, pass, report),
    };
    Ok(Output { body, pass, summary })
}

pub fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}
