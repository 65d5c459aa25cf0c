use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use kato_core::diagnostics::{apply_verdict, diagnose, DiagnosticOptions, HonestyReport, LadderVerdict, Verdict};
use kato_core::extensions::{domain_samples, verify_extension_family, ExtensionReport, NonMinimalSpec};
use kato_core::kato::{functionals_at, SeriesOptions, TimeDefect, TimeDefectOptions, time_defect};
use kato_core::quantum::{conservativity_iterates, ssqds_indicator, ConservativityIterates};
use kato_core::state_space::StateVector;
use kato_core::zoo::{Expected, Output, ScenarioConfig};

use crate::{exit, CliError};

pub const TOOL_NAME: &str = "kato";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const EXTENSION_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Drop wall-clock timing so that reports are byte-identical across runs.
    pub stable_output: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub a0: f64,
    pub abar: f64,
    pub defect: f64,
    pub terms_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDefectEntry {
    pub t: f64,
    #[serde(flatten)]
    pub defect: TimeDefect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionSummary {
    pub u0: usize,
    pub delta_u0: f64,
    /// `α_u` for the scenario's initial vector.
    pub alpha: f64,
    pub degenerate: bool,
    pub family: ExtensionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsqdsSummary {
    pub grid_points: usize,
    pub correction_norm: f64,
    /// `⟨ψ, Q_λ^M(𝟙) ψ⟩` with the Gaussian probe.
    pub indicator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub lambda: f64,
    pub truncation: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<HonestyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functionals: Option<FunctionalSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub time_defect: Vec<TimeDefectEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extension: Option<ExtensionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservativity: Option<ConservativityIterates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssqds: Option<SsqdsSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub errors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaVerdict {
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    /// Common verdict over all `λ`; `Inconclusive` when they disagree.
    pub overall: Option<Verdict>,
    pub per_lambda: Vec<LambdaVerdict>,
    pub expected: Option<Expected>,
    pub matches: Option<bool>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    pub scenario: ScenarioConfig,
    pub cells: Vec<CellReport>,
    pub verdict: VerdictSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code
    }
}

fn run_cell(cfg: &ScenarioConfig, lambda: f64, n: usize) -> CellReport {
    let start = Instant::now();
    let mut cell = CellReport {
        lambda,
        truncation: n,
        diagnostics: None,
        functionals: None,
        time_defect: Vec::new(),
        extension: None,
        conservativity: None,
        ssqds: None,
        notes: Vec::new(),
        errors: Vec::new(),
        elapsed_ms: None,
    };
    if let Err(e) = fill_cell(cfg, lambda, n, &mut cell) {
        cell.errors.push(e.to_string());
    }
    cell.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    cell
}

fn fill_cell(cfg: &ScenarioConfig, lambda: f64, n: usize, cell: &mut CellReport) -> kato_core::Result<()> {
    let mode = cfg.mode();
    let built = cfg.build(n)?;
    let gen = &built.pair;
    let series = SeriesOptions::for_mode(mode).with_tol(cfg.tol);
    let u = StateVector::basis(mode, gen.dim(), cfg.initial);
    let wants = |o: Output| cfg.outputs.contains(&o);

    if wants(Output::Diagnostics) || wants(Output::SpectralMargin) {
        let opts = DiagnosticOptions {
            n_max: cfg.n_max,
            probes: None,
            series,
            clamp_to_truncation: !built.exact_dimension,
            spectral_margin: wants(Output::SpectralMargin),
        };
        let report = diagnose(gen, lambda, &u, &opts)?;
        if wants(Output::SpectralMargin) && report.spectral_margin.is_none() {
            cell.notes.push("spectral margin skipped: assembly exceeds the size cap".into());
        }
        cell.diagnostics = Some(report);
        let f = functionals_at(&gen.at(lambda)?, &u, &series)?;
        cell.functionals = Some(FunctionalSummary {
            a0: f.a0,
            abar: f.abar,
            defect: f.defect,
            terms_used: f.terms_used,
            converged: f.converged,
        });
    }

    if let Some(ss) = &built.ssqds {
        if wants(Output::Diagnostics) || wants(Output::Indicator) {
            cell.ssqds = Some(SsqdsSummary {
                grid_points: n,
                correction_norm: ss.correction_norm,
                indicator: ssqds_indicator(ss, lambda, n)?,
            });
        }
    }

    if wants(Output::Conservativity) {
        match &built.lindblad {
            Some(_) if cfg.potential.is_some() => {
                cell.notes.push("conservativity iterates skipped: not defined with a potential".into())
            }
            Some(model) => {
                let steps = if built.exact_dimension { cfg.n_max } else { cfg.n_max.min(n - 1) };
                cell.conservativity = Some(conservativity_iterates(model, lambda, steps)?);
            }
            None => cell.notes.push("conservativity iterates apply to quantum models only".into()),
        }
    }
    if wants(Output::Indicator) && built.ssqds.is_none() {
        cell.notes.push("indicator applies to ssqds models only".into());
    }

    let detailed = n <= cfg.detail_max_dim;
    if wants(Output::TimeDefect) && !cfg.times.is_empty() {
        if detailed {
            let mut opts = TimeDefectOptions::new(mode, cfg.n_steps);
            opts.lambda = lambda;
            opts.series = series;
            for &t in &cfg.times {
                cell.time_defect.push(TimeDefectEntry {
                    t,
                    defect: time_defect(gen, t, &u, &opts)?,
                });
            }
        } else {
            cell.notes.push(format!("time defect skipped: N = {n} exceeds detail_max_dim = {}", cfg.detail_max_dim));
        }
    }

    if wants(Output::Extension) {
        match cfg.u0 {
            None => cell.notes.push("extension skipped: no `u0` configured".into()),
            Some(_) if !detailed => {
                cell.notes.push(format!("extension skipped: N = {n} exceeds detail_max_dim = {}", cfg.detail_max_dim))
            }
            Some(j) => {
                let u0 = StateVector::basis(mode, gen.dim(), j);
                let spec = NonMinimalSpec::new(gen.clone(), lambda, u0, series)?;
                let samples = domain_samples(mode, gen.dim(), cfg.extension_samples, EXTENSION_SEED ^ n as u64);
                cell.extension = Some(ExtensionSummary {
                    u0: j,
                    delta_u0: spec.delta_u0(),
                    alpha: spec.alpha(&u)?,
                    degenerate: spec.is_degenerate(),
                    family: verify_extension_family(&spec, &samples)?,
                });
            }
        }
    }
    Ok(())
}

/// Runs every `(λ, N)` cell of the scenario. Cell order is `λ` as listed,
/// then ladder order, independently of the thread count.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let ladder = cfg.effective_ladder();
    let jobs: Vec<(f64, usize)> = if cfg.outputs.is_empty() {
        Vec::new()
    } else {
        cfg.lambda.iter().flat_map(|&l| ladder.iter().map(move |&n| (l, n))).collect()
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let mut cells: Vec<CellReport> = pool.install(|| jobs.par_iter().map(|&(l, n)| run_cell(cfg, l, n)).collect());

    let exact = cfg.model == kato_core::zoo::ModelKind::AmplitudeDamping;
    let mut per_lambda = Vec::new();
    let diagnostics_on = cells.iter().any(|c| c.diagnostics.is_some());
    if diagnostics_on {
        for chunk in cells.chunks_mut(ladder.len()) {
            let lambda = chunk[0].lambda;
            if chunk.iter().any(|c| c.diagnostics.is_none()) {
                per_lambda.push(LambdaVerdict {
                    lambda,
                    ladder: None,
                    error: Some("missing diagnostics on some ladder points".into()),
                });
                continue;
            }
            let mut reports: Vec<HonestyReport> = chunk.iter().map(|c| c.diagnostics.clone().unwrap()).collect();
            match apply_verdict(&mut reports, &cfg.thresholds, exact) {
                Ok(v) => {
                    for (c, r) in chunk.iter_mut().zip(reports) {
                        c.diagnostics = Some(r);
                    }
                    per_lambda.push(LambdaVerdict {
                        lambda,
                        ladder: Some(v),
                        error: None,
                    });
                }
                Err(e) => per_lambda.push(LambdaVerdict {
                    lambda,
                    ladder: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }

    let overall = if per_lambda.is_empty() {
        None
    } else {
        let verdicts: Vec<Verdict> = per_lambda
            .iter()
            .map(|p| p.ladder.as_ref().map_or(Verdict::Inconclusive, |l| l.verdict))
            .collect();
        Some(if verdicts.iter().all(|v| *v == verdicts[0]) {
            verdicts[0]
        } else {
            Verdict::Inconclusive
        })
    };

    let failed = cells.iter().any(|c| !c.errors.is_empty()) || per_lambda.iter().any(|p| p.error.is_some());
    let declared = cfg.expected.and_then(Expected::verdict);
    let matches = match (declared, overall) {
        (Some(d), Some(o)) => Some(d == o),
        _ => None,
    };
    let exit_code = if failed {
        exit::RUNTIME
    } else {
        match (declared, overall) {
            (Some(d), Some(o)) if d == o => exit::OK,
            (Some(_), Some(Verdict::Inconclusive)) => exit::INCONCLUSIVE,
            (Some(_), Some(_)) => exit::MISMATCH,
            _ => exit::OK,
        }
    };

    if opts.stable_output {
        for c in &mut cells {
            c.elapsed_ms = None;
        }
    }
    let timing = (!opts.stable_output).then(|| Timing {
        total_ms: start.elapsed().as_secs_f64() * 1e3,
        threads,
    });
    Ok(RunReport {
        tool: ToolInfo {
            name: TOOL_NAME.into(),
            version: VERSION.into(),
        },
        scenario: cfg.clone(),
        cells,
        verdict: VerdictSummary {
            overall,
            per_lambda,
            expected: cfg.expected,
            matches,
            exit_code,
        },
        timing,
    })
}
