use std::time::Instant;

use anyhow::anyhow;
use efx_core::dc::{dca_multistart, DcaOptions, DcaOutcome, DcaStep};
use efx_core::extension::{
    convex_part_argmax, dc_objective, g_value, g_value_at_dual, DualPoint, Lambda,
};
use efx_core::fixedpoint::{picard_multistart, NegativeRow, FixedPointMap, FixedPointReport, PicardOptions};
use efx_core::generate::{random_instance, rng_from_seed};
use efx_core::instance::AgentReduction;
use efx_core::lovasz::{minimize_relaxation, threshold_round, FractionalPoint, SubgradientOptions};
use efx_core::lp::LpError;
use efx_core::oracle::{all_allocations, allocation_count, enumerate_efx_with_tol};
use efx_core::{check_efx, Allocation, Instance};
use serde::Serialize;

use crate::args::{
    CheckArgs, Cli, Command, CompareArgs, DcaArgs, EvalArgs, ExtensionCommand, FixedPointArgs, GenArgs,
    LovaszArgs, OracleArgs,
};
use crate::docs::{self, Envelope, Sink, SCHEMA_VERSION};

/// A failed run, carrying the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Input(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<efx_core::Error>() {
            Some(core) if is_internal(core) => Failure::Internal(e),
            _ => Failure::Input(e),
        }
    }
}

impl From<efx_core::Error> for Failure {
    fn from(e: efx_core::Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

fn is_internal(e: &efx_core::Error) -> bool {
    matches!(
        e,
        efx_core::Error::SelfMap { .. }
            | efx_core::Error::Lp(LpError::NumericFailure { .. } | LpError::InvalidModel(_))
    )
}

type Outcome<T> = Result<T, Failure>;

pub fn run(cli: &Cli) -> Outcome<()> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Check(a) => emit(cli, "check", check(cli, a)?),
        Command::Oracle(a) if a.all => oracle_stream(cli, a),
        Command::Oracle(a) => emit(cli, "oracle", oracle(cli, a)?),
        Command::Lovasz(a) => emit(cli, "lovasz", lovasz(cli, a)?),
        Command::Extension(ExtensionCommand::Eval(a)) => emit(cli, "extension eval", eval(a)?),
        Command::Dca(a) => {
            let doc = dca(cli, a)?;
            if let Some(path) = &a.csv {
                docs::write_csv(path, &doc.table())?;
            }
            emit(cli, "dca", doc)
        }
        Command::Fixedpoint(a) => {
            let doc = fixedpoint(cli, a)?;
            if let Some(path) = &a.csv {
                docs::write_csv(path, &doc.table())?;
            }
            emit(cli, "fixedpoint", doc)
        }
        Command::Compare(a) => {
            let doc = compare(cli, a)?;
            if let Some(path) = &a.csv {
                docs::write_csv(path, &doc.rows)?;
            }
            emit(cli, "compare", doc)
        }
    }
}

fn emit<T: Serialize>(cli: &Cli, command: &str, result: T) -> Outcome<()> {
    let mut sink = Sink::open(cli.output.as_deref())?;
    sink.document(&Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config: cli,
        result,
    })?;
    Ok(())
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn gen(cli: &Cli, a: &GenArgs) -> Outcome<()> {
    let inst = random_instance(a.agents, a.items, a.distribution(), a.seed)?;
    Sink::open(cli.output.as_deref())?.document(&inst.to_doc())?;
    Ok(())
}

#[derive(Serialize)]
struct ViolationDoc {
    envious: usize,
    envied: usize,
    slack: f64,
}

#[derive(Serialize)]
struct CheckDoc {
    efx: bool,
    efx_slack: f64,
    violations: Vec<ViolationDoc>,
}

fn check(cli: &Cli, a: &CheckArgs) -> Outcome<CheckDoc> {
    let inst = docs::read_instance(&a.instance)?;
    let alloc = docs::read_allocation(&a.allocation, &inst)?;
    let report = check_efx(&inst, &alloc, cli.efx_tol);
    Ok(CheckDoc {
        efx: report.efx,
        efx_slack: report.max_slack,
        violations: report
            .violations
            .iter()
            .map(|v| ViolationDoc {
                envious: v.envious + 1,
                envied: v.envied + 1,
                slack: v.slack,
            })
            .collect(),
    })
}

fn oracle(cli: &Cli, a: &OracleArgs) -> Outcome<efx_core::oracle::OracleResult> {
    let inst = docs::read_instance(&a.instance)?;
    Ok(enumerate_efx_with_tol(&inst, Some(a.cap), cli.efx_tol)?)
}

#[derive(Serialize)]
struct Header<'a> {
    schema_version: u32,
    command: &'a str,
    config: &'a Cli,
}

#[derive(Serialize)]
struct WitnessLine<'a> {
    witness: &'a Allocation,
}

#[derive(Serialize)]
struct SummaryLine {
    summary: Summary,
}

#[derive(Serialize)]
struct Summary {
    exists: bool,
    witness_count: u64,
    allocations_scanned: u64,
}

fn oracle_stream(cli: &Cli, a: &OracleArgs) -> Outcome<()> {
    let inst = docs::read_instance(&a.instance)?;
    let total = allocation_count(&inst)?;
    let mut sink = Sink::open(cli.output.as_deref())?;
    sink.line(&Header {
        schema_version: SCHEMA_VERSION,
        command: "oracle",
        config: cli,
    })?;
    let mut count = 0;
    for alloc in all_allocations(inst.items(), inst.agents()) {
        if check_efx(&inst, &alloc, cli.efx_tol).efx {
            count += 1;
            sink.line(&WitnessLine { witness: &alloc })?;
        }
    }
    sink.line(&SummaryLine {
        summary: Summary {
            exists: count > 0,
            witness_count: count,
            allocations_scanned: total,
        },
    })?;
    sink.flush()?;
    Ok(())
}

/// Agents that value nothing are dropped before solving; this records which.
#[derive(Serialize)]
struct ReductionDoc {
    kept_agents: Vec<usize>,
    removed_agents: Vec<usize>,
    /// Set when at most one agent values anything, in which case giving
    /// every item to that agent is EFX and no solver runs.
    trivial_allocation: Option<Allocation>,
}

fn reduce(inst: &Instance) -> (ReductionDoc, AgentReduction) {
    let red = inst.without_zero_agents();
    let doc = ReductionDoc {
        kept_agents: red.kept.iter().map(|a| a + 1).collect(),
        removed_agents: red.removed.iter().map(|a| a + 1).collect(),
        trivial_allocation: red.reduced.is_none().then(|| red.trivial_allocation()),
    };
    (doc, red)
}

/// Columns of `rows` placed back at the kept agents' positions.
fn lift_rows(rows: Vec<Vec<f64>>, red: &AgentReduction, agents: usize, fill: f64) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|row| {
            let mut out = vec![fill; agents];
            for (v, &a) in row.into_iter().zip(&red.kept) {
                out[a] = v;
            }
            out
        })
        .collect()
}

fn one_based(items: &[usize]) -> Vec<usize> {
    items.iter().map(|k| k + 1).collect()
}

#[derive(Serialize)]
struct RoundingDoc {
    thresholds: Vec<f64>,
    partition: bool,
    multiply_assigned: Vec<usize>,
    unassigned: Vec<usize>,
    allocation: Option<Allocation>,
    efx: Option<bool>,
}

#[derive(Serialize)]
struct RelaxationDoc {
    /// The relaxation minimizes the monotone form, whose EFX threshold is 1.
    form: &'static str,
    threshold: f64,
    f_star: f64,
    initial_value: f64,
    best_iteration: usize,
    iterations: usize,
    x: Vec<Vec<f64>>,
    roundings: Vec<RoundingDoc>,
}

#[derive(Serialize)]
struct LovaszDoc {
    reduction: ReductionDoc,
    relaxation: Option<RelaxationDoc>,
    /// "efx-found" when a rounding is a verified EFX allocation, otherwise
    /// "inconclusive"; the descent only bounds the relaxation from above.
    verdict: &'static str,
}

fn relaxation(cli: &Cli, a: &LovaszArgs, inst: &Instance, red: &AgentReduction) -> Outcome<RelaxationDoc> {
    let reduced = red.reduced.as_ref().expect("caller checked");
    let normalized = reduced.normalize()?;
    let res = minimize_relaxation(
        &normalized,
        &SubgradientOptions {
            iterations: a.iterations,
            step0: a.step0,
        },
    )?;
    let mut rng = rng_from_seed(a.seed);
    let roundings = (0..a.roundings)
        .map(|_| {
            let r = threshold_round(&res.point, &mut rng);
            let allocation = r.to_allocation().map(|x| red.lift(&x));
            RoundingDoc {
                thresholds: r.thresholds.clone(),
                partition: r.is_partition(),
                multiply_assigned: one_based(&r.multiply_assigned),
                unassigned: one_based(&r.unassigned),
                efx: allocation.as_ref().map(|x| check_efx(inst, x, cli.efx_tol).efx),
                allocation,
            }
        })
        .collect();
    Ok(RelaxationDoc {
        form: "monotone",
        threshold: 1.0,
        f_star: res.value,
        initial_value: res.initial_value,
        best_iteration: res.best_iteration,
        iterations: res.iterations,
        x: lift_rows(res.point.to_rows(), red, inst.agents(), 0.0),
        roundings,
    })
}

fn lovasz(cli: &Cli, a: &LovaszArgs) -> Outcome<LovaszDoc> {
    let inst = docs::read_instance(&a.instance)?;
    let (reduction, red) = reduce(&inst);
    if red.reduced.is_none() {
        return Ok(LovaszDoc {
            reduction,
            relaxation: None,
            verdict: "efx-found",
        });
    }
    let rel = relaxation(cli, a, &inst, &red)?;
    let found = rel.roundings.iter().any(|r| r.efx == Some(true));
    Ok(LovaszDoc {
        reduction,
        relaxation: Some(rel),
        verdict: if found { "efx-found" } else { "inconclusive" },
    })
}

#[derive(Serialize)]
struct EvalDoc {
    point: &'static str,
    /// DC objective at `y`; absent for a fractional point.
    f: Option<f64>,
    /// First maximizing `(k, i, j)` of the convex part, 1-based.
    argmax: Option<[usize; 3]>,
    lambdas: Vec<f64>,
    g: Vec<f64>,
    /// `ln(nm) / lambda`, the value `g` cannot exceed at an EFX allocation.
    bound: Vec<f64>,
}

fn check_shape(inst: &Instance, rows: &[Vec<f64>], what: &str) -> Outcome<()> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.len() != inst.items() || n != inst.agents() {
        return Err(Failure::Input(anyhow!(
            "{what} is {}x{n} but the instance is {}x{}",
            rows.len(),
            inst.items(),
            inst.agents()
        )));
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Outcome<EvalDoc> {
    let inst = docs::read_instance(&a.instance)?;
    let lambdas = a
        .lambdas
        .iter()
        .map(|&l| Lambda::new(l))
        .collect::<Result<Vec<_>, _>>()?;
    let log_nm = ((inst.items() * inst.agents()) as f64).ln();
    let bound = a.lambdas.iter().map(|l| log_nm / l).collect();
    if let Some(path) = &a.y {
        let rows = docs::read_y(path)?;
        check_shape(&inst, &rows, "y")?;
        let y = DualPoint::from_rows(&rows)?;
        let (_, (k, i, j)) = convex_part_argmax(&inst, &y);
        Ok(EvalDoc {
            point: "y",
            f: Some(dc_objective(&inst, &y)),
            argmax: Some([k + 1, i + 1, j + 1]),
            lambdas: a.lambdas.clone(),
            g: lambdas.iter().map(|&l| g_value_at_dual(&inst, &y, l)).collect(),
            bound,
        })
    } else {
        let path = a.x.as_ref().expect("clap requires y or x");
        let rows = docs::read_x(path)?;
        check_shape(&inst, &rows, "x")?;
        let x = FractionalPoint::from_rows(&rows)?;
        Ok(EvalDoc {
            point: "x",
            f: None,
            argmax: None,
            lambdas: a.lambdas.clone(),
            g: lambdas.iter().map(|&l| g_value(&inst, &x, l)).collect(),
            bound,
        })
    }
}

#[derive(Serialize)]
struct DcaRunDoc {
    start: usize,
    status: &'static str,
    objective: Option<f64>,
    dc_value: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    monotone: Option<bool>,
    efx: Option<bool>,
    efx_slack: Option<f64>,
    allocation: Option<Allocation>,
    error: Option<String>,
}

#[derive(Serialize)]
struct DcaBestDoc {
    start: usize,
    objective: f64,
    iterations: usize,
    allocation: Allocation,
    efx: bool,
    m_const: f64,
    y: Vec<Vec<f64>>,
    trace: Vec<DcaStep>,
}

#[derive(Serialize)]
struct DcaDoc {
    reduction: ReductionDoc,
    runs: Vec<DcaRunDoc>,
    best: Option<DcaBestDoc>,
    /// First verified EFX allocation across starts.
    allocation: Option<Allocation>,
    verdict: &'static str,
}

#[derive(Serialize)]
struct DcaRow {
    start: usize,
    status: &'static str,
    objective: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    efx: Option<bool>,
    efx_slack: Option<f64>,
    error: Option<String>,
}

impl DcaDoc {
    fn table(&self) -> Vec<DcaRow> {
        self.runs
            .iter()
            .map(|r| DcaRow {
                start: r.start,
                status: r.status,
                objective: r.objective,
                iterations: r.iterations,
                converged: r.converged,
                efx: r.efx,
                efx_slack: r.efx_slack,
                error: r.error.clone(),
            })
            .collect()
    }
}

fn dca_runs(cli: &Cli, inst: &Instance, red: &AgentReduction, a: &DcaArgs) -> Outcome<(Vec<DcaRunDoc>, Option<DcaBestDoc>)> {
    if a.starts == 0 {
        return Err(usage("--starts must be at least 1"));
    }
    let reduced = red.reduced.as_ref().expect("caller checked");
    let opts = DcaOptions {
        delta: a.delta,
        max_iters: a.max_iters,
        m_const: a.m_const,
        ..DcaOptions::default()
    };
    let outcomes = dca_multistart(reduced, a.starts, a.seed, &opts)?;
    let mut best: Option<(usize, DcaOutcome, Allocation, bool)> = None;
    let mut runs = Vec::new();
    for (start, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(out) => {
                let allocation = red.lift(&out.allocation);
                let report = check_efx(inst, &allocation, cli.efx_tol);
                runs.push(DcaRunDoc {
                    start,
                    status: "ok",
                    objective: Some(out.objective),
                    dc_value: Some(out.dc_value),
                    iterations: Some(out.iterations),
                    converged: Some(out.converged),
                    monotone: Some(out.monotone),
                    efx: Some(report.efx),
                    efx_slack: Some(report.max_slack),
                    allocation: Some(allocation.clone()),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| out.objective < b.1.objective) {
                    best = Some((start, out, allocation, report.efx));
                }
            }
            Err(fail) => {
                if is_internal(&fail.error) {
                    return Err(Failure::Internal(anyhow!("DCA start {start}: {fail}")));
                }
                runs.push(DcaRunDoc {
                    start,
                    status: "error",
                    objective: None,
                    dc_value: None,
                    iterations: Some(fail.trace.len().saturating_sub(1)),
                    converged: None,
                    monotone: None,
                    efx: None,
                    efx_slack: None,
                    allocation: None,
                    error: Some(fail.to_string()),
                });
            }
        }
    }
    let best = best.map(|(start, out, allocation, efx)| DcaBestDoc {
        start,
        objective: out.objective,
        iterations: out.iterations,
        allocation,
        efx,
        m_const: out.m_const,
        y: out.y.to_rows(),
        trace: out.trace,
    });
    Ok((runs, best))
}

fn dca(cli: &Cli, a: &DcaArgs) -> Outcome<DcaDoc> {
    let inst = docs::read_instance(&a.instance)?;
    let (reduction, red) = reduce(&inst);
    if let Some(trivial) = &reduction.trivial_allocation {
        let allocation = Some(trivial.clone());
        return Ok(DcaDoc {
            reduction,
            runs: Vec::new(),
            best: None,
            allocation,
            verdict: "efx-found",
        });
    }
    let (runs, best) = dca_runs(cli, &inst, &red, a)?;
    let allocation = runs
        .iter()
        .find(|r| r.efx == Some(true))
        .and_then(|r| r.allocation.clone());
    Ok(DcaDoc {
        reduction,
        verdict: if allocation.is_some() { "efx-found" } else { "inconclusive" },
        runs,
        best,
        allocation,
    })
}

#[derive(Serialize)]
struct FixedPointRunDoc {
    start: usize,
    converged: bool,
    iterations: usize,
    best_iteration: usize,
    residual: f64,
    constraint_slack: f64,
    constraints_hold: bool,
    efx: bool,
    efx_slack: f64,
    allocation: Allocation,
    negative_rows: Vec<NegativeRow>,
    y: Vec<Vec<f64>>,
}

/// A converged run whose point violates the constraint system or extracts
/// a non-EFX allocation.
#[derive(Serialize)]
struct FindingDoc {
    start: usize,
    residual: f64,
    constraint_slack: f64,
    efx: bool,
    negative_rows: Vec<NegativeRow>,
    y: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct FixedPointDoc {
    map: FixedPointMap,
    reduction: ReductionDoc,
    m_const: Option<f64>,
    runs: Vec<FixedPointRunDoc>,
    findings: Vec<FindingDoc>,
    allocation: Option<Allocation>,
    verdict: &'static str,
}

#[derive(Serialize)]
struct FixedPointRow {
    start: usize,
    converged: bool,
    iterations: usize,
    residual: f64,
    constraint_slack: f64,
    constraints_hold: bool,
    efx: bool,
    negative_rows: usize,
}

impl FixedPointDoc {
    fn table(&self) -> Vec<FixedPointRow> {
        self.runs
            .iter()
            .map(|r| FixedPointRow {
                start: r.start,
                converged: r.converged,
                iterations: r.iterations,
                residual: r.residual,
                constraint_slack: r.constraint_slack,
                constraints_hold: r.constraints_hold,
                efx: r.efx,
                negative_rows: r.negative_rows.len(),
            })
            .collect()
    }
}

struct FixedPointParams {
    map: FixedPointMap,
    opts: PicardOptions,
    starts: usize,
    seed: u64,
}

fn fixedpoint_runs(
    cli: &Cli,
    inst: &Instance,
    red: &AgentReduction,
    p: &FixedPointParams,
) -> Outcome<(Vec<FixedPointRunDoc>, Option<f64>)> {
    if p.starts == 0 {
        return Err(usage("--starts must be at least 1"));
    }
    let reduced = red.reduced.as_ref().expect("caller checked");
    let reports = picard_multistart(reduced, p.map, p.starts, p.seed, &p.opts)?;
    let mut runs = Vec::new();
    let mut m_const = None;
    for (start, rep) in reports.into_iter().enumerate() {
        let rep: FixedPointReport = rep?;
        m_const = Some(rep.m_const);
        let allocation = red.lift(&rep.allocation);
        let report = check_efx(inst, &allocation, cli.efx_tol);
        runs.push(FixedPointRunDoc {
            start,
            converged: rep.converged,
            iterations: rep.iterations,
            best_iteration: rep.best_iteration,
            residual: rep.residual,
            constraint_slack: rep.constraint_slack,
            constraints_hold: rep.constraints_hold,
            efx: report.efx,
            efx_slack: report.max_slack,
            allocation,
            negative_rows: rep.negative_rows,
            y: rep.y.to_rows(),
        });
    }
    Ok((runs, m_const))
}

fn fixedpoint(cli: &Cli, a: &FixedPointArgs) -> Outcome<FixedPointDoc> {
    let inst = docs::read_instance(&a.instance)?;
    let (reduction, red) = reduce(&inst);
    let map = FixedPointMap::from(a.map);
    if let Some(trivial) = &reduction.trivial_allocation {
        let allocation = Some(trivial.clone());
        return Ok(FixedPointDoc {
            map,
            reduction,
            m_const: None,
            runs: Vec::new(),
            findings: Vec::new(),
            allocation,
            verdict: "efx-found",
        });
    }
    let params = FixedPointParams {
        map,
        opts: PicardOptions {
            alpha: a.alpha,
            tol: a.tol,
            slack_tol: a.slack_tol,
            max_iters: a.max_iters,
            m_const: a.m_const,
        },
        starts: a.starts,
        seed: a.seed,
    };
    let (runs, m_const) = fixedpoint_runs(cli, &inst, &red, &params)?;
    let findings = runs
        .iter()
        .filter(|r| r.converged && !(r.constraints_hold && r.efx))
        .map(|r| FindingDoc {
            start: r.start,
            residual: r.residual,
            constraint_slack: r.constraint_slack,
            efx: r.efx,
            negative_rows: r.negative_rows.clone(),
            y: r.y.clone(),
        })
        .collect();
    let allocation = runs.iter().find(|r| r.efx).map(|r| r.allocation.clone());
    Ok(FixedPointDoc {
        map,
        reduction,
        m_const,
        verdict: if allocation.is_some() { "efx-found" } else { "inconclusive" },
        runs,
        findings,
        allocation,
    })
}

#[derive(Serialize)]
pub struct CompareRow {
    method: &'static str,
    status: &'static str,
    found_efx: Option<bool>,
    objective: Option<f64>,
    iterations: Option<u64>,
    wall_time: Option<f64>,
    flag: Option<&'static str>,
    error: Option<String>,
}

impl CompareRow {
    fn new(method: &'static str) -> Self {
        CompareRow {
            method,
            status: "ok",
            found_efx: None,
            objective: None,
            iterations: None,
            wall_time: None,
            flag: None,
            error: None,
        }
    }

    fn failed(mut self, f: Failure) -> Self {
        self.status = "error";
        self.error = Some(format!("{:#}", f.error()));
        self
    }
}

#[derive(Serialize)]
struct CompareDoc {
    reduction: ReductionDoc,
    /// Methods other than the oracle run on the reduced instance with each
    /// agent's values scaled to sum to 1.
    normalized: bool,
    oracle_exists: Option<bool>,
    rows: Vec<CompareRow>,
    findings: Vec<String>,
}

fn timed<T>(cli: &Cli, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, cli.timings.then(|| start.elapsed().as_secs_f64()))
}

fn compare(cli: &Cli, a: &CompareArgs) -> Outcome<CompareDoc> {
    if a.starts == 0 {
        return Err(usage("--starts must be at least 1"));
    }
    let inst = docs::read_instance(&a.instance)?;
    let (reduction, mut red) = reduce(&inst);
    // Every method sees the same normalized instance; EFX verdicts are
    // checked on the original values.
    red.reduced = red.reduced.map(|r| r.normalize()).transpose()?;
    let mut rows = Vec::new();

    let (res, wall) = timed(cli, || enumerate_efx_with_tol(&inst, Some(1), cli.efx_tol));
    let mut row = CompareRow::new("oracle");
    row.wall_time = wall;
    let oracle_exists = match res {
        Ok(r) => {
            row.found_efx = Some(r.exists);
            row.iterations = Some(r.allocations_scanned);
            rows.push(row);
            Some(r.exists)
        }
        Err(e) => {
            rows.push(row.failed(e.into()));
            None
        }
    };

    let trivial = reduction.trivial_allocation.is_some();
    for method in ["lovasz", "dca", "fixedpoint-Ttilde"] {
        let mut row = CompareRow::new(method);
        if trivial {
            row.status = "trivial";
            row.found_efx = Some(true);
            rows.push(row);
            continue;
        }
        let (res, wall) = timed(cli, || compare_method(cli, a, method, &inst, &red));
        row.wall_time = wall;
        let row = match res {
            Ok((found, objective, iterations)) => {
                row.found_efx = Some(found);
                row.objective = objective;
                row.iterations = iterations;
                row
            }
            Err(f) => row.failed(f),
        };
        rows.push(row);
    }

    let mut findings = Vec::new();
    if let Some(exists) = oracle_exists {
        for row in rows.iter_mut().skip(1) {
            match (exists, row.found_efx) {
                (true, Some(false)) | (true, None) => row.flag = Some("stationary-miss"),
                (false, Some(true)) => row.flag = Some("contradiction"),
                _ => {}
            }
            if let Some(flag) = row.flag {
                findings.push(format!("{}: {flag}", row.method));
            }
        }
    }
    Ok(CompareDoc {
        reduction,
        normalized: true,
        oracle_exists,
        rows,
        findings,
    })
}

type MethodSummary = (bool, Option<f64>, Option<u64>);

fn compare_method(cli: &Cli, a: &CompareArgs, method: &str, inst: &Instance, red: &AgentReduction) -> Outcome<MethodSummary> {
    match method {
        "lovasz" => {
            let args = LovaszArgs {
                instance: a.instance.clone(),
                iterations: 2000,
                step0: 0.5,
                roundings: 32,
                seed: a.seed,
            };
            let rel = relaxation(cli, &args, inst, red)?;
            let found = rel.roundings.iter().any(|r| r.efx == Some(true));
            Ok((found, Some(rel.f_star), Some(rel.iterations as u64)))
        }
        "dca" => {
            let args = DcaArgs {
                instance: a.instance.clone(),
                delta: 1e-8,
                max_iters: 200,
                starts: a.starts,
                seed: a.seed,
                m_const: None,
                csv: None,
            };
            let (runs, best) = dca_runs(cli, inst, red, &args)?;
            let found = runs.iter().any(|r| r.efx == Some(true));
            Ok((
                found,
                best.as_ref().map(|b| b.objective),
                best.as_ref().map(|b| b.iterations as u64),
            ))
        }
        _ => {
            let params = FixedPointParams {
                map: FixedPointMap::Ttilde,
                opts: PicardOptions::default(),
                starts: a.starts,
                seed: a.seed,
            };
            let (runs, _) = fixedpoint_runs(cli, inst, red, &params)?;
            let found = runs.iter().any(|r| r.efx);
            let best = runs
                .iter()
                .min_by(|x, y| x.constraint_slack.total_cmp(&y.constraint_slack))
                .expect("at least one start");
            Ok((found, Some(best.constraint_slack), Some(best.iterations as u64)))
        }
    }
}
