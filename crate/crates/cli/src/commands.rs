//! Command implementations.

use std::io::Write;

use anyhow::{bail, Context, Result};
use ivtest::anderson_rubin::ar_statistic;
use ivtest::inference::{test_composite_quantile, test_composite_shortcut_quantile, Diagnostics};
use ivtest::theory::{erp_bound, estimate_theory_constants, BoundInputs, BoundResult, TheoryConstants};
use ivtest::{
    test_composite, test_composite_shortcut, test_simple, test_simple_quantile, test_specification,
    test_specification_quantile, ModelSpec, Moment, OptimizerConfig, TestConfig, TestResult, ThetaPartition,
};
use ivtest_mc::{replicate_table, run_cell, DesignKind, ErrorDist, ExperimentDesign};
use serde::Serialize;

use crate::args::{
    ArArgs, BoundArgs, Command, CommonArgs, CompositeArgs, DesignArg, Format, McArgs, SpecArgs, TestArgs,
};
use crate::io::{load_csv, open_output, InputInfo};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Test(a) => cmd_test(&a, None),
        Command::TestQuantile(a) => cmd_test(&a.test, Some(a.a_q)),
        Command::Composite(a) => cmd_composite(&a),
        Command::Spec(a) => cmd_spec(&a, None),
        Command::SpecQuantile(a) => cmd_spec(&a.spec, Some(a.a_q)),
        Command::Ar(a) => cmd_ar(&a),
        Command::Bound(a) => cmd_bound(&a),
        Command::Mc(a) => cmd_mc(&a),
    }
}

#[derive(Serialize)]
struct TestReport<'a> {
    command: &'static str,
    statistic: f64,
    critical_value: f64,
    p_value: f64,
    reject: bool,
    alpha: f64,
    #[serde(rename = "R")]
    draws: usize,
    seed: u64,
    theta: &'a [f64],
    a_q: Option<f64>,
    diagnostics: &'a Diagnostics,
    input: &'a InputInfo,
}

#[derive(Serialize)]
struct TestRow {
    command: &'static str,
    statistic: f64,
    critical_value: f64,
    p_value: f64,
    reject: bool,
    alpha: f64,
    #[serde(rename = "R")]
    draws: usize,
    seed: u64,
    theta: String,
    a_q: Option<f64>,
    input_fnv1a64: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, rec: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_csv_row<T: Serialize>(out: &mut dyn Write, rec: &T) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.serialize(rec)?;
    w.flush()?;
    Ok(())
}

fn emit_test(
    command: &'static str,
    r: &TestResult,
    a_q: Option<f64>,
    info: &InputInfo,
    common: &CommonArgs,
) -> Result<()> {
    let mut out = open_output(common.out.as_deref())?;
    match common.format {
        Format::Jsonl => write_jsonl(
            &mut *out,
            &TestReport {
                command,
                statistic: r.statistic,
                critical_value: r.critical_value,
                p_value: r.p_value,
                reject: r.reject,
                alpha: r.diagnostics.alpha,
                draws: r.diagnostics.draws,
                seed: r.diagnostics.seed,
                theta: &r.theta_at_decision,
                a_q,
                diagnostics: &r.diagnostics,
                input: info,
            },
        )?,
        Format::Csv => write_csv_row(
            &mut *out,
            &TestRow {
                command,
                statistic: r.statistic,
                critical_value: r.critical_value,
                p_value: r.p_value,
                reject: r.reject,
                alpha: r.diagnostics.alpha,
                draws: r.diagnostics.draws,
                seed: r.diagnostics.seed,
                theta: join(&r.theta_at_decision),
                a_q,
                input_fnv1a64: info.fnv1a64.clone(),
            },
        )?,
    }
    out.flush()?;
    Ok(())
}

fn config(common: &CommonArgs, optimizer: OptimizerConfig) -> TestConfig {
    TestConfig { alpha: common.alpha, draws: common.draws, seed: common.seed, optimizer }
}

fn cmd_test(a: &TestArgs, a_q: Option<f64>) -> Result<()> {
    let loaded = load_csv(&a.common.data)?;
    let p = loaded.data.p();
    let theta0 = a.theta0.clone().unwrap_or_else(|| vec![0.0; p]);
    let cfg = config(&a.common, OptimizerConfig::default());
    let model = ModelSpec::linear(p);
    let (name, r) = match a_q {
        None => ("test", test_simple(&loaded.data, &model, &theta0, &cfg)?),
        Some(level) => ("test-quantile", test_simple_quantile(&loaded.data, &model, &theta0, level, &cfg)?),
    };
    emit_test(name, &r, a_q, &loaded.info, &a.common)
}

fn zero_based(indices: &[usize], p: usize, flag: &str) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&k| {
            if k == 0 || k > p {
                bail!("--{flag} index {k} outside 1..={p}");
            }
            Ok(k - 1)
        })
        .collect()
}

fn cmd_composite(a: &CompositeArgs) -> Result<()> {
    let loaded = load_csv(&a.common.data)?;
    let p = loaded.data.p();
    let tested = zero_based(&a.tested, p, "tested")?;
    let partition = ThetaPartition::new(p, tested, a.g0.clone())?;
    let optimizer =
        OptimizerConfig { starts: a.search.starts, bounds: a.search.bounds.clone(), ..OptimizerConfig::default() };
    let cfg = config(&a.common, optimizer);
    let model = ModelSpec::linear(p);
    let d = &loaded.data;
    let r = match (a.shortcut, a.a_q) {
        (false, None) => test_composite(d, &model, &partition, &cfg)?,
        (true, None) => test_composite_shortcut(d, &model, &partition, &cfg)?,
        (false, Some(l)) => test_composite_quantile(d, &model, &partition, l, &cfg)?,
        (true, Some(l)) => test_composite_shortcut_quantile(d, &model, &partition, l, &cfg)?,
    };
    emit_test("composite", &r, a.a_q, &loaded.info, &a.common)
}

fn cmd_spec(a: &SpecArgs, a_q: Option<f64>) -> Result<()> {
    let loaded = load_csv(&a.common.data)?;
    let p = loaded.data.p();
    let optimizer = OptimizerConfig { starts: a.starts, ..OptimizerConfig::default() };
    let cfg = config(&a.common, optimizer);
    let model = ModelSpec::linear(p);
    let (name, r) = match a_q {
        None => ("spec", test_specification(&loaded.data, &model, &a.bounds, &cfg)?),
        Some(l) => ("spec-quantile", test_specification_quantile(&loaded.data, &model, l, &a.bounds, &cfg)?),
    };
    emit_test(name, &r, a_q, &loaded.info, &a.common)
}

#[derive(Serialize)]
struct ArReport<'a> {
    command: &'static str,
    statistic: f64,
    df1: usize,
    df2: usize,
    critical_value: f64,
    p_value: f64,
    reject: bool,
    alpha: f64,
    theta: String,
    exog: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<&'a InputInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_fnv1a64: Option<String>,
}

fn cmd_ar(a: &ArArgs) -> Result<()> {
    let loaded = load_csv(&a.data)?;
    let p = loaded.data.p();
    let exog = zero_based(&a.exog, p, "exog")?;
    let theta0 = a.theta0.clone().unwrap_or_else(|| vec![0.0; p.saturating_sub(exog.len())]);
    let r = ar_statistic(&loaded.data, &theta0, &exog, a.alpha)?;
    let mut rep = ArReport {
        command: "ar",
        statistic: r.statistic,
        df1: r.df1,
        df2: r.df2,
        critical_value: r.critical_value,
        p_value: r.p_value,
        reject: r.reject,
        alpha: r.alpha,
        theta: join(&theta0),
        exog: a.exog.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"),
        input: None,
        input_fnv1a64: None,
    };
    let mut out = open_output(a.out.as_deref())?;
    match a.format {
        Format::Jsonl => {
            rep.input = Some(&loaded.info);
            write_jsonl(&mut *out, &rep)?
        }
        Format::Csv => {
            rep.input_fnv1a64 = Some(loaded.info.fnv1a64.clone());
            write_csv_row(&mut *out, &rep)?
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Constants {
    /// `given` or `estimated`; estimated constants are plug-ins, not the
    /// population values the bound assumes.
    source: &'static str,
    ell: f64,
    m3: f64,
    c_sigma: f64,
}

#[derive(Serialize)]
struct BoundReport<'a> {
    command: &'static str,
    constants: Constants,
    result: &'a BoundResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<InputInfo>,
}

#[derive(Serialize)]
struct BoundRow {
    command: &'static str,
    source: &'static str,
    q: usize,
    n: usize,
    ell: f64,
    m3: f64,
    c_sigma: f64,
    t: f64,
    r_t: f64,
    r_tilde_shift: Option<f64>,
    berry_term: f64,
    branch_a: Option<f64>,
    branch_b: Option<f64>,
    bound: Option<f64>,
    confidence: f64,
    feasible: bool,
    vacuous: bool,
}

fn cmd_bound(a: &BoundArgs) -> Result<()> {
    let (inputs, source, info) = if a.estimate {
        let path = a.data.as_ref().context("--estimate needs --data")?;
        let loaded = load_csv(path)?;
        let p = loaded.data.p();
        let theta0 = a.theta0.clone().unwrap_or_else(|| vec![0.0; p]);
        let moment = a.a_q.map_or(Moment::Mean, Moment::Quantile);
        let TheoryConstants { ell_hat, m3_hat, c_sigma_hat } =
            estimate_theory_constants(&loaded.data, &ModelSpec::linear(p), &theta0, moment)?;
        let inputs = BoundInputs {
            q: loaded.data.q(),
            n: loaded.data.n(),
            ell: ell_hat,
            m3: m3_hat,
            c_sigma: c_sigma_hat,
            t: a.t,
        };
        (inputs, "estimated", Some(loaded.info))
    } else {
        let need = |v: Option<f64>, flag: &str| v.with_context(|| format!("--{flag} is required without --estimate"));
        let inputs = BoundInputs {
            q: a.q.context("--q is required without --estimate")?,
            n: a.n.context("--n is required without --estimate")?,
            ell: need(a.ell, "ell")?,
            m3: need(a.m3, "m3")?,
            c_sigma: need(a.c_sigma, "c-sigma")?,
            t: a.t,
        };
        (inputs, "given", None)
    };
    let result = erp_bound(inputs)?;
    if result.r_tilde_shift.is_none() {
        bail!("{}", result.reason.as_deref().unwrap_or("t must exceed 2 ln q"));
    }
    let constants = Constants { source, ell: inputs.ell, m3: inputs.m3, c_sigma: inputs.c_sigma };
    let mut out = open_output(a.out.as_deref())?;
    match a.format {
        Format::Jsonl => {
            write_jsonl(&mut *out, &BoundReport { command: "bound", constants, result: &result, input: info })?
        }
        Format::Csv => write_csv_row(
            &mut *out,
            &BoundRow {
                command: "bound",
                source,
                q: inputs.q,
                n: inputs.n,
                ell: inputs.ell,
                m3: inputs.m3,
                c_sigma: inputs.c_sigma,
                t: inputs.t,
                r_t: result.r_t,
                r_tilde_shift: result.r_tilde_shift,
                berry_term: result.berry_term,
                branch_a: result.branch_a,
                branch_b: result.branch_b,
                bound: result.bound,
                confidence: result.confidence,
                feasible: result.feasible,
                vacuous: result.vacuous,
            },
        )?,
    }
    out.flush()?;
    Ok(())
}

fn custom_design(a: &McArgs) -> Result<ExperimentDesign> {
    let dist: ErrorDist = a
        .dist
        .as_deref()
        .context("a custom cell needs --dist (or use --table)")?
        .parse()
        .map_err(anyhow::Error::msg)?;
    let n = a.n.context("a custom cell needs --n")?;
    let q = a.q.context("a custom cell needs --q")?;
    let kind = match a.design.unwrap_or(DesignArg::Null) {
        DesignArg::Null => DesignKind::Null,
        DesignArg::Simple => DesignKind::Simple { beta0: a.beta.context("--design simple needs --beta")? },
        DesignArg::Composite => {
            let b = a.beta.context("--design composite needs --beta")?;
            DesignKind::Composite { beta1: b, beta2: b }
        }
    };
    let c = match kind {
        DesignKind::Null => 0.0,
        _ => a.c.context("power designs need --c")?,
    };
    let mut d = ExperimentDesign::new(dist, n, q, kind, c, a.reps, a.seed);
    d.rho = a.rho;
    d.alpha = a.alpha;
    d.draws = a.draws;
    Ok(d)
}

fn progress_line(k: usize, total: usize, cell: &ivtest_mc::CellResult) -> String {
    let d = &cell.design;
    let rates: Vec<String> = cell.rates.iter().map(|r| format!("{}={:.3}", r.test.name(), r.rate)).collect();
    format!(
        "[{k}/{total}] {} n={} beta={} c={} q={}: {} ({:.1}s)",
        d.dist,
        d.n,
        d.beta_label(),
        d.c_label(),
        d.q,
        rates.join(" "),
        cell.wall_time_secs
    )
}

fn cmd_mc(a: &McArgs) -> Result<()> {
    let cells = match a.table {
        Some(t) => {
            if (a.alpha - 0.05).abs() > 0.0 {
                bail!("published tables use alpha = 0.05");
            }
            let total = ivtest_mc::table_designs(t, a.reps, a.seed, a.draws)?.len();
            let mut k = 0;
            replicate_table(t, a.reps, a.seed, a.draws, |cell| {
                k += 1;
                eprintln!("{}", progress_line(k, total, cell));
            })?
        }
        None => {
            let cell = run_cell(&custom_design(a)?)?;
            eprintln!("{}", progress_line(1, 1, &cell));
            vec![cell]
        }
    };
    let mut out = open_output(a.out.as_deref())?;
    match a.format {
        Format::Csv => ivtest_mc::write_csv(&cells, &mut out)?,
        Format::Jsonl => {
            for rec in ivtest_mc::output::records(&cells) {
                write_jsonl(&mut *out, &rec)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
