//! One runner per command. Each returns its table and the checks it asserted.

use std::path::{Path, PathBuf};

use lfunlab_core::arith::{gcd, weil_scan};
use lfunlab_core::deltamethod::build_delta;
use lfunlab_core::experiments::{afe_central, afe_central_dyadic, bound_ledger, second_moment, AfeSpec, LPair, MomentOptions};
use lfunlab_core::modforms::{builtin_form, relation_checks_up_to, Newform, BUILTIN_LABELS, MAX_BUILTIN_TERMS};
use lfunlab_core::shifted::{
    pipeline_coefficients_needed, pipeline_traces, shifted_envelope, direct_shifted_sum, BiWindow, PipelineOptions,
    ShiftInstance, StageOptions,
};
use lfunlab_core::spectral::{dim1_extract, petersson_geometric_batch, SpectralFamily, TailMode};
use lfunlab_core::voronoi::{coefficients_needed, default_windows, dual_truncation, eta_fit_with, DualKernel, VoronoiInstance};
use lfunlab_core::{Complex64, Error, Parallel};

use crate::config::{Command, RunConfig};
use crate::error::{LabError, Result};
use crate::ingest::ingest_qexp;
use crate::pool::Pool;
use crate::report::{num, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tol,
            detail: format!("{value:.3e} (tol {tol:.0e})"),
        }
    }

    fn failed(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: false,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub path: PathBuf,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Runs the configured command and writes its CSV.
pub fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    let pool = Pool::new(cfg.threads)?;
    let (table, checks) = match cfg.command {
        Command::DeltaCheck => delta_check(&pool, cfg)?,
        Command::PeterssonCheck => petersson_check(&pool, cfg)?,
        Command::EigenExtract => eigen_extract(&pool, cfg)?,
        Command::VoronoiCheck => voronoi_check(&pool, cfg)?,
        Command::ShiftedCompare => shifted_compare(&pool, cfg)?,
        Command::EnvelopeTrend => envelope_trend(cfg)?,
        Command::SecondMoment => second_moment_cmd(&pool, cfg)?,
        Command::Afe => afe(&pool, cfg)?,
        Command::Ledger => ledger(cfg)?,
        Command::RelationsCheck => relations_check(cfg)?,
    };
    let path = table.write(cfg)?;
    Ok(Outcome {
        command: cfg.command,
        path,
        checks,
    })
}

/// A built-in label expanded to `n` terms, or a q-expansion file.
pub fn load_form(spec: &str, n: u64) -> Result<Newform> {
    if BUILTIN_LABELS.contains(&spec) {
        if n as usize > MAX_BUILTIN_TERMS {
            return Err(Error::Range {
                requested: n,
                available: MAX_BUILTIN_TERMS as u64,
            }
            .into());
        }
        return Ok(builtin_form(spec, n.max(2) as usize)?);
    }
    let path = Path::new(spec);
    if path.exists() {
        return ingest_qexp(path);
    }
    Err(LabError::Config(format!(
        "form {spec:?} is neither a built-in label ({}) nor a readable file",
        BUILTIN_LABELS.join(", ")
    )))
}

/// Built-in label with the given level and weight.
fn builtin_for(level: u64, weight: u32) -> Option<&'static str> {
    BUILTIN_LABELS.iter().copied().find(|l| {
        let mut it = l.split('.');
        it.next() == Some(&level.to_string()) && it.next() == Some(&weight.to_string())
    })
}

fn weight_of(cfg: &RunConfig, key: &str) -> Result<u32> {
    let k = cfg.count(key)?;
    if k % 2 != 0 || k > 200 {
        return Err(LabError::Type {
            key: key.into(),
            value: k.to_string(),
            expected: "an even weight",
        });
    }
    Ok(k as u32)
}

fn delta_check(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let q = cfg.positive("Q")?;
    let tol = cfg.positive("tol")?;
    let d = build_delta(q)?;
    let top = (q * q).floor() as i64;
    let ns: Vec<i64> = (-top..=top).collect();
    let vals = par.map_collect(ns.len(), |i| d.detect(ns[i]));
    let mut t = Table::new(&["n", "detect", "expected", "abs_err"]);
    let mut worst: f64 = 0.0;
    for (&n, v) in ns.iter().zip(vals) {
        let v = v?;
        let expected = if n == 0 { 1.0 } else { 0.0 };
        let err = (v - expected).abs();
        worst = worst.max(err);
        t.push(vec![n.to_string(), num(v), num(expected), num(err)]);
    }
    let check = Check::at_most(format!("delta detection Q={q}: max |detect(n) - [n=0]|"), worst, tol);
    Ok((t, vec![check]))
}

fn petersson_check(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let level = cfg.count("N")?;
    let n_max = cfg.count("n_max")?;
    let tol = cfg.positive("tol")?;
    let c_max = cfg.count("c_max")?;
    let mut ks = Vec::new();
    for k in cfg.ints("k")? {
        if k < 2 || k % 2 != 0 {
            return Err(LabError::Type {
                key: "k".into(),
                value: k.to_string(),
                expected: "a list of even weights",
            });
        }
        let fam = SpectralFamily::new(k as u32, level)?;
        if fam.dimension != Some(0) {
            return Err(LabError::Config(format!(
                "petersson-check needs spaces without cusp forms; S_{k}(Γ₀({level})) is not known to be zero"
            )));
        }
        ks.push(fam);
    }
    let pairs: Vec<(u64, u64)> = (1..=n_max).flat_map(|n| (n..=n_max).map(move |m| (n, m))).collect();
    let mut t = Table::new(&["k", "N", "n", "m", "value", "tail_cert"]);
    let mut checks = Vec::new();
    for fam in ks {
        let name = format!("petersson k={} N={level}: max |geometric side| over n,m <= {n_max}", fam.k);
        // the tail takes half the budget
        match petersson_geometric_batch(par, &fam, &pairs, tol / 2.0, TailMode::Certified { c_max }) {
            Ok(vals) => {
                let mut worst: f64 = 0.0;
                let mut certified = true;
                for (v, &(n, m)) in vals.iter().zip(&pairs) {
                    worst = worst.max(v.value.abs());
                    certified &= v.certified;
                    t.push(vec![
                        fam.k.to_string(),
                        level.to_string(),
                        n.to_string(),
                        m.to_string(),
                        num(v.value),
                        num(v.tail_bound),
                    ]);
                }
                let mut c = Check::at_most(name, worst, tol);
                if !certified {
                    c.passed = false;
                    c.detail.push_str(", tail not certified");
                }
                checks.push(c);
            }
            Err(Error::TailBudget {
                achievable, cutoff, ..
            }) => checks.push(Check::failed(
                name,
                format!("tail cannot be certified below {:.0e}: best {achievable:.3e} at C = {cutoff}", tol / 2.0),
            )),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((t, checks))
}

fn eigen_extract(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let k = weight_of(cfg, "k")?;
    let level = cfg.count("N")?;
    let n_max = cfg.count("n_max")?;
    let tol = cfg.positive("tol")?;
    let mode = match cfg.text("tail")? {
        "certified" => TailMode::Certified {
            c_max: cfg.count("c_max")?,
        },
        "doubling" => TailMode::DoublingEstimate {
            cutoff: cfg.count("cutoff")?,
        },
        other => {
            return Err(LabError::Type {
                key: "tail".into(),
                value: other.into(),
                expected: "certified or doubling",
            })
        }
    };
    let oracle_spec = match cfg.has("oracle") {
        true => cfg.text("oracle")?.to_string(),
        false => builtin_for(level, k)
            .ok_or_else(|| LabError::Config(format!("no built-in oracle for weight {k} level {level}; set oracle")))?
            .to_string(),
    };
    let oracle = load_form(&oracle_spec, n_max)?;
    if oracle.level != level || oracle.weight != k {
        return Err(LabError::Config(format!(
            "oracle {oracle_spec} has level {} weight {}, expected {level} and {k}",
            oracle.level, oracle.weight
        )));
    }
    let reference = oracle.lambdas(n_max)?;
    let name = format!("eigen-extract k={k} N={level}: max |λ(n) - oracle| over n <= {n_max}");
    let ext = match dim1_extract(par, k, level, n_max, tol, mode) {
        Ok(e) => e,
        Err(Error::TailBudget { achievable, cutoff, .. }) => {
            let t = Table::new(&["n", "lambda", "err"]);
            let c = Check::failed(name, format!("tail budget: best {achievable:.3e} at C = {cutoff}"));
            return Ok((t, vec![c]));
        }
        Err(e) => return Err(e.into()),
    };
    let mut t = Table::new(&["n", "lambda", "err"]);
    let mut worst: f64 = 0.0;
    for n in 1..=n_max as usize {
        let err = (ext.lambdas[n] - reference[n]).abs();
        worst = worst.max(err);
        t.push(vec![n.to_string(), num(ext.lambdas[n]), num(err)]);
    }
    let mut c = Check::at_most(name, worst, tol);
    c.detail.push_str(&format!(", cutoff C = {}", ext.cutoff));
    let mut checks = vec![c];
    if matches!(mode, TailMode::Certified { .. }) {
        checks.push(Check {
            name: format!("eigen-extract k={k} N={level}: tail certified"),
            passed: ext.certified,
            detail: format!("certified = {}", ext.certified),
        });
    }
    Ok((t, checks))
}

fn voronoi_check(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let spec = cfg.text("form")?;
    let q_max = cfg.count("q_max")?;
    let tol = cfg.positive("tol")?;
    let probe = load_form(spec, 2)?;
    let f = load_form(spec, coefficients_needed(probe.level, q_max))?;
    let mut t = Table::new(&[
        "a", "q", "window_id", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "rel_resid", "eta_re", "eta_im",
    ]);
    let (mut eta_dev, mut resid, mut spread): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for q in 1..=q_max {
        let n2 = f.level / gcd(f.level, q);
        let windows = default_windows(q, n2);
        let kernels: Vec<DualKernel> = windows
            .iter()
            .map(|(h, x)| DualKernel::new(par, f.weight, q, n2, h, *x, dual_truncation(q, n2, *x)))
            .collect();
        let residues: Vec<i64> = (0..q as i64).filter(|&a| gcd(a as u64, q) == 1).collect();
        let fits = par.map_collect(residues.len(), |i| {
            let inst = VoronoiInstance::new(&f, residues[i], q)?;
            eta_fit_with(&inst, &windows, &kernels)
        });
        let mut first: Option<Complex64> = None;
        for (&a, fit) in residues.iter().zip(fits) {
            let fit = fit?;
            let eta = fit.eta;
            eta_dev = eta_dev.max((eta.norm() - 1.0).abs());
            let base = *first.get_or_insert(eta);
            spread = spread.max((eta - base).norm());
            for (w, (l, r)) in fit.lhs.iter().zip(&fit.rhs).enumerate() {
                let rel = (l - eta * r).norm() / l.norm();
                if w > 0 {
                    resid = resid.max(rel);
                }
                t.push(vec![
                    a.to_string(),
                    q.to_string(),
                    w.to_string(),
                    num(l.re),
                    num(l.im),
                    num(r.re),
                    num(r.im),
                    num(rel),
                    num(eta.re),
                    num(eta.im),
                ]);
            }
        }
    }
    let label = &f.label;
    Ok((
        t,
        vec![
            Check::at_most(format!("voronoi {label} q <= {q_max}: max ||η| - 1|"), eta_dev, tol),
            Check::at_most(format!("voronoi {label} q <= {q_max}: max held-out residual"), resid, tol),
            Check::at_most(format!("voronoi {label} q <= {q_max}: max |η(a) - η(a')|"), spread, tol),
        ],
    ))
}

fn shifted_compare(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let p = cfg.count("P")?;
    let ells = cfg.ints("ell")?;
    let x = cfg.positive("X")?;
    let y = cfg.positive("Y")?;
    let spec1 = cfg.text("form")?.to_string();
    let spec2 = if cfg.has("form2") { cfg.text("form2")?.to_string() } else { spec1.clone() };
    let tols = [cfg.positive("tol_delta")?, cfg.positive("tol_vm")?, cfg.positive("tol_vn")?];
    let opts = PipelineOptions {
        vm: StageOptions::with_kernel_reach(cfg.positive("reach_vm")?),
        vn: StageOptions::with_kernel_reach(cfg.positive("reach_vn")?),
    };
    let w = BiWindow::product(x, y)?;
    let big_q = match cfg.has("Q") {
        true => cfg.positive("Q")?,
        false => shifted_envelope(x, y, p as f64, w.z, w.zx, w.zy)?.q_star,
    };
    let d = build_delta(big_q)?;
    let &ell0 = ells.first().expect("lists are non-empty");
    let (n1, n2) = {
        let (a, b) = (load_form(&spec1, 2)?, load_form(&spec2, 2)?);
        let s = ShiftInstance::new(p, ell0, &a, &b, w, big_q)?;
        pipeline_coefficients_needed(&s, &opts)
    };
    // the η fits in the pipeline read both forms as far as either stage does
    let need = n1.max(n2);
    let f1 = load_form(&spec1, need)?;
    let f2 = load_form(&spec2, need)?;
    let s = ShiftInstance::new(p, ell0, &f1, &f2, w, big_q)?;
    let traces = pipeline_traces(par, &s, &ells, &d, &opts)?;
    let mut t = Table::new(&["stage", "value", "stage_err", "rel_to_direct"]);
    let mut checks = Vec::new();
    let stages = ["delta", "voronoi_m", "voronoi_n"];
    for tr in &traces {
        let scale = tr.direct.abs().max(1.0);
        t.push(vec![format!("direct[ell={}]", tr.ell), num(tr.direct), num(0.0), num(0.0)]);
        let vals = [tr.stage_delta, tr.stage_vm, tr.stage_vn];
        for i in 0..3 {
            let rel = (vals[i] - tr.direct).abs() / scale;
            t.push(vec![
                format!("{}[ell={}]", stages[i], tr.ell),
                num(vals[i]),
                num(tr.stage_errors[i]),
                num(rel),
            ]);
            checks.push(Check::at_most(
                format!("shifted P={p} ell={} X={x} Y={y}: |direct - {}| / max(1,|direct|)", tr.ell, stages[i]),
                rel,
                tols[i],
            ));
        }
    }
    Ok((t, checks))
}

fn envelope_trend(cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let spec = cfg.text("form")?;
    let p = cfg.count("P")?;
    let ell = cfg.int("ell")?;
    let xs = cfg.reals("X")?;
    let ratio_y = cfg.positive("Y_over_X")?;
    let slack = cfg.positive("slack")?;
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(LabError::Type {
            key: "X".into(),
            value: format!("{xs:?}"),
            expected: "a list of positive reals",
        });
    }
    let top = xs.iter().map(|&x| x.max(ratio_y * x)).fold(0.0, f64::max);
    let f = load_form(spec, (3.0 * top).ceil() as u64 + 1)?;
    let mut t = Table::new(&["X", "Y", "Q", "direct", "bound", "ratio"]);
    let mut ratios = Vec::new();
    for &x in &xs {
        let y = ratio_y * x;
        let w = BiWindow::product(x, y)?;
        let e = shifted_envelope(x, y, p as f64, w.z, w.zx, w.zy)?;
        let s = ShiftInstance::new(p, ell, &f, &f, w, e.q_star)?;
        let direct = direct_shifted_sum(&s)?;
        let ratio = direct.abs() / e.bound;
        ratios.push(ratio);
        t.push(vec![num(x), num(y), num(e.q_star), num(direct), num(e.bound), num(ratio)]);
    }
    let finite = ratios.iter().all(|r| r.is_finite());
    // r_{i+1} <= slack·r_i, read as a quotient only where r_i > 0
    let growth = ratios
        .windows(2)
        .map(|w| match (w[0] > 0.0, w[1] > 0.0) {
            (_, false) => 0.0,
            (true, true) => w[1] / w[0],
            (false, true) => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    Ok((
        t,
        vec![
            Check {
                name: "envelope trend: ratios finite".into(),
                passed: finite,
                detail: ratios.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", "),
            },
            Check::at_most(format!("envelope trend: max step ratio_(i+1)/ratio_i (slack {slack})"), growth, slack),
        ],
    ))
}

fn second_moment_cmd(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let x = cfg.positive("X")?;
    let level = cfg.count("M")?;
    let kappa = weight_of(cfg, "kappa")?;
    let tail_tol = cfg.positive("tail_tol")?;
    let rel_tol = cfg.positive("rel_tol")?;
    let spec = match cfg.has("form") {
        true => cfg.text("form")?.to_string(),
        false => {
            let (fm, fk) = (cfg.count("fM")?, weight_of(cfg, "fk")?);
            builtin_for(fm, fk)
                .ok_or_else(|| LabError::Config(format!("no built-in form of level {fm} and weight {fk}")))?
                .to_string()
        }
    };
    let f = load_form(&spec, (3.0 * x).ceil() as u64 + 1)?;
    let name = format!("second moment {} (M,κ)=({level},{kappa}) X={x}: |spectral - geometric|", f.label);
    let r = match second_moment(par, &f, level, kappa, x, tail_tol, &MomentOptions::default()) {
        Ok(r) => r,
        Err(Error::TailBudget { achievable, cutoff, .. }) => {
            let t = Table::new(&["side", "value", "certificate"]);
            let c = Check::failed(name, format!("tail budget: best {achievable:.3e} at d <= {cutoff}"));
            return Ok((t, vec![c]));
        }
        Err(e) => return Err(e.into()),
    };
    let spectral = r.spectral_side.unwrap_or(f64::NAN);
    let geometric = r.geometric_side();
    let mut t = Table::new(&["side", "value", "certificate"]);
    t.push(vec!["spectral".into(), num(spectral), num(r.spectral_error)]);
    t.push(vec!["geometric".into(), num(geometric), num(r.geometric_error())]);
    t.push(vec!["diagonal".into(), num(r.diagonal), num(0.0)]);
    for &(d, v) in &r.offdiagonal_blocks {
        t.push(vec![format!("offdiagonal D={d}"), num(v), String::new()]);
    }
    t.push(vec![format!("tail d>{}", r.cutoff), num(0.0), num(r.geometric_error())]);
    // certified comparison: the gap plus both error budgets must sit inside the tolerance
    let gap = (spectral - geometric).abs() + r.spectral_error + r.geometric_error();
    let mut c = Check::at_most(name, gap / geometric.abs(), rel_tol);
    c.detail = format!("{} relative incl. certificates, {spectral:.10} vs {geometric:.10}", c.detail);
    Ok((t, vec![c]))
}

fn afe(par: &Pool, cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let n_max = cfg.count("n_max")?;
    let tol = cfg.positive("tol")?;
    let dyadic_tol = cfg.positive("dyadic_tol")?;
    let sigma = cfg.positive("sigma")?;
    let ts = cfg.reals("T")?;
    let mut aa = Vec::new();
    for a in cfg.ints("A")? {
        if !(1..=10).contains(&a) {
            return Err(LabError::Type {
                key: "A".into(),
                value: a.to_string(),
                expected: "a list of integers in 1..=10",
            });
        }
        aa.push(a as u32);
    }
    let pair = LPair::new(load_form(cfg.text("f")?, n_max)?, load_form(cfg.text("g")?, n_max)?)?;
    let mut t = Table::new(&["A", "T", "value"]);
    let mut direct = Vec::new();
    for &a in &aa {
        for &tr in &ts {
            let spec = AfeSpec::new(a, &pair).with_sigma(sigma).with_truncation(tr);
            let v = afe_central(par, &spec, &pair, n_max)?;
            t.push(vec![a.to_string(), num(tr), num(v.value)]);
            direct.push((a, v.value));
        }
    }
    let mut checks = Vec::new();
    let lo = direct.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let hi = direct.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most(
        format!("afe 𝒬={}: spread over A and T", pair.conductor),
        hi - lo,
        tol,
    ));
    for &a in &aa {
        let spec = AfeSpec::new(a, &pair).with_sigma(sigma).with_truncation(ts[0]);
        let dy = afe_central_dyadic(par, &spec, &pair, n_max)?;
        t.push(vec![a.to_string(), "dyadic".into(), num(dy.value)]);
        let reference = direct.iter().find(|d| d.0 == a).map(|d| d.1).unwrap_or(f64::NAN);
        checks.push(Check::at_most(
            format!("afe A={a}: |dyadic - direct|"),
            (dy.value - reference).abs(),
            dyadic_tol,
        ));
    }
    Ok((t, checks))
}

fn ledger(cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let rows = bound_ledger(cfg.count("P")?, cfg.count("M")?, cfg.positive("X")?, cfg.positive("delta")?)?;
    let mut t = Table::new(&["name", "formula_value"]);
    for r in rows {
        t.push(vec![r.name, num(r.value)]);
    }
    Ok((t, Vec::new()))
}

fn relations_check(cfg: &RunConfig) -> Result<(Table, Vec<Check>)> {
    let limit = cfg.count("limit")?;
    let weil = cfg.count("weil")?;
    let fricke_tol = cfg.positive("fricke_tol")?;
    let mut t = Table::new(&["form", "check", "value", "at"]);
    let mut checks = Vec::new();
    for spec in cfg.texts("forms")? {
        let f = load_form(&spec, limit)?;
        let r = relation_checks_up_to(&f, limit);
        let l = f.label.clone();
        t.push(vec![l.clone(), "hecke_max_residual".into(), num(r.hecke_max_residual), r.hecke_worst_at.to_string()]);
        t.push(vec![l.clone(), "deligne_margin_min".into(), num(r.deligne_margin_min), r.deligne_worst_at.to_string()]);
        checks.push(Check {
            name: format!("{l}: Hecke relations exact for mn <= {limit}"),
            passed: r.hecke_first_failure.is_none() && r.hecke_max_residual == 0.0 && f.coefficients.arithmetic().is_some(),
            detail: format!("max residual {:e} at mn = {}", r.hecke_max_residual, r.hecke_worst_at),
        });
        checks.push(Check {
            name: format!("{l}: Deligne margin >= 0 for n <= {limit}"),
            passed: r.deligne_margin_min >= 0.0,
            detail: format!("min margin {:.3e} at n = {}", r.deligne_margin_min, r.deligne_worst_at),
        });
        let lam = f.coefficients.normalized();
        let mut worst: f64 = 0.0;
        for p in (2..=f.level).filter(|&p| f.level % p == 0 && lfunlab_core::arith::is_prime(p)) {
            let dev = (lam[p as usize].abs() - 1.0 / (p as f64).sqrt()).abs();
            worst = worst.max(dev);
            t.push(vec![l.clone(), "fricke_deviation".into(), num(dev), p.to_string()]);
        }
        let mut c = Check::at_most(format!("{l}: Fricke ||λ(p)| - p^(-1/2)| at p | N"), worst, fricke_tol);
        c.passed &= r.fricke_ok;
        checks.push(c);
    }
    let (ratio, (n, m, c)) = weil_scan(weil as i64, weil)?;
    t.push(vec!["-".into(), "weil_max_ratio".into(), num(ratio), format!("{n}:{m}:{c}")]);
    checks.push(Check::at_most(
        format!("Weil bound for n, m, c <= {weil}: max |S| / bound"),
        ratio,
        1.0 + 1e-12,
    ));
    Ok((t, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lookup() {
        assert_eq!(builtin_for(11, 2), Some("11.2.eta"));
        assert_eq!(builtin_for(1, 12), Some("1.12.delta"));
        assert_eq!(builtin_for(1, 2), None);
    }

    #[test]
    fn unknown_form_is_a_usage_error() {
        let e = load_form("no-such-form", 10).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
