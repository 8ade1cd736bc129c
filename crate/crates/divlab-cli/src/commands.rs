//! One function per subcommand, each producing a [`Report`].

use std::collections::BTreeSet;

use divlab::arith::{build_factor_table, sieve_primes, PrimeWindow};
use divlab::correlations::{
    chowla_log_average, radaro_residual, scale_average_abs, z_series, ArithFn, Correlation,
};
use divlab::divgraph::{assemble_dense, compute_x0_mask, compute_yl_mask, OperatorSpec, DEFAULT_NODE_BUDGET};
use divlab::graphcore::{blue_selection, inboundary_subset, max_leaf_spanning_tree, SimpleGraph};
use divlab::sievekit::{
    check_whithe_identity, consistent_patterns, kubilius_compare_with, signature_counts, sieve_pointwise_check,
    DownSet, Progression, ProgressionFamily,
};
use divlab::spectral::{
    close_rel, dense_spectrum, extreme_eigenvalues, restrict_dense, trace_dense_power, trace_stochastic,
    trace_walk_sum, TraceResult,
};
use divlab::walkshapes::shape_family_census;
use divlab::DivlabError;
use num_traits::ToPrimitive;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{RunConfig, SpectrumMethod, TraceRoute};
use crate::report::{Report, Reproducer};

/// Why a command did not produce a report.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, unmet precondition or exceeded capacity (exit 1).
    Usage(String),
    /// A verified property failed (exit 2).
    Violation(Reproducer),
    /// Reading or writing files failed (exit 1).
    Io(anyhow::Error),
}

impl Failure {
    /// Classifies a library error; verification failures become violations.
    pub fn from_lib(command: &str, cfg: &RunConfig, e: DivlabError, instance: Value) -> Self {
        match e {
            DivlabError::Verification { message, witness } => Failure::Violation(Reproducer {
                command: command.into(),
                seed: cfg.seed,
                message,
                instance: json!({ "input": instance, "witness": witness }),
            }),
            other => Failure::Usage(other.to_string()),
        }
    }

    pub fn violation(command: &str, cfg: &RunConfig, message: String, instance: Value) -> Self {
        Failure::Violation(Reproducer { command: command.into(), seed: cfg.seed, message, instance })
    }
}

type Outcome = Result<Report, Failure>;

fn prime_window(command: &str, cfg: &RunConfig) -> Result<PrimeWindow, Failure> {
    sieve_primes(cfg.h0, cfg.h).map_err(|e| Failure::from_lib(command, cfg, e, Value::Null))
}

fn window_input(cfg: &RunConfig) -> Value {
    json!({ "window_start": cfg.window_start, "window_len": cfg.window_len, "h0": cfg.h0, "h": cfg.h })
}

pub fn primes(cfg: &RunConfig) -> Outcome {
    let pw = prime_window("primes", cfg)?;
    let mut r = Report::new("primes", &["p", "reciprocal"]);
    for &p in pw.primes() {
        r.push(vec![json!(p), json!(1.0 / p as f64)]);
    }
    r.set("count", pw.len());
    r.set("mertens", pw.mertens_f64());
    r.set("complete", pw.is_complete());
    Ok(r)
}

pub fn spectrum(cfg: &RunConfig) -> Outcome {
    let cmd = "spectrum";
    let lib = |e| Failure::from_lib(cmd, cfg, e, window_input(cfg));
    let pw = prime_window(cmd, cfg)?;
    let table = build_factor_table(cfg.window_start, cfg.window_len, &pw).map_err(lib)?;
    let full = OperatorSpec::full(table.clone(), pw.clone());
    let scale = (cfg.k_exclude * pw.mertens_f64()).sqrt();
    let mut r = Report::new(cmd, &["set", "index", "eigenvalue", "residual", "converged", "ratio"]);
    r.set("mertens", pw.mertens_f64());
    r.set("sqrt_k_mertens", scale);
    let mut sets = vec![("all", full.support().clone())];
    if cfg.spectrum.exclude {
        let x0 = compute_x0_mask(&table, &pw, cfg.k_exclude).map_err(lib)?;
        let yl = compute_yl_mask(&table, &pw, cfg.ell, DEFAULT_NODE_BUDGET).map_err(lib)?;
        r.set("x0_excluded", table.len() - x0.count());
        r.set("yl_excluded", table.len() - yl.mask.count());
        r.set("yl_undecided", yl.undecided);
        sets.push(("x0_yl", x0.intersect(&yl.mask).map_err(lib)?));
    }
    let count = cfg.spectrum.count;
    let dense = match cfg.spectrum.method {
        SpectrumMethod::Dense => Some(assemble_dense(&full).map_err(lib)?),
        SpectrumMethod::Lanczos => None,
    };
    let mut tops = Vec::new();
    for (name, mask) in sets {
        let (values, residuals, converged): (Vec<f64>, Vec<Option<f64>>, Vec<bool>) = match &dense {
            Some(m) => {
                let restricted = restrict_dense(m, &mask).map_err(lib)?;
                let mut all = dense_spectrum(&restricted).map_err(lib)?;
                all.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
                all.truncate(count);
                let n = all.len();
                (all, vec![None; n], vec![true; n])
            }
            None => {
                let spec = full.with_support(mask).map_err(lib)?;
                let res = extreme_eigenvalues(&spec, count, cfg.seed).map_err(lib)?;
                (res.eigenvalues, res.residuals.into_iter().map(Some).collect(), res.converged)
            }
        };
        for (i, l) in values.iter().enumerate() {
            r.push(vec![json!(name), json!(i), json!(l), json!(residuals[i]), json!(converged[i]), json!(l.abs() / scale)]);
        }
        tops.push((name, values.first().map_or(0.0, |l| l.abs())));
    }
    for (name, top) in &tops {
        r.set(&format!("lambda_max_{name}"), *top);
    }
    if let [(_, all), (_, restricted)] = tops[..] {
        if restricted > all * (1.0 + 1e-9) + 1e-9 {
            return Err(Failure::violation(
                cmd,
                cfg,
                format!("restricted top eigenvalue {restricted} exceeds unrestricted {all}"),
                window_input(cfg),
            ));
        }
    }
    Ok(r)
}

pub fn trace(cfg: &RunConfig) -> Outcome {
    let cmd = "trace";
    let lib = |e| Failure::from_lib(cmd, cfg, e, window_input(cfg));
    let pw = prime_window(cmd, cfg)?;
    let table = build_factor_table(cfg.window_start, cfg.window_len, &pw).map_err(lib)?;
    let spec = OperatorSpec::full(table, pw);
    let route = cfg.trace.method;
    let dense = match route {
        TraceRoute::Dense => Some(assemble_dense(&spec).map_err(lib)?),
        TraceRoute::All => assemble_dense(&spec).ok(),
        _ => None,
    };
    let mut r = Report::new(cmd, &["k", "method", "value", "std_error"]);
    let push = |t: &TraceResult, r: &mut Report| {
        r.push(vec![json!(t.k), json!(t.method.tag()), json!(t.value), json!(t.std_error)]);
    };
    for k in 1..=cfg.k {
        let d = match &dense {
            Some(m) => Some(trace_dense_power(m, k).map_err(lib)?),
            None => None,
        };
        let w = match route {
            TraceRoute::Walk => Some(trace_walk_sum(&spec, k).map_err(lib)?),
            TraceRoute::All => trace_walk_sum(&spec, k).ok(),
            _ => None,
        };
        let s = match route {
            TraceRoute::Stochastic | TraceRoute::All => {
                Some(trace_stochastic(&spec, k, cfg.trace.samples, cfg.seed).map_err(lib)?)
            }
            _ => None,
        };
        for t in [&d, &w, &s].into_iter().flatten() {
            push(t, &mut r);
        }
        if let (Some(d), Some(w)) = (&d, &w) {
            if !close_rel(d.value, w.value, 1e-9) {
                return Err(Failure::violation(
                    cmd,
                    cfg,
                    format!("k = {k}: dense trace {} differs from walk sum {}", d.value, w.value),
                    window_input(cfg),
                ));
            }
        }
    }
    Ok(r)
}

const SIEVE_MODULI: [u64; 18] = [2, 3, 5, 6, 7, 10, 11, 13, 14, 15, 17, 19, 21, 22, 23, 26, 29, 30];

fn random_family(rng: &mut ChaCha8Rng, size: usize) -> ProgressionFamily {
    let mut members = BTreeSet::new();
    while members.len() < size {
        let q = *SIEVE_MODULI.choose(rng).expect("non-empty");
        members.insert(Progression::new(q, rng.random_range(0..q) as i128).expect("squarefree"));
    }
    ProgressionFamily::new(members.into_iter().collect()).expect("distinct members")
}

fn family_json(family: &ProgressionFamily) -> Value {
    json!(family.members().iter().map(|p| p.to_string()).collect::<Vec<_>>())
}

pub fn sieve_selftest(cfg: &RunConfig) -> Outcome {
    let cmd = "sieve-selftest";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hi = 10_000i128;
    let mut r = Report::new(
        cmd,
        &["trial", "family_size", "identity_checked", "identity_violations", "sieve_violations", "max_coefficient_ratio"],
    );
    for trial in 0..cfg.selftest.trials {
        let size = rng.random_range(1..=10);
        let family = random_family(&mut rng, size);
        let table: Vec<bool> = (0..1usize << size).map(|t| t == 0 || rng.random()).collect();
        let props: Vec<_> = family.members().iter().map(|p| move |n: i128| p.contains(n)).collect();
        let instance = || json!({ "trial": trial, "family": family_json(&family), "g": table, "range": [1, hi] });
        let id = check_whithe_identity(&props, |t| table[t as usize], 1..=hi)
            .map_err(|e| Failure::from_lib(cmd, cfg, e, instance()))?;
        if let Some(&(n, lhs, rhs)) = id.violations.first() {
            let mut inst = instance();
            inst["n"] = json!(n.to_string());
            return Err(Failure::violation(cmd, cfg, format!("identity fails at n = {n}: {lhs} ≠ {rhs}"), inst));
        }
        let depth = rng.random_range(0..4);
        let sieve_family = if size <= 7 { family.clone() } else { random_family(&mut rng, 7) };
        let down = DownSet::by_omega(&sieve_family, depth).map_err(|e| Failure::from_lib(cmd, cfg, e, instance()))?;
        let sv = sieve_pointwise_check(&sieve_family, &down, 1..=hi)
            .map_err(|e| Failure::from_lib(cmd, cfg, e, instance()))?;
        if !sv.passed() {
            let inst = json!({
                "trial": trial,
                "family": family_json(&sieve_family),
                "down_set": down.members().map(|p| p.to_string()).collect::<Vec<_>>(),
                "inner_violations": sv.inner_violations.iter().take(10).map(|n| n.to_string()).collect::<Vec<_>>(),
                "outer_violations": sv.outer_violations.iter().take(10).map(|n| n.to_string()).collect::<Vec<_>>(),
                "max_coefficient_ratio": sv.max_coefficient_ratio,
            });
            return Err(Failure::violation(cmd, cfg, "sieve envelope violated".into(), inst));
        }
        r.push(vec![
            json!(trial),
            json!(size),
            json!(id.checked),
            json!(id.violations.len()),
            json!(sv.inner_violations.len() + sv.outer_violations.len()),
            json!(sv.max_coefficient_ratio),
        ]);
    }
    r.set("trials", cfg.selftest.trials);
    r.set("violations", 0);
    Ok(r)
}

pub fn kubilius(cfg: &RunConfig) -> Outcome {
    let cmd = "kubilius";
    let kb = &cfg.kubilius;
    let input = json!({ "q": kb.q, "a": kb.a, "alphas": kb.alphas, "window": window_input(cfg) });
    let lib = |e| Failure::from_lib(cmd, cfg, e, input.clone());
    let pw = prime_window(cmd, cfg)?;
    let counts = signature_counts(kb.q, kb.a, &kb.alphas, &pw, cfg.window_start, cfg.window_len).map_err(lib)?;
    let mut r = Report::new(cmd, &["pattern", "count", "exact_density", "model_value", "relative_error"]);
    let mut worst = 0.0f64;
    let mut above = 0usize;
    for spec in consistent_patterns(kb.q, kb.a, &kb.alphas, &pw, kb.max_events) {
        let c = kubilius_compare_with(&spec, &pw, &counts).map_err(lib)?;
        let mut hits = Vec::new();
        for (i, row) in spec.pattern.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if d {
                    hits.push(format!("{}:{}", i + 1, pw.primes()[j]));
                }
            }
        }
        let model = c.model_value.to_f64().unwrap_or(0.0);
        if model >= kb.min_model {
            above += 1;
            worst = worst.max(c.relative_error);
        }
        let label = if hits.is_empty() { "-".to_string() } else { hits.join(",") };
        r.push(vec![
            json!(label),
            json!(c.count),
            json!(c.exact_density.to_f64().unwrap_or(0.0)),
            json!(model),
            json!(c.relative_error),
        ]);
    }
    r.set("patterns_above_min_model", above);
    r.set("max_relative_error", worst);
    Ok(r)
}

pub fn walks(cfg: &RunConfig) -> Outcome {
    let cmd = "walks";
    let k = cfg.k;
    let (kappa, rho) = (cfg.walks.kappa, cfg.walks.rho);
    let mut r = Report::new(cmd, &["n_set", "partitions", "count", "bound"]);
    let mut total = 0u64;
    for mask in 0u32..(1 << (2 * k.min(3))) {
        let n: Vec<usize> = (1..=2 * k).filter(|i| mask >> (i - 1) & 1 == 1).collect();
        let input = json!({ "k": k, "n_set": n, "kappa": kappa, "rho": rho });
        let c = shape_family_census(k, &n, kappa, rho).map_err(|e| Failure::from_lib(cmd, cfg, e, input))?;
        let label: Vec<String> = c.n_set.iter().map(|i| i.to_string()).collect();
        r.push(vec![json!(format!("{{{}}}", label.join(","))), json!(c.partitions), json!(c.count), json!(c.bound.to_string())]);
        total += c.count;
    }
    r.set("total_count", total);
    Ok(r)
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> SimpleGraph {
    let mut g = SimpleGraph::new(n);
    for v in 1..n {
        g.add_edge(rng.random_range(0..v), v).expect("distinct endpoints");
    }
    for _ in 0..rng.random_range(n..3 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            g.add_edge(a, b).expect("distinct endpoints");
        }
    }
    for v in 0..n {
        let nb: Vec<usize> = g.neighbours(v).iter().copied().collect();
        let u = *nb.choose(rng).expect("connected graph");
        g.add_arrow(u, v).expect("distinct endpoints");
    }
    g
}

pub fn graphcore_selftest(cfg: &RunConfig) -> Outcome {
    let cmd = "graphcore-selftest";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut r = Report::new(
        cmd,
        &["trial", "vertices", "edges", "leaves", "leaf_bound", "inboundary", "selected", "out_boundary", "blue_bound", "asserted"],
    );
    for trial in 0..cfg.selftest.trials {
        let n = rng.random_range(4..16);
        let g = random_graph(&mut rng, n);
        let input = || json!({ "trial": trial, "graph": g.to_string() });
        let tree = max_leaf_spanning_tree(&g).map_err(|e| Failure::from_lib(cmd, cfg, e, input()))?;
        let s: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
        let sp = inboundary_subset(&g, &s).map_err(|e| Failure::from_lib(cmd, cfg, e, input()))?;
        let fed = sp.iter().all(|&w| g.arrows().iter().any(|&(a, b)| b == w && !sp.contains(&a)));
        if !sp.is_subset(&s) || 3 * sp.len() < s.len() || !fed {
            let mut inst = input();
            inst["subset"] = json!(s);
            return Err(Failure::violation(cmd, cfg, format!("inboundary selection of size {} fails", sp.len()), inst));
        }
        let sel = blue_selection(&g, g.high_degree_count()).map_err(|e| Failure::from_lib(cmd, cfg, e, input()))?;
        r.push(vec![
            json!(trial),
            json!(n),
            json!(g.edge_count()),
            json!(tree.leaves.len()),
            json!(tree.bound),
            json!(format!("{}/{}", sp.len(), s.len())),
            json!(sel.v_prime.len()),
            json!(sel.out_boundary.len()),
            json!(sel.bound),
            json!(sel.asserted),
        ]);
    }
    r.set("trials", cfg.selftest.trials);
    r.set("violations", 0);
    Ok(r)
}

fn correlation(cmd: &str, cfg: &RunConfig) -> Result<Correlation, Failure> {
    let parse = |s: &str| s.parse::<ArithFn>().map_err(|e| Failure::from_lib(cmd, cfg, e, Value::Null));
    Ok(Correlation::new(parse(&cfg.chowla.f1)?, parse(&cfg.chowla.f2)?).with_shift(cfg.chowla.shift))
}

pub fn chowla(cfg: &RunConfig) -> Outcome {
    let cmd = "chowla";
    let c = &cfg.chowla;
    let input = json!({ "x": c.x, "w": c.w, "f1": c.f1, "f2": c.f2, "shift": c.shift });
    let lib = |e| Failure::from_lib(cmd, cfg, e, input.clone());
    let pw = prime_window(cmd, cfg)?;
    let corr = correlation(cmd, cfg)?;
    let avg = chowla_log_average(c.x, c.w, &corr).map_err(lib)?;
    let series = z_series(c.x, c.w, c.grid_points, &pw, &corr, c.absolute).map_err(lib)?;
    let mut r = Report::new(cmd, &["T", "value", "n_terms"]);
    for p in &series.points {
        r.push(vec![json!(p.t), json!(p.value), json!(p.n_terms)]);
    }
    r.set("log_average", avg.value);
    r.set("log_average_raw", avg.raw);
    r.set("mertens", series.mertens);
    r.set("absolute", series.absolute);
    Ok(r)
}

pub fn scales(cfg: &RunConfig) -> Outcome {
    let cmd = "scales";
    let c = &cfg.chowla;
    let input = json!({ "x": c.x, "w": c.w, "f1": c.f1, "f2": c.f2, "h0": cfg.h0, "h": cfg.h });
    let lib = |e| Failure::from_lib(cmd, cfg, e, input.clone());
    let pw = prime_window(cmd, cfg)?;
    let corr = correlation(cmd, cfg)?;
    let rad = radaro_residual(c.x, c.w, &pw, &corr).map_err(lib)?;
    let coc = scale_average_abs(c.x, c.w, &pw, &corr).map_err(lib)?;
    let mut r = Report::new(cmd, &["identity", "lhs", "rhs", "residual", "bound"]);
    r.push(vec![json!("signed"), json!(rad.lhs), json!(rad.integral), json!(rad.residual), json!(rad.bound)]);
    r.push(vec![
        json!("absolute"),
        json!(coc.average.value),
        json!(coc.zcirc_integral),
        json!(coc.residual),
        json!(coc.slack),
    ]);
    r.set("abs_scale_average", coc.average.value);
    Ok(r)
}

/// Gathers the summaries of every report already in the output directory.
pub fn report(cfg: &RunConfig) -> Outcome {
    let cmd = "report";
    let dir = &cfg.output_dir;
    let mut names: Vec<String> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json") && !n.ends_with(".manifest.json") && !n.ends_with(".reproducer.json"))
            .filter(|n| n != "report.json")
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    let mut r = Report::new(cmd, &["command", "key", "value"]);
    for name in &names {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::Io(e.into()))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{} is not a report: {e}", path.display())))?;
        let command = doc["command"].as_str().unwrap_or(name).to_string();
        if let Some(summary) = doc["summary"].as_object() {
            for (k, v) in summary {
                r.push(vec![json!(command), json!(k), v.clone()]);
            }
        }
    }
    r.set("reports", names.len());
    Ok(r)
}
