//! The experiment families behind the CLI subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use super::{run_replicas, LabError, OutputFile, Report, RunConfig};
use crate::aggregate_io::{self, AggregateFile};
use crate::coupling::{coupling_box, log_margin, run_coupled, CouplingOptions, WindowId};
use crate::engine::{run_kmc, run_thinned, run_thinned_observed, Aggregate, Decision, EngineConfig, Recording};
use crate::graphical::{simulate_interface, EventStream};
use crate::harmonic::{
    column_suite, default_domain, default_n, mc_hm_estimate, solve_hitting_field,
    tip_edge, verify_height_bound, AggregateSet, StationaryField, Trend,
};
use crate::lattice::{out_edges, BoxRegion, Site};
use crate::seeds::mix;
use crate::stats::{
    chi_square_homogeneity, log_log_slope, mean_se, non_increasing, pearson, two_proportion_z, wilson, Interval,
    Verdict,
};

fn csv_file(name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<OutputFile, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    Ok(OutputFile {
        name: name.to_string(),
        bytes,
    })
}

fn s<T: ToString>(x: T) -> String {
    x.to_string()
}

fn check_replicas(cfg: &RunConfig, min: u64) -> Result<(), LabError> {
    if cfg.replicas < min {
        return Err(LabError::Precondition(format!(
            "need at least {min} replicas, got {}",
            cfg.replicas
        )));
    }
    Ok(())
}

fn uncoupled_config(cfg: &RunConfig, n: i32) -> EngineConfig {
    let mut e = EngineConfig::new(BoxRegion::centered_strip(n, cfg.margin));
    e.c_dom = cfg.c_dom;
    e
}

fn coupled_config(cfg: &RunConfig, n: i32) -> EngineConfig {
    let mut e = EngineConfig::new(coupling_box(n));
    e.c_dom = cfg.c_dom;
    e
}

fn stream(cfg: &RunConfig, replica: u64) -> Result<EventStream, LabError> {
    Ok(EventStream::new(mix(cfg.seed, replica), cfg.t, cfg.c_dom)?)
}

/// Harmonic measure of an aggregate file: edge table, point table with
/// optional Monte-Carlo comparison, `N`-sequence and height-bound audit.
pub fn cmd_harmonic(cfg: &RunConfig) -> Result<Report, LabError> {
    let file = match &cfg.aggregate {
        Some(p) => aggregate_io::load(Path::new(p))?,
        None => AggregateFile::from_set(&AggregateSet::floor_only()),
    };
    let b = file.to_set();
    if !b.is_floor_attached() {
        return Err(LabError::Precondition("aggregate is not attached to the floor".into()));
    }
    let (do_exact, do_mc) = match cfg.method.as_str() {
        "exact" => (true, false),
        "mc" => (false, true),
        "both" => (true, true),
        m => return Err(LabError::Config(format!("method {m:?} is not exact, mc or both"))),
    };
    let n = cfg.height_n.unwrap_or_else(|| default_n(&b));
    let domain = default_domain(&b, Site::ORIGIN, n);
    let kernel = StationaryField::from_sites(b.raised())?;
    let field = if do_exact {
        Some(solve_hitting_field(&b, n, &domain, cfg.solver_tol)?)
    } else {
        None
    };

    let points: Vec<Site> = if b.raised().next().is_none() {
        (-2..=2).map(|x| Site::new(x, 0)).collect()
    } else {
        b.raised()
            .filter(|&&x| out_edges(x).any(|e| b.is_frontier_edge(&e)))
            .copied()
            .collect()
    };
    let mut files = Vec::new();
    let mut summary = serde_json::Map::new();
    if let Some(f) = &field {
        let mut bytes = Vec::new();
        f.write_csv(&mut bytes)?;
        files.push(OutputFile {
            name: "harmonic.csv".into(),
            bytes,
        });
        summary.insert("total_mass".into(), json!(f.total_mass()));
        summary.insert("truncation_error_estimate".into(), json!(f.truncation_error_estimate));
        summary.insert("conservation_defect".into(), json!(f.conservation_defect));
    }

    let mut rows = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    let mut point_values = Vec::new();
    for (i, &x) in points.iter().enumerate() {
        let exact = field.as_ref().map(|f| f.point(x));
        let exact_err = field
            .as_ref()
            .map(|f| out_edges(x).map(|e| f.errors.get(&e).copied().unwrap_or(0.0)).sum::<f64>());
        let whole = kernel.point(x);
        point_values.push(exact.unwrap_or(whole));
        let mc = if do_mc {
            Some(mc_hm_estimate(&b, x, n, cfg.walks, mix(cfg.seed, i as u64), cfg.step_budget)?)
        } else {
            None
        };
        let z = |reference: f64| {
            mc.as_ref()
                .map(|m| if m.std_error > 0.0 { (m.mean - reference) / m.std_error } else { 0.0 })
        };
        let z_kernel = z(whole);
        if let Some(zk) = z_kernel {
            max_abs_z = max_abs_z.max(zk.abs());
        }
        let opt = |v: Option<f64>| v.map(s).unwrap_or_default();
        rows.push(vec![
            s(x.x1),
            s(x.x2),
            s(n),
            opt(exact),
            opt(exact_err),
            s(whole),
            opt(mc.as_ref().map(|m| m.mean)),
            opt(mc.as_ref().map(|m| m.std_error)),
            mc.as_ref().map(|m| s(m.kept)).unwrap_or_default(),
            mc.as_ref().map(|m| s(m.discarded)).unwrap_or_default(),
            opt(exact.and_then(z)),
            opt(z_kernel),
        ]);
    }
    files.push(csv_file(
        "harmonic_points.csv",
        &[
            "x1", "x2", "N", "exact", "exact_err", "kernel", "mc_mean", "mc_se", "walks", "discarded", "z_exact",
            "z_kernel",
        ],
        &rows,
    )?);
    if do_mc {
        summary.insert("max_abs_z_kernel".into(), json!(max_abs_z));
    }
    if b.raised().next().is_none() {
        let lo = point_values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = point_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.insert("floor_spread".into(), json!(hi - lo));
    }

    let mut verdicts = Vec::new();
    if !cfg.n_sequence.is_empty() {
        let e = tip_edge(&b);
        let mut seq = Vec::new();
        for &m in &cfg.n_sequence {
            let dom = default_domain(&b, e.from, m);
            seq.push((m, solve_hitting_field(&b, m, &dom, cfg.solver_tol)?.edge(&e)));
        }
        let incs: Vec<f64> = seq.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
        let rows: Vec<Vec<String>> = seq
            .iter()
            .enumerate()
            .map(|(i, (m, v))| {
                vec![
                    e.to_string(),
                    s(m),
                    s(v),
                    if i == 0 { String::new() } else { s(incs[i - 1]) },
                ]
            })
            .collect();
        files.push(csv_file("harmonic_sequence.csv", &["edge", "N", "value", "increment"], &rows)?);
        let values: Vec<f64> = seq.iter().map(|p| p.1).collect();
        let trend = Trend::of(&values);
        let contracting = incs.windows(2).all(|w| w[1] < w[0]);
        summary.insert("sequence_trend".into(), json!(format!("{trend:?}")));
        verdicts.push((
            "sequence_contracting".into(),
            if trend.is_monotone() && contracting { Verdict::Pass } else { Verdict::Fail },
        ));
    }
    if cfg.audit_columns > 0 {
        let mut suite = column_suite(cfg.audit_columns);
        if b.raised().next().is_some() {
            suite.push(b.clone());
        }
        let audit = verify_height_bound(&suite, cfg.audit_tol)?;
        let rows: Vec<Vec<String>> = audit.per_height.iter().map(|(h, r)| vec![s(h), s(r)]).collect();
        files.push(csv_file("height_bound.csv", &["height", "max_ratio"], &rows)?);
        summary.insert("c_audit".into(), json!(audit.c_audit));
        verdicts.push((
            "height_ratio_non_increasing".into(),
            if audit.non_increasing { Verdict::Pass } else { Verdict::Fail },
        ));
    }
    summary.insert("N".into(), json!(n));
    summary.insert("points".into(), json!(points.len()));
    Ok(Report {
        command: "harmonic".into(),
        files,
        summary: serde_json::Value::Object(summary),
        verdicts,
    })
}

/// `P(T_1 + ... + T_k < t)` for independent `T_i ~ Exp(4 sqrt(i + 1))`, by
/// direct sampling. Returns the estimate and its standard error.
pub fn envelope_probability(k: u32, t: f64, samples: u64, seed: u64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let rates: Vec<f64> = (1..=k).map(|i| 4.0 * f64::from(i + 1).sqrt()).collect();
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut total = 0.0;
        for r in &rates {
            total += -(-rng.random::<f64>()).ln_1p() / r;
            if total >= t {
                break;
            }
        }
        hits += u64::from(total < t);
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Radius tail of the interface from the origin against the path-counting
/// envelope, and box-escape frequencies of segment seeds.
pub fn cmd_interface_tail(cfg: &RunConfig) -> Result<Report, LabError> {
    check_replicas(cfg, 1)?;
    let origin: BTreeSet<Site> = [Site::ORIGIN].into();
    let big = BoxRegion::centered_strip(0, cfg.margin);
    let radii = run_replicas(cfg.replicas, |i| {
        let st = EventStream::new(mix(cfg.seed, i), cfg.t, cfg.interface_c_dom)?;
        let run = simulate_interface(&origin, cfg.t, &big, &st)?;
        Ok(if run.truncation_hit { f64::INFINITY } else { run.radius_from(Site::ORIGIN) })
    })?;
    let r = cfg.replicas;
    let mut rows = Vec::new();
    let mut violations = 0;
    for k in 0..=cfg.k_max {
        let exceed = radii.iter().filter(|&&x| x > f64::from(k)).count() as u64;
        let prop = wilson(exceed, r, cfg.confidence);
        let (env_p, env_se) = envelope_probability(k, cfg.t, cfg.envelope_samples, mix(cfg.seed ^ 0xE17E, u64::from(k)));
        let scale = 4f64.powi(k as i32);
        let bound = (scale * env_p).min(1.0);
        let slack = 3.0 * ((prop.estimate * (1.0 - prop.estimate) / r as f64).sqrt() + scale * env_se);
        let violated = prop.estimate > bound + slack;
        violations += u64::from(violated);
        rows.push(vec![
            s(k),
            s(r),
            s(exceed),
            s(prop.estimate),
            s(prop.ci.lo),
            s(prop.ci.hi),
            s(env_p),
            s(env_se),
            s(bound),
            s(violated),
        ]);
    }
    let mut files = vec![csv_file(
        "interface_tail.csv",
        &["k", "replicas", "exceed", "p_hat", "ci_lo", "ci_hi", "sum_prob", "sum_prob_se", "envelope", "violated"],
        &rows,
    )?];

    let ns = cfg.n_list_or(&[8, 16, 32]);
    let mut esc_rows = Vec::new();
    let mut cis = Vec::new();
    for &n in &ns {
        let seed = Aggregate::floor_segment(n);
        let bx = coupling_box(n);
        let hits = run_replicas(cfg.replicas, |i| {
            let st = EventStream::new(mix(cfg.seed, i), cfg.t, cfg.interface_c_dom)?;
            Ok(simulate_interface(&seed, cfg.t, &bx, &st)?.truncation_hit)
        })?;
        let k = hits.iter().filter(|&&h| h).count() as u64;
        let p = wilson(k, r, cfg.confidence);
        cis.push(p.ci);
        esc_rows.push(vec![s(n), s(log_margin(n)), s(r), s(k), s(p.estimate), s(p.ci.lo), s(p.ci.hi)]);
    }
    files.push(csv_file(
        "escape.csv",
        &["n", "log_margin", "replicas", "escapes", "p_hat", "ci_lo", "ci_hi"],
        &esc_rows,
    )?);
    Ok(Report {
        command: "interface-tail".into(),
        files,
        summary: json!({ "envelope_violations": violations, "replicas": r }),
        verdicts: vec![
            ("envelope".into(), if violations == 0 { Verdict::Pass } else { Verdict::Fail }),
            ("escape_non_increasing".into(), non_increasing(&cis)),
        ],
    })
}

struct DlaReplica {
    first: Option<Site>,
    attached: usize,
    max_height: i32,
    violations: u64,
    truncation_hit: bool,
    containment_violations: u64,
}

/// Thinned and Gillespie engines from a floor segment: first-attachment law,
/// growth by `t`, containment in the interface, and optional height growth.
pub fn cmd_dla(cfg: &RunConfig) -> Result<Report, LabError> {
    check_replicas(cfg, 1)?;
    let n = cfg.n_or(2);
    let seed = Aggregate::floor_segment(n);
    let ecfg = uncoupled_config(cfg, n);
    let thinned = run_replicas(cfg.replicas, |i| {
        let st = stream(cfg, i)?;
        let mut first = None;
        let mut accepted: Vec<(Site, f64)> = Vec::new();
        let run = run_thinned_observed(&seed, cfg.t, &ecfg, &st, Recording::default(), |ev, d, _| {
            if let Decision::Accepted { .. } = d {
                first.get_or_insert(ev.edge.to);
                accepted.push((ev.edge.to, ev.time));
            }
        })?;
        let int = simulate_interface(&seed, cfg.t, &ecfg.truncation, &st)?;
        let horizon = if int.truncation_hit { int.state.t } else { f64::INFINITY };
        let containment_violations = accepted
            .iter()
            .filter(|(y, t)| *t <= horizon && int.occupied_at.get(y).is_none_or(|&u| u > *t))
            .count() as u64;
        Ok(DlaReplica {
            first,
            attached: run.aggregate.e.len(),
            max_height: run.diagnostics.max_height,
            violations: run.diagnostics.violations,
            truncation_hit: run.diagnostics.truncation_hit,
            containment_violations,
        })
    })?;
    let kmc = run_replicas(cfg.replicas, |i| {
        let mut rng = SmallRng::seed_from_u64(mix(mix(cfg.seed, 0x4B4D43), i));
        let run = run_kmc(&seed, cfg.t, &ecfg, &mut rng)?;
        Ok(DlaReplica {
            first: run.diagnostics.attachments.first().map(|a| a.1.to),
            attached: run.aggregate.e.len(),
            max_height: run.diagnostics.max_height,
            violations: 0,
            truncation_hit: run.diagnostics.truncation_hit,
            containment_violations: 0,
        })
    })?;

    let count = |runs: &[DlaReplica]| {
        let mut m: BTreeMap<Site, u64> = BTreeMap::new();
        for r in runs.iter().filter_map(|r| r.first) {
            *m.entry(r).or_default() += 1;
        }
        m
    };
    let (ct, ck) = (count(&thinned), count(&kmc));
    let sites: BTreeSet<Site> = ct.keys().chain(ck.keys()).copied().collect();
    let a: Vec<u64> = sites.iter().map(|x| ct.get(x).copied().unwrap_or(0)).collect();
    let b: Vec<u64> = sites.iter().map(|x| ck.get(x).copied().unwrap_or(0)).collect();
    let chi = chi_square_homogeneity(&a, &b);
    let first_rows: Vec<Vec<String>> = sites
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(x, (p, q))| vec![s(x.x1), s(x.x2), s(p), s(q)])
        .collect();
    let mut files = vec![csv_file("first_attachment.csv", &["x1", "x2", "thinned", "kmc"], &first_rows)?];

    let summarize = |name: &str, runs: &[DlaReplica]| {
        let att: Vec<f64> = runs.iter().map(|r| r.attached as f64).collect();
        let hts: Vec<f64> = runs.iter().map(|r| f64::from(r.max_height)).collect();
        let m = mean_se(&att);
        let h = mean_se(&hts);
        (
            m,
            vec![
                name.to_string(),
                s(runs.len()),
                s(m.mean),
                s(m.std_error),
                s(h.mean),
                s(h.std_error),
                s(runs.iter().map(|r| r.violations).sum::<u64>()),
                s(runs.iter().filter(|r| r.truncation_hit).count()),
                s(runs.iter().map(|r| r.containment_violations).sum::<u64>()),
            ],
        )
    };
    let (mt, row_t) = summarize("thinned", &thinned);
    let (mk, row_k) = summarize("kmc", &kmc);
    let z_attached = (mt.mean - mk.mean) / (mt.std_error.powi(2) + mk.std_error.powi(2)).sqrt();
    files.push(csv_file(
        "dla_summary.csv",
        &[
            "engine",
            "replicas",
            "mean_attached",
            "se",
            "mean_max_height",
            "height_se",
            "violations",
            "truncation_hits",
            "containment_violations",
        ],
        &[row_t, row_k],
    )?);

    // Replica 0 in full: snapshot and per-event diagnostics.
    let st0 = stream(cfg, 0)?;
    let rec = Recording {
        rows: true,
        timing: cfg.timing,
        ..Recording::default()
    };
    let run0 = run_thinned_observed(&seed, cfg.t, &ecfg, &st0, rec, |_, _, _| {})?;
    files.push(OutputFile {
        name: "aggregate_r0.json".into(),
        bytes: aggregate_io::snapshot(&run0.aggregate).into_bytes(),
    });
    let diag_rows: Vec<Vec<String>> = run0
        .diagnostics
        .rows
        .iter()
        .map(|r| {
            vec![
                s(r.event_time),
                r.edge.to_string(),
                s(r.accepted),
                s(r.prob),
                r.recompute_ms.map(s).unwrap_or_default(),
            ]
        })
        .collect();
    files.push(csv_file(
        "diagnostics_r0.csv",
        &["event_time", "edge", "accepted", "prob", "recompute_ms"],
        &diag_rows,
    )?);

    let violations: u64 = thinned.iter().map(|r| r.violations).sum();
    let contained: u64 = thinned.iter().map(|r| r.containment_violations).sum();
    let mut verdicts = vec![
        ("first_attachment_chi2".into(), if chi.p_value > 0.01 { Verdict::Pass } else { Verdict::Fail }),
        ("dominating_rate".into(), if violations == 0 { Verdict::Pass } else { Verdict::Fail }),
        ("containment".into(), if contained == 0 { Verdict::Pass } else { Verdict::Fail }),
    ];
    let mut summary = json!({
        "n": n,
        "replicas": cfg.replicas,
        "chi2": chi.statistic,
        "chi2_dof": chi.dof,
        "chi2_p": chi.p_value,
        "z_mean_attached": z_attached,
    });

    if let Some(ns) = &cfg.n_list {
        let mut rows = Vec::new();
        let mut medians = Vec::new();
        for &m in ns {
            let seed_m = Aggregate::floor_segment(m);
            let ecfg_m = uncoupled_config(cfg, m);
            let mut hts = run_replicas(cfg.replicas, |i| {
                Ok(f64::from(run_thinned(&seed_m, cfg.t, &ecfg_m, &stream(cfg, i)?)?.diagnostics.max_height))
            })?;
            hts.sort_by(f64::total_cmp);
            let median = hts[hts.len() / 2];
            let est = mean_se(&hts);
            medians.push(median);
            rows.push(vec![s(m), s(cfg.replicas), s(median), s(est.mean), s(est.std_error)]);
        }
        files.push(csv_file("height_growth.csv", &["n", "replicas", "median", "mean", "se"], &rows)?);
        if ns.len() >= 3 {
            let lx: Vec<f64> = ns.iter().map(|&m| f64::from(m).ln()).collect();
            let k = ns.len() - 1;
            let slope = fit_slope(&lx[..k], &medians[..k]);
            let rise = medians[k] - medians[0];
            let allowed = 3.0 * (lx[k] - lx[0]) * slope.max(0.0);
            summary["height_slope_audit"] = json!(slope);
            verdicts.push((
                "height_sublinear".into(),
                if rise <= allowed || rise <= 0.0 { Verdict::Pass } else { Verdict::Fail },
            ));
        }
    }
    Ok(Report {
        command: "dla".into(),
        files,
        summary,
        verdicts,
    })
}

/// Least-squares slope of `y` against `x`.
fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Envelope `17 (|E_D| + 2) sqrt(L) C_audit C_dom` for the discrepancy rate.
fn lambda_envelope(e_d: usize, n: i32, c_audit: f64, slack: f64) -> f64 {
    17.0 * (e_d as f64 + 2.0) * f64::from(log_margin(n)).sqrt() * c_audit * slack
}

struct CoupledReplica {
    gamma_time: Option<f64>,
    count_at_1: usize,
    disagreed: Vec<bool>,
    lambda: Vec<(f64, f64, usize)>,
}

fn coupled_replicas(cfg: &RunConfig, n: i32, windows: &[BoxRegion], lambda_samples: u64) -> Result<Vec<CoupledReplica>, LabError> {
    let ecfg = coupled_config(cfg, n);
    run_replicas(cfg.replicas, |i| {
        let st = stream(cfg, i)?;
        let opts = CouplingOptions {
            trace_lambda: i < lambda_samples,
        };
        let (state, rec) = run_coupled(n, cfg.t, windows, &ecfg, &st, opts)?;
        Ok(CoupledReplica {
            gamma_time: state.gamma_time,
            count_at_1: rec.count_at_1,
            disagreed: (0..windows.len()).map(|w| rec.window_disagreement[&WindowId(w)]).collect(),
            lambda: rec.lambda_d_trace,
        })
    })
}

/// Coupled pairs: per-replica records, discrepancy-count tails across `n`
/// and the `λ^D` envelope check.
pub fn cmd_couple(cfg: &RunConfig) -> Result<Report, LabError> {
    check_replicas(cfg, 100)?;
    let window = cfg.window_box()?;
    let ns = cfg.n_list_or(&[8, 16]);
    let c_audit = verify_height_bound(&column_suite(32), 0.1)?.c_audit;
    let mut rep_rows = Vec::new();
    let mut tail_rows = Vec::new();
    let mut hist_rows = Vec::new();
    let mut lambda_rows = Vec::new();
    let mut cis = Vec::new();
    let mut lambda_outside = 0u64;
    for &n in &ns {
        let runs = coupled_replicas(cfg, n, &[window], cfg.lambda_samples)?;
        let threshold = f64::from(n).powf(cfg.alpha);
        let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
        for (i, r) in runs.iter().enumerate() {
            *hist.entry(r.count_at_1).or_default() += 1;
            rep_rows.push(vec![
                s(mix(cfg.seed, i as u64)),
                s(n),
                s(r.gamma_time.is_some()),
                r.gamma_time.map(s).unwrap_or_default(),
                s(r.count_at_1),
                s(0),
                s(r.disagreed[0]),
            ]);
            for &(t, l, e_d) in &r.lambda {
                let env = lambda_envelope(e_d, n, c_audit, cfg.c_dom);
                lambda_outside += u64::from(l > env);
                lambda_rows.push(vec![s(n), s(mix(cfg.seed, i as u64)), s(t), s(l), s(e_d), s(env), s(l <= env)]);
            }
        }
        let exceed = runs.iter().filter(|r| r.count_at_1 as f64 >= threshold).count() as u64;
        let p = wilson(exceed, cfg.replicas, cfg.confidence);
        cis.push(p.ci);
        let gammas = runs.iter().filter(|r| r.gamma_time.is_some()).count();
        tail_rows.push(vec![
            s(n),
            s(cfg.replicas),
            s(cfg.alpha),
            s(threshold),
            s(exceed),
            s(p.estimate),
            s(p.ci.lo),
            s(p.ci.hi),
            s(gammas),
        ]);
        for (c, k) in hist {
            hist_rows.push(vec![s(n), s(c), s(k)]);
        }
    }
    let files = vec![
        csv_file(
            "replicas.csv",
            &["replica_seed", "n", "gamma_hit", "gamma_time", "count_at_1", "window_id", "disagreed"],
            &rep_rows,
        )?,
        csv_file(
            "discrepancy_tail.csv",
            &["n", "replicas", "alpha", "threshold", "exceed", "p_hat", "ci_lo", "ci_hi", "gamma_hits"],
            &tail_rows,
        )?,
        csv_file("discrepancy_hist.csv", &["n", "count_at_1", "replicas"], &hist_rows)?,
        csv_file(
            "lambda_d.csv",
            &["n", "replica_seed", "time", "lambda_d", "e_d", "envelope", "within"],
            &lambda_rows,
        )?,
    ];
    // Non-increasing in n unless an increase is resolved by the intervals.
    let tail_verdict = match non_increasing(&cis) {
        Verdict::Fail => Verdict::Fail,
        _ => {
            let ests: Vec<f64> = tail_rows.iter().map(|r| r[5].parse().unwrap_or(f64::NAN)).collect();
            if ests.windows(2).all(|w| w[1] <= w[0]) {
                Verdict::Pass
            } else {
                Verdict::Inconclusive
            }
        }
    };
    Ok(Report {
        command: "couple".into(),
        files,
        summary: json!({ "c_audit": c_audit, "lambda_outside_envelope": lambda_outside }),
        verdicts: vec![
            ("exceedance_non_increasing".into(), tail_verdict),
            ("lambda_envelope".into(), if lambda_outside == 0 { Verdict::Pass } else { Verdict::Fail }),
        ],
    })
}

/// Window disagreement of coupled pairs across `n`, and stabilization of the
/// harmonic field on the window between `A^n` and `A^{2n}`.
pub fn cmd_locality(cfg: &RunConfig) -> Result<Report, LabError> {
    check_replicas(cfg, 500)?;
    let window = cfg.window_box()?;
    let ns = cfg.n_list_or(&[4, 8, 16, 32]);
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Precondition("n list must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    let mut cis: Vec<Interval> = Vec::new();
    let mut ests = Vec::new();
    for &n in &ns {
        let runs = coupled_replicas(cfg, n, &[window], 0)?;
        let k = runs.iter().filter(|r| r.disagreed[0]).count() as u64;
        let p = wilson(k, cfg.replicas, cfg.confidence);
        cis.push(p.ci);
        ests.push(p.estimate);
        rows.push(vec![s(n), s(cfg.replicas), s(k), s(p.estimate), s(p.ci.lo), s(p.ci.hi)]);
    }
    let mut files = vec![csv_file(
        "locality.csv",
        &["n", "replicas", "disagreements", "p_hat", "ci_lo", "ci_hi"],
        &rows,
    )?];
    let xs: Vec<f64> = ns.iter().map(|&n| f64::from(n)).collect();
    let slope = log_log_slope(&xs, &ests);

    let window_sites: Vec<Site> = window.sites().collect();
    let mut field_rows = Vec::new();
    for &n in &ns {
        let m = 2 * n;
        let (seed_a, seed_b) = (Aggregate::floor_segment(n), Aggregate::floor_segment(m));
        let (ca, cb) = (uncoupled_config(cfg, n), uncoupled_config(cfg, m));
        let diffs = run_replicas(cfg.field_replicas.min(cfg.replicas), |i| {
            let st = stream(cfg, i)?;
            let a = run_thinned(&seed_a, cfg.t, &ca, &st)?.aggregate;
            let b = run_thinned(&seed_b, cfg.t, &cb, &st)?.aggregate;
            let fa = StationaryField::from_sites(a.v.iter())?;
            let fb = StationaryField::from_sites(b.v.iter())?;
            let point = |f: &StationaryField, v: &BTreeSet<Site>, x: Site| {
                if v.contains(&x) {
                    f.point(x)
                } else {
                    0.0
                }
            };
            Ok(window_sites
                .iter()
                .map(|&x| (point(&fa, &a.v, x) - point(&fb, &b.v, x)).abs())
                .fold(0.0, f64::max))
        })?;
        let est = mean_se(&diffs);
        field_rows.push(vec![s(n), s(m), s(est.count), s(est.mean), s(est.std_error)]);
    }
    files.push(csv_file(
        "field_stabilization.csv",
        &["n", "n2", "replicas", "mean_max_diff", "se"],
        &field_rows,
    )?);

    let trend = non_increasing(&cis);
    let strict = ests.last() < ests.first();
    Ok(Report {
        command: "locality".into(),
        files,
        summary: json!({ "log_log_slope": slope, "last_below_first": strict }),
        verdicts: vec![
            ("disagreement_non_increasing".into(), if trend == Verdict::Fail { Verdict::Fail } else { trend }),
            ("last_below_first".into(), if strict { Verdict::Pass } else { Verdict::Fail }),
        ],
    })
}

/// Occupation probabilities of shifted and mirrored sites in `A^n_T`.
pub fn cmd_stationarity(cfg: &RunConfig) -> Result<Report, LabError> {
    check_replicas(cfg, 1)?;
    let n = cfg.n_or(64);
    let k = cfg.shift;
    if k.abs() > n / 4 {
        return Err(LabError::Precondition(format!("shift {k} exceeds n/4 = {}", n / 4)));
    }
    let h = cfg.site_height;
    let pairs = [
        ("shift", Site::new(0, h), Site::new(k, h)),
        ("reflection", Site::new(k, h), Site::new(-k, h)),
    ];
    let seed = Aggregate::floor_segment(n);
    let ecfg = uncoupled_config(cfg, n);
    let occ = run_replicas(cfg.replicas, |i| {
        let v = run_thinned(&seed, cfg.t, &ecfg, &stream(cfg, i)?)?.aggregate.v;
        Ok(pairs.map(|(_, a, b)| (v.contains(&a), v.contains(&b))))
    })?;
    let r = cfg.replicas;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut max_z: f64 = 0.0;
    for (j, (name, a, b)) in pairs.iter().enumerate() {
        let ca = occ.iter().filter(|o| o[j].0).count() as u64;
        let cb = occ.iter().filter(|o| o[j].1).count() as u64;
        let z = two_proportion_z(ca, r, cb, r);
        max_z = max_z.max(z.abs());
        let (pa, pb) = (wilson(ca, r, cfg.confidence), wilson(cb, r, cfg.confidence));
        rows.push(vec![
            s(name),
            s(a.x1),
            s(a.x2),
            s(b.x1),
            s(b.x2),
            s(r),
            s(ca),
            s(cb),
            s(pa.estimate),
            s(pa.ci.lo),
            s(pa.ci.hi),
            s(pb.estimate),
            s(pb.ci.lo),
            s(pb.ci.hi),
            s(z),
        ]);
        verdicts.push((format!("{name}_within_3sigma"), if z.abs() < 3.0 { Verdict::Pass } else { Verdict::Fail }));
    }
    Ok(Report {
        command: "stationarity".into(),
        files: vec![csv_file(
            "stationarity.csv",
            &[
                "test", "a_x1", "a_x2", "b_x1", "b_x2", "replicas", "count_a", "count_b", "p_a", "p_a_lo", "p_a_hi",
                "p_b", "p_b_lo", "p_b_hi", "z",
            ],
            &rows,
        )?],
        summary: json!({ "n": n, "max_abs_z": max_z }),
        verdicts,
    })
}

struct MixingReplica {
    pairs: Vec<(bool, bool)>,
    /// Per separation: both radius events held, and whether the consulted
    /// edge sets then overlapped.
    structure: Vec<(bool, bool)>,
}

/// Correlation of site indicators at growing separations in `A^n_T`, and the
/// structural independence check for local clusters.
pub fn cmd_mixing(cfg: &RunConfig) -> Result<Report, LabError> {
    check_replicas(cfg, 4)?;
    let n = cfg.n_or(128);
    let ds = cfg.separations.clone();
    let h = cfg.site_height;
    for &d in &ds {
        if d <= 2 || d % 2 != 0 {
            return Err(LabError::Precondition(format!("separation {d} must be even and above 2")));
        }
        if d / 2 + d / 4 > n {
            return Err(LabError::Precondition(format!("separation {d} too large for n = {n}")));
        }
    }
    let seed = Aggregate::floor_segment(n);
    let ecfg = uncoupled_config(cfg, n);
    let runs = run_replicas(cfg.replicas, |i| {
        let st = stream(cfg, i)?;
        let v = run_thinned(&seed, cfg.t, &ecfg, &st)?.aggregate.v;
        let pairs = ds
            .iter()
            .map(|&d| (v.contains(&Site::new(-d / 2, h)), v.contains(&Site::new(d / 2, h))))
            .collect();
        let mut structure = Vec::new();
        for &d in &ds {
            let mut local = Vec::new();
            for c in [-d / 2, d / 2] {
                let w = d / 4;
                let seed_c: BTreeSet<Site> = (c - w..=c + w).map(|x| Site::new(x, 0)).collect();
                let rec = Recording {
                    consulted: true,
                    ..Recording::default()
                };
                let run = run_thinned_observed(&seed_c, cfg.t, &ecfg, &st, rec, |_, _, _| {})?;
                let center = Site::new(c, 0);
                let radius_ok = run.aggregate.v.iter().all(|&x| {
                    f64::from(x.x1 - center.x1).hypot(f64::from(x.x2)) < f64::from(d) / 2.0
                });
                local.push((radius_ok, run.diagnostics.consulted));
            }
            let both = local[0].0 && local[1].0;
            let overlap = both && !local[0].1.is_disjoint(&local[1].1);
            structure.push((both, overlap));
        }
        Ok(MixingReplica { pairs, structure })
    })?;

    let mut rows = Vec::new();
    let mut srows = Vec::new();
    let mut cis = Vec::new();
    let mut overlaps = 0u64;
    for (j, &d) in ds.iter().enumerate() {
        let xa: Vec<f64> = runs.iter().map(|r| f64::from(u8::from(r.pairs[j].0))).collect();
        let xb: Vec<f64> = runs.iter().map(|r| f64::from(u8::from(r.pairs[j].1))).collect();
        let c = pearson(&xa, &xb, cfg.confidence);
        cis.push(c.ci);
        let pa = xa.iter().sum::<f64>() / xa.len() as f64;
        let pb = xb.iter().sum::<f64>() / xb.len() as f64;
        rows.push(vec![s(d), s(cfg.replicas), s(pa), s(pb), s(c.r), s(c.ci.lo), s(c.ci.hi)]);
        let both = runs.iter().filter(|r| r.structure[j].0).count() as u64;
        let bad = runs.iter().filter(|r| r.structure[j].1).count() as u64;
        overlaps += bad;
        let p = wilson(both, cfg.replicas, cfg.confidence);
        srows.push(vec![s(d), s(cfg.replicas), s(both), s(p.estimate), s(p.ci.lo), s(p.ci.hi), s(bad)]);
    }
    Ok(Report {
        command: "mixing".into(),
        files: vec![
            csv_file("mixing.csv", &["d", "replicas", "p_a", "p_b", "corr", "ci_lo", "ci_hi"], &rows)?,
            csv_file(
                "mixing_structure.csv",
                &["d", "replicas", "both_radius", "freq", "ci_lo", "ci_hi", "shared_consulted"],
                &srows,
            )?,
        ],
        summary: json!({ "n": n }),
        verdicts: vec![
            ("correlation_non_increasing".into(), non_increasing(&cis)),
            ("disjoint_consulted_edges".into(), if overlaps == 0 { Verdict::Pass } else { Verdict::Fail }),
        ],
    })
}
