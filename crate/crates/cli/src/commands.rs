//! Operator, wave-cone, envelope, metric and Young-measure commands.

use afym::envelope::{
    cone_directions, envelope_upper, lamination_envelope, EnvelopeConfig, EnvelopeMode, EnvelopeReport,
    LaminationConfig,
};
use afym::flat_metric::{bl_distance, bl_norm_report, hstar_distance, LiftedPair, PointCloudMeasure};
use afym::generation::{empirical_ym, hstar_to_target, verify_generation, Binning, SequencePlan, TestBank};
use afym::integrands::{ClarkeConfig, CatalogIntegrand, Integrand, SharedIntegrand};
use afym::linalg::{add, scale, sub};
use afym::sphere::SphereSampler;
use afym::symbols::{check_constant_rank, verify_exactness, wave_cone_membership, ConeSearch, RankStatus};
use afym::young_measures::{
    barycentre, certificate_integrands, check_certificate, mean, polar_in_cone_check, strengthened_jensen,
    jensen_regular, jensen_singular, CertificateConfig, DiscreteYoungMeasure, JensenReport, Verdict,
    WeightedPoint,
};
use afym::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::report::{to_value, Outcome};

fn require_z(cfg: &RunConfig, dim: usize) -> Result<Vec<f64>> {
    let z = cfg
        .overrides
        .vec_f64("z")?
        .ok_or_else(|| Error::Input(format!("`{}` needs --set z=z1,z2,…", cfg.subcommand)))?;
    if z.len() != dim {
        return Err(Error::Input(format!("z has {} entries, the operator acts on R^{dim}", z.len())));
    }
    Ok(z)
}

pub fn operator_check(cfg: &RunConfig, name: Option<&str>) -> Result<Outcome> {
    cfg.overrides.allow(&["samples", "potential"])?;
    let name = match (name, cfg.operator.as_deref()) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Input(format!("operator given twice (`{a}` and `{b}`)")));
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(Error::Input("`operator check` needs an operator name".into())),
    };
    let op = afym::symbols::resolve_operator(name)?;
    let samples = cfg.overrides.usize("samples", 1000)?;
    let cone = check_constant_rank(&op, &SphereSampler::new(samples));
    let potential = match cfg.overrides.string("potential") {
        Some(p) => Some(p),
        None => afym::symbols::catalog::potential_of(name).map(str::to_string),
    };
    let exactness = match &potential {
        Some(p) if cone.is_constant() => Some(verify_exactness(&op, &afym::symbols::resolve_operator(p)?, samples)?),
        _ => None,
    };
    let rank = match cone.sampled_rank {
        RankStatus::Constant(r) => json!({"constant": true, "rank": r}),
        RankStatus::NonConstant => json!({"constant": false, "witnesses": cone.witnesses}),
    };
    let passed = cone.is_constant() && cone.spanning && exactness.as_ref().map_or(true, |e| e.exact);
    Ok(Outcome::new(
        json!({
            "operator": name,
            "n": op.space_dim(),
            "order": op.order(),
            "dim_domain": op.dim_domain(),
            "dim_codomain": op.dim_codomain(),
            "samples": samples,
            "rank": rank,
            "spanning": cone.spanning,
            "cone_samples": cone.cone_samples.len(),
            "potential": potential,
            "exactness": exactness,
        }),
        passed,
    ))
}

pub fn wavecone_member(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&["z", "coarse", "steps", "candidates"])?;
    let op = cfg.operator()?;
    let z = require_z(cfg, op.dim_domain())?;
    let d = ConeSearch::default();
    let search = ConeSearch {
        coarse: cfg.overrides.usize("coarse", d.coarse)?,
        steps: cfg.overrides.usize("steps", d.steps)?,
        candidates: cfg.overrides.usize("candidates", d.candidates)?,
    };
    let m = wave_cone_membership(&op, &z, &search)?;
    let passed = m.member;
    Ok(Outcome::new(
        json!({"operator": cfg.operator, "z": z, "membership": m}),
        passed,
    ))
}

/// Lattice preset chosen by dimension, with optional depth and size overrides.
fn lamination_config(cfg: &RunConfig, dim: usize) -> Result<LaminationConfig> {
    let mut lam = LaminationConfig::for_dim(dim);
    lam.depth = cfg.overrides.usize("depth", lam.depth)?;
    lam.points_per_axis = cfg.overrides.usize("points", lam.points_per_axis)?;
    Ok(lam)
}

pub fn envelope_estimate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&[
        "z",
        "to",
        "steps",
        "potential",
        "restarts",
        "max_iters",
        "eps_sup",
        "max_tiling",
        "depth",
        "points",
    ])?;
    let ops = cfg.operator_pair()?;
    let dim = ops.a.dim_domain();
    let fs = cfg.integrands(dim)?;
    let [f] = fs.as_slice() else {
        return Err(Error::Input("`envelope estimate` needs exactly one --integrand".into()));
    };
    let z = require_z(cfg, dim)?;
    let d = EnvelopeConfig::default();
    let env_cfg = EnvelopeConfig {
        mode: cfg.mode()?,
        grid: cfg.grid.unwrap_or(d.grid),
        restarts: cfg.overrides.usize("restarts", d.restarts)?,
        max_iters: cfg.overrides.usize("max_iters", d.max_iters)?,
        tol: cfg.tol.unwrap_or(d.tol),
        eps_sup: cfg.overrides.opt_f64("eps_sup")?,
        max_tiling: cfg.overrides.usize("max_tiling", d.max_tiling)?,
        seed: cfg.seed,
        lamination: lamination_config(cfg, dim)?,
    };
    let points: Vec<Vec<f64>> = match cfg.overrides.vec_f64("to")? {
        None => vec![z.clone()],
        Some(to) => {
            if to.len() != dim {
                return Err(Error::Input("`to` does not match the operator domain".into()));
            }
            let steps = cfg.overrides.usize("steps", 11)?.max(2);
            (0..steps)
                .map(|k| add(&z, &scale(&sub(&to, &z), k as f64 / (steps - 1) as f64)))
                .collect()
        }
    };
    let reports: Vec<EnvelopeReport> = if env_cfg.mode == EnvelopeMode::Lamination {
        let c = CertificateConfig::for_dim(dim);
        let cone = cone_directions(&ops.a, c.cone_frequencies, c.cone_per_kernel);
        let env = lamination_envelope(f.clone(), &cone, &env_cfg.lamination)?;
        points
            .iter()
            .map(|p| EnvelopeReport {
                z: p.clone(),
                value: env.eval(p).min(f.eval(p)),
                mode: EnvelopeMode::Lamination,
                grid: env_cfg.grid,
                restarts: 0,
                residual_afree: 0.0,
            })
            .collect()
    } else {
        points
            .iter()
            .map(|p| envelope_upper(f.as_ref(), p, &ops, &env_cfg).map(|e| EnvelopeReport::from(&e)))
            .collect::<Result<_>>()?
    };
    let rows: Vec<Vec<f64>> = reports
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let s = if reports.len() > 1 { k as f64 / (reports.len() - 1) as f64 } else { 0.0 };
            std::iter::once(s)
                .chain(r.z.iter().copied())
                .chain([r.value, f.eval(&r.z)])
                .collect()
        })
        .collect();
    let mut header: Vec<String> = vec!["s".into()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    header.extend(["envelope".into(), "f".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let fields = if reports.len() == 1 {
        json!({"operator": cfg.operator, "integrand": f.name(), "estimate": reports[0]})
    } else {
        json!({"operator": cfg.operator, "integrand": f.name(), "estimates": reports})
    };
    Ok(Outcome::new(fields, true).with_csv(&header, rows))
}

enum MetricInput {
    Measure(PointCloudMeasure),
    Pair(LiftedPair),
}

fn read_metric_input(path: &std::path::Path) -> Result<MetricInput> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(p) = serde_json::from_str::<LiftedPair>(&text) {
        return Ok(MetricInput::Pair(p));
    }
    match serde_json::from_str::<PointCloudMeasure>(&text) {
        Ok(m) => Ok(MetricInput::Measure(m)),
        Err(e) => Err(Error::Input(format!(
            "`{}` is neither a measure file nor a lifted-pair file: {e}",
            path.display()
        ))),
    }
}

pub fn metric_norm(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&[])?;
    cfg.expect_inputs(1)?;
    let (mu, kind) = match read_metric_input(cfg.input(0, "the measure")?)? {
        MetricInput::Measure(m) => (m, "measure"),
        MetricInput::Pair(p) => (p.lift(), "lifted-pair"),
    };
    let r = bl_norm_report(&mu)?;
    let positive = mu.weights().iter().all(|&w| w >= 0.0);
    let tol = cfg.tol.unwrap_or(1e-8);
    let identity_gap = (r.value - mu.mass()).abs();
    let passed = !positive || identity_gap <= tol;
    Ok(Outcome::new(
        json!({
            "input": kind,
            "value": r.value,
            "mass": mu.mass(),
            "total_variation": mu.total_variation(),
            "positive": positive,
            "identity_gap": if positive { Some(identity_gap) } else { None },
            "tol": tol,
            "sup_budget": r.sup_budget,
            "lip_budget": r.lip_budget,
            "rounds": r.rounds,
            "pivots": r.pivots,
            "dual_residual": r.dual_residual,
        }),
        passed,
    ))
}

pub fn metric_distance(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&[])?;
    cfg.expect_inputs(2)?;
    let a = read_metric_input(cfg.input(0, "the first measure")?)?;
    let b = read_metric_input(cfg.input(1, "the second measure")?)?;
    let (value, kind) = match (a, b) {
        (MetricInput::Measure(a), MetricInput::Measure(b)) => (bl_distance(&a, &b)?, "bl"),
        (MetricInput::Pair(a), MetricInput::Pair(b)) => (hstar_distance(&a, &b)?, "hstar"),
        _ => return Err(Error::Input("cannot compare a measure with a lifted pair".into())),
    };
    Ok(Outcome::new(json!({"distance": kind, "value": value}), true))
}

/// Convex integrands used for the Jensen suites.
fn jensen_catalog(dim: usize, extra: &[SharedIntegrand]) -> Vec<SharedIntegrand> {
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    let mut out = vec![
        CatalogIntegrand::Norm { dim }.shared(),
        CatalogIntegrand::Area { dim }.shared(),
        CatalogIntegrand::Linear { a: e1.clone() }.shared(),
        CatalogIntegrand::Linear { a: scale(&e1, -1.0) }.shared(),
    ];
    out.extend(extra.iter().filter(|f| f.is_convex()).cloned());
    out
}

fn jensen_passed(r: &JensenReport, tol: Option<f64>) -> bool {
    match tol {
        Some(t) => r.worst_slack() >= -t,
        None => r.passed,
    }
}

pub fn ym_verify(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&["potential"])?;
    cfg.expect_inputs(1)?;
    let nu = DiscreteYoungMeasure::from_file(cfg.input(0, "the Young measure")?)?;
    let op = cfg.operator()?;
    let dim = op.dim_domain();
    if nu.dim() != dim || nu.space_dim() != op.space_dim() {
        return Err(Error::Input("Young measure does not match the operator".into()));
    }
    let extra = cfg.integrands(dim)?;
    let qc = jensen_catalog(dim, &extra);
    let qc_refs: Vec<&dyn Integrand> = qc.iter().map(|f| f.as_ref()).collect();
    let regular = jensen_regular(&nu, &qc_refs)?;
    let singular = jensen_singular(&nu, &qc_refs)?;
    let polar = polar_in_cone_check(&barycentre(&nu), &op)?;

    let mut cert_cfg = CertificateConfig::for_dim(dim);
    if let Some(t) = cfg.tol {
        cert_cfg.tol = t;
    }
    let mut catalog = qc.clone();
    catalog.extend(extra.iter().filter(|f| !f.is_convex()).cloned());
    let prepared = certificate_integrands(&catalog, &op, &cert_cfg)?;
    let mut distinct: Vec<(usize, &afym::young_measures::Cell)> = Vec::new();
    for (k, c) in nu.cells().iter().enumerate() {
        if !distinct.iter().any(|(_, d)| *d == c) {
            distinct.push((k, c));
        }
    }
    let mut certificates = Vec::new();
    let mut witness = None;
    for (k, c) in &distinct {
        let nu_inf: Vec<WeightedPoint> = c
            .sphere
            .iter()
            .map(|a| WeightedPoint::new(a.weight * c.lam_a, a.point.clone()))
            .filter(|a| a.weight > 0.0)
            .collect();
        let z = add(&mean(&c.osc, dim), &mean(&nu_inf, dim));
        let cert = check_certificate(&c.osc, &nu_inf, &z, &prepared, &cert_cfg)?;
        if let Verdict::Violated { integrand, slack } = &cert.verdict {
            if witness.as_ref().map_or(true, |(_, _, s): &(usize, String, f64)| slack < s) {
                witness = Some((*k, integrand.clone(), *slack));
            }
        }
        certificates.push(json!({"cell": k, "z": z, "certificate": cert}));
    }

    let clarke = ClarkeConfig::default();
    let mut strengthened = Vec::new();
    for (k, s) in nu.singular().iter().enumerate() {
        for f in &catalog {
            if f.is_convex() {
                let r = strengthened_jensen(&s.sphere, f.as_ref(), &clarke)?;
                strengthened.push(json!({"atom": k, "integrand": f.name(), "report": r}));
            }
        }
    }

    let passed = jensen_passed(&regular, cfg.tol)
        && jensen_passed(&singular, cfg.tol)
        && polar.passed
        && witness.is_none();
    Ok(Outcome::new(
        json!({
            "operator": cfg.operator,
            "jensen_regular": {"passed": jensen_passed(&regular, cfg.tol), "worst": regular.worst, "checks": regular.entries.len()},
            "jensen_singular": {"passed": jensen_passed(&singular, cfg.tol), "worst": singular.worst, "checks": singular.entries.len()},
            "polar_in_cone": polar,
            "certificates": certificates,
            "witness": witness.map(|(cell, integrand, slack)| json!({"cell": cell, "integrand": integrand, "slack": slack, "gap": -slack})),
            "strengthened": strengthened,
        }),
        passed,
    ))
}

fn binning(cfg: &RunConfig) -> Result<Binning> {
    let d = Binning::default();
    Ok(Binning {
        cells: cfg.overrides.usize("cells", d.cells)?,
        delta: cfg.overrides.f64("delta", d.delta)?,
        value_bin: cfg.overrides.f64("value_bin", d.value_bin)?,
        sphere_bin: cfg.overrides.f64("sphere_bin", d.sphere_bin)?,
    })
}

pub fn ym_empirical(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&["cells", "delta", "value_bin", "sphere_bin"])?;
    cfg.expect_inputs(1)?;
    let plan = SequencePlan::load(cfg.input(0, "the plan directory")?)?;
    let b = binning(cfg)?;
    let e = empirical_ym(&plan, &b)?;
    let mut fields = json!({
        "binning": b,
        "flagged": e.flagged,
        "concentration_mass": e.measure.concentration_mass(),
    });
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, serde_json::to_string_pretty(&e.measure)? + "\n")?;
            fields["measure_file"] = json!(path.display().to_string());
            Ok(Outcome::new(fields, true).with_artifact())
        }
        None => {
            fields["measure"] = to_value(&e.measure)?;
            Ok(Outcome::new(fields, true))
        }
    }
}

pub fn ym_compare(cfg: &RunConfig) -> Result<Outcome> {
    cfg.overrides.allow(&["bank", "cells", "delta", "value_bin", "sphere_bin", "bin", "require_hstar"])?;
    cfg.expect_inputs(2)?;
    let plan = SequencePlan::load(cfg.input(0, "the plan directory")?)?;
    let target = DiscreteYoungMeasure::from_file(cfg.input(1, "the target Young measure")?)?;
    let n = target.space_dim();
    let bank = match cfg.overrides.string("bank").as_deref().unwrap_or("standard") {
        "standard" => TestBank::standard(n, target.dim())?,
        "small" => TestBank::small(n, target.dim())?,
        other => return Err(Error::Input(format!("unknown bank `{other}` (standard, small)"))),
    };
    let report = verify_generation(&plan, &target, &bank)?;
    let b = binning(cfg)?;
    let bin = cfg.overrides.f64("bin", 0.05)?;
    let mut hstar = Vec::new();
    for v in plan.snapshots() {
        let single = SequencePlan::new(vec![v.clone()], plan.construction(), plan.params().clone())?;
        let e = empirical_ym(&single, &b)?;
        hstar.push(hstar_to_target(&e.measure, &target, bin)?);
    }
    let hstar_nonincreasing = hstar.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let tol = cfg.tol.unwrap_or(0.15);
    let require_hstar = cfg.overrides.bool("require_hstar", false)?;
    let passed = report.final_error <= tol && report.monotone && (!require_hstar || hstar_nonincreasing);
    let rows = report
        .errors
        .iter()
        .zip(&hstar)
        .enumerate()
        .map(|(j, (e, h))| vec![j as f64, *e, *h])
        .collect();
    let names: Vec<String> = bank
        .entries()
        .iter()
        .map(|e| e.phi.name())
        .collect();
    Ok(Outcome::new(
        json!({
            "tol": tol,
            "generation": report,
            "bank": names,
            "hstar": hstar,
            "hstar_nonincreasing": hstar_nonincreasing,
        }),
        passed,
    )
    .with_csv(&["snapshot", "bank_error", "hstar"], rows))
}
