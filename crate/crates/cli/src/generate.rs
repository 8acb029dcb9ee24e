//! `ym generate`: build a plan directory from a named construction.

use std::collections::BTreeMap;

use afym::envelope::OperatorPair;
use afym::generation::{
    combine, concentrating_spike, inhomogenize_regular, inhomogenize_singular, plane_wave, sum_sequences, tile,
    Profile, RegularOptions, SequencePlan, TestBank,
};
use afym::grid::GridField;
use afym::young_measures::DiscreteYoungMeasure;
use afym::{Error, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::report::Outcome;

const CONSTRUCTIONS: &[&str] = &["laminate", "wave", "spike", "tile", "combine", "inhomogenize"];

fn required_vec(cfg: &RunConfig, key: &str, len: usize) -> Result<Vec<f64>> {
    let v = cfg
        .overrides
        .vec_f64(key)?
        .ok_or_else(|| Error::Input(format!("`{}` needs --set {key}=…", cfg.subcommand)))?;
    if v.len() != len {
        return Err(Error::Input(format!("`{key}` needs {len} entries, got {}", v.len())));
    }
    Ok(v)
}

/// sin⁴(πx₁)⋯sin⁴(πx_n), scaled by k+1 in component k.
fn bump_potential(n: usize, grid: usize, dim: usize) -> Result<GridField> {
    GridField::from_fn(n, grid, dim, |x| {
        let b: f64 = x.iter().map(|&t| (std::f64::consts::PI * t).sin().powi(4)).product();
        (0..dim).map(|k| (k + 1) as f64 * b).collect()
    })
}

fn potential_input(cfg: &RunConfig, k: usize, fallback: impl FnOnce() -> Result<GridField>) -> Result<GridField> {
    match cfg.inputs.get(k) {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => fallback(),
    }
}

fn require_b(ops: &OperatorPair) -> Result<&afym::symbols::OperatorSpec> {
    ops.b
        .as_ref()
        .ok_or_else(|| Error::Input("this construction needs a potential operator (`--set potential=…`)".into()))
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn ym_generate(cfg: &RunConfig, construction: &str) -> Result<Outcome> {
    if !CONSTRUCTIONS.contains(&construction) {
        return Err(Error::Input(format!(
            "unknown construction `{construction}` ({})",
            CONSTRUCTIONS.join(", ")
        )));
    }
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Error::Input("`ym generate` needs --output for the plan directory".into()))?;
    let grid = cfg.grid.unwrap_or(64);
    let (plan, details) = match construction {
        "laminate" | "wave" => {
            cfg.overrides.allow(&["xi", "w", "theta", "freqs"])?;
            let op = cfg.operator()?;
            let xi = required_vec(cfg, "xi", op.space_dim())?;
            let w = required_vec(cfg, "w", op.dim_domain())?;
            let theta = cfg.overrides.f64("theta", 0.5)?;
            let freqs = cfg.overrides.vec_usize("freqs")?.unwrap_or_else(|| vec![4, 8, 16]);
            let profile = if construction == "wave" {
                Profile::Sine
            } else {
                Profile::Square { theta }
            };
            let snaps = freqs
                .iter()
                .map(|&j| plane_wave(&op, &xi, &w, &profile, j, grid))
                .collect::<Result<Vec<_>>>()?;
            let plan = SequencePlan::new(snaps, construction, params(&[("theta", theta)]))?;
            (plan, json!({"profile": profile, "frequencies": freqs}))
        }
        "spike" => {
            cfg.overrides.allow(&["xi", "w", "mass", "x0", "widths"])?;
            let op = cfg.operator()?;
            let n = op.space_dim();
            let xi = required_vec(cfg, "xi", n)?;
            let w = required_vec(cfg, "w", op.dim_domain())?;
            let mass = cfg.overrides.f64("mass", 1.0)?;
            let x0 = cfg.overrides.vec_f64("x0")?.unwrap_or_else(|| vec![0.5; n]);
            let widths = cfg
                .overrides
                .vec_f64("widths")?
                .unwrap_or_else(|| vec![0.5, 0.25, 0.125]);
            let plan = concentrating_spike(&op, &xi, &w, mass, &x0, &widths, grid)?;
            (plan, json!({"widths": widths, "x0": x0, "mass": mass}))
        }
        "tile" => {
            cfg.overrides.allow(&["potential", "js", "z"])?;
            let ops = cfg.operator_pair()?;
            let b = require_b(&ops)?;
            let z = required_vec(cfg, "z", ops.a.dim_domain())?;
            let u = potential_input(cfg, 0, || bump_potential(b.space_dim(), grid, b.dim_domain()))?;
            let js = cfg.overrides.vec_usize("js")?.unwrap_or_else(|| vec![1, 2, 4, 8]);
            let snaps = js.iter().map(|&j| tile(&u, j, &z, b)).collect::<Result<Vec<_>>>()?;
            (SequencePlan::new(snaps, "tile", BTreeMap::new())?, json!({"js": js, "z": z}))
        }
        "combine" => {
            cfg.overrides.allow(&["potential", "p", "q", "z"])?;
            let ops = cfg.operator_pair()?;
            let b = require_b(&ops)?;
            let z = required_vec(cfg, "z", ops.a.dim_domain())?;
            let u0 = potential_input(cfg, 0, || bump_potential(b.space_dim(), grid, b.dim_domain()))?;
            let u1 = potential_input(cfg, 1, || Ok(u0.scaled(2.0)))?;
            let p = cfg.overrides.usize("p", 1)?;
            let q = cfg.overrides.usize("q", 2)?;
            let v = combine(&u0, &u1, p, q, &z, b)?;
            let t = (p as f64 / q as f64).powi(b.space_dim() as i32);
            (
                SequencePlan::new(vec![v], "combine", params(&[("p", p as f64), ("q", q as f64), ("t", t)]))?,
                json!({"p": p, "q": q, "t": t, "z": z}),
            )
        }
        _ => inhomogenize(cfg, grid)?,
    };
    plan.save(&out)?;
    let header = plan.header();
    Ok(Outcome::new(
        json!({
            "construction": construction,
            "plan": out.display().to_string(),
            "header": header,
            "details": details,
        }),
        true,
    )
    .with_artifact())
}

/// Regular plus singular mollified generators at each refinement level.
fn inhomogenize(cfg: &RunConfig, grid: usize) -> Result<(SequencePlan, Value)> {
    cfg.overrides
        .allow(&["potential", "levels", "freqs", "widths", "layers", "d", "singular_d", "m", "eps", "bank"])?;
    cfg.expect_inputs(1)?;
    let nu = DiscreteYoungMeasure::from_file(cfg.input(0, "the target Young measure")?)?;
    let ops = cfg.operator_pair()?;
    let levels = cfg
        .overrides
        .vec_f64("levels")?
        .unwrap_or_else(|| vec![0.25, 0.125, 0.0625]);
    let freqs = cfg.overrides.vec_usize("freqs")?.unwrap_or_else(|| vec![4, 8, 16]);
    let widths = cfg
        .overrides
        .vec_f64("widths")?
        .unwrap_or_else(|| vec![0.125, 0.0625, 0.03125]);
    if freqs.len() != levels.len() || widths.len() != levels.len() {
        return Err(Error::Input("levels, freqs and widths need the same length".into()));
    }
    let layers = cfg.overrides.usize("layers", 2)?;
    let d = cfg.overrides.usize("d", 2)?;
    let sd = cfg.overrides.usize("singular_d", 4)?;
    let m = cfg.overrides.usize("m", 3)?;
    let eps = cfg.overrides.f64("eps", 0.1)?;
    let n = nu.space_dim();
    let bank = match cfg.overrides.string("bank").as_deref().unwrap_or("standard") {
        "standard" => TestBank::standard(n, nu.dim())?,
        "small" => TestBank::small(n, nu.dim())?,
        other => return Err(Error::Input(format!("unknown bank `{other}` (standard, small)"))),
    };
    let mut regular = Vec::new();
    let mut singular = Vec::new();
    let mut level_reports = Vec::new();
    for ((&t, &j), &width) in levels.iter().zip(&freqs).zip(&widths) {
        let opts = RegularOptions {
            frequency: j,
            layers,
            width,
        };
        let (fr, rr) = inhomogenize_regular(&nu, eps, d, t, &ops, grid, &opts, &bank)?;
        let (fs, rs) = inhomogenize_singular(&nu, eps, sd, m, t, &ops, grid, &bank)?;
        regular.push(fr);
        singular.push(fs);
        level_reports.push(json!({"t": t, "frequency": j, "width": width, "regular": rr, "singular": rs}));
    }
    let a = SequencePlan::new(regular, "inhomogenize-regular", BTreeMap::new())?;
    let b = SequencePlan::new(singular, "inhomogenize-singular", BTreeMap::new())?;
    let sum = sum_sequences(&a, &b)?;
    let plan = SequencePlan::new(
        sum.snapshots().to_vec(),
        "inhomogenize",
        params(&[("eps", eps), ("d", d as f64), ("singular_d", sd as f64), ("m", m as f64), ("layers", layers as f64)]),
    )?;
    Ok((plan, json!({"levels": level_reports})))
}
