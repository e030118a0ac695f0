use anyhow::{Context, Result};
use array_emitters_core::band::{band_edge_with, band_structure, KGrid, DEFAULT_BZ_GRID};
use array_emitters_core::dynamics::{transfer_run, TransferRun};
use array_emitters_core::geometry::impurity_pair;
use array_emitters_core::markov::{
    dark_detuning, dominant_mode_projection, effective_rabi, impurity_map, optimal_dark_detuning, self_energy,
    CellStatus, MapCell,
};
use array_emitters_core::toy::{
    toy_couplings, toy_dark_detuning, toy_effective_rabi_identical, toy_effective_rabi_orthogonal,
    toy_self_energy_identical, toy_self_energy_orthogonal,
};
use array_emitters_core::two_impurity::{
    all_separations, distance_scan, reach_row, spacing_fits, spacing_row, two_impurity_map, HeatCell,
};
use array_emitters_core::{
    assemble_lattice_matrix, build_geometry, impurity_vector, Configuration, DriveSpec, Error, ImpurityTemplate,
    LatticeConfig, C64,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ImpurityEntry, RunConfig, Study};
use crate::output::{Cell, CellRecord, Table};

pub struct StudyOutput {
    pub tables: Vec<Table>,
    pub cells: Vec<CellRecord>,
    pub summary: Value,
}

fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect()
}

/// Spacings of the impurity and pair maps when no grid is given.
pub fn default_map_spacings() -> Vec<f64> {
    linspace(0.05, 0.3, 26)
}

pub fn default_scan_spacings() -> Vec<f64> {
    linspace(0.05, 0.15, 11)
}

pub const TOY_SPACINGS: [f64; 4] = [0.05, 0.1, 0.2, 0.3];
/// Agreement required between the closed-form toy model and the generic pipeline.
pub const TOY_TOLERANCE: f64 = 1e-10;

fn record(index: usize, status: &str, message: Option<String>) -> CellRecord {
    CellRecord { index, status: status.to_owned(), message }
}

fn drive(cfg: &RunConfig) -> DriveSpec {
    let mut d = DriveSpec::plane_wave(cfg.drive.omega_l.0, cfg.impurity.gamma.0);
    if let Some(oi) = cfg.drive.omega_i {
        d.omega_i = oi.0;
    }
    d
}

pub fn run(study: Study, cfg: &RunConfig) -> Result<StudyOutput> {
    match study {
        Study::Band => band(cfg),
        Study::ImpurityMap => impurity_maps(cfg),
        Study::TwoImpurityMap => two_impurity_maps(cfg),
        Study::DistanceScan => distance(cfg),
        Study::SpacingScan => spacing(cfg),
        Study::ReachScan => reach(cfg),
        Study::Dynamics => dynamics(cfg),
        Study::ToyCheck => toy_check(cfg),
    }
}

fn band(cfg: &RunConfig) -> Result<StudyOutput> {
    let lattice = cfg.lattice.config()?;
    let k = cfg.grids.k.unwrap_or(DEFAULT_BZ_GRID);
    let grid = KGrid::uniform(&lattice, k)?;
    let bs = band_structure(&lattice, &grid, cfg.patch)?;
    let mut t = Table::new("band", &["kx", "ky", "j", "gamma", "in_light_cone"]);
    t.note("spacing", lattice.spacing);
    t.note("patch", cfg.patch);
    t.note("band_edge", crate::output::format_float(bs.band_edge.value));
    for p in &bs.points {
        t.push(vec![p.kx.into(), p.ky.into(), p.j.into(), p.gamma.into(), p.in_light_cone.into()]);
    }
    let mut cells: Vec<CellRecord> = (0..t.rows.len()).map(|i| record(i, "ok", None)).collect();
    let mut tables = vec![t];
    let mut edges = Vec::new();
    if let Some(a) = &cfg.grids.a {
        let a = a.values();
        let rows: Vec<_> =
            a.par_iter().map(|&a| lattice.with_spacing(a).and_then(|c| band_edge_with(&c, k, cfg.patch))).collect();
        let mut e = Table::new("band_edge", &["a", "status", "omega_be", "kx", "ky", "message"]);
        for (a, r) in a.iter().zip(rows) {
            let index = cells.len();
            match r {
                Ok(edge) => {
                    e.push(vec![(*a).into(), "ok".into(), edge.value.into(), edge.k[0].into(), edge.k[1].into(), Cell::Empty]);
                    cells.push(record(index, "ok", None));
                    edges.push(json!({"a": a, "omega_be": edge.value}));
                }
                Err(err) => {
                    e.push(vec![(*a).into(), "failed".into(), Cell::Empty, Cell::Empty, Cell::Empty, err.to_string().into()]);
                    cells.push(record(index, "failed", Some(err.to_string())));
                }
            }
        }
        tables.push(e);
    }
    let summary = json!({"band_edge": bs.band_edge, "band_edges": edges, "k_points": bs.points.len()});
    Ok(StudyOutput { tables, cells, summary })
}

const MAP_COLUMNS: &[&str] = &[
    "n", "a", "delta", "status", "re_sigma", "im_sigma", "gamma_eff", "omega_shift", "re_omega_eff", "im_omega_eff",
    "q1", "markov_flag", "message",
];

fn map_row(n: usize, c: &MapCell) -> Vec<Cell> {
    let p = c.params.as_ref();
    vec![
        n.into(),
        c.a.into(),
        c.delta.into(),
        c.status.as_str().into(),
        p.map(|p| p.sigma.re).into(),
        p.map(|p| p.sigma.im).into(),
        p.map(|p| p.gamma_eff).into(),
        p.map(|p| p.omega_shift).into(),
        p.map(|p| p.omega_eff.re).into(),
        p.map(|p| p.omega_eff.im).into(),
        p.map(|p| p.q1).into(),
        c.markov_flag.into(),
        c.message.clone().into(),
    ]
}

/// One detuning per spacing from the configured rule, or the error that
/// prevented it.
fn rule_detunings(cfg: &RunConfig, base: &LatticeConfig, a: &[f64]) -> Vec<Result<f64, Error>> {
    let rule = cfg.detuning_rule();
    let template = cfg.impurity.template();
    a.par_iter().map(|&a| base.with_spacing(a).and_then(|c| rule.resolve(&c, &template))).collect()
}

fn impurity_maps(cfg: &RunConfig) -> Result<StudyOutput> {
    let base = cfg.lattice.config()?;
    let sizes = cfg.grids.n.clone().unwrap_or_else(|| vec![base.nx]);
    let a = cfg.a_values(&default_map_spacings());
    let template = cfg.impurity.template();
    let drive = drive(cfg);
    drive.check_weak();
    let mut t = Table::new("impurity_map", MAP_COLUMNS);
    let mut cells = Vec::new();
    for &n in &sizes {
        let lattice = LatticeConfig::new(base.spacing, n, n, base.handedness)?;
        let rows: Vec<MapCell> = match &cfg.grids.delta {
            Some(d) => impurity_map(&lattice, &template, &d.values(), &a, &drive)?,
            None => {
                t.note("detuning", format!("{:?}", cfg.detuning_rule()));
                let deltas = rule_detunings(cfg, &lattice, &a);
                let mut out = Vec::new();
                for (&a, d) in a.iter().zip(deltas) {
                    match d {
                        Ok(d) => out.extend(impurity_map(&lattice, &template, &[d], &[a], &drive)?),
                        Err(e) => out.push(MapCell {
                            a,
                            delta: f64::NAN,
                            status: CellStatus::Failed,
                            params: None,
                            markov_flag: false,
                            message: Some(e.to_string()),
                        }),
                    }
                }
                out
            }
        };
        for c in &rows {
            cells.push(record(cells.len(), c.status.as_str(), c.message.clone()));
            t.push(map_row(n, c));
        }
    }
    t.notes.dedup();
    t.note("configuration", template.configuration.as_str());
    t.note("gamma_i", template.gamma);
    let overlay = overlay(cfg, &base, &a);
    let summary = json!({"sizes": sizes, "cells": cells.len()});
    Ok(StudyOutput { tables: vec![t, overlay], cells, summary })
}

/// Band edge and dark detuning per spacing, the curves overlaid on the maps.
fn overlay(cfg: &RunConfig, base: &LatticeConfig, a: &[f64]) -> Table {
    let template = cfg.impurity.template();
    let rows: Vec<_> = a
        .par_iter()
        .map(|&a| {
            let c = base.with_spacing(a)?;
            let edge = band_edge_with(&c, DEFAULT_BZ_GRID, cfg.patch)?;
            let [fx, fy] = template.offset_fraction();
            let dark = dark_detuning(&c, [fx * a, fy * a], template.configuration, template.gamma);
            Ok::<_, Error>((edge.value, dark))
        })
        .collect();
    let mut t = Table::new("overlay", &["a", "omega_be", "delta_dark", "message"]);
    for (&a, r) in a.iter().zip(rows) {
        match r {
            Ok((edge, Ok(dark))) => t.push(vec![a.into(), edge.into(), dark.into(), Cell::Empty]),
            Ok((edge, Err(e))) => t.push(vec![a.into(), edge.into(), Cell::Empty, e.to_string().into()]),
            Err(e) => t.push(vec![a.into(), Cell::Empty, Cell::Empty, e.to_string().into()]),
        }
    }
    t
}

const HEAT_COLUMNS: &[&str] = &[
    "a", "delta", "status", "separation", "re_phi_eff", "im_phi_eff", "re_phi", "im_phi", "gamma_eff_1",
    "gamma_eff_2", "q2", "message",
];

fn heat_row(c: &HeatCell) -> Vec<Cell> {
    let r = c.result.as_ref();
    vec![
        c.a.into(),
        c.delta.into(),
        c.status.as_str().into(),
        r.map(|r| r.separation).into(),
        r.map(|r| r.phi_eff.re).into(),
        r.map(|r| r.phi_eff.im).into(),
        r.map(|r| r.phi.re).into(),
        r.map(|r| r.phi.im).into(),
        r.map(|r| r.gamma_eff[0]).into(),
        r.map(|r| r.gamma_eff[1]).into(),
        r.map(|r| r.q2).into(),
        c.message.clone().into(),
    ]
}

fn two_impurity_maps(cfg: &RunConfig) -> Result<StudyOutput> {
    let base = cfg.lattice.config()?;
    let a = cfg.a_values(&default_map_spacings());
    let template = cfg.impurity.template();
    let m = cfg.separation;
    let rows: Vec<HeatCell> = match &cfg.grids.delta {
        Some(d) => two_impurity_map(&base, &template, m, &a, &d.values())?,
        None => {
            let deltas = rule_detunings(cfg, &base, &a);
            let mut out = Vec::new();
            for (&a, d) in a.iter().zip(deltas) {
                match d {
                    Ok(d) => out.extend(two_impurity_map(&base, &template, m, &[a], &[d])?),
                    Err(e) => out.push(HeatCell {
                        a,
                        delta: f64::NAN,
                        status: CellStatus::Failed,
                        result: None,
                        message: Some(e.to_string()),
                    }),
                }
            }
            out
        }
    };
    let mut t = Table::new("two_impurity_map", HEAT_COLUMNS);
    t.note("separation_plaquettes", m);
    t.note("configuration", template.configuration.as_str());
    t.note("gamma_i", template.gamma);
    let mut cells = Vec::new();
    for c in &rows {
        cells.push(record(cells.len(), c.status.as_str(), c.message.clone()));
        t.push(heat_row(c));
    }
    Ok(StudyOutput { tables: vec![t], cells, summary: json!({"cells": rows.len()}) })
}

fn distance(cfg: &RunConfig) -> Result<StudyOutput> {
    let lattice = cfg.lattice.config()?;
    let template = cfg.impurity.template();
    let delta = cfg.detuning_rule().resolve(&lattice, &template).context("resolving the detuning")?;
    let m = cfg.grids.m.clone().unwrap_or_else(|| all_separations(&lattice));
    let scan = distance_scan(&lattice, &template, delta, &m)?;
    let mut t = Table::new(
        "distance_scan",
        &["m", "d", "re_phi_eff", "im_phi_eff", "gamma_eff", "q2", "q2_free", "in_fit_window"],
    );
    t.note("delta", crate::output::format_float(delta));
    t.note("configuration", template.configuration.as_str());
    match (&scan.fit, &scan.fit_error) {
        (Some(f), _) => {
            t.note("fit", format!("ln|Q2| = {} d + {}", f.slope, f.intercept));
            t.note("fit_r_squared", f.r_squared);
        }
        (None, Some(e)) => t.note("fit", format!("unavailable: {e}")),
        _ => {}
    }
    let mut cells = Vec::new();
    for p in &scan.points {
        cells.push(record(cells.len(), "ok", None));
        t.push(vec![
            p.m.into(),
            p.result.separation.into(),
            p.result.phi_eff.re.into(),
            p.result.phi_eff.im.into(),
            p.result.mean_gamma_eff().into(),
            p.result.q2.into(),
            p.q2_free.into(),
            scan.window.contains(&p.m).into(),
        ]);
    }
    let summary = json!({
        "delta": delta,
        "fit": scan.fit.as_ref().map(|f| json!({
            "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared, "decay_length": f.decay_length
        })),
        "fit_error": scan.fit_error,
        "window": scan.window,
    });
    Ok(StudyOutput { tables: vec![t], cells, summary })
}

fn spacing(cfg: &RunConfig) -> Result<StudyOutput> {
    let base = cfg.lattice.config()?;
    let a = cfg.a_values(&default_scan_spacings());
    let gamma = cfg.impurity.gamma.0;
    let rows: Vec<_> = a.par_iter().map(|&a| spacing_row(&base, gamma, a)).collect();
    let mut t = Table::new(
        "spacing_scan",
        &[
            "a", "status", "q2max_identical", "q2max_orthogonal", "q2_free", "delta_identical", "delta_orthogonal",
            "message",
        ],
    );
    let mut cells = Vec::new();
    let mut ok = Vec::new();
    for (&a, r) in a.iter().zip(rows) {
        match r {
            Ok(r) => {
                t.push(vec![
                    a.into(),
                    "ok".into(),
                    r.q2max_identical.into(),
                    r.q2max_orthogonal.into(),
                    r.q2_free.into(),
                    r.delta_identical.into(),
                    r.delta_orthogonal.into(),
                    Cell::Empty,
                ]);
                cells.push(record(cells.len(), "ok", None));
                ok.push(r);
            }
            Err(e) => {
                let status = if e.is_pole() { "pole" } else { "failed" };
                let mut row = vec![a.into(), status.into()];
                row.extend(std::iter::repeat(Cell::Empty).take(5));
                row.push(e.to_string().into());
                t.push(row);
                cells.push(record(cells.len(), status, Some(e.to_string())));
            }
        }
    }
    let fits = spacing_fits(&ok);
    let mut summary = serde_json::Map::new();
    for (name, f) in ["identical", "orthogonal", "free"].iter().zip(fits) {
        match f {
            Ok(f) => {
                t.note(&format!("slope_{name}"), f.slope);
                summary.insert(name.to_string(), json!({"slope": f.slope, "r_squared": f.r_squared}));
            }
            Err(e) => {
                summary.insert(name.to_string(), json!({"error": e.to_string()}));
            }
        }
    }
    Ok(StudyOutput { tables: vec![t], cells, summary: Value::Object(summary) })
}

fn reach(cfg: &RunConfig) -> Result<StudyOutput> {
    let base = cfg.lattice.config()?;
    let a = cfg.a_values(&default_map_spacings());
    let template = cfg.impurity.template();
    let rule = cfg.detuning_rule();
    let rows: Vec<_> = a.par_iter().map(|&a| reach_row(&base, &template, rule, a, cfg.reach_threshold)).collect();
    let mut t = Table::new("reach_scan", &["a", "status", "delta", "reach", "max_q2", "message"]);
    t.note("threshold", cfg.reach_threshold);
    t.note("configuration", template.configuration.as_str());
    let mut cells = Vec::new();
    for (&a, r) in a.iter().zip(rows) {
        match r {
            Ok(r) => {
                t.push(vec![a.into(), "ok".into(), r.delta.into(), r.reach.into(), r.max_q2.into(), Cell::Empty]);
                cells.push(record(cells.len(), "ok", None));
            }
            Err(e) => {
                let status = if e.is_pole() { "pole" } else { "failed" };
                t.push(vec![a.into(), status.into(), Cell::Empty, Cell::Empty, Cell::Empty, e.to_string().into()]);
                cells.push(record(cells.len(), status, Some(e.to_string())));
            }
        }
    }
    Ok(StudyOutput { tables: vec![t], cells, summary: json!({"threshold": cfg.reach_threshold}) })
}

fn dynamics(cfg: &RunConfig) -> Result<StudyOutput> {
    let lattice = cfg.lattice.config()?;
    let template = cfg.impurity.template();
    let specs = if cfg.impurities.is_empty() {
        let mut pair = impurity_pair(&lattice, cfg.separation, template.gamma, template.configuration)?;
        let [fx, fy] = template.offset_fraction();
        for p in &mut pair {
            *p = p.with_offset(fx * lattice.spacing, fy * lattice.spacing);
        }
        pair.to_vec()
    } else {
        cfg.impurities.iter().map(ImpurityEntry::spec).collect()
    };
    let geometry = build_geometry(lattice, &specs)?;
    let delta = cfg.detuning_rule().resolve(&lattice, &template).context("resolving the detuning")?;
    let times = cfg.grids.t.as_ref().map(|t| t.values());
    let TransferRun { predicted, series, metrics } = transfer_run(&geometry, delta, times)?;
    let (s, q) = (series.sites[0], series.sites[1]);
    let mut long = Table::new("dynamics", &["t", "site_index", "re_c", "im_c", "population"]);
    let mut short = Table::new("dynamics_impurities", &["t", "population_1", "population_2", "impurity_total", "total"]);
    for table in [&mut long, &mut short] {
        table.note("delta", crate::output::format_float(delta));
        table.note("propagation", format!("{:?}", series.method).to_lowercase());
        table.note("impurity_sites", format!("{s} {q}"));
    }
    for (i, &t) in series.times.iter().enumerate().step_by(cfg.output_stride) {
        let c = series.amplitudes.row(i);
        for (k, &site) in series.sites.iter().enumerate() {
            long.push(vec![t.into(), site.into(), c[k].re.into(), c[k].im.into(), c[k].norm_sqr().into()]);
        }
        let (p1, p2) = (c[0].norm_sqr(), c[1].norm_sqr());
        short.push(vec![t.into(), p1.into(), p2.into(), (p1 + p2).into(), series.total_population[i].into()]);
    }
    let max_increase = series.total_population.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let (status, metrics_json) = match &metrics {
        Ok(m) => ("ok", json!({"frequency": m.frequency, "decay": m.decay, "q_empirical": m.q_empirical, "maxima": m.peak_times.len()})),
        Err(Error::MetricsUnavailable { reason, partial }) => {
            ("metrics-unavailable", json!({"error": reason, "partial": partial}))
        }
        Err(e) => ("failed", json!({"error": e.to_string()})),
    };
    let summary = json!({
        "delta": delta,
        "predicted": {
            "re_phi_eff": predicted.phi_eff.re, "im_phi_eff": predicted.phi_eff.im,
            "gamma_eff": predicted.gamma_eff, "q2": predicted.q2,
        },
        "metrics": metrics_json,
        "propagation": series.method,
        "samples": series.times.len(),
        "max_total_population_increase": max_increase,
    });
    let cells = vec![record(0, status, metrics.as_ref().err().map(|e| e.to_string()))];
    Ok(StudyOutput { tables: vec![long, short], cells, summary })
}

struct ToyRow {
    a: f64,
    configuration: Configuration,
    delta: Option<f64>,
    quantity: &'static str,
    toy: C64,
    generic: C64,
}

fn toy_rows(a: f64, configuration: Configuration, gamma_i: f64, drive: &DriveSpec) -> Result<Vec<ToyRow>, Error> {
    let tc = toy_couplings(a, gamma_i, configuration)?;
    let c = LatticeConfig::square(a, 2)?;
    let g = build_geometry(c, &[ImpurityTemplate::centered(gamma_i, configuration).spec_for(&c)])?;
    let m = assemble_lattice_matrix(&g)?;
    let v = impurity_vector(&g, 0)?;
    let mut rows = Vec::new();
    let row = |delta, quantity, toy, generic| ToyRow { a, configuration, delta, quantity, toy, generic };
    for k in 0..20 {
        let delta = tc.j_par() + (k as f64 - 9.5) * 0.37 * tc.gamma_par();
        let sigma = self_energy(&m, &v, delta)?;
        let (toy_sigma, toy_rabi) = match configuration {
            Configuration::Identical => (
                toy_self_energy_identical(&tc, delta)?,
                toy_effective_rabi_identical(&tc, delta, drive.omega_l, drive.omega_i)?,
            ),
            Configuration::Orthogonal => (
                toy_self_energy_orthogonal(&tc, delta)?,
                toy_effective_rabi_orthogonal(&tc, delta, drive.omega_l, drive.omega_i)?,
            ),
        };
        let ge = |s: C64| C64::new(gamma_i - 2.0 * s.im, 0.0);
        rows.push(row(Some(delta), "sigma", toy_sigma, sigma));
        rows.push(row(Some(delta), "gamma_eff", ge(toy_sigma), ge(sigma)));
        rows.push(row(Some(delta), "omega_eff", toy_rabi, effective_rabi(&m, &v, delta, drive)?));
    }
    if configuration == Configuration::Identical {
        let dd = optimal_dark_detuning(&dominant_mode_projection(&m, &v)?)?;
        rows.push(row(None, "delta_dark", C64::new(toy_dark_detuning(&tc)?, 0.0), C64::new(dd, 0.0)));
    }
    Ok(rows)
}

fn toy_check(cfg: &RunConfig) -> Result<StudyOutput> {
    let a = cfg.a_values(&TOY_SPACINGS);
    let drive = drive(cfg);
    let gamma = cfg.impurity.gamma.0;
    let jobs: Vec<(f64, Configuration)> = a
        .iter()
        .flat_map(|&a| [(a, Configuration::Identical), (a, Configuration::Orthogonal)])
        .collect();
    let results: Vec<_> = jobs.par_iter().map(|&(a, c)| toy_rows(a, c, gamma, &drive)).collect();
    let mut t = Table::new(
        "toy_check",
        &["a", "configuration", "delta", "quantity", "toy_re", "toy_im", "generic_re", "generic_im", "rel_error", "status"],
    );
    t.note("tolerance", TOY_TOLERANCE);
    let mut cells = Vec::new();
    let mut worst: f64 = 0.0;
    for ((a, configuration), r) in jobs.iter().zip(results) {
        match r {
            Ok(rows) => {
                for r in rows {
                    let err = (r.generic - r.toy).norm() / r.toy.norm().max(f64::MIN_POSITIVE);
                    worst = worst.max(err);
                    let status = if err <= TOY_TOLERANCE { "ok" } else { "failed" };
                    cells.push(record(cells.len(), status, None));
                    t.push(vec![
                        r.a.into(),
                        r.configuration.as_str().into(),
                        r.delta.into(),
                        r.quantity.into(),
                        r.toy.re.into(),
                        r.toy.im.into(),
                        r.generic.re.into(),
                        r.generic.im.into(),
                        err.into(),
                        status.into(),
                    ]);
                }
            }
            Err(e) => {
                cells.push(record(cells.len(), "failed", Some(e.to_string())));
                t.push(vec![
                    (*a).into(),
                    configuration.as_str().into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    "failed".into(),
                ]);
            }
        }
    }
    Ok(StudyOutput { tables: vec![t], cells, summary: json!({"worst_rel_error": worst, "tolerance": TOY_TOLERANCE}) })
}
