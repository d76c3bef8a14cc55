//! CLI command implementations. Each command reads material tables named in
//! the configuration, runs the pipeline and writes its artifacts into the
//! output directory; all outputs are deterministic for a fixed configuration
//! and seed.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::curvature::{
    curvature_profile, detect_intervals, CurvatureProfile, CurveSamples, EvaluationGrid,
    LogRatioCurve,
};
use crate::gam::{select_lambda_gcv, Family, PredictScale, SmoothFit};
use crate::ingest::{parse_table, TransectDataset};
use crate::ranking::{
    accumulate, build_matrix, element_frequency, scale_matrix, top_curves, top_k, CValueMatrix,
};
use crate::report;
use crate::synth::generate;

/// Number of ranks shown in the per-material score-decay curves.
const CURVE_DEPTH: usize = 70;

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {out:?}"))
}

/// File-name-safe version of a material name.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn evaluation_grid(cfg: &RunConfig) -> Result<EvaluationGrid> {
    Ok(EvaluationGrid::new(cfg.grid.points, cfg.grid.epsilon)?)
}

fn load_materials(
    cfg: &RunConfig,
    filter: Option<&str>,
) -> Result<Vec<(String, TransectDataset)>> {
    if cfg.materials.is_empty() {
        bail!("no materials configured; add at least one [[material]] entry");
    }
    let mut out = Vec::new();
    for m in &cfg.materials {
        if let Some(f) = filter {
            if m.name != f {
                continue;
            }
        }
        let file = fs::File::open(&m.path)
            .with_context(|| format!("cannot open material `{}` at {:?}", m.name, m.path))?;
        let raw = parse_table(file, &cfg.columns)
            .with_context(|| format!("cannot parse material `{}` ({:?})", m.name, m.path))?;
        let ds = TransectDataset::from_raw(&raw)
            .with_context(|| format!("cannot prepare material `{}`", m.name))?;
        out.push((m.name.clone(), ds));
    }
    if out.is_empty() {
        bail!("material filter matched nothing");
    }
    Ok(out)
}

/// Fits every element of one material; element fits are independent and run
/// in parallel, results are collected in element order.
fn fit_all(cfg: &RunConfig, ds: &TransectDataset) -> Result<Vec<SmoothFit>> {
    let family = Family::tweedie(cfg.model.tweedie_power)?;
    let grid = cfg.model.lambda_grid();
    let fits: Vec<Result<SmoothFit>> = ds
        .values
        .par_iter()
        .zip(ds.weights.par_iter())
        .zip(ds.elements.par_iter())
        .map(|((y, w), element)| {
            let mut fit = select_lambda_gcv(&ds.positions, y, w, &family, &grid)
                .with_context(|| format!("fit failed for element {element}"))?;
            fit.element = element.clone();
            Ok(fit)
        })
        .collect();
    fits.into_iter().collect()
}

struct MaterialArtifacts {
    name: String,
    dataset: TransectDataset,
    fits: Vec<SmoothFit>,
    raw: CValueMatrix,
    scaled: CValueMatrix,
}

fn compute_materials(cfg: &RunConfig, filter: Option<&str>) -> Result<Vec<MaterialArtifacts>> {
    let grid = evaluation_grid(cfg)?;
    load_materials(cfg, filter)?
        .into_iter()
        .map(|(name, dataset)| {
            let fits = fit_all(cfg, &dataset)?;
            let raw = build_matrix(&name, &fits, &grid)?;
            let scaled = scale_matrix(&raw);
            Ok(MaterialArtifacts {
                name,
                dataset,
                fits,
                raw,
                scaled,
            })
        })
        .collect()
}

fn write_rank_outputs(cfg: &RunConfig, arts: &[MaterialArtifacts], out: &Path) -> Result<()> {
    let hash = cfg.hash();
    for art in arts {
        let stem = sanitize(&art.name);
        report::write_matrix_csv(&out.join(format!("{stem}_cvalues.csv")), &hash, &art.raw)?;
        report::write_matrix_csv(
            &out.join(format!("{stem}_cvalues_scaled.csv")),
            &hash,
            &art.scaled,
        )?;
        report::write_matrix_json(&out.join(format!("{stem}_cvalues.json")), &art.raw)?;
        let ranked = top_k(&art.raw, cfg.output.top_k);
        report::write_ranked_csv(&out.join(format!("{stem}_top.csv")), &hash, &ranked)?;
        report::write_ranked_jsonl(&out.join(format!("{stem}_top.jsonl")), &ranked)?;
        let freq = element_frequency(&ranked, cfg.output.top_k);
        report::write_frequency_csv(
            &out.join(format!("{stem}_element_frequency.csv")),
            &hash,
            &freq,
        )?;
    }
    if arts.len() >= 2 {
        let scaled: Vec<CValueMatrix> = arts.iter().map(|a| a.scaled.clone()).collect();
        let acc = accumulate(&scaled)?;
        report::write_matrix_csv(&out.join("accumulated_cvalues.csv"), &hash, &acc)?;
        report::write_matrix_json(&out.join("accumulated_cvalues.json"), &acc)?;
    }
    Ok(())
}

/// `rank`: c-value matrices (raw and scaled), ranked pair lists and element
/// frequency tables per material; plus the accumulated matrix when several
/// materials are given.
pub fn cmd_rank(cfg: &RunConfig, material: Option<&str>, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let arts = compute_materials(cfg, material)?;
    write_rank_outputs(cfg, &arts, out)
}

fn write_heatmaps(cfg: &RunConfig, arts: &[MaterialArtifacts], out: &Path) -> Result<()> {
    let hash = cfg.hash();
    for art in arts {
        let stem = sanitize(&art.name);
        fs::write(
            out.join(format!("{stem}_heatmap.svg")),
            report::heatmap_svg(&art.scaled, &hash),
        )?;
    }
    if arts.len() >= 2 {
        let scaled: Vec<CValueMatrix> = arts.iter().map(|a| a.scaled.clone()).collect();
        let acc = accumulate(&scaled)?;
        fs::write(
            out.join("accumulated_heatmap.svg"),
            report::heatmap_svg(&acc, &hash),
        )?;
    }
    Ok(())
}

/// `heatmap`: scaled c-value heatmaps per material and accumulated.
pub fn cmd_heatmap(cfg: &RunConfig, material: Option<&str>, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let arts = compute_materials(cfg, material)?;
    write_heatmaps(cfg, &arts, out)
}

/// `fit`: per-element fit summaries and diagnostics tables.
pub fn cmd_fit(cfg: &RunConfig, material: Option<&str>, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    for (name, ds) in load_materials(cfg, material)? {
        let fits = fit_all(cfg, &ds)?;
        write_fit_outputs(cfg, &hash, &name, &ds, &fits, out)?;
    }
    Ok(())
}

fn write_fit_outputs(
    cfg: &RunConfig,
    hash: &str,
    name: &str,
    ds: &TransectDataset,
    fits: &[SmoothFit],
    out: &Path,
) -> Result<()> {
    let stem = sanitize(name);
    report::write_table(
        &out.join(format!("{stem}_fit_summary.csv")),
        hash,
        &["element", "lambda", "edf", "deviance", "gcv", "dispersion"],
        fits.iter().map(|f| {
            vec![
                f.element.clone(),
                report::fmt(f.lambda),
                report::fmt(f.edf),
                report::fmt(f.deviance),
                report::fmt(f.gcv),
                report::fmt(f.dispersion),
            ]
        }),
    )?;
    let p = cfg.model.tweedie_power;
    let mut rows = Vec::new();
    for (e, fit) in fits.iter().enumerate() {
        for (i, &x) in ds.positions.iter().enumerate() {
            let y = ds.values[e][i];
            let w = ds.weights[e][i];
            let eta = fit.predict(x, PredictScale::Linear);
            let mu = fit.predict(x, PredictScale::Response);
            let pearson = (y - mu) * w.sqrt() / mu.powf(p / 2.0);
            rows.push(report::FitDiagnosticsRow {
                element: fit.element.clone(),
                x,
                y,
                eta,
                mu,
                pearson,
            });
        }
    }
    report::write_diagnostics_csv(&out.join(format!("{stem}_diagnostics.csv")), hash, &rows)?;
    Ok(())
}

fn parse_pair(pair: &str) -> Result<(String, String)> {
    let mut it = pair.split('/');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
            Ok((a.to_string(), b.to_string()))
        }
        _ => bail!("pair must have the form El1/El2, got `{pair}`"),
    }
}

fn read_known_positions(path: &Path) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read known anomalies {path:?}"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| anyhow!("known anomalies {path:?} line {}: `{line}`", i + 1))?;
        if !(0.0..=1.0).contains(&v) {
            bail!("known anomaly position {v} is outside [0, 1] (normalized positions expected)");
        }
        out.push(v);
    }
    Ok(out)
}

struct DetectOutcome {
    pair: (String, String),
    curve: LogRatioCurve,
    profile: CurvatureProfile,
}

fn detect_pair(
    arts: &MaterialArtifacts,
    grid: &EvaluationGrid,
    pair: Option<&str>,
) -> Result<DetectOutcome> {
    let (el1, el2) = match pair {
        Some(p) => parse_pair(p)?,
        None => {
            let ranked = top_k(&arts.raw, 1);
            let top = ranked
                .first()
                .ok_or_else(|| anyhow!("material `{}` has no pairs", arts.name))?;
            top.elements.clone()
        }
    };
    let find = |el: &str| {
        arts.fits
            .iter()
            .find(|f| f.element == el)
            .ok_or_else(|| anyhow!("element `{el}` not present in material `{}`", arts.name))
    };
    let f1 = find(&el1)?;
    let f2 = find(&el2)?;
    let s1 = CurveSamples::from_fit(f1, grid);
    let s2 = CurveSamples::from_fit(f2, grid);
    let curve = LogRatioCurve::from_samples((el1.clone(), el2.clone()), &s1, &s2, grid);
    let profile = curvature_profile(&curve, grid)?;
    Ok(DetectOutcome {
        pair: (el1, el2),
        curve,
        profile,
    })
}

fn write_detect_outputs(
    cfg: &RunConfig,
    art: &MaterialArtifacts,
    outcome: &DetectOutcome,
    grid: &EvaluationGrid,
    out: &Path,
) -> Result<()> {
    let hash = cfg.hash();
    let stem = sanitize(&art.name);
    let pair_stem = format!("{}_{}", sanitize(&outcome.pair.0), sanitize(&outcome.pair.1));
    report::write_curve_dump(
        &out.join(format!("{stem}_{pair_stem}_curve.csv")),
        &hash,
        grid,
        &outcome.curve,
        &outcome.profile,
    )?;

    let meters = detect_intervals(&outcome.profile, art.dataset.distance_range);
    report::write_table(
        &out.join(format!("{stem}_intervals.csv")),
        &hash,
        &["start", "end", "start_normalized", "end_normalized"],
        meters.iter().zip(&outcome.profile.intervals).map(|(m, n)| {
            vec![
                report::fmt(m.0),
                report::fmt(m.1),
                report::fmt(n.0),
                report::fmt(n.1),
            ]
        }),
    )?;
    let intervals_json = serde_json::json!({
        "material": art.name,
        "pair": [outcome.pair.0, outcome.pair.1],
        "c_value": outcome.profile.c_value,
        "threshold": outcome.profile.threshold,
        "intervals": meters
            .iter()
            .zip(&outcome.profile.intervals)
            .map(|(m, n)| serde_json::json!({
                "start": m.0,
                "end": m.1,
                "start_normalized": n.0,
                "end_normalized": n.1,
            }))
            .collect::<Vec<_>>(),
    });
    fs::write(
        out.join(format!("{stem}_intervals.json")),
        serde_json::to_string_pretty(&intervals_json)?,
    )?;

    let known = match &cfg.known_anomalies {
        Some(path) => read_known_positions(path)?,
        None => Vec::new(),
    };
    if !known.is_empty() {
        report::write_table(
            &out.join(format!("{stem}_overlap.csv")),
            &hash,
            &["known_position", "hit", "interval_start", "interval_end"],
            known.iter().map(|&k| {
                let containing = outcome
                    .profile
                    .intervals
                    .iter()
                    .find(|&&(s, e)| s <= k && k <= e);
                match containing {
                    Some(&(s, e)) => vec![
                        report::fmt(k),
                        "hit".to_string(),
                        report::fmt(s),
                        report::fmt(e),
                    ],
                    None => vec![
                        report::fmt(k),
                        "miss".to_string(),
                        String::new(),
                        String::new(),
                    ],
                }
            }),
        )?;
    }
    fs::write(
        out.join(format!("{stem}_{pair_stem}_profile.svg")),
        report::profile_svg(&outcome.profile, grid, &known, &hash),
    )?;
    Ok(())
}

/// `detect`: exceedance intervals of one pair (explicit or the top-ranked
/// one) per material, as tables, structured records and a profile plot; with
/// an overlap report when known anomaly positions are configured.
pub fn cmd_detect(
    cfg: &RunConfig,
    material: Option<&str>,
    pair: Option<&str>,
    out: &Path,
) -> Result<()> {
    ensure_dir(out)?;
    let grid = evaluation_grid(cfg)?;
    for art in compute_materials(cfg, material)? {
        let outcome = detect_pair(&art, &grid, pair)?;
        write_detect_outputs(cfg, &art, &outcome, &grid, out)?;
    }
    Ok(())
}

/// `synth`: writes a synthetic dataset in the ingestible CSV format together
/// with its ground-truth sidecar.
pub fn cmd_synth(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let synth_cfg = cfg
        .synth
        .as_ref()
        .ok_or_else(|| anyhow!("synth command needs a [synth] section in the config"))?;
    let spec = synth_cfg.to_spec(seed)?;
    let (ds, truth) = generate(&spec)?;
    write_dataset_csv(&ds, &out.join("synthetic.csv"))?;
    fs::write(
        out.join("synthetic_truth.json"),
        serde_json::to_string_pretty(&truth)?,
    )?;
    Ok(())
}

/// Writes a dataset in the same delimited format `ingest` reads.
pub fn write_dataset_csv(ds: &TransectDataset, path: &Path) -> Result<()> {
    let mut text = String::new();
    text.push_str("id,x");
    for el in &ds.elements {
        text.push(',');
        text.push_str(el);
    }
    text.push('\n');
    for i in 0..ds.sample_count() {
        text.push_str(&ds.sample_ids[i]);
        text.push(',');
        text.push_str(&format!("{:.12}", ds.to_distance(ds.positions[i])));
        for e in 0..ds.elements.len() {
            text.push(',');
            text.push_str(&format!("{:.12e}", ds.values[e][i]));
        }
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("cannot write {path:?}"))
}

/// `report`: the full pipeline — fits, rankings, heatmaps, detection on the
/// top pair and the per-material score-decay curves.
pub fn cmd_report(cfg: &RunConfig, material: Option<&str>, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    let grid = evaluation_grid(cfg)?;
    let arts = compute_materials(cfg, material)?;
    write_rank_outputs(cfg, &arts, out)?;
    write_heatmaps(cfg, &arts, out)?;
    for art in &arts {
        write_fit_outputs(cfg, &hash, &art.name, &art.dataset, &art.fits, out)?;
        let outcome = detect_pair(art, &grid, None)?;
        write_detect_outputs(cfg, art, &outcome, &grid, out)?;
    }
    let raw: Vec<CValueMatrix> = arts.iter().map(|a| a.raw.clone()).collect();
    let curves = top_curves(&raw, CURVE_DEPTH);
    fs::write(out.join("top_cvalues.svg"), report::top_curves_svg(&curves, &hash))?;
    report::write_table(
        &out.join("top_cvalues.csv"),
        &hash,
        &["material", "rank", "c_value"],
        curves.iter().flat_map(|(material, values)| {
            values.iter().enumerate().map(move |(i, v)| {
                vec![material.clone(), (i + 1).to_string(), report::fmt(*v)]
            })
        }),
    )?;
    Ok(())
}

/// Applies CLI overrides onto a loaded configuration.
pub fn apply_overrides(cfg: &mut RunConfig, top_k: Option<usize>) {
    if let Some(k) = top_k {
        cfg.output.top_k = k;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("Co/Al").unwrap(), ("Co".into(), "Al".into()));
        assert!(parse_pair("CoAl").is_err());
        assert!(parse_pair("Co/Al/Fe").is_err());
        assert!(parse_pair("/Al").is_err());
    }

    #[test]
    fn sanitize_keeps_word_characters() {
        assert_eq!(sanitize("CRO-twig"), "CRO-twig");
        assert_eq!(sanitize("soil layer/2"), "soil_layer_2");
    }
}
