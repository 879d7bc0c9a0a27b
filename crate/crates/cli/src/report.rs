//! Regenerate tables and figures from stored artifacts without refitting.

use std::fmt::Write as _;

use glassbench::evalbench::{render_table1, EvalReport};
use glassbench::explain::svg;
use glassbench::format::decode_csv;
use glassbench::store::{dataset_from_artifact, read_artifact, Artifact, ArtifactKind, ArrayFormat, Payload, SavedModel};
use ndarray::{Array2, Ix2};

use crate::args::ReportArgs;
use crate::eval::ablation_csv;
use crate::explain::model_dataset;
use crate::fit::model_accuracy;
use crate::{stem, CliError, CliResult, Ctx};

fn run_err(e: impl Into<glassbench::Error>) -> CliError {
    CliError::Run(e.into())
}

/// Numeric columns of a small CSV with a header row.
fn columns(text: &str, wanted: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let idx: Vec<usize> = wanted
        .iter()
        .map(|w| header.iter().position(|h| h == w).ok_or_else(|| run_err(glassbench::Error::format("csv", format!("missing column `{w}`")))))
        .collect::<CliResult<_>>()?;
    let mut out = vec![Vec::new(); wanted.len()];
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        for (o, &i) in out.iter_mut().zip(&idx) {
            o.push(f.get(i).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN));
        }
    }
    Ok(out)
}

fn render_eval(art: &Artifact, report: &mut EvalReport, p: &mut Payload, text: &mut String) -> CliResult {
    if !report.table1.is_empty() {
        let mut with_time = false;
        if let Ok(t) = art.text("timings.csv") {
            for line in t.lines().skip_while(|l| l.starts_with('#')).skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    continue;
                }
                if let Some(r) = report.table1.iter_mut().find(|r| r.data == f[0] && r.model == f[1] && r.n.to_string() == f[2] && r.config_hash == f[3]) {
                    r.train_time_s = f[4].parse().ok();
                    with_time |= r.train_time_s.is_some();
                }
            }
        }
        let table = render_table1(&report.table1, with_time);
        p.add("table1.txt", table.clone());
        text.push_str(&table);
    }
    if !report.stability.is_empty() {
        for r in &report.stability {
            let _ = writeln!(text, "seed {} {}: overlap {} ({} sign-agreeing), active sizes {:?}", r.seed, r.representation.as_str(), r.overlap, r.sign_agreeing, r.active_sizes);
        }
    }
    if !report.ablation.is_empty() {
        p.add("ablation.csv", ablation_csv(&report.ablation));
        for r in &report.ablation {
            let _ = writeln!(text, "ablation q = {}: guided drop {:.3}, random drop {:.3}, gap {:+.3}", r.q, r.guided_drop, r.random_drop, r.gap);
        }
    }
    for f in &report.faithfulness {
        let _ = writeln!(
            text,
            "faithfulness {:?}: precision@{} {:?}, base rate {:?}, rank correlation {:?}",
            f.status, f.k, f.precision_at_k, f.base_rate, f.rank_correlation
        );
    }
    Ok(())
}

fn render_attributions(art: &Artifact, p: &mut Payload) -> CliResult<usize> {
    let mut n = 0;
    for (name, bytes) in art.files.iter().filter(|(k, _)| k.starts_with("attributions/") && k.ends_with(".csv")) {
        let text = std::str::from_utf8(bytes).map_err(|_| run_err(glassbench::Error::format(name.as_str(), "not UTF-8")))?;
        let values: Array2<f64> = decode_csv(name, text)?.1.into_dimensionality::<Ix2>().map_err(|_| run_err(glassbench::Error::format(name.as_str(), "expected rank 2")))?;
        let sample = name.trim_start_matches("attributions/").trim_end_matches(".csv");
        p.add(format!("heatmaps/{sample}.svg"), svg::heatmap(values.view(), &format!("attribution, {}", sample.replace('_', " "))));
        n += 1;
    }
    Ok(n)
}

pub fn cmd_report(ctx: &Ctx, a: &ReportArgs) -> CliResult {
    if ctx.print_config(&serde_json::json!({ "artifact": a.artifact }))? {
        return Ok(());
    }
    let art = read_artifact(&a.artifact, None)?;
    let m = &art.manifest;
    let mut text = format!("verified {} artifact {} ({} files)\ncontent hash: {}\n", m.kind, art.path.display(), m.files.len(), m.content_hash);
    for r in &art.chain {
        let _ = writeln!(text, "  from {} {} ({})", r.kind, r.path.display(), &r.hash[..12]);
    }
    let mut p = Payload::new();
    match m.kind {
        ArtifactKind::Dataset => {
            let ds = dataset_from_artifact(&art, ArrayFormat::Binary)?;
            let _ = writeln!(
                text,
                "subjects {} (train {}, val {}), T={} D={} K={}, {:.1}% disease, ground truth {}",
                ds.n_subjects(),
                ds.train_indices().len(),
                ds.val_indices().len(),
                ds.n_timepoints(),
                ds.n_species(),
                ds.concepts.ncols(),
                100.0 * ds.disease_fraction(),
                if ds.truth.is_some() { "present" } else { "absent" }
            );
        }
        ArtifactKind::Model => {
            let model: SavedModel = serde_json::from_slice(art.file("model.json")?).map_err(run_err)?;
            let ds = model_dataset(&art)?;
            let (size, unit) = model.size();
            let _ = writeln!(
                text,
                "{} on {} data: in-sample {:.3}, out-of-sample {:.3}, {size} {unit}",
                model.kind().as_str(),
                model.representation().as_str(),
                model_accuracy(&model, &ds, &ds.train_indices())?,
                model_accuracy(&model, &ds, &ds.val_indices())?
            );
            if let Ok(log) = art.text("training_log.csv") {
                let c = columns(log, &["epoch", "train_loss"])?;
                p.add("training_curve.svg", svg::profile(&c[0], &c[1], "training loss by epoch"));
                let _ = writeln!(text, "training log: {} epochs, final loss {:.4}", c[0].len(), c[1].last().copied().unwrap_or(f64::NAN));
            }
        }
        ArtifactKind::Attribution => {
            let n = render_attributions(&art, &mut p)?;
            let _ = writeln!(text, "{n} attribution maps");
            if let Ok(s) = art.text("summary.csv") {
                text.push_str(s);
            }
        }
        ArtifactKind::Embedding => {
            let c = columns(art.text("scores.csv")?, &["pc1", "pc2", "label"])?;
            let n = c[0].len();
            let points = Array2::from_shape_fn((n, 2), |(i, j)| c[j][i]);
            let labels: Vec<u8> = c[2].iter().map(|&v| v as u8).collect();
            p.add("scatter.svg", svg::scatter(points.view(), &labels, "embeddings, sparse PCA"));
            let _ = writeln!(text, "{n} projected embeddings");
        }
        ArtifactKind::Report => {
            if art.has("report.json") {
                let mut report: EvalReport = serde_json::from_slice(art.file("report.json")?).map_err(run_err)?;
                render_eval(&art, &mut report, &mut p, &mut text)?;
            }
            if let Ok(prof) = art.text("profile.csv") {
                let c = columns(prof, &["value", "profile"])?;
                p.add("profile.svg", svg::profile(&c[0], &c[1], "partial dependence"));
                let _ = writeln!(text, "partial dependence over {} grid values", c[0].len());
            }
            if render_attributions(&art, &mut p)? > 0 {
                let _ = writeln!(text, "attribution maps rendered");
            }
        }
    }
    print!("{text}");
    p.add("summary.txt", text);
    let dir = ctx.target("reports", &format!("render-{}", stem(&art.path)));
    ctx.write(&dir, ArtifactKind::Report, "report", &serde_json::json!({ "artifact": art.path }), m.seed, &p, &[art.reference()])?;
    Ok(())
}
