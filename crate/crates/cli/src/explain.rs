use glassbench::explain::{
    default_layer, extract_embeddings, integrated_gradients, interpolation_probe, model_input, occlusion, pdp, quantile_grid, svg,
    Attribution, Baseline,
};
use glassbench::featurize::{represent, Representation};
use glassbench::format::{encode_binary, encode_csv};
use glassbench::sim::SubjectDataset;
use glassbench::store::{load_dataset, load_model, Artifact, ArtifactKind, Payload, SavedModel};
use glassbench::transformer::Transformer;

use crate::args::ExplainArgs;
use crate::config::{self, parse_pooling, BaselineKind, ExplainConfig, ExplainMethod};
use crate::{stem, CliError, CliResult, Ctx};

/// The dataset a model artifact was fitted on.
pub fn model_dataset(model_art: &Artifact) -> CliResult<SubjectDataset> {
    let up = model_art
        .upstream(ArtifactKind::Dataset)
        .ok_or_else(|| CliError::Run(glassbench::Error::Provenance("model has no dataset upstream".into())))?;
    Ok(load_dataset(&up.path)?.0)
}

fn network<'a>(model: &'a SavedModel, what: &str) -> CliResult<&'a Transformer<f32>> {
    match model {
        SavedModel::Transformer { network } => Ok(network),
        other => Err(CliError::Usage(format!("{what} needs a transformer or cbm model, got {}", other.kind().as_str()))),
    }
}

pub fn attribution_payload(attrs: &[Attribution], p: &mut Payload) {
    let mut summary = String::from("sample,method,target_class,baseline,n_steps,window,output,baseline_output,total,completeness_gap\n");
    for a in attrs {
        let (t, d) = a.values.dim();
        let flat: Vec<f64> = a.values.iter().copied().collect();
        p.add(format!("attributions/sample_{}.csv", a.sample), encode_csv(&["time", "species"], &[t, d], &flat));
        let title = format!("{} attribution, subject {}, class {}", a.method.as_str(), a.sample, a.target_class);
        p.add(format!("heatmaps/sample_{}.svg", a.sample), svg::heatmap(a.values.view(), &title));
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            a.sample,
            a.method.as_str(),
            a.target_class,
            a.baseline,
            opt(a.n_steps),
            opt(a.window),
            a.output,
            a.baseline_output,
            a.total(),
            a.completeness_gap.map(|g| g.to_string()).unwrap_or_default()
        ));
    }
    p.add("summary.csv", summary);
}

pub fn cmd_explain(ctx: &Ctx, a: &ExplainArgs) -> CliResult {
    let mut cfg: ExplainConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(s) = &a.samples {
        cfg.samples = s.clone();
    }
    if let Some(t) = a.target {
        cfg.target_class = t;
    }
    if let Some(b) = a.baseline {
        cfg.baseline = b;
    }
    if let Some(s) = a.steps {
        cfg.n_steps = s;
    }
    if let Some(w) = a.window {
        cfg.window = w;
    }
    if let Some(f) = &a.feature {
        cfg.feature = Some(f.clone());
    }
    if let Some(g) = a.grid {
        cfg.grid_points = g;
    }
    if let Some(l) = &a.layer {
        cfg.layer = Some(l.clone());
    }
    if let Some(p) = &a.pooling {
        cfg.pooling = parse_pooling(p)?;
    }
    if let Some(p) = a.penalty {
        cfg.penalty = p;
    }
    if let Some(p) = &a.probe {
        cfg.probe = p.clone();
    }
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    let (model, art) = load_model(&a.model)?;
    let ds = model_dataset(&art)?;
    let seed = art.manifest.seed;
    let mut p = Payload::new();
    let method_name = match cfg.method {
        ExplainMethod::Ig => "ig",
        ExplainMethod::Occlusion => "occlusion",
        ExplainMethod::Pdp => "pdp",
        ExplainMethod::Embed => "embed",
    };
    let dir = ctx.target("explain", &format!("{method_name}-{}", stem(&art.path)));

    let kind = match cfg.method {
        ExplainMethod::Ig | ExplainMethod::Occlusion => {
            let net = network(&model, "attribution")?;
            let samples = if cfg.samples.is_empty() { ds.val_indices().into_iter().take(5).collect() } else { cfg.samples.clone() };
            let baseline = match cfg.baseline {
                BaselineKind::Zero => Baseline::Zero,
                BaselineKind::TrainMean => Baseline::TrainMean,
            };
            let base = baseline.resolve(net, &ds)?;
            let mut attrs = Vec::with_capacity(samples.len());
            for &i in &samples {
                let x = model_input(net, &ds, i)?;
                let at = match cfg.method {
                    ExplainMethod::Ig => integrated_gradients(net, i, &x, cfg.target_class, &base, &baseline.describe(), cfg.n_steps)?,
                    _ => occlusion(net, i, &x, cfg.target_class, &base, &baseline.describe(), cfg.window)?,
                };
                match at.completeness_gap {
                    Some(g) => println!("subject {i}: f(x) - f(x0) = {:.5}, sum = {:.5}, completeness gap = {g:.3e}", at.output - at.baseline_output, at.total()),
                    None => println!("subject {i}: f(x) - f(x0) = {:.5}, largest drop = {:.5}", at.output - at.baseline_output, at.values.iter().fold(f64::MIN, |m, v| m.max(*v))),
                }
                attrs.push(at);
            }
            attribution_payload(&attrs, &mut p);
            ArtifactKind::Attribution
        }
        ExplainMethod::Pdp => {
            let feature = cfg.feature.clone().ok_or_else(|| CliError::Usage("pdp needs --feature".into()))?;
            let (rep, standardize) = match &model {
                SavedModel::Transformer { .. } => (Representation::Raw, false),
                m => (m.representation(), true),
            };
            let fm = represent::<f64>(&ds, rep, standardize)?;
            let d = fm.feature_index(&feature).ok_or_else(|| {
                let examples: Vec<&str> = fm.feature_names.iter().take(3).map(String::as_str).collect();
                CliError::Usage(format!("unknown feature `{feature}` for {} data (e.g. {})", rep.as_str(), examples.join(", ")))
            })?;
            let grid = quantile_grid(fm.values.view(), d, cfg.grid_points)?;
            let mut prof = pdp(model.classifier(), fm.values.view(), d, &grid)?;
            prof.feature_name = Some(feature.clone());
            // report the grid in original units
            if let Some(s) = &fm.standardization {
                prof.grid = prof.grid.iter().map(|&g| if s.zero_variance[d] { s.mean[d] } else { g * s.std[d] + s.mean[d] }).collect();
            }
            p.add("profile.csv", prof.to_csv());
            p.add("profile.svg", svg::profile(&prof.grid, &prof.profile, &format!("partial dependence on {feature}")));
            println!("pdp over {} grid values: {:.3} .. {:.3}", prof.grid.len(), prof.profile.first().unwrap_or(&0.0), prof.profile.last().unwrap_or(&0.0));
            ArtifactKind::Report
        }
        ExplainMethod::Embed => {
            let net = network(&model, "embedding")?;
            let rows: Vec<usize> = if cfg.samples.is_empty() { (0..ds.n_subjects()).collect() } else { cfg.samples.clone() };
            let layer = cfg.layer.clone().unwrap_or_else(|| default_layer(net.config.n_layer));
            let mut e = extract_embeddings(net, &ds, &rows, &layer, cfg.pooling)?;
            let proj = e.project(cfg.penalty)?.clone();
            let (n, w) = e.vectors.dim();
            p.add("vectors.bin", encode_binary(&[n, w], e.vectors.as_slice().expect("standard layout")));
            p.add("scores.csv", e.scores_csv(Some(&ds.y)).expect("projected"));
            let (ld, lc) = proj.loadings.dim();
            let loadings: Vec<f64> = proj.loadings.iter().copied().collect();
            p.add("loadings.csv", encode_csv(&["dim", "component"], &[ld, lc], &loadings));
            let labels: Vec<u8> = rows.iter().map(|&i| ds.y[i]).collect();
            p.add("scatter.svg", svg::scatter(proj.scores.view(), &labels, &format!("{layer} embeddings, sparse PCA")));
            println!(
                "explained variance: {:.3}, {:.3} of {:.3}; nonzero loadings: {:?}",
                proj.explained_variance[0], proj.explained_variance[1], proj.total_variance, proj.loadings_sparsity
            );
            if cfg.probe.len() == 2 {
                let local = |s: usize| rows.iter().position(|&r| r == s).ok_or_else(|| CliError::Usage(format!("probe subject {s} is not among the embedded rows")));
                let (ia, ib) = (local(cfg.probe[0])?, local(cfg.probe[1])?);
                let probe = interpolation_probe(e.vectors.view(), ia, ib, cfg.probe_points, cfg.probe_k)?;
                let mut csv = String::from("alpha,rank,subject,distance,label\n");
                for pt in &probe {
                    for (rank, (r, dist)) in pt.neighbors.iter().enumerate() {
                        csv.push_str(&format!("{},{rank},{},{dist},{}\n", pt.alpha, rows[*r], ds.y[rows[*r]]));
                    }
                }
                p.add("probe.csv", csv);
            } else if !cfg.probe.is_empty() {
                return Err(CliError::Usage("--probe takes exactly two subjects".into()));
            }
            ArtifactKind::Embedding
        }
    };
    ctx.write(&dir, kind, "explain", &cfg, seed, &p, &[art.reference()])?;
    Ok(())
}
