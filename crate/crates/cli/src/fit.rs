use std::time::Instant;

use glassbench::evalbench::ModelKind;
use glassbench::featurize::{represent, Representation};
use glassbench::glassbox::{accuracy, cv_lambda_path, fit_tree, MajorityClass};
use glassbench::sim::SubjectDataset;
use glassbench::store::{load_dataset, save_model, SavedModel};
use glassbench::transformer::{train, Mode, TransformerConfig};

use crate::args::FitArgs;
use crate::config::{self, fit_transformer_to, FitConfig};
use crate::{announce, existing_hint, stem, CliResult, Ctx};

/// Accuracy of a stored model on the subjects `rows`.
pub fn model_accuracy(model: &SavedModel, ds: &SubjectDataset, rows: &[usize]) -> glassbench::Result<f64> {
    let y: Vec<u8> = rows.iter().map(|&i| ds.y[i]).collect();
    match model {
        SavedModel::Transformer { network } => {
            let p = network.predict_proba_rows(ds.x.view(), rows)?;
            let pred: Vec<u8> = p.iter().map(|&q| (q > 0.5) as u8).collect();
            Ok(accuracy(&pred, &y))
        }
        _ => {
            let fm = represent::<f64>(ds, model.representation(), true)?.select_rows(rows);
            model.classifier().accuracy(fm.values.view(), &y)
        }
    }
}

pub fn cmd_fit(ctx: &Ctx, a: &FitArgs) -> CliResult {
    let mut cfg: FitConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if let Some(r) = a.representation {
        cfg.representation = r;
    }
    match a.preset.as_deref() {
        Some("full") => cfg.transformer = TransformerConfig::default(),
        Some(_) => cfg.transformer = TransformerConfig::desk(),
        None => {}
    }
    if let Some(e) = a.epochs {
        cfg.transformer.epochs = e;
    }
    if let Some(l) = a.layers {
        cfg.transformer.n_layer = l;
    }
    if let Some(h) = a.heads {
        cfg.transformer.n_head = h;
    }
    if let Some(f) = a.folds {
        cfg.cv.n_folds = f;
    }
    if let Some(s) = ctx.global.seed {
        cfg.cv.seed = s;
        cfg.tree.seed = s;
        cfg.transformer.seed = s;
    }
    let (ds, art) = load_dataset(&a.dataset)?;
    if cfg.model.is_sequence_model() {
        cfg.representation = Representation::Raw;
        fit_transformer_to(&mut cfg.transformer, ds.n_timepoints(), ds.n_species(), ds.concepts.ncols());
    }
    if ctx.print_config(&cfg)? {
        return Ok(());
    }

    let (tr, va) = (ds.train_indices(), ds.val_indices());
    let ytr: Vec<u8> = tr.iter().map(|&i| ds.y[i]).collect();
    let start = Instant::now();
    let (model, log, seed) = match cfg.model {
        ModelKind::Transformer | ModelKind::Cbm => {
            let mode = if cfg.model == ModelKind::Cbm { Mode::Cbm } else { Mode::Plain };
            let trained = train::<f32>(mode, &ds, &cfg.transformer)?;
            (SavedModel::Transformer { network: trained.model }, Some(trained.log), cfg.transformer.seed)
        }
        kind => {
            let fm = represent::<f64>(&ds, cfg.representation, true)?;
            let x = fm.select_rows(&tr).values;
            let rep = cfg.representation;
            let m = match kind {
                ModelKind::Majority => SavedModel::Majority { representation: rep, fit: MajorityClass::fit(x.ncols(), &ytr) },
                ModelKind::SparseLogistic => SavedModel::SparseLogistic {
                    representation: rep,
                    fit: cv_lambda_path(x.view(), &ytr, &cfg.cv)?.with_feature_names(fm.feature_names.clone()),
                },
                _ => SavedModel::Tree { representation: rep, fit: fit_tree(x.view(), &ytr, &cfg.tree)? },
            };
            (m, None, cfg.cv.seed)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let name = match cfg.model.is_sequence_model() {
        true => format!("{}-{}", cfg.model.as_str(), stem(&art.path)),
        false => format!("{}-{}-{}", cfg.model.as_str(), cfg.representation.as_str(), stem(&art.path)),
    };
    let dir = ctx.target("models", &name);
    let r = save_model(&model, log.as_deref(), Some(seconds), &ctx.record("fit", &cfg), seed, &art.reference(), &dir, ctx.write_options())
        .map_err(existing_hint)?;
    announce(&r);
    let (size, unit) = model.size();
    println!("model: {} on {} data", cfg.model.as_str(), cfg.representation.as_str());
    println!("in-sample accuracy: {:.3}", model_accuracy(&model, &ds, &tr)?);
    println!("out-of-sample accuracy: {:.3}", model_accuracy(&model, &ds, &va)?);
    println!("size: {size} {unit}");
    if let Some(log) = &log {
        println!("training log: {} epochs", log.len());
    }
    println!("fit time: {seconds:.2} s");
    Ok(())
}
