use glassbench::evalbench::{
    ground_truth_faithfulness, machine_descriptor, render_table1, run_stability, run_table1, stability_csv, table1_csv, timings_csv,
    transformer_ablation, AblationRecord, EvalReport, FaithfulnessStatus, Table1Row,
};
use glassbench::explain::{integrated_gradients, model_input, occlusion, Baseline};
use glassbench::featurize::Representation;
use glassbench::sim::simulate;
use glassbench::store::{load_model, ArtifactRef, Payload};
use glassbench::transformer::{train, Mode};

use crate::args::{AblationArgs, EvalCommand, FaithfulnessArgs, StabilityArgs, Table1Args};
use crate::config::{self, fit_transformer_to, AblationConfig, FaithfulnessConfig, StabilityConfig, Table1EvalConfig};
use crate::explain::{attribution_payload, model_dataset};
use crate::{stem, CliError, CliResult, Ctx};

fn json<T: serde::Serialize>(v: &T) -> CliResult<Vec<u8>> {
    serde_json::to_vec_pretty(v).map_err(|e| CliError::Run(e.into()))
}

/// Rows with wall-clock timings removed, for the hashed part of a report.
fn untimed(rows: &[Table1Row]) -> Vec<Table1Row> {
    rows.iter().cloned().map(|r| Table1Row { train_time_s: None, ..r }).collect()
}

pub fn ablation_csv(records: &[AblationRecord]) -> String {
    let mut out = String::from("method,q,n_cells,n_masked,reference_accuracy,guided_accuracy,random_accuracy,guided_drop,random_drop,gap,seed\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method, r.q, r.n_cells, r.n_masked, r.reference_accuracy, r.guided_accuracy, r.random_accuracy, r.guided_drop, r.random_drop, r.gap, r.seed
        ));
    }
    out
}

fn table1(ctx: &Ctx, a: &Table1Args) -> CliResult {
    let mut cfg: Table1EvalConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(n) = &a.n {
        cfg.n_list = n.clone();
    }
    if let Some(m) = &a.models {
        cfg.models = m.clone();
    }
    if let Some(r) = &a.representations {
        cfg.representations = r.clone();
    }
    if let Some(e) = a.epochs {
        cfg.transformer.epochs = e;
    }
    if let Some(s) = ctx.global.seed {
        cfg.sim.seed = s;
        cfg.cv.seed = s;
        cfg.tree.seed = s;
        cfg.transformer.seed = s;
    }
    fit_transformer_to(&mut cfg.transformer, cfg.sim.n_timepoints, cfg.sim.n_species, cfg.sim.n_communities);
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    let rows = run_table1(&cfg)?;
    print!("{}", render_table1(&rows, true));
    let machine = machine_descriptor();
    let mut p = Payload::new();
    p.add("table1.txt", render_table1(&rows, false));
    p.add("table1.csv", table1_csv(&rows));
    p.add("report.json", json(&EvalReport { table1: untimed(&rows), ..Default::default() })?);
    p.add_volatile("timings.csv", timings_csv(&rows, &machine));
    let dir = ctx.target("reports", &format!("table1-seed{}", cfg.sim.seed));
    ctx.write(&dir, glassbench::store::ArtifactKind::Report, "eval table1", &cfg, cfg.sim.seed, &p, &[])?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: {} on {} failed: {}", r.model, r.data, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn ablation(ctx: &Ctx, a: &AblationArgs) -> CliResult {
    let mut cfg: AblationConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(q) = a.q {
        cfg.q = q;
    }
    if let Some(n) = a.n {
        cfg.sim.n_subjects = n;
    }
    if let Some(s) = a.steps {
        cfg.n_steps = s;
    }
    if let Some(e) = a.epochs {
        cfg.transformer.epochs = e;
    }
    if let Some(s) = ctx.global.seed {
        cfg.sim.seed = s;
        cfg.transformer.seed = s;
    }
    if !(cfg.q > 0.0 && cfg.q < 1.0) {
        return Err(CliError::Usage(format!("--q {} must be in (0, 1)", cfg.q)));
    }
    let stored = match &a.model {
        Some(path) => {
            let (model, art) = load_model(path)?;
            let glassbench::store::SavedModel::Transformer { network } = model else {
                return Err(CliError::Usage("ablation needs a transformer or cbm model".into()));
            };
            cfg.transformer = network.config.clone();
            let ds = model_dataset(&art)?;
            cfg.sim = ds.config.clone();
            Some((network, ds, art.reference()))
        }
        None => {
            fit_transformer_to(&mut cfg.transformer, cfg.sim.n_timepoints, cfg.sim.n_species, cfg.sim.n_communities);
            None
        }
    };
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    let (network, ds, upstream): (_, _, Vec<ArtifactRef>) = match stored {
        Some((n, ds, r)) => (n, ds, vec![r]),
        None => {
            let ds = simulate(&cfg.sim)?;
            eprintln!("training a {}-layer transformer for {} epochs", cfg.transformer.n_layer, cfg.transformer.epochs);
            (train::<f32>(Mode::Plain, &ds, &cfg.transformer)?.model, ds, vec![])
        }
    };
    let rec = transformer_ablation(&network, &ds, network.mode, &cfg.transformer, cfg.q, cfg.n_steps)?;
    println!(
        "q = {}: {} of {} cells masked; reference accuracy {:.3}",
        rec.q, rec.n_masked, rec.n_cells, rec.reference_accuracy
    );
    println!("guided drop {:.3}, random drop {:.3}, gap {:+.3}", rec.guided_drop, rec.random_drop, rec.gap);
    let mut p = Payload::new();
    p.add("ablation.csv", ablation_csv(std::slice::from_ref(&rec)));
    p.add("report.json", json(&EvalReport { ablation: vec![rec], ..Default::default() })?);
    let name = match &a.model {
        Some(m) => format!("ablation-{}", stem(m)),
        None => format!("ablation-q{}-seed{}", cfg.q, cfg.sim.seed),
    };
    ctx.write(&ctx.target("reports", &name), glassbench::store::ArtifactKind::Report, "eval ablation", &cfg, cfg.sim.seed, &p, &upstream)?;
    Ok(())
}

fn stability(ctx: &Ctx, a: &StabilityArgs) -> CliResult {
    let mut cfg: StabilityConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(n) = a.n {
        cfg.sim.n_subjects = n;
    }
    if let Some(s) = ctx.global.seed {
        cfg.seeds = vec![s];
    }
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    let rows = run_stability(&cfg.sim, &cfg.seeds, &cfg.cv)?;
    println!("{:>6} {:<11} {:>8} {:>14} {:>13}", "seed", "data", "overlap", "sign-agreeing", "active sizes");
    for r in &rows {
        println!("{:>6} {:<11} {:>8} {:>14} {:>13}", r.seed, r.representation.as_str(), r.overlap, r.sign_agreeing, format!("{:?}", r.active_sizes));
    }
    let wins = cfg
        .seeds
        .iter()
        .filter(|&&s| {
            let get = |rep| rows.iter().find(|r| r.seed == s && r.representation == rep).map(|r| r.overlap);
            get(Representation::Featurized) > get(Representation::Raw)
        })
        .count();
    println!("featurized overlap larger than raw on {wins} of {} seeds", cfg.seeds.len());
    let mut p = Payload::new();
    p.add("stability.csv", stability_csv(&rows));
    p.add("report.json", json(&EvalReport { stability: rows, ..Default::default() })?);
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    ctx.write(&ctx.target("reports", "stability"), glassbench::store::ArtifactKind::Report, "eval stability", &cfg, seed, &p, &[])?;
    Ok(())
}

fn faithfulness(ctx: &Ctx, a: &FaithfulnessArgs) -> CliResult {
    let mut cfg: FaithfulnessConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(s) = &a.samples {
        cfg.samples = s.clone();
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(s) = a.steps {
        cfg.n_steps = s;
    }
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    let (model, art) = load_model(&a.model)?;
    let glassbench::store::SavedModel::Transformer { network } = model else {
        return Err(CliError::Usage("faithfulness needs a transformer or cbm model".into()));
    };
    let ds = model_dataset(&art)?;
    let samples = if cfg.samples.is_empty() { ds.val_indices() } else { cfg.samples.clone() };
    let base = Baseline::Zero.resolve(&network, &ds)?;
    let (mut ig, mut occ) = (Vec::new(), Vec::new());
    for &i in &samples {
        let x = model_input(&network, &ds, i)?;
        ig.push(integrated_gradients(&network, i, &x, 1, &base, "zero", cfg.n_steps)?);
        occ.push(occlusion(&network, i, &x, 1, &base, "zero", cfg.window)?);
    }
    let rep = ground_truth_faithfulness(&ig, &ds, Some(&occ), cfg.k)?;
    match rep.status {
        FaithfulnessStatus::NoSignal => println!("no subject has ground-truth signal cells; nothing to score"),
        FaithfulnessStatus::Scored => println!(
            "precision@{}: {:.3} (base rate {:.3}); IG vs occlusion Spearman {:.3} over {} subjects",
            rep.k,
            rep.precision_at_k.unwrap_or(f64::NAN),
            rep.base_rate.unwrap_or(f64::NAN),
            rep.rank_correlation.unwrap_or(f64::NAN),
            rep.n_samples
        ),
    }
    let mut p = Payload::new();
    let mut csv = String::from("sample,n_truth,precision_at_k,rank_correlation\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &rep.per_sample {
        csv.push_str(&format!("{},{},{},{}\n", s.sample, s.n_truth, opt(s.precision_at_k), opt(s.rank_correlation)));
    }
    p.add("faithfulness.csv", csv);
    attribution_payload(&ig, &mut p);
    p.add("report.json", json(&EvalReport { faithfulness: vec![rep], ..Default::default() })?);
    ctx.write(&ctx.target("reports", &format!("faithfulness-{}", stem(&art.path))), glassbench::store::ArtifactKind::Report, "eval faithfulness", &cfg, art.manifest.seed, &p, &[art.reference()])?;
    Ok(())
}

pub fn cmd_eval(ctx: &Ctx, e: &EvalCommand) -> CliResult {
    match e {
        EvalCommand::Table1(a) => table1(ctx, a),
        EvalCommand::Ablation(a) => ablation(ctx, a),
        EvalCommand::Stability(a) => stability(ctx, a),
        EvalCommand::Faithfulness(a) => faithfulness(ctx, a),
    }
}
