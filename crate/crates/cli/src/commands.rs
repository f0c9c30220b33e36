//! Implementations of the CLI subcommands.

use std::collections::HashMap;
use std::path::Path;

use serde_json::json;

use molr::datagen::{self, TemplateKind};
use molr::encoder::{encode_molecule, encode_side, EncoderConfig, GnnKind, Readout};
use molr::eval;
use molr::ged;
use molr::graph::MolecularGraph;
use molr::numeric::Matrix;
use molr::probe::{self, FeatureMode};
use molr::smiles::{parse_molecule, write_smiles};
use molr::train::{self, ModelCheckpoint, TrainConfig};

use crate::args;
use crate::support::{
    format_float, parallel_map, read_reactions, split_811, write_sidecar, CliError,
    REACTION_HEADER,
};

pub fn train(args: &args::TrainArgs) -> Result<(), CliError> {
    let gnn_kind = GnnKind::parse(&args.gnn)
        .ok_or_else(|| CliError::Config(format!("unknown --gnn '{}'", args.gnn)))?;
    let readout = match args.readout.as_str() {
        "sum" => Readout::Sum,
        "mean" => Readout::Mean,
        other => return Err(CliError::Config(format!("unknown --readout '{}'", other))),
    };
    let config = TrainConfig {
        margin: args.margin,
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        encoder: EncoderConfig {
            gnn_kind,
            dims: vec![args.dim; args.layers],
            gat_heads: args.heads,
            tag_filter: args.tag_l,
            readout,
        },
    };
    config.validate()?;

    let dataset = read_reactions(&args.data)?;
    let validation = match &args.val {
        Some(path) => Some(read_reactions(path)?),
        None => None,
    };
    let outcome = train::train(&dataset, &config, validation.as_deref())?;

    std::fs::create_dir_all(&args.out)?;
    outcome.checkpoint.save(&args.out)?;
    let log_path = args.out.join("train_log.csv");
    let mut log = String::from("epoch,mean_loss,val_mrr\n");
    for row in &outcome.log {
        log.push_str(&format!(
            "{},{},{}\n",
            row.epoch,
            format_float(row.mean_loss),
            row.val_mrr.map(format_float).unwrap_or_default()
        ));
    }
    std::fs::write(&log_path, log)?;
    write_sidecar(
        &log_path,
        json!({
            "command": "train",
            "model_hash": outcome.checkpoint.model_hash(),
            "config": outcome.checkpoint.manifest.train,
            "data": args.data.display().to_string(),
            "val": args.val.as_ref().map(|p| p.display().to_string()),
        }),
    )?;
    eprintln!(
        "trained {} epochs; final mean loss {:.6}; model written to {}",
        outcome.log.len(),
        outcome.log.last().map_or(f64::NAN, |l| l.mean_loss),
        args.out.display()
    );
    Ok(())
}

fn load_model(dir: &Path) -> Result<ModelCheckpoint, CliError> {
    Ok(ModelCheckpoint::load(dir)?)
}

pub fn embed(args: &args::EmbedArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let dim = model.encoder_config().output_dim();
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Data(format!("{}: {}", args.input.display(), e)))?;
    let lines: Vec<&str> = text.lines().collect();

    let rows: Vec<Result<Vec<f64>, String>> = parallel_map(&lines, |line| {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err("empty line".to_string());
        }
        let graph = parse_molecule(trimmed).map_err(|e| e.to_string())?;
        encode_molecule(
            &graph,
            model.vocab(),
            model.encoder_config(),
            &model.weights,
        )
        .map_err(|e| e.to_string())
    });

    let mut csv = String::from("id");
    for d in 0..dim {
        csv.push_str(&format!(",dim_{}", d));
    }
    csv.push_str(",error\n");
    let mut failures = 0usize;
    for (i, row) in rows.iter().enumerate() {
        csv.push_str(&i.to_string());
        match row {
            Ok(embedding) => {
                for v in embedding {
                    csv.push(',');
                    csv.push_str(&format_float(*v));
                }
                csv.push_str(",\n");
            }
            Err(message) => {
                failures += 1;
                for _ in 0..dim {
                    csv.push(',');
                }
                csv.push_str(&format!(",{}\n", message.replace(',', ";")));
            }
        }
    }
    std::fs::write(&args.out, csv)?;
    write_sidecar(
        &args.out,
        json!({
            "command": "embed",
            "model_hash": model.model_hash(),
            "config": model.manifest.train,
            "input": args.input.display().to_string(),
            "lines": lines.len(),
            "failures": failures,
        }),
    )?;
    if !lines.is_empty() && failures * 2 > lines.len() {
        return Err(CliError::Data(format!(
            "{} of {} lines failed to parse",
            failures,
            lines.len()
        )));
    }
    Ok(())
}

pub fn rank(args: &args::RankArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let test = read_reactions(&args.data)?;
    if test.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no reactions",
            args.data.display()
        )));
    }
    let (pool, truth) = eval::build_candidate_pool(&test);
    let pool_embeddings: Vec<Vec<f64>> = parallel_map(&pool, |g| {
        encode_molecule(g, model.vocab(), model.encoder_config(), &model.weights)
            .expect("pool graphs validated at parse time")
    });
    let queries: Vec<Vec<f64>> = parallel_map(&test, |r| {
        encode_side(
            &r.reactants,
            model.vocab(),
            model.encoder_config(),
            &model.weights,
        )
        .expect("test graphs validated at parse time")
    });
    let mut ranks = Vec::with_capacity(test.len());
    for (query, &t) in queries.iter().zip(&truth) {
        let rank = eval::rank_products(query, &pool_embeddings, t)
            .map_err(|e| CliError::Data(e.to_string()))?;
        ranks.push(rank);
    }
    let report = eval::ranking_metrics(&ranks).map_err(|e| CliError::Data(e.to_string()))?;

    let report_json = json!({
        "mrr": report.mrr,
        "mr": report.mr,
        "hit1": report.hit1,
        "hit3": report.hit3,
        "hit5": report.hit5,
        "hit10": report.hit10,
        "queries": test.len(),
        "pool_size": pool.len(),
        "model_hash": model.model_hash(),
        "config": model.manifest.train,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&report_json)?)?;

    let mut per_query = String::from("id,rank,truth_index\n");
    for ((reaction, rank), &t) in test.iter().zip(&report.ranks).zip(&truth) {
        per_query.push_str(&format!("{},{},{}\n", reaction.id, rank, t));
    }
    std::fs::write(&args.per_query, per_query)?;
    write_sidecar(
        &args.per_query,
        json!({
            "command": "rank",
            "model_hash": model.model_hash(),
            "config": model.manifest.train,
            "data": args.data.display().to_string(),
            "pool_size": pool.len(),
        }),
    )?;
    println!(
        "mrr {:.4} mr {:.1} hit@1 {:.4} hit@3 {:.4} hit@5 {:.4} hit@10 {:.4} (pool {})",
        report.mrr,
        report.mr,
        report.hit1,
        report.hit3,
        report.hit5,
        report.hit10,
        pool.len()
    );
    Ok(())
}

const CHOICE_HEADER: &str = "id\treactants\tchoices\tanswer";

pub fn choice(args: &args::ChoiceArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let text = std::fs::read_to_string(&args.data)
        .map_err(|e| CliError::Data(format!("{}: {}", args.data.display(), e)))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == CHOICE_HEADER => {}
        _ => {
            return Err(CliError::Data(format!(
                "{} line 1: expected header '{}'",
                args.data.display(),
                CHOICE_HEADER
            )))
        }
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut selections = Vec::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = index + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(CliError::Data(format!(
                "{} line {}: expected 4 columns, found {}",
                args.data.display(),
                line_no,
                cols.len()
            )));
        }
        let data_err = |what: &str, e: &dyn std::fmt::Display| {
            CliError::Data(format!(
                "{} line {}: {}: {}",
                args.data.display(),
                line_no,
                what,
                e
            ))
        };
        let reactants: Vec<MolecularGraph> = cols[1]
            .split('.')
            .map(parse_molecule)
            .collect::<Result<_, _>>()
            .map_err(|e| data_err("reactants", &e))?;
        let choices: Vec<MolecularGraph> = cols[2]
            .split('.')
            .map(parse_molecule)
            .collect::<Result<_, _>>()
            .map_err(|e| data_err("choices", &e))?;
        if choices.len() < 2 {
            return Err(CliError::Data(format!(
                "{} line {}: need at least 2 choices",
                args.data.display(),
                line_no
            )));
        }
        let answer: usize = cols[3]
            .trim()
            .parse()
            .map_err(|e| data_err("answer index", &e))?;
        if answer >= choices.len() {
            return Err(CliError::Data(format!(
                "{} line {}: answer {} outside {} choices",
                args.data.display(),
                line_no,
                answer,
                choices.len()
            )));
        }
        let query = encode_side(
            &reactants,
            model.vocab(),
            model.encoder_config(),
            &model.weights,
        )?;
        let choice_embeddings: Vec<Vec<f64>> = choices
            .iter()
            .map(|g| encode_molecule(g, model.vocab(), model.encoder_config(), &model.weights))
            .collect::<Result<_, _>>()?;
        let (selected, is_correct) = eval::multi_choice(&query, &choice_embeddings, answer);
        correct += is_correct as usize;
        total += 1;
        selections.push(json!({
            "id": cols[0],
            "selected": selected,
            "answer": answer,
            "correct": is_correct,
        }));
    }
    if total == 0 {
        return Err(CliError::Data("no questions".to_string()));
    }
    let accuracy = correct as f64 / total as f64;
    let out = json!({
        "accuracy": accuracy,
        "correct": correct,
        "total": total,
        "selections": selections,
        "model_hash": model.model_hash(),
        "config": model.manifest.train,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)?;
    println!("accuracy {:.4} ({}/{})", accuracy, correct, total);
    Ok(())
}

fn read_csv_records(path: &Path, expected_header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == expected_header => {}
        _ => {
            return Err(CliError::Data(format!(
                "{} line 1: expected header '{}'",
                path.display(),
                expected_header
            )))
        }
    }
    let n_cols = expected_header.split(',').count();
    let mut records = Vec::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cols.len() != n_cols {
            return Err(CliError::Data(format!(
                "{} line {}: expected {} columns, found {}",
                path.display(),
                index + 1,
                n_cols,
                cols.len()
            )));
        }
        records.push(cols);
    }
    Ok(records)
}

/// Parses and embeds each distinct SMILES once.
fn embedding_cache(
    smiles: impl Iterator<Item = String>,
    model: &ModelCheckpoint,
    source: &Path,
) -> Result<HashMap<String, Vec<f64>>, CliError> {
    let unique: Vec<String> = {
        let mut seen = std::collections::BTreeSet::new();
        smiles.filter(|s| seen.insert(s.clone())).collect()
    };
    let embedded: Vec<Result<Vec<f64>, String>> = parallel_map(&unique, |s| {
        let graph = parse_molecule(s).map_err(|e| e.to_string())?;
        encode_molecule(&graph, model.vocab(), model.encoder_config(), &model.weights)
            .map_err(|e| e.to_string())
    });
    let mut cache = HashMap::new();
    for (s, e) in unique.into_iter().zip(embedded) {
        match e {
            Ok(v) => {
                cache.insert(s, v);
            }
            Err(message) => {
                return Err(CliError::Data(format!(
                    "{}: '{}': {}",
                    source.display(),
                    s,
                    message
                )))
            }
        }
    }
    Ok(cache)
}

pub fn probe_prop(args: &args::ProbePropArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let records = read_csv_records(&args.data, "smiles,label")?;
    if records.len() < 10 {
        return Err(CliError::Data(format!(
            "need at least 10 labeled molecules, got {}",
            records.len()
        )));
    }
    let labels: Vec<bool> = records
        .iter()
        .map(|r| match r[1].as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(CliError::Data(format!("label '{}' is not 0/1", other))),
        })
        .collect::<Result<_, _>>()?;
    let cache = embedding_cache(records.iter().map(|r| r[0].clone()), &model, &args.data)?;
    let features: Vec<&Vec<f64>> = records.iter().map(|r| &cache[&r[0]]).collect();

    let mut aucs = Vec::new();
    let mut skipped = 0usize;
    for rep in 0..args.repetitions {
        let (train_idx, _val_idx, test_idx) = split_811(records.len(), args.seed + rep as u64);
        let train_x = Matrix::from_rows(
            &train_idx
                .iter()
                .map(|&i| features[i].clone())
                .collect::<Vec<_>>(),
        )
        .map_err(|e| CliError::Data(e.to_string()))?;
        let train_y: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
        let test_y: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
        if single_class(&train_y) || single_class(&test_y) {
            skipped += 1;
            continue;
        }
        let weights = probe::logistic_fit(&train_x, &train_y, args.l2, args.iters)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let test_x = Matrix::from_rows(
            &test_idx
                .iter()
                .map(|&i| features[i].clone())
                .collect::<Vec<_>>(),
        )
        .map_err(|e| CliError::Data(e.to_string()))?;
        let scores = probe::logistic_predict(&test_x, &weights);
        aucs.push(
            probe::auc(&scores, &test_y).map_err(|e| CliError::Data(e.to_string()))?,
        );
    }
    if aucs.is_empty() {
        return Err(CliError::Data(
            "every repetition had a single-class split".to_string(),
        ));
    }
    let (mean, std) = mean_std(&aucs);
    let out = json!({
        "metric": "auc",
        "value": mean,
        "std": std,
        "repetitions": aucs,
        "skipped_single_class": skipped,
        "split": "8:1:1",
        "n": records.len(),
        "seed": args.seed,
        "l2": args.l2,
        "model_hash": model.model_hash(),
        "config": model.manifest.train,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)?;
    println!("auc {:.4} +- {:.4} over {} repetitions", mean, std, aucs.len());
    Ok(())
}

fn single_class(labels: &[bool]) -> bool {
    labels.iter().all(|&l| l) || labels.iter().all(|&l| !l)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn probe_ged(args: &args::ProbeGedArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let records = read_csv_records(&args.data, "smiles_a,smiles_b,ged")?;
    if records.len() < 10 {
        return Err(CliError::Data(format!(
            "need at least 10 pairs, got {}",
            records.len()
        )));
    }
    let targets: Vec<f64> = records
        .iter()
        .map(|r| {
            r[2].parse::<f64>()
                .map_err(|e| CliError::Data(format!("ged '{}': {}", r[2], e)))
        })
        .collect::<Result<_, _>>()?;
    let cache = embedding_cache(
        records.iter().flat_map(|r| [r[0].clone(), r[1].clone()]),
        &model,
        &args.data,
    )?;

    let mut modes = serde_json::Map::new();
    for mode in [FeatureMode::Concat, FeatureMode::Subtract] {
        let features: Vec<Vec<f64>> = records
            .iter()
            .map(|r| probe::ged_features(&cache[&r[0]], &cache[&r[1]], mode))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?;
        let mut rmses = Vec::new();
        for rep in 0..args.repetitions {
            let (train_idx, _val_idx, test_idx) = split_811(records.len(), args.seed + rep as u64);
            let train_x = Matrix::from_rows(
                &train_idx
                    .iter()
                    .map(|&i| features[i].clone())
                    .collect::<Vec<_>>(),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let train_y: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
            let weights = probe::ridge_fit(&train_x, &train_y, args.lambda)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let test_x = Matrix::from_rows(
                &test_idx
                    .iter()
                    .map(|&i| features[i].clone())
                    .collect::<Vec<_>>(),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let predictions = probe::ridge_predict(&test_x, &weights);
            let truth: Vec<f64> = test_idx.iter().map(|&i| targets[i]).collect();
            rmses.push(probe::rmse(&predictions, &truth));
        }
        let (mean, std) = mean_std(&rmses);
        modes.insert(
            mode.name().to_string(),
            json!({ "mean": mean, "std": std, "repetitions": rmses }),
        );
        println!("{} rmse {:.4} +- {:.4}", mode.name(), mean, std);
    }
    let out = json!({
        "metric": "rmse",
        "modes": modes,
        "split": "8:1:1",
        "n": records.len(),
        "seed": args.seed,
        "lambda": args.lambda,
        "model_hash": model.model_hash(),
        "config": model.manifest.train,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

pub fn ged_exact(args: &args::GedExactArgs) -> Result<(), CliError> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Data(format!("{}: {}", args.input.display(), e)))?;
    let mut molecules: Vec<(String, MolecularGraph)> = Vec::new();
    let mut oversized = 0usize;
    for (index, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let graph = parse_molecule(trimmed).map_err(|e| {
            CliError::Data(format!(
                "{} line {}: {}",
                args.input.display(),
                index + 1,
                e
            ))
        })?;
        if graph.atom_count() > args.max_nodes {
            oversized += 1;
            continue;
        }
        molecules.push((trimmed.to_string(), graph));
    }
    if molecules.len() < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 molecules within --max-nodes {}, got {}",
            args.max_nodes,
            molecules.len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut csv = String::from("smiles_a,smiles_b,ged\n");
    for _ in 0..args.pairs {
        let i = rng.random_range(0..molecules.len());
        let mut j = rng.random_range(0..molecules.len() - 1);
        if j >= i {
            j += 1;
        }
        let distance = ged::ged_exact(&molecules[i].1, &molecules[j].1, args.max_nodes)
            .map_err(|e| CliError::Data(e.to_string()))?;
        csv.push_str(&format!(
            "{},{},{}\n",
            molecules[i].0, molecules[j].0, distance
        ));
    }
    std::fs::write(&args.out, csv)?;
    write_sidecar(
        &args.out,
        json!({
            "command": "ged-exact",
            "input": args.input.display().to_string(),
            "pairs": args.pairs,
            "seed": args.seed,
            "max_nodes": args.max_nodes,
            "molecules_used": molecules.len(),
            "molecules_oversized": oversized,
        }),
    )?;
    Ok(())
}

pub fn gen(args: &args::GenArgs) -> Result<(), CliError> {
    let instances = match args.template.as_str() {
        "all" => datagen::generate_mixed_corpus(args.n, args.seed),
        name => {
            let kind = TemplateKind::parse(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown --template '{}' (ester, oxidation, substitution, all)",
                    name
                ))
            })?;
            datagen::generate_template_reactions(kind, args.n, args.seed)
        }
    };
    let mut tsv = String::from(REACTION_HEADER);
    tsv.push('\n');
    for (i, inst) in instances.iter().enumerate() {
        tsv.push_str(&inst.to_tsv_line(&i.to_string()));
        tsv.push('\n');
    }
    std::fs::write(&args.out, tsv)?;
    write_sidecar(
        &args.out,
        json!({
            "command": "gen",
            "template": args.template,
            "n": instances.len(),
            "seed": args.seed,
        }),
    )?;
    // also emit one molecule per line when asked, for embed/ged pipelines
    if let Some(mols_path) = &args.molecules {
        let mut text = String::new();
        for inst in &instances {
            for g in inst
                .reaction
                .reactants
                .iter()
                .chain(inst.reaction.products.iter())
            {
                text.push_str(&write_smiles(g));
                text.push('\n');
            }
        }
        std::fs::write(mols_path, text)?;
    }
    Ok(())
}

pub fn check(args: &args::CheckArgs) -> Result<(), CliError> {
    let reports =
        molr::diagnostics::run_all(args.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let mut failed = 0usize;
    for report in &reports {
        let tag = if report.passed { "PASS" } else { "FAIL" };
        println!("[{}] {}: {}", tag, report.name, report.detail);
        failed += (!report.passed) as usize;
    }
    if failed > 0 {
        return Err(CliError::Invariant(format!(
            "{} of {} invariant suites failed",
            failed,
            reports.len()
        )));
    }
    Ok(())
}
