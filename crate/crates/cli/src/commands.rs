use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mgmw::attack::{attack_batch, AttackConfig, BatchEntry};
use mgmw::classifier::{
    accuracy, generate_synthetic_dataset_with, train_classifier, ClassifierHandle,
    ClassifierModel, LabeledDataset, LabeledMotion, Split, SyntheticSpec, TrainReport,
};
use mgmw::defense::{gaussian_smoothing_train, mmat_train as run_mmat, robustness_probe, MmatReport};
use mgmw::metrics::{
    batch_metrics, confusion_matrix, deviation_histogram, render_table, DeviationHistogram,
    MetricsReport,
};
use mgmw::Skeleton;

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] mgmw::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Message(String),
}

type Result<T> = std::result::Result<T, CliError>;

const TRAIN_DATA: &str = "train.json";
const TEST_DATA: &str = "test.json";
const MODEL: &str = "model.json";
const TRAIN_REPORT: &str = "train_report.json";
const MMAT_MODEL: &str = "mmat_model.json";
const MMAT_REPORT: &str = "mmat_report.json";
const GS_REPORT: &str = "gs_report.json";
const EVALUATE: &str = "evaluate.json";
const REPORT_JSON: &str = "report.json";
const REPORT_TEXT: &str = "report.txt";

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, hint: &str) -> Result<T> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::Message(format!("{} not found; run `{hint}` first", path.display()))
        } else {
            CliError::Io {
                path: path.clone(),
                source,
            }
        }
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path, source })
}

fn read_optional<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>> {
    if dir.join(name).exists() {
        read_json(dir, name, "").map(Some)
    } else {
        Ok(None)
    }
}

/// A trained model with the configuration that produced it.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ExperimentConfig,
    model: ClassifierModel,
}

fn load_data(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok((
        read_json(&cfg.out, TRAIN_DATA, "mgmw gen-data")?,
        read_json(&cfg.out, TEST_DATA, "mgmw gen-data")?,
    ))
}

/// First `n` motions taken round-robin over the classes of `data`, with
/// their dataset indices.
fn select_targets(data: &LabeledDataset, n: usize) -> Vec<(usize, LabeledMotion)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
    for (i, s) in data.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut out = Vec::new();
    let deepest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for round in 0..deepest {
        for class in &by_class {
            if let Some(&i) = class.get(round) {
                out.push((i, data.samples()[i].clone()));
                if out.len() == n {
                    break 'outer;
                }
            }
        }
    }
    out
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let skeleton = Skeleton::humanoid();
    let seeds = cfg.seeds();
    let spec = &cfg.data.synthetic;
    let train = generate_synthetic_dataset_with(&skeleton, spec, seeds.train_data, Split::Train)?;
    let test_spec = SyntheticSpec {
        per_class: cfg.data.test_per_class,
        ..spec.clone()
    };
    let test =
        generate_synthetic_dataset_with(&skeleton, &test_spec, seeds.test_data, Split::Test)?;
    write_json(&cfg.out, TRAIN_DATA, &train)?;
    write_json(&cfg.out, TEST_DATA, &test)?;
    println!(
        "wrote {} training and {} test motions ({} classes, {} frames) to {}",
        train.len(),
        test.len(),
        train.classes(),
        train.n_frames(),
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrainArtifact {
    config: ExperimentConfig,
    report: TrainReport,
    test_accuracy: f64,
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    let (model, report) = train_classifier(&train, &cfg.train)?;
    let test_accuracy = accuracy(&model, &test)?;
    write_json(
        &cfg.out,
        MODEL,
        &Checkpoint {
            config: cfg.clone(),
            model,
        },
    )?;
    println!(
        "train accuracy {:.4}, test accuracy {test_accuracy:.4}",
        report.train_accuracy
    );
    write_json(
        &cfg.out,
        TRAIN_REPORT,
        &TrainArtifact {
            config: cfg.clone(),
            report,
            test_accuracy,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct AttackArtifact {
    config: ExperimentConfig,
    classifier: String,
    /// Test-set index of every attacked motion, in batch order.
    targets: Vec<usize>,
    entries: Vec<BatchEntry>,
    metrics: Option<MetricsReport>,
}

fn attack_file(settings: &AttackConfig) -> &'static str {
    if settings.manifold_projection {
        "attack_mp.json"
    } else {
        "attack_nomp.json"
    }
}

fn handle_for(cfg: &ExperimentConfig) -> Result<ClassifierHandle> {
    match cfg.attack.classifier.strip_prefix("extern:") {
        Some(cmd) => Ok(ClassifierHandle::external(cmd)?),
        None => {
            let ck: Checkpoint = read_json(&cfg.out, MODEL, "mgmw train")?;
            Ok(ClassifierHandle::builtin(ck.model))
        }
    }
}

pub fn attack(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    let handle = handle_for(cfg)?;
    let chosen = select_targets(&test, cfg.attack.targets);
    let targets: Vec<LabeledMotion> = chosen.iter().map(|(_, t)| t.clone()).collect();
    let skeleton = train.skeleton().clone();
    let settings = &cfg.attack.settings;
    let entries = attack_batch(&handle, &targets, &train, &skeleton, settings);
    let attacked = entries.iter().filter(|e| e.result().is_some()).count();
    let metrics = if attacked > 0 {
        Some(batch_metrics(
            &entries,
            &targets,
            &skeleton,
            &cfg.evaluate.metrics,
        )?)
    } else {
        None
    };
    for e in &entries {
        if let BatchEntry::Failed { index, message } = e {
            eprintln!("warning: motion {index} failed: {message}");
        }
    }
    let name = attack_file(settings);
    if let Some(m) = &metrics {
        print!("{}", render_table(&[(run_name(name), m)]));
    } else {
        println!("no motion could be attacked");
    }
    write_json(
        &cfg.out,
        name,
        &AttackArtifact {
            config: cfg.clone(),
            classifier: cfg.attack.classifier.clone(),
            targets: chosen.iter().map(|(i, _)| *i).collect(),
            entries,
            metrics,
        },
    )
}

fn run_name(file: &str) -> &'static str {
    if file == "attack_mp.json" {
        "MP"
    } else {
        "NoMP"
    }
}

/// One row of a robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    pub name: String,
    pub accuracy: f64,
    pub l: f64,
    pub delta_a: f64,
    pub bone_deviation: f64,
    pub success_rate: Option<f64>,
}

fn probe_row(
    name: &str,
    model: &ClassifierModel,
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<DefenseRow> {
    let targets: Vec<LabeledMotion> = select_targets(test, cfg.defense.probe_targets)
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let m = robustness_probe(model, &targets, train, train.skeleton(), &cfg.defense.probe)?;
    Ok(DefenseRow {
        name: name.to_string(),
        accuracy: accuracy(model, test)?,
        l: m.l,
        delta_a: m.delta_a,
        bone_deviation: m.bone_deviation,
        success_rate: m.success_rate,
    })
}

fn render_defense(rows: &[DefenseRow]) -> String {
    let mut out = format!(
        "{:<16} {:>10} {:>10} {:>10} {:>8}\n",
        "model", "l", "Δa", "ΔB/B %", "Acc %"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<16} {:>10.6} {:>10.6} {:>10.4} {:>8.2}\n",
            r.name,
            r.l,
            r.delta_a,
            r.bone_deviation * 100.0,
            r.accuracy * 100.0
        ));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct MmatArtifact {
    config: ExperimentConfig,
    report: MmatReport,
    rows: Vec<DefenseRow>,
}

pub fn mmat_train(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    let (standard, _) = train_classifier(&train, &cfg.train)?;
    let (model, report) = run_mmat(&train, &cfg.defense.settings)?;
    let rows = vec![
        probe_row("standard", &standard, cfg, &train, &test)?,
        probe_row("mmat", &model, cfg, &train, &test)?,
    ];
    print!("{}", render_defense(&rows));
    write_json(
        &cfg.out,
        MMAT_MODEL,
        &Checkpoint {
            config: cfg.clone(),
            model,
        },
    )?;
    write_json(
        &cfg.out,
        MMAT_REPORT,
        &MmatArtifact {
            config: cfg.clone(),
            report,
            rows,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct GsArtifact {
    config: ExperimentConfig,
    rows: Vec<DefenseRow>,
}

pub fn gs_train(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    let (standard, _) = train_classifier(&train, &cfg.train)?;
    let mut rows = vec![probe_row("standard", &standard, cfg, &train, &test)?];
    for (i, &sigma) in cfg.defense.sigmas.iter().enumerate() {
        let (model, _) = gaussian_smoothing_train(&train, sigma, &cfg.defense.kernel, &cfg.train)?;
        rows.push(probe_row(&format!("GS(σ={sigma})"), &model, cfg, &train, &test)?);
        write_json(
            &cfg.out,
            &format!("gs_model_{i}.json"),
            &Checkpoint {
                config: cfg.clone(),
                model,
            },
        )?;
    }
    print!("{}", render_defense(&rows));
    write_json(
        &cfg.out,
        GS_REPORT,
        &GsArtifact {
            config: cfg.clone(),
            rows,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct Evaluation {
    run: String,
    metrics: MetricsReport,
    confusion: Vec<Vec<u64>>,
    histogram: DeviationHistogram,
}

#[derive(Serialize, Deserialize)]
struct EvaluateArtifact {
    config: ExperimentConfig,
    runs: Vec<Evaluation>,
}

fn attack_runs(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, AttackArtifact)>> {
    let mut runs = Vec::new();
    for file in ["attack_mp.json", "attack_nomp.json"] {
        if let Some(a) = read_optional::<AttackArtifact>(&cfg.out, file)? {
            runs.push((run_name(file), a));
        }
    }
    Ok(runs)
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let (_, test) = load_data(cfg)?;
    let runs = attack_runs(cfg)?;
    if runs.is_empty() {
        return Err(CliError::Message(format!(
            "no attack results in {}; run `mgmw attack` first",
            cfg.out.display()
        )));
    }
    let skeleton = test.skeleton().clone();
    let mut out = Vec::new();
    for (name, a) in runs {
        let targets: Vec<LabeledMotion> =
            a.targets.iter().map(|&i| test.samples()[i].clone()).collect();
        let metrics = batch_metrics(&a.entries, &targets, &skeleton, &cfg.evaluate.metrics)?;
        let records: Vec<(usize, usize)> = a
            .entries
            .iter()
            .filter_map(|e| e.result().map(|r| (r.original_label, r.final_label)))
            .collect();
        let confusion = confusion_matrix(&records, test.classes())?;
        let pairs: Vec<_> = a
            .entries
            .iter()
            .filter_map(|e| {
                e.result()
                    .map(|r| (targets[e.index()].motion.clone(), r.adversarial.clone()))
            })
            .collect();
        let histogram = deviation_histogram(
            &pairs,
            &skeleton,
            &cfg.evaluate.metrics.tolerance,
            cfg.evaluate.bucketing,
        )?;
        println!("{name}: confusion (rows: original, columns: adversarial)");
        for row in &confusion {
            println!("  {row:?}");
        }
        out.push(Evaluation {
            run: name.to_string(),
            metrics,
            confusion,
            histogram,
        });
    }
    let rows: Vec<(&str, &MetricsReport)> =
        out.iter().map(|e| (e.run.as_str(), &e.metrics)).collect();
    print!("{}", render_table(&rows));
    write_json(
        &cfg.out,
        EVALUATE,
        &EvaluateArtifact {
            config: cfg.clone(),
            runs: out,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct ReportArtifact {
    config: ExperimentConfig,
    test_accuracy: Option<f64>,
    attacks: Vec<(String, MetricsReport)>,
    mmat: Vec<DefenseRow>,
    gaussian_smoothing: Vec<DefenseRow>,
}

pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.out;
    let train: Option<TrainArtifact> = read_optional(dir, TRAIN_REPORT)?;
    let mut attacks = Vec::new();
    for (name, a) in attack_runs(cfg)? {
        if let Some(m) = a.metrics {
            attacks.push((name.to_string(), m));
        }
    }
    let mmat: Vec<DefenseRow> = read_optional::<MmatArtifact>(dir, MMAT_REPORT)?
        .map(|a| a.rows)
        .unwrap_or_default();
    let gs: Vec<DefenseRow> = read_optional::<GsArtifact>(dir, GS_REPORT)?
        .map(|a| a.rows)
        .unwrap_or_default();
    let mut text = String::new();
    if let Some(t) = &train {
        text.push_str(&format!("clean test accuracy: {:.4}\n\n", t.test_accuracy));
    }
    if !attacks.is_empty() {
        let rows: Vec<(&str, &MetricsReport)> =
            attacks.iter().map(|(n, m)| (n.as_str(), m)).collect();
        text.push_str("attack\n");
        text.push_str(&render_table(&rows));
        text.push('\n');
    }
    if !mmat.is_empty() {
        text.push_str("mmat robustness\n");
        text.push_str(&render_defense(&mmat));
        text.push('\n');
    }
    if !gs.is_empty() {
        text.push_str("gaussian smoothing robustness\n");
        text.push_str(&render_defense(&gs));
        text.push('\n');
    }
    if text.is_empty() {
        return Err(CliError::Message(format!(
            "no artifacts in {}",
            dir.display()
        )));
    }
    print!("{text}");
    write_text(dir, REPORT_TEXT, &text)?;
    write_json(
        dir,
        REPORT_JSON,
        &ReportArtifact {
            config: cfg.clone(),
            test_accuracy: train.map(|t| t.test_accuracy),
            attacks,
            mmat,
            gaussian_smoothing: gs,
        },
    )
}
