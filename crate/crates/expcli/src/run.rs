//! Experiment orchestration: data, learn, unlearn, recover, and artifacts.

use std::path::{Path, PathBuf};

use unlearn_prep::data::{
    build_char_corpus, load_idx, partition_by_class, partition_random, styled_corpus, synth_blobs,
    window_dataset, CharCorpus, RiskPartition, StyledCorpus,
};
use unlearn_prep::metrics::{
    accuracy, efficiency_metric, resistance_metric, spearman, steps_to_threshold,
};
use unlearn_prep::models::{evaluate, Evaluation, ModelSpec, Role};
use unlearn_prep::prepare::{train, EvalPolicy, Schedule, TrainLog, TrainOptions, TrainerKind};
use unlearn_prep::unlearn::{recover, unlearn_until, Phase, StopRule, TrajectoryRow};
use unlearn_prep::{Dataset64, Params64, Partition64, SeededRng};

use crate::config::{DataConfig, ExperimentConfig, StopConfig, Task};
use crate::csv;
use crate::error::{CliError, Result};
use crate::report::{to_json, token_report, token_summary, MeanRecord, RunRecord, RunSummary};
use crate::snapshot;

/// Loaded experiment data.
pub enum Source {
    Labeled(Dataset64),
    Text(CharCorpus),
    Styled {
        styled: StyledCorpus,
        corpus: CharCorpus,
    },
}

pub fn load_source(cfg: &ExperimentConfig, rng: &mut SeededRng) -> Result<Source> {
    Ok(match &cfg.data {
        DataConfig::Idx {
            images,
            labels,
            limit,
        } => {
            let d = load_idx(images, labels)?;
            Source::Labeled(match limit {
                Some(n) if *n < d.len() => d.take(*n)?,
                _ => d,
            })
        }
        DataConfig::SynthBlobs {
            classes,
            per_class,
            dim,
            separation,
        } => Source::Labeled(synth_blobs(*classes, *per_class, *dim, *separation, rng)?),
        DataConfig::Corpus { path, .. } => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Source::Text(build_char_corpus(&text)?)
        }
        DataConfig::StyledCorpus { lines } => {
            let styled = styled_corpus(*lines, rng)?;
            let corpus = styled.corpus()?;
            Source::Styled { styled, corpus }
        }
    })
}

impl Source {
    fn num_outputs(&self) -> usize {
        match self {
            Source::Labeled(d) => d.num_labels(),
            Source::Text(c) | Source::Styled { corpus: c, .. } => c.vocab_size(),
        }
    }

    fn corpus(&self) -> Option<&CharCorpus> {
        match self {
            Source::Labeled(_) => None,
            Source::Text(c) | Source::Styled { corpus: c, .. } => Some(c),
        }
    }
}

fn model_spec(cfg: &ExperimentConfig, src: &Source) -> ModelSpec {
    let hidden = cfg.model.hidden.clone().unwrap_or_default();
    match src {
        Source::Labeled(d) => {
            let mut widths = vec![d.as_batch().inputs.width()];
            widths.extend(hidden);
            widths.push(d.num_labels());
            ModelSpec::classifier(&widths)
        }
        _ => ModelSpec::char_lm(
            src.num_outputs(),
            cfg.model.context.unwrap_or(16),
            cfg.model.embed.unwrap_or(32),
            hidden.first().copied().unwrap_or(128),
        ),
    }
}

fn text_windows(corpus: &CharCorpus, text: &str, context: usize, id: &str) -> Result<Dataset64> {
    let c = CharCorpus::with_vocab(corpus.vocab().to_vec(), text)?;
    let d: Dataset64 = window_dataset(&c, context)?;
    let all: Vec<usize> = (0..d.len()).collect();
    Ok(d.subset(id, &all)?)
}

/// Partition for the non-class-wise tasks.
fn random_partition(
    cfg: &ExperimentConfig,
    src: &Source,
    rng: &mut SeededRng,
) -> Result<Partition64> {
    let context = cfg.model.context.unwrap_or(16);
    Ok(match (src, &cfg.data) {
        (Source::Labeled(d), _) => partition_random(d, (0.1, 0.0, 0.0), rng)?,
        (Source::Text(c), DataConfig::Corpus { fractions, .. }) => {
            let windows: Dataset64 = window_dataset(c, context)?;
            partition_random(&windows, (fractions[0], fractions[1], fractions[2]), rng)?
        }
        (Source::Styled { styled, corpus }, _) => {
            // Training data: the forget text plus the stylistically similar
            // recovery text, which doubles as the recovery split.
            let forget = text_windows(corpus, &styled.forget, context, "forget")?;
            let recovery = text_windows(corpus, &styled.recovery, context, "recovery")?;
            let finetune = text_windows(
                corpus,
                &styled.recovery_finetune,
                context,
                "recovery_finetune",
            )?;
            RiskPartition::new(forget, recovery.clone(), Some(recovery), Some(finetune))?
        }
        _ => unreachable!("text source without corpus config"),
    })
}

fn schedule(cfg: &ExperimentConfig, prepared: Option<usize>) -> Result<Schedule<f64>> {
    let kind = cfg.trainer.kind();
    Ok(match prepared {
        Some(m) => {
            let mut epochs = vec![TrainerKind::Standard; cfg.epochs - m];
            epochs.extend(std::iter::repeat_n(kind, m));
            Schedule::new(epochs)?
        }
        None => Schedule::constant(kind, cfg.epochs)?,
    })
}

fn learning_rows(log: &TrainLog<f64>) -> Vec<TrajectoryRow<f64>> {
    log.rows
        .iter()
        .filter(|r| r.forget_loss.is_some())
        .map(|r| TrajectoryRow {
            step: r.step,
            epoch: Some(r.epoch),
            phase: Phase::Learning,
            forget_loss: r.forget_loss,
            forget_acc: r.forget_acc,
            retain_acc: r.retain_acc,
            recovery_loss: None,
        })
        .collect()
}

/// Everything one learn → unlearn (→ recover) run produces.
pub struct SingleRun {
    pub record: RunRecord,
    pub rows: Vec<TrajectoryRow<f64>>,
    pub unlearned: Params64,
    pub final_params: Params64,
}

struct RunPlan<'a> {
    cfg: &'a ExperimentConfig,
    spec: &'a ModelSpec,
    part: &'a Partition64,
    prepared: Option<usize>,
    stop: StopRule<f64>,
    recover: bool,
    forget_class: Option<usize>,
}

fn run_single(plan: RunPlan<'_>, rng: &mut SeededRng) -> Result<SingleRun> {
    let RunPlan {
        cfg,
        spec,
        part,
        prepared,
        stop,
        recover: do_recover,
        forget_class,
    } = plan;
    let h = cfg.meta_hyper(cfg.seed);
    let opts = TrainOptions {
        eval: cfg
            .train_eval_every
            .map_or(EvalPolicy::EpochEnd, EvalPolicy::Every),
    };
    let (prepared_params, log) = train(spec, part, &schedule(cfg, prepared)?, &h, rng, opts)?;
    let pre_f = evaluate(&prepared_params, part.forget.as_batch())?;
    let pre_r = evaluate(&prepared_params, part.retain.as_batch())?;

    let classes = spec.num_outputs();
    let chance = 1.0 / classes as f64;
    let mut ucfg = cfg.unlearn_config(classes).expect("resolved config");
    ucfg.stop = stop;
    let every = cfg.unlearn.retain_eval_every.unwrap_or(100);
    let mut step = 0usize;
    let mut chance_seen = false;
    let mut retain_at_chance = None;
    let retain = &part.retain;
    let mut observer = |p: &Params64, ev: &Evaluation<f64>| -> unlearn_prep::Result<Option<f64>> {
        step += 1;
        let first_chance = !chance_seen && ev.accuracy.is_some_and(|a| a <= chance);
        if first_chance {
            chance_seen = true;
        }
        if first_chance || step.is_multiple_of(every) {
            let acc = evaluate(p, retain.as_batch())?.accuracy;
            if first_chance {
                retain_at_chance = acc;
            }
            return Ok(acc);
        }
        Ok(None)
    };
    let (unlearned, traj) = unlearn_until(
        &prepared_params,
        &part.forget,
        &ucfg,
        rng,
        Some(&mut observer),
    )?;
    let unlearned = unlearned.with_role(Role::Unlearned);

    let steps_to =
        |t: f64| steps_to_threshold(&traj.rows, |r| r.forget_acc.is_some_and(|a| a <= t));
    let retention = match spec {
        ModelSpec::Classifier { .. } => Some(accuracy(&unlearned, retain)?),
        _ => evaluate(&unlearned, retain.as_batch())?.accuracy,
    };
    let mut record = RunRecord {
        forget_class,
        pre_forget_loss: pre_f.mean_loss,
        pre_forget_acc: pre_f.accuracy,
        pre_retain_acc: pre_r.accuracy,
        unlearn_steps: traj.len(),
        steps_to_half: steps_to(0.5),
        steps_to_chance: steps_to(chance),
        retain_acc_at_chance: retain_at_chance,
        efficiency: efficiency_metric(&unlearned, &part.forget)?,
        retention,
        recovery_steps: None,
        resistance: None,
    };
    let mut rows = learning_rows(&log);
    rows.extend(traj.rows);
    let mut final_params = unlearned.clone();
    if do_recover {
        let finetune = part.recovery_finetune.as_ref().ok_or_else(|| {
            CliError::config("data", "resistance runs need a recovery fine-tuning split")
        })?;
        let (post, rtraj) = recover(
            &unlearned,
            finetune,
            &cfg.recover_config(),
            rng,
            Some(&part.forget),
        )?;
        record.recovery_steps = Some(rtraj.len());
        record.resistance = Some(resistance_metric(&post, &part.forget)?);
        rows.extend(rtraj.rows);
        final_params = post;
    }
    Ok(SingleRun {
        record,
        rows,
        unlearned,
        final_params,
    })
}

/// Mean of per-run trajectories at each (phase, step); a run that ended
/// earlier contributes its last value in that phase.
pub fn mean_trajectory(runs: &[Vec<TrajectoryRow<f64>>]) -> Vec<TrajectoryRow<f64>> {
    let mut out = Vec::new();
    for phase in [Phase::Learning, Phase::Unlearning, Phase::Recovery] {
        let per_run: Vec<Vec<&TrajectoryRow<f64>>> = runs
            .iter()
            .map(|r| r.iter().filter(|x| x.phase == phase).collect())
            .collect();
        let longest = per_run
            .iter()
            .max_by_key(|r| r.len())
            .cloned()
            .unwrap_or_default();
        for (i, template) in longest.iter().enumerate() {
            let at: Vec<&TrajectoryRow<f64>> = per_run
                .iter()
                .filter(|r| !r.is_empty())
                .map(|r| r[i.min(r.len() - 1)])
                .collect();
            let avg = |f: fn(&TrajectoryRow<f64>) -> Option<f64>| {
                let v: Option<Vec<f64>> = at.iter().map(|r| f(r)).collect();
                v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            };
            out.push(TrajectoryRow {
                step: template.step,
                epoch: template.epoch,
                phase,
                forget_loss: avg(|r| r.forget_loss),
                forget_acc: avg(|r| r.forget_acc),
                retain_acc: avg(|r| r.retain_acc),
                recovery_loss: avg(|r| r.recovery_loss),
            });
        }
    }
    out
}

/// Files under construction; removed again unless [`Artifacts::commit`] runs.
struct Artifacts {
    dir: PathBuf,
    created: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            created: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.created.push(path.clone());
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.created)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.created {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Paths written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub metrics: Vec<PathBuf>,
    pub trajectory: PathBuf,
    pub summary: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub token_report: Option<PathBuf>,
    pub token_summary: Option<PathBuf>,
    pub summary_data: RunSummary,
}

/// Resolves the config, fills the class-wise stop rule from the data, and
/// checks class indices.
fn finish_resolution(cfg: &ExperimentConfig, src: &Source) -> Result<ExperimentConfig> {
    let mut cfg = cfg.clone();
    let classes = src.num_outputs();
    if cfg.unlearn.stop.is_none() {
        cfg.unlearn.stop = Some(StopConfig::ForgetAccAtMost(1.0 / classes as f64));
    }
    if let Some(cs) = &cfg.classes {
        if let Some(&c) = cs.iter().find(|&&c| c >= classes) {
            return Err(CliError::config(
                "classes",
                format!("class {c} out of range 0..{classes}"),
            ));
        }
        if cs.is_empty() {
            return Err(CliError::config("classes", "must list at least one class"));
        }
    }
    Ok(cfg)
}

fn stop_rule(cfg: &ExperimentConfig, classes: usize) -> StopRule<f64> {
    cfg.unlearn_config(classes).expect("resolved config").stop
}

/// Runs a class-wise, random-data, or resistance experiment and writes its
/// artifacts to `out`. Duration sweeps go through [`run_duration_sweep`].
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    let cfg = cfg.clone().resolve()?;
    if cfg.task == Task::DurationSweep {
        return Err(CliError::config(
            "task",
            "use the sweep command for duration_sweep",
        ));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let src = load_source(&cfg, &mut rng)?;
    let cfg = finish_resolution(&cfg, &src)?;
    let spec = model_spec(&cfg, &src);
    spec.validate()?;
    let stop = stop_rule(&cfg, src.num_outputs());

    let mut runs: Vec<SingleRun> = Vec::new();
    let mut partition = None;
    match (&src, cfg.task) {
        (Source::Labeled(d), Task::ClassWise) => {
            let classes: Vec<usize> = cfg
                .classes
                .clone()
                .unwrap_or_else(|| (0..d.num_labels()).collect());
            for c in classes {
                let part = partition_by_class(d, c)?;
                let plan = RunPlan {
                    cfg: &cfg,
                    spec: &spec,
                    part: &part,
                    prepared: cfg.prepared_epochs,
                    stop,
                    recover: false,
                    forget_class: Some(c),
                };
                runs.push(run_single(plan, &mut rng)?);
            }
        }
        _ => {
            let part = random_partition(&cfg, &src, &mut rng)?;
            let plan = RunPlan {
                cfg: &cfg,
                spec: &spec,
                part: &part,
                prepared: cfg.prepared_epochs,
                stop,
                recover: cfg.task == Task::Resistance,
                forget_class: None,
            };
            runs.push(run_single(plan, &mut rng)?);
            partition = Some(part);
        }
    }

    let summary = RunSummary {
        task: cfg.task,
        trainer: cfg.trainer.kind().name(),
        seed: cfg.seed,
        mean: MeanRecord::of(&runs.iter().map(|r| r.record.clone()).collect::<Vec<_>>()),
        runs: runs.iter().map(|r| r.record.clone()).collect(),
    };

    let mut art = Artifacts::new(out)?;
    let config = art.write("config.json", cfg.to_json())?;
    let mut metrics = Vec::new();
    let mut snapshots = Vec::new();
    for r in &runs {
        let suffix = r
            .record
            .forget_class
            .map(|c| format!("_class{c}"))
            .unwrap_or_default();
        metrics.push(art.write(&format!("metrics{suffix}.csv"), csv::render(&r.rows))?);
        snapshots.push(art.write(
            &format!("model{suffix}.r2u"),
            snapshot::encode(&r.final_params),
        )?);
    }
    let all_rows: Vec<Vec<TrajectoryRow<f64>>> = runs.iter().map(|r| r.rows.clone()).collect();
    let trajectory = art.write("trajectory.csv", csv::render(&mean_trajectory(&all_rows)))?;
    let summary_path = art.write("summary.json", to_json(&summary))?;
    let mut vocab = None;
    let (mut token_path, mut token_summary_path) = (None, None);
    if let Some(corpus) = src.corpus() {
        let chars: Vec<String> = corpus.vocab().iter().map(|c| c.to_string()).collect();
        vocab = Some(art.write("vocab.json", to_json(&chars))?);
        if let (Source::Styled { styled, .. }, Some(run)) = (&src, runs.first()) {
            let report = token_report(&run.unlearned, corpus, &styled.forget)?;
            token_path = Some(art.write("token_report.json", to_json(&report))?);
            let s = token_summary(&report, &styled.forget_roles);
            token_summary_path = Some(art.write("token_summary.json", to_json(&s))?);
        }
    }
    drop(partition);
    art.commit();
    Ok(RunArtifacts {
        dir: out.to_path_buf(),
        config,
        metrics,
        trajectory,
        summary: summary_path,
        snapshots,
        vocab,
        token_report: token_path,
        token_summary: token_summary_path,
        summary_data: summary,
    })
}

/// One row of the preparation-duration sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub prepared_epochs: usize,
    pub seed: u64,
    pub pre_forget_acc: Option<f64>,
    pub pre_retain_acc: Option<f64>,
    pub steps_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepSummary {
    pub threshold: f64,
    pub forget_class: usize,
    pub rows: Vec<SweepRow>,
    /// Rank correlation between M and steps, over rows that reached the threshold.
    pub spearman: Option<f64>,
}

/// For each M: Standard for `E − M` epochs, the configured trainer for the
/// last `M`, then unlearning until forget accuracy reaches the sweep
/// threshold. Data comes from the base seed; run M uses seed `base + M`.
pub fn run_duration_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepSummary> {
    let mut cfg = cfg.clone();
    cfg.task = Task::DurationSweep;
    let cfg = cfg.resolve()?;
    let src = load_source(&cfg, &mut SeededRng::new(cfg.seed))?;
    let cfg = finish_resolution(&cfg, &src)?;
    let Source::Labeled(d) = &src else {
        return Err(CliError::config(
            "data",
            "the duration sweep needs labelled dense data",
        ));
    };
    let spec = model_spec(&cfg, &src);
    let class = cfg.classes.as_ref().map_or(0, |c| c[0]);
    let part = partition_by_class(d, class)?;
    let threshold = cfg.sweep.threshold.unwrap_or(0.5);
    let ms = cfg.sweep.prepared_epochs.clone().unwrap_or_default();

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &m in &ms {
        let seed = cfg.seed + m as u64;
        let plan = RunPlan {
            cfg: &cfg,
            spec: &spec,
            part: &part,
            prepared: Some(m),
            stop: StopRule::ForgetAccAtMost(threshold),
            recover: false,
            forget_class: Some(class),
        };
        let run = run_single(plan, &mut SeededRng::new(seed))?;
        rows.push(SweepRow {
            prepared_epochs: m,
            seed,
            pre_forget_acc: run.record.pre_forget_acc,
            pre_retain_acc: run.record.pre_retain_acc,
            steps_to_threshold: steps_to_threshold(&run.rows, |r| {
                r.phase == Phase::Unlearning && r.forget_acc.is_some_and(|a| a <= threshold)
            }),
        });
        runs.push(run.rows);
    }
    let reached: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            r.steps_to_threshold
                .map(|s| (r.prepared_epochs as f64, s as f64))
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = reached.into_iter().unzip();
    let summary = SweepSummary {
        threshold,
        forget_class: class,
        spearman: spearman(&xs, &ys),
        rows,
    };

    let mut table = String::from("prepared_epochs,seed,pre_forget_acc,steps_to_threshold\n");
    for r in &summary.rows {
        table.push_str(&format!(
            "{},{},{},{}\n",
            r.prepared_epochs,
            r.seed,
            r.pre_forget_acc.map(csv::sig9).unwrap_or_default(),
            r.steps_to_threshold
                .map(|s| s.to_string())
                .unwrap_or_default()
        ));
    }
    let mut art = Artifacts::new(out)?;
    art.write("config.json", cfg.to_json())?;
    art.write("sweep.csv", table)?;
    art.write("sweep_summary.json", to_json(&summary))?;
    art.write("trajectory.csv", csv::render(&mean_trajectory(&runs)))?;
    art.commit();
    Ok(summary)
}

/// Writes the per-token loss report of `text` under the snapshot at `model`.
pub fn token_report_command(model: &Path, vocab: &Path, text: &Path) -> Result<String> {
    let p = snapshot::load(model, Role::Unlearned)?;
    let vocab_text = std::fs::read_to_string(vocab).map_err(|e| CliError::io(vocab, e))?;
    let chars: Vec<String> = serde_json::from_str(&vocab_text)?;
    let chars = chars
        .iter()
        .map(|s| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CliError::config(
                    "vocab",
                    format!("entry {s:?} is not a single character"),
                )),
            }
        })
        .collect::<Result<Vec<char>>>()?;
    let body = std::fs::read_to_string(text).map_err(|e| CliError::io(text, e))?;
    let corpus = CharCorpus::with_vocab(chars, "")?;
    Ok(to_json(&token_report(&p, &corpus, &body)?))
}
