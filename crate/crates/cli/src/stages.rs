//! Pipeline stages. Each stage reads the artifacts of the stages it depends
//! on, writes its own under the artifact directory and records a
//! [`RunManifest`]. A stage whose key and outputs are unchanged is skipped.

use crate::config::{GbtSetting, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::store::{hash_file, hash_str, RunManifest, Store, TOOL_VERSION};
use clap::ValueEnum;
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use tabcurate_core::curation::{
    distinguishability, hpo_search, select_engineering_like, ConfusionMatrix, GbtConfig, SelectionReport,
};
use tabcurate_core::eval::{
    curves_csv, data_efficiency, efficiency_csv, holdout_mse, reference_regressors, summarize, sweep_curve,
    win_matrix, DatasetResult, EfficiencyRecord, EfficiencySummary, PerformanceCurve, PfnRegressor,
    RegressorAdapter, REF_FRACTION,
};
use tabcurate_core::pfn::{
    continued_pretrain, embed_all, load_checkpoint, pretrain, read_embeddings, save_checkpoint, write_embeddings,
    DatasetEmbedding, PfnModel,
};
use tabcurate_core::procgen::{generate_range, sample_spec, task_seed, SyntheticTask};
use tabcurate_core::rng::{derive, sub_rng};
use tabcurate_core::tabular::{
    dedupe, generate_control, load_csv, preprocess, read_dataset, split_rows, write_dataset, ContentHash, Dataset,
    DomainLabel, PreprocessOptions, SchemaSidecar, MAX_ROWS,
};
use tabcurate_core::Error as CoreError;

/// Synthetic tasks generated, read or embedded per batch.
const CHUNK: usize = 256;

/// Seed stream tags for the stages, under the master seed.
mod tag {
    pub const INGEST: u64 = 0x100;
    pub const SYNTHETIC: u64 = 0x101;
    pub const CONTROL: u64 = 0x102;
    pub const PRETRAIN_PFN: u64 = 0x103;
    pub const PRETRAIN_PRIOR: u64 = 0x104;
    pub const CURATE: u64 = 0x105;
    pub const HPO: u64 = 0x106;
    pub const HPO_SAMPLE: u64 = 0x107;
    pub const DISTINGUISH: u64 = 0x108;
    pub const RANDOM_SET: u64 = 0x109;
    pub const FINETUNE: u64 = 0x10a;
    pub const EVAL_SPLIT: u64 = 0x10b;
    pub const EVAL: u64 = 0x10c;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    GenSynthetic,
    GenControl,
    Pretrain,
    Embed,
    Curate,
    Distinguish,
    Finetune,
    Eval,
    Efficiency,
}

impl Stage {
    /// Pipeline order.
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::GenSynthetic,
        Stage::GenControl,
        Stage::Pretrain,
        Stage::Embed,
        Stage::Curate,
        Stage::Distinguish,
        Stage::Finetune,
        Stage::Eval,
        Stage::Efficiency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GenSynthetic => "gen-synthetic",
            Stage::GenControl => "gen-control",
            Stage::Pretrain => "pretrain",
            Stage::Embed => "embed",
            Stage::Curate => "curate",
            Stage::Distinguish => "distinguish",
            Stage::Finetune => "finetune",
            Stage::Eval => "eval",
            Stage::Efficiency => "efficiency",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::GenSynthetic | Stage::GenControl | Stage::Pretrain => &[],
            Stage::Embed => &[Stage::Ingest, Stage::GenSynthetic, Stage::GenControl, Stage::Pretrain],
            Stage::Curate => &[Stage::Embed],
            Stage::Distinguish => &[Stage::Embed, Stage::Curate],
            Stage::Finetune => &[Stage::GenSynthetic, Stage::Pretrain, Stage::Curate],
            Stage::Eval => &[Stage::Ingest, Stage::Pretrain, Stage::Finetune],
            Stage::Efficiency => &[Stage::Eval],
        }
    }

    /// Stages that must never read real data.
    fn synthetic_only(self) -> bool {
        matches!(self, Stage::Pretrain | Stage::Finetune)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Embeddings,
    Curves,
    Efficiency,
    Selection,
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub label: DomainLabel,
    pub source: String,
    pub rows: usize,
    pub original_rows: usize,
    pub features: usize,
    pub content_hash: ContentHash,
    pub bench: String,
    pub embed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duplicate {
    pub source: String,
    pub duplicate_of: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub manifest_id: String,
    pub datasets: Vec<RegistryEntry>,
    pub rejected: Vec<Rejection>,
    pub duplicates: Vec<Duplicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: String,
    pub seed: u64,
    pub file: String,
    pub content_hash: ContentHash,
    pub features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskIndex {
    pub manifest_id: String,
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub manifest_id: String,
    pub model_id: String,
    pub synthetic: Vec<String>,
    pub real: Vec<(String, DomainLabel)>,
    pub control: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub manifest_id: String,
    pub target_count: usize,
    pub searched: bool,
    pub report: SelectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub name: String,
    pub n_a: usize,
    pub n_b: usize,
    pub balanced_accuracy: Option<f64>,
    pub accuracy: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishSummary {
    pub manifest_id: String,
    pub config: GbtConfig,
    pub pairs: Vec<PairResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFile {
    pub manifest_id: String,
    pub candidate: String,
    pub per_reference: BTreeMap<String, EfficiencySummary>,
}

/// Files a stage read. Paths under the store are relative to it.
#[derive(Debug, Default)]
struct Reads {
    files: Vec<String>,
    real: bool,
}

impl Reads {
    fn note(&mut self, path: String, real: bool) {
        self.files.push(path);
        self.real |= real;
    }
}

fn name_key(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn losses_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l:?}\n"));
    }
    s
}

fn rel_dataset(rel: &str) -> [String; 2] {
    [rel.to_string(), Path::new(rel).with_extension("bin").to_string_lossy().into_owned()]
}

pub struct Runner {
    cfg: PipelineConfig,
    store: Store,
    force_from: Option<Stage>,
}

impl Runner {
    pub fn new(cfg: PipelineConfig, force_from: Option<Stage>) -> CliResult<Self> {
        cfg.validate()?;
        let store = Store::open(&cfg.paths.artifact_dir)?;
        Ok(Runner { cfg, store, force_from })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn seed(&self, tag: u64) -> u64 {
        derive(self.cfg.master_seed, tag, 0)
    }

    fn slice(&self, stage: Stage) -> serde_json::Value {
        let c = &self.cfg;
        match stage {
            Stage::Ingest => json!({ "ingest": c.ingest }),
            Stage::GenSynthetic => json!({ "prior": c.prior, "synthetic": c.synthetic }),
            Stage::GenControl => json!({ "control": c.control }),
            Stage::Pretrain => json!({ "prior": c.prior, "pfn": c.pfn }),
            Stage::Embed => json!({}),
            Stage::Curate => json!({
                "gbt": c.gbt, "hpo": c.hpo, "selection": c.selection, "target": c.ingest.target_label
            }),
            Stage::Distinguish => json!({ "distinguish": c.distinguish }),
            Stage::Finetune => json!({ "finetune": c.finetune, "prior": c.prior }),
            Stage::Eval => json!({ "eval": c.eval, "target": c.ingest.target_label }),
            Stage::Efficiency => json!({}),
        }
    }

    fn data_files(&self) -> CliResult<Vec<PathBuf>> {
        let dir = &self.cfg.paths.data_dir;
        let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        let mut files = Vec::new();
        for e in entries {
            let p = e.map_err(|e| CliError::io(dir, e))?.path();
            if p.is_file() {
                files.push(p);
            }
        }
        files.sort();
        Ok(files)
    }

    /// Upstream output hashes, keyed `stage:path`.
    fn inputs(&self, stage: Stage) -> CliResult<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        for &up in stage.upstream() {
            let m = self.store.require(up.name())?;
            for (rel, h) in m.outputs {
                inputs.insert(format!("{}:{rel}", up.name()), h);
            }
        }
        if stage == Stage::Ingest {
            for p in self.data_files()? {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                inputs.insert(format!("data:{name}"), hash_file(&p)?);
            }
        }
        Ok(inputs)
    }

    fn forced(&self, stage: Stage) -> bool {
        self.force_from.is_some_and(|f| stage >= f)
    }

    /// Run one stage unless its outputs are current.
    pub fn run_stage(&self, stage: Stage) -> CliResult<StageStatus> {
        let inputs = self.inputs(stage)?;
        let key = hash_str(
            &json!({
                "stage": stage.name(),
                "master_seed": self.cfg.master_seed,
                "config": self.slice(stage),
                "inputs": inputs,
                "version": TOOL_VERSION,
            })
            .to_string(),
        );
        if !self.forced(stage) && self.store.is_current(stage.name(), &key)? {
            log::info!("{stage}: up to date");
            return Ok(StageStatus::Skipped);
        }
        log::info!("{stage}: running");
        let id = key[..16].to_string();
        let start = Instant::now();
        let mut reads = Reads::default();
        let outputs = match stage {
            Stage::Ingest => self.ingest(&id, &mut reads),
            Stage::GenSynthetic => self.gen_synthetic(&id),
            Stage::GenControl => self.gen_control(&id),
            Stage::Pretrain => self.pretrain(),
            Stage::Embed => self.embed(&id, &mut reads),
            Stage::Curate => self.curate(&id, &mut reads),
            Stage::Distinguish => self.distinguish(&id, &mut reads),
            Stage::Finetune => self.finetune(&mut reads),
            Stage::Eval => self.eval(&mut reads),
            Stage::Efficiency => self.efficiency(&id, &mut reads),
        }?;
        if stage.synthetic_only() {
            audit(stage, &reads)?;
        }
        let manifest = RunManifest {
            id,
            command: stage.name().to_string(),
            key,
            config: self.cfg.to_toml(),
            inputs,
            outputs: self.store.hash_outputs(&outputs)?,
            wall_time_secs: start.elapsed().as_secs_f64(),
            tool_version: TOOL_VERSION.to_string(),
            files_read: reads.files,
            real_data_read: reads.real,
        };
        self.store.write_manifest(&manifest)?;
        log::info!("{stage}: done in {:.1}s", manifest.wall_time_secs);
        Ok(StageStatus::Ran)
    }

    /// Run every stage in order. A failure names the stage and the stages
    /// that completed before it.
    pub fn pipeline(&self) -> CliResult<Vec<(Stage, StageStatus)>> {
        let mut done = Vec::new();
        for stage in Stage::ALL {
            match self.run_stage(stage) {
                Ok(s) => done.push((stage, s)),
                Err(e) => {
                    return Err(CliError::Stage {
                        stage: stage.name().to_string(),
                        completed: done.iter().map(|(s, _)| s.name().to_string()).collect(),
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(done)
    }

    fn read_dataset(&self, rel: &str, reads: &mut Reads) -> CliResult<Dataset> {
        reads.note(rel.to_string(), rel.starts_with("datasets/"));
        Ok(read_dataset(&self.store.path(rel))?)
    }

    fn load_model(&self, rel: &str, reads: &mut Reads) -> CliResult<PfnModel> {
        reads.note(rel.to_string(), false);
        Ok(load_checkpoint(&self.store.path(rel))?)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str, reads: &mut Reads) -> CliResult<T> {
        reads.note(rel.to_string(), false);
        self.store.read_json(rel)
    }

    fn write_dataset(&self, d: &Dataset, rel: &str, outputs: &mut Vec<String>) -> CliResult<()> {
        let p = self.store.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_dataset(d, &p)?;
        outputs.extend(rel_dataset(rel));
        Ok(())
    }

    fn ingest(&self, id: &str, reads: &mut Reads) -> CliResult<Vec<String>> {
        let files: Vec<PathBuf> = self
            .data_files()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
            .collect();
        if files.is_empty() {
            return Err(CliError::Invalid(format!(
                "no CSV files in {}",
                self.cfg.paths.data_dir.display()
            )));
        }
        let base = self.seed(tag::INGEST);
        let mut rejected = Vec::new();
        let mut loaded: Vec<(String, Dataset, Dataset)> = Vec::new();
        for path in &files {
            let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let stem = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let sidecar_path = path.with_file_name(format!("{stem}.schema.json"));
            let sidecar = if sidecar_path.exists() {
                reads.note(sidecar_path.display().to_string(), true);
                Some(SchemaSidecar::read(&sidecar_path).map_err(|e| {
                    CliError::Invalid(format!("unreadable sidecar {}: {e}", sidecar_path.display()))
                })?)
            } else {
                None
            };
            reads.note(path.display().to_string(), true);
            let label = sidecar.as_ref().and_then(|s| s.label).unwrap_or(self.cfg.ingest.default_label);
            // Seeded by content, so byte-identical copies preprocess identically and dedupe.
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let digest = Sha256::digest(&bytes);
            let seed = derive(base, 0, u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")));
            let attempt = || -> Result<(Dataset, Dataset), CoreError> {
                let raw = load_csv(path, None, sidecar.as_ref())?;
                let mut opts = PreprocessOptions::new(seed, false).with_label(label);
                if let Some(s) = &sidecar {
                    opts.target_candidates = s.targets.clone();
                }
                let bench = preprocess(&raw, &opts)?;
                opts.for_embedding = true;
                let embed = preprocess(&raw, &opts)?;
                Ok((bench, embed))
            };
            match attempt() {
                Ok((bench, embed)) => loaded.push((file, bench, embed)),
                Err(e) => {
                    log::warn!("rejected {file}: {e}");
                    rejected.push(Rejection { source: file, reason: e.to_string() });
                }
            }
        }

        let benches: Vec<Dataset> = loaded.iter().map(|(_, b, _)| b.clone()).collect();
        let kept: Vec<ContentHash> = dedupe(benches).iter().map(|d| d.meta.content_hash).collect();
        let mut first_of: HashMap<ContentHash, String> = HashMap::new();
        let mut datasets = Vec::new();
        let mut duplicates = Vec::new();
        let mut outputs = Vec::new();
        for (file, bench, embed) in loaded {
            let h = bench.meta.content_hash;
            if let Some(orig) = first_of.get(&h) {
                log::warn!("{file} duplicates {orig}");
                duplicates.push(Duplicate { source: file, duplicate_of: orig.clone() });
                continue;
            }
            debug_assert!(kept.contains(&h));
            first_of.insert(h, file.clone());
            let name = bench.meta.name.clone();
            let bench_rel = format!("datasets/real/{name}.bench.json");
            let embed_rel = format!("datasets/real/{name}.embed.json");
            self.write_dataset(&bench, &bench_rel, &mut outputs)?;
            self.write_dataset(&embed, &embed_rel, &mut outputs)?;
            datasets.push(RegistryEntry {
                name,
                label: bench.meta.label,
                source: file,
                rows: bench.rows(),
                original_rows: bench.meta.original_rows,
                features: bench.feature_count(),
                content_hash: h,
                bench: bench_rel,
                embed: embed_rel,
            });
        }
        log::info!(
            "ingest: {} datasets, {} rejected, {} duplicates",
            datasets.len(),
            rejected.len(),
            duplicates.len()
        );
        let registry = Registry { manifest_id: id.to_string(), datasets, rejected, duplicates };
        self.store.write_json("datasets/registry.json", &registry)?;
        outputs.push("datasets/registry.json".into());
        Ok(outputs)
    }

    fn gen_synthetic(&self, id: &str) -> CliResult<Vec<String>> {
        let seed = self.seed(tag::SYNTHETIC);
        let count = self.cfg.synthetic.count;
        let mut tasks = Vec::with_capacity(count);
        let mut outputs = Vec::new();
        for start in (0..count).step_by(CHUNK) {
            let end = (start + CHUNK).min(count);
            for (k, t) in generate_range(&self.cfg.prior, start..end, seed)?.into_iter().enumerate() {
                let i = start + k;
                let rel = format!("synthetic/tasks/{i:05}.json");
                self.write_dataset(&t.dataset, &rel, &mut outputs)?;
                tasks.push(TaskEntry {
                    id: t.dataset.meta.name.clone(),
                    seed: task_seed(seed, i),
                    file: rel,
                    content_hash: t.dataset.meta.content_hash,
                    features: t.dataset.feature_count(),
                });
            }
            log::info!("gen-synthetic: {end}/{count}");
        }
        self.store.write_json("synthetic/index.json", &TaskIndex { manifest_id: id.to_string(), tasks })?;
        outputs.push("synthetic/index.json".into());
        Ok(outputs)
    }

    fn gen_control(&self, id: &str) -> CliResult<Vec<String>> {
        let seed = self.seed(tag::CONTROL);
        let mut tasks = Vec::new();
        let mut outputs = Vec::new();
        for i in 0..self.cfg.control.count {
            let s = derive(seed, 0, i as u64);
            let d = generate_control(self.cfg.control.feature_count, MAX_ROWS, s)?;
            let rel = format!("control/{i:05}.json");
            self.write_dataset(&d, &rel, &mut outputs)?;
            tasks.push(TaskEntry {
                id: d.meta.name.clone(),
                seed: s,
                file: rel,
                content_hash: d.meta.content_hash,
                features: d.feature_count(),
            });
        }
        self.store.write_json("control/index.json", &TaskIndex { manifest_id: id.to_string(), tasks })?;
        outputs.push("control/index.json".into());
        Ok(outputs)
    }

    fn pretrain(&self) -> CliResult<Vec<String>> {
        let mut pfn = self.cfg.pfn.clone();
        pfn.seed = self.seed(tag::PRETRAIN_PFN);
        let mut prior = self.cfg.prior.clone();
        prior.seed = self.seed(tag::PRETRAIN_PRIOR);
        let out = pretrain(&pfn, &prior)?;
        self.store.ensure_dir("models")?;
        save_checkpoint(&out.model, &self.store.path("models/base.json"))?;
        self.store.write_bytes("models/base_losses.csv", losses_csv(&out.losses).as_bytes())?;
        let mut outputs = rel_dataset("models/base.json").to_vec();
        outputs.push("models/base_losses.csv".into());
        Ok(outputs)
    }

    fn embed_files(&self, model: &PfnModel, rels: &[String], reads: &mut Reads) -> CliResult<Vec<DatasetEmbedding>> {
        let mut out = Vec::with_capacity(rels.len());
        for chunk in rels.chunks(CHUNK) {
            let data = chunk.iter().map(|r| self.read_dataset(r, reads)).collect::<CliResult<Vec<_>>>()?;
            let refs: Vec<&Dataset> = data.iter().collect();
            out.extend(embed_all(model, &refs)?);
        }
        Ok(out)
    }

    fn embed(&self, id: &str, reads: &mut Reads) -> CliResult<Vec<String>> {
        let model = self.load_model("models/base.json", reads)?;
        let syn: TaskIndex = self.read_json("synthetic/index.json", reads)?;
        let ctl: TaskIndex = self.read_json("control/index.json", reads)?;
        let registry: Registry = self.read_json("datasets/registry.json", reads)?;

        let syn_files: Vec<String> = syn.tasks.iter().map(|t| t.file.clone()).collect();
        let mut all = self.embed_files(&model, &syn_files, reads)?;
        log::info!("embed: {} synthetic", all.len());
        let real_files: Vec<String> = registry.datasets.iter().map(|d| d.embed.clone()).collect();
        all.extend(self.embed_files(&model, &real_files, reads)?);
        let ctl_files: Vec<String> = ctl.tasks.iter().map(|t| t.file.clone()).collect();
        all.extend(self.embed_files(&model, &ctl_files, reads)?);

        self.store.ensure_dir("embeddings")?;
        write_embeddings(&self.store.path("embeddings/embeddings.csv"), &all)?;
        let groups = Groups {
            manifest_id: id.to_string(),
            model_id: model.id(),
            synthetic: syn.tasks.iter().map(|t| t.id.clone()).collect(),
            real: registry.datasets.iter().map(|d| (d.name.clone(), d.label)).collect(),
            control: ctl.tasks.iter().map(|t| t.id.clone()).collect(),
        };
        self.store.write_json("embeddings/groups.json", &groups)?;
        Ok(vec!["embeddings/embeddings.csv".into(), "embeddings/groups.json".into()])
    }

    fn embeddings(&self, reads: &mut Reads) -> CliResult<(Groups, HashMap<String, Vec<f64>>)> {
        let groups: Groups = self.read_json("embeddings/groups.json", reads)?;
        reads.note("embeddings/embeddings.csv".into(), false);
        let map = read_embeddings(&self.store.path("embeddings/embeddings.csv"))?
            .into_iter()
            .map(|e| (e.dataset, e.vector))
            .collect();
        Ok((groups, map))
    }

    fn lookup(map: &HashMap<String, Vec<f64>>, ids: &[String]) -> CliResult<Vec<Vec<f64>>> {
        ids.iter()
            .map(|id| {
                map.get(id)
                    .cloned()
                    .ok_or_else(|| CliError::MissingArtifact(format!("embedding for {id}")))
            })
            .collect()
    }

    fn target_ids(&self, groups: &Groups) -> Vec<String> {
        groups
            .real
            .iter()
            .filter(|(_, l)| *l == self.cfg.ingest.target_label)
            .map(|(n, _)| n.clone())
            .collect()
    }

    fn curate(&self, id: &str, reads: &mut Reads) -> CliResult<Vec<String>> {
        let (groups, map) = self.embeddings(reads)?;
        let target = Self::lookup(&map, &self.target_ids(&groups))?;
        let synthetic: Vec<(String, Vec<f64>)> = groups
            .synthetic
            .iter()
            .map(|s| Ok((s.clone(), Self::lookup(&map, std::slice::from_ref(s))?.remove(0))))
            .collect::<CliResult<_>>()?;
        let mut outputs = Vec::new();
        let (config, searched) = match &self.cfg.gbt {
            GbtSetting::Fixed(c) => (c.clone().with_seed(self.seed(tag::CURATE)), false),
            GbtSetting::Mode(_) => {
                let n = self.cfg.selection.n_syn_train.min(synthetic.len());
                let pick = sample_indices(&mut sub_rng(self.seed(tag::HPO_SAMPLE), 0, 0), synthetic.len(), n);
                let mut rows: Vec<&Vec<f64>> = pick.iter().map(|i| &synthetic[i].1).collect();
                rows.extend(target.iter());
                let mut labels = vec![0usize; n];
                labels.extend(std::iter::repeat_n(1, target.len()));
                let x = to_matrix(&rows)?;
                let out = hpo_search(&x, &labels, self.cfg.hpo.trials, self.cfg.hpo.folds, self.seed(tag::HPO))?;
                self.store.write_bytes("curation/hpo_trace.csv", out.trace_csv().as_bytes())?;
                outputs.push("curation/hpo_trace.csv".into());
                log::info!("curate: hpo best cv score {:.4}", out.best_score);
                (out.best, true)
            }
        };
        let report =
            select_engineering_like(&synthetic, &target, &self.cfg.selection, &config, self.seed(tag::CURATE))?;
        let sel = Selection { manifest_id: id.to_string(), target_count: target.len(), searched, report };
        self.store.write_json("curation/selection.json", &sel)?;
        outputs.push("curation/selection.json".into());
        Ok(outputs)
    }

    fn distinguish(&self, id: &str, reads: &mut Reads) -> CliResult<Vec<String>> {
        let (groups, map) = self.embeddings(reads)?;
        let sel: Selection = self.read_json("curation/selection.json", reads)?;
        let config = sel.report.config.clone();
        let folds = self.cfg.distinguish.folds;
        let target = Self::lookup(&map, &self.target_ids(&groups))?;

        let k = sel.report.selected_ids.len().min(groups.synthetic.len());
        let pick = sample_indices(&mut sub_rng(self.seed(tag::RANDOM_SET), 0, 0), groups.synthetic.len(), k);
        let mut random_ids: Vec<String> = pick.iter().map(|i| groups.synthetic[i].clone()).collect();
        random_ids.sort();
        let other: Vec<String> = groups
            .real
            .iter()
            .filter(|(_, l)| *l != self.cfg.ingest.target_label)
            .map(|(n, _)| n.clone())
            .collect();
        let pairs = [
            ("random_vs_target", random_ids),
            ("selected_vs_target", sel.report.selected_ids.clone()),
            ("control_vs_target", groups.control.clone()),
            ("other_real_vs_target", other),
        ];
        let mut results = Vec::new();
        let mut outputs = Vec::new();
        for (pi, (name, ids)) in pairs.into_iter().enumerate() {
            let a = Self::lookup(&map, &ids)?;
            let mut r = PairResult {
                name: name.to_string(),
                n_a: a.len(),
                n_b: target.len(),
                balanced_accuracy: None,
                accuracy: None,
                skipped: None,
            };
            if a.len() < folds || target.len() < folds {
                r.skipped = Some(format!("each side needs at least {folds} datasets"));
            } else {
                let cm: ConfusionMatrix =
                    distinguishability(&a, &target, folds, &config, derive(self.seed(tag::DISTINGUISH), 0, pi as u64))?;
                let rel = format!("distinguish/{name}.csv");
                self.store.write_bytes(&rel, cm.to_csv().as_bytes())?;
                outputs.push(rel);
                log::info!("distinguish: {name} balanced accuracy {:.4}", cm.balanced_accuracy);
                r.balanced_accuracy = Some(cm.balanced_accuracy);
                r.accuracy = Some(cm.accuracy);
            }
            results.push(r);
        }
        let summary = DistinguishSummary { manifest_id: id.to_string(), config, pairs: results };
        self.store.write_json("distinguish/summary.json", &summary)?;
        outputs.push("distinguish/summary.json".into());
        Ok(outputs)
    }

    fn finetune(&self, reads: &mut Reads) -> CliResult<Vec<String>> {
        let base = self.load_model("models/base.json", reads)?;
        let sel: Selection = self.read_json("curation/selection.json", reads)?;
        let index: TaskIndex = self.read_json("synthetic/index.json", reads)?;
        let by_id: HashMap<&str, &TaskEntry> = index.tasks.iter().map(|t| (t.id.as_str(), t)).collect();
        let mut tasks = Vec::with_capacity(sel.report.selected_ids.len());
        for sid in &sel.report.selected_ids {
            let entry = by_id
                .get(sid.as_str())
                .ok_or_else(|| CliError::MissingArtifact(format!("synthetic task {sid}")))?;
            let dataset = self.read_dataset(&entry.file, reads)?;
            if dataset.meta.content_hash != entry.content_hash {
                return Err(CliError::Invalid(format!("synthetic task {sid} changed on disk")));
            }
            tasks.push(SyntheticTask { dataset, spec: sample_spec(&self.cfg.prior, entry.seed) });
        }
        let out = continued_pretrain(&base, &tasks, self.cfg.finetune.epochs, self.seed(tag::FINETUNE))?;
        save_checkpoint(&out.model, &self.store.path("models/adapted.json"))?;
        self.store.write_bytes("models/adapted_losses.csv", losses_csv(&out.losses).as_bytes())?;
        let mut outputs = rel_dataset("models/adapted.json").to_vec();
        outputs.push("models/adapted_losses.csv".into());
        Ok(outputs)
    }

    fn eval(&self, reads: &mut Reads) -> CliResult<Vec<String>> {
        let registry: Registry = self.read_json("datasets/registry.json", reads)?;
        let base = Arc::new(self.load_model("models/base.json", reads)?);
        let adapted = Arc::new(self.load_model("models/adapted.json", reads)?);
        let mut adapters: Vec<Box<dyn RegressorAdapter>> = vec![
            Box::new(PfnRegressor::new("base", base)),
            Box::new(PfnRegressor::new("adapted", adapted)),
        ];
        adapters.extend(reference_regressors());
        let entries: Vec<&RegistryEntry> =
            registry.datasets.iter().filter(|d| d.label == self.cfg.ingest.target_label).collect();
        if entries.is_empty() {
            return Err(CliError::Invalid("no target-domain datasets to evaluate".into()));
        }
        let ev = &self.cfg.eval;
        let mut curves = Vec::new();
        let mut holdout = Vec::new();
        for entry in entries {
            let d = self.read_dataset(&entry.bench, reads)?;
            let key = name_key(&entry.name);
            let split = split_rows(d.rows(), ev.split, derive(self.seed(tag::EVAL_SPLIT), 0, key))?;
            let seed = derive(self.seed(tag::EVAL), 0, key);
            let mut mse = BTreeMap::new();
            for a in &adapters {
                let mut c = sweep_curve(a.as_ref(), &d, &split, &ev.fractions, ev.folds, seed)?;
                c.dataset = entry.name.clone();
                curves.push(c);
                mse.insert(a.name(), holdout_mse(a.as_ref(), &d, &split, seed)?);
            }
            log::info!("eval: {}", entry.name);
            holdout.push(DatasetResult { dataset: entry.name.clone(), mse });
        }
        let wm = win_matrix(&holdout, "adapted")?;
        self.store.write_json("eval/holdout.json", &holdout)?;
        self.store.write_json("eval/curves.json", &curves)?;
        self.store.write_bytes("eval/curves.csv", curves_csv(&curves).as_bytes())?;
        self.store.write_json("eval/win_matrix.json", &wm)?;
        self.store.write_bytes("eval/win_matrix.txt", wm.to_text().as_bytes())?;
        Ok(["holdout.json", "curves.json", "curves.csv", "win_matrix.json", "win_matrix.txt"]
            .iter()
            .map(|f| format!("eval/{f}"))
            .collect())
    }

    fn efficiency(&self, id: &str, reads: &mut Reads) -> CliResult<Vec<String>> {
        let curves: Vec<PerformanceCurve> = self.read_json("eval/curves.json", reads)?;
        let candidate = "adapted";
        let mut by_dataset: BTreeMap<&str, BTreeMap<&str, &PerformanceCurve>> = BTreeMap::new();
        for c in &curves {
            by_dataset.entry(&c.dataset).or_default().insert(&c.model, c);
        }
        let mut records = Vec::new();
        for (dataset, models) in &by_dataset {
            let new = models
                .get(candidate)
                .ok_or_else(|| CliError::MissingArtifact(format!("{candidate} curve for {dataset}")))?;
            for (name, reference) in models.iter().filter(|(m, _)| **m != candidate) {
                records.push(EfficiencyRecord {
                    dataset: dataset.to_string(),
                    reference: name.to_string(),
                    new: candidate.to_string(),
                    result: data_efficiency(reference, new, REF_FRACTION)?,
                });
            }
        }
        let mut per_reference = BTreeMap::new();
        let refs: std::collections::BTreeSet<&str> = records.iter().map(|r| r.reference.as_str()).collect();
        for r in refs {
            let results: Vec<_> = records.iter().filter(|x| x.reference == r).map(|x| x.result.clone()).collect();
            if let Some(s) = summarize(&results) {
                per_reference.insert(r.to_string(), s);
            }
        }
        self.store.write_bytes("efficiency/efficiency.csv", efficiency_csv(&records).as_bytes())?;
        let file = EfficiencyFile { manifest_id: id.to_string(), candidate: candidate.into(), per_reference };
        self.store.write_json("efficiency/summary.json", &file)?;
        Ok(vec!["efficiency/efficiency.csv".into(), "efficiency/summary.json".into()])
    }

    /// Render an artifact as CSV (TOML for `config`).
    pub fn export(&self, what: ExportKind) -> CliResult<String> {
        let read = |rel: &str| -> CliResult<String> {
            let p = self.store.path(rel);
            if !p.exists() {
                return Err(CliError::MissingArtifact(rel.to_string()));
            }
            std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
        };
        match what {
            ExportKind::Config => Ok(self.cfg.to_toml()),
            ExportKind::Embeddings => read("embeddings/embeddings.csv"),
            ExportKind::Curves => read("eval/curves.csv"),
            ExportKind::Efficiency => read("efficiency/efficiency.csv"),
            ExportKind::Selection => {
                let sel: Selection = serde_json::from_str(&read("curation/selection.json")?)?;
                let chosen: std::collections::HashSet<&String> = sel.report.selected_ids.iter().collect();
                let mut s = String::from("rank,id,probability,selected\n");
                for (i, t) in sel.report.scored.iter().enumerate() {
                    s.push_str(&format!("{},{},{:?},{}\n", i + 1, t.id, t.probability, chosen.contains(&t.id)));
                }
                Ok(s)
            }
        }
    }
}

fn to_matrix(rows: &[&Vec<f64>]) -> CliResult<ndarray::Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    ndarray::Array2::from_shape_vec((rows.len(), d), flat)
        .map_err(|_| CliError::Invalid("embeddings of different lengths".into()))
}

/// Refuse a synthetic-only stage that touched real data.
fn audit(stage: Stage, reads: &Reads) -> CliResult<()> {
    if reads.real {
        let offending: Vec<&String> = reads.files.iter().filter(|f| f.starts_with("datasets/")).collect();
        return Err(CliError::Audit(format!("{stage} read real data: {offending:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_flags_real_reads() {
        let mut r = Reads::default();
        r.note("models/base.json".into(), false);
        r.note("synthetic/tasks/00000.json".into(), false);
        assert!(audit(Stage::Finetune, &r).is_ok());
        r.note("datasets/real/a.bench.json".into(), true);
        let err = audit(Stage::Finetune, &r).unwrap_err();
        assert!(matches!(err, CliError::Audit(ref m) if m.contains("a.bench.json")));
    }

    #[test]
    fn stage_order_and_names() {
        for w in Stage::ALL.windows(2) {
            assert!(w[0] < w[1]);
        }
        for s in Stage::ALL {
            assert!(s.upstream().iter().all(|u| *u < s), "{s}");
            assert_eq!(Stage::from_str(s.name(), false).unwrap(), s);
        }
    }
}
