//! The `chainedit` command line.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::alignment::{align_rules, resume_alignment};
use crate::chain::{expand, load_batch, EditBatch, EditRequest};
use crate::dataset::{build_filtered, build_in_prompt, build_replaced, cases_to_json, load_cases, DecisionLog, VariantKind};
use crate::dsl::{derive_directives, Derivation, RuleSet};
use crate::eval::{
    compare_reports, evaluate, evaluate_batches, serve_subject, EvalConfig, MetricReport, RemoteSubject,
    SubjectModel, SymbolicSubject,
};
use crate::miner::{default_gamma, mine_all, CandidateFile, MiningConfig};
use crate::oracle::{load_fixtures, ChatOracle, JudgeTable, KnowledgeOracle, ReplayServer, StoreOracle};
use crate::store::{MetaTable, RelationId, TripleStore};

pub use config::RunConfig;

/// Marks errors caused by how the command was invoked (exit status 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "chainedit", version, about = "Rule mining and chained knowledge-edit expansion", arg_required_else_help = true)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving outputs and manifest.json.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a triple file and report index statistics.
    Ingest(IngestArgs),
    /// Mine candidate rules for target relations.
    Mine(MineArgs),
    /// Keep the candidate rules the oracle endorses.
    Align(AlignArgs),
    /// Turn candidate rules into a directive ruleset.
    Derive(DeriveArgs),
    /// Expand one edit into an edit batch.
    Expand(ExpandArgs),
    /// Build a filtered, replaced or in-prompt dataset variant.
    BuildDataset(BuildArgs),
    /// Edit, query and revert a subject model over a dataset.
    Evaluate(EvaluateArgs),
    /// Tabulate the per-metric change between two reports.
    Compare(CompareArgs),
    /// Serve a symbolic subject over the HTTP subject protocol.
    ServeSubject(ServeArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct StoreArgs {
    /// Tab-separated `subject relation object` file.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Tab-separated `id label` file.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct OracleArgs {
    /// `mock:<triples.tsv>`, `replay:<fixtures.jsonl>` or an http(s) chat endpoint.
    #[arg(long)]
    oracle: Option<String>,
    /// Rule-text to label table for the mock judge.
    #[arg(long)]
    judge_table: Option<PathBuf>,
    /// Label file for the mock oracle's triples.
    #[arg(long)]
    oracle_labels: Option<PathBuf>,
    /// Model name sent to chat endpoints.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
struct MetaArgs {
    /// Relation metadata TSV. Without it every relation gets a generic template.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleFormat {
    Text,
    Json,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Target relations, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    /// Head-relation instances sampled per target (default 10000).
    #[arg(long)]
    sample_n: Option<usize>,
    /// Minimum support; defaults to max(5, sample_n/200).
    #[arg(long)]
    gamma: Option<usize>,
    /// Longest body path, 2 or 3 (default 3).
    #[arg(long)]
    max_hops: Option<u8>,
    /// Seed for instance sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Neighbours explored per node (default 256).
    #[arg(long)]
    degree_cap: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: RuleFormat,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AlignArgs {
    /// Candidate rules, text or JSON.
    #[arg(long)]
    candidates: PathBuf,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    meta: MetaArgs,
    /// JSONL judgment report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Reuse judgments already in the report.
    #[arg(long)]
    resume: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: RuleFormat,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DeriveArgs {
    /// Candidate rules, text or JSON.
    #[arg(long)]
    candidates: PathBuf,
    #[command(flatten)]
    meta: MetaArgs,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct ExpansionArgs {
    /// Rounds of expansion over derived edits (default 1).
    #[arg(long)]
    depth: Option<usize>,
    /// `drop_derived` or `error`.
    #[arg(long)]
    conflict_policy: Option<String>,
    /// Also follow dual paths marked disabled.
    #[arg(long)]
    include_disabled_dual_paths: bool,
    /// Drop derived edits the oracle already believes.
    #[arg(long)]
    skip_noop: bool,
}

#[derive(Args, Debug)]
struct ExpandArgs {
    /// `subject|relation|object`
    #[arg(long)]
    edit: String,
    /// Directive ruleset JSON.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    meta: MetaArgs,
    #[command(flatten)]
    expansion: ExpansionArgs,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// filtered, replaced or in-prompt
    #[arg(long)]
    variant: String,
    /// Dataset JSON.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    meta: MetaArgs,
    /// JSONL decision log; existing entries are reused.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset JSON.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `symbolic:<triples.tsv>` or the base URL of a subject server.
    #[arg(long)]
    subject: String,
    /// Label file for a symbolic subject.
    #[arg(long)]
    subject_labels: Option<PathBuf>,
    /// Tab-separated `alias canonical` file for a symbolic subject.
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Token guarding remote edits (default `run-<seed>`).
    #[arg(long)]
    run_token: Option<String>,
    /// Directive ruleset JSON.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Pre-expanded batch files or directories of them, used instead of expansion.
    #[arg(long)]
    batches: Vec<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    meta: MetaArgs,
    #[command(flatten)]
    expansion: ExpansionArgs,
    /// Recorded in the report; names the default run token.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Report produced with rules.
    #[arg(long = "with")]
    with_rules: PathBuf,
    /// Report produced without rules.
    #[arg(long = "without")]
    without_rules: PathBuf,
    /// Output file; stdout when absent and no --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[command(flatten)]
    meta: MetaArgs,
    /// Tab-separated `alias canonical` file.
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:8765")]
    addr: String,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

/// Inputs read and outputs written by one run.
struct Session {
    cfg: RunConfig,
    out_dir: Option<PathBuf>,
    command: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    manifest_at: Option<PathBuf>,
    settings: Value,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Session {
    fn input(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.exists() {
            bail!("{}: no such file", path.display());
        }
        if path.is_file() {
            self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(path.to_path_buf())
    }

    /// Where an output goes: the explicit path, else `default` inside the
    /// output directory, else stdout.
    fn target(&self, explicit: Option<&PathBuf>, default: &str) -> Option<PathBuf> {
        explicit
            .cloned()
            .or_else(|| self.out_dir.as_ref().map(|d| d.join(default)))
    }

    fn emit(&mut self, explicit: Option<&PathBuf>, default: &str, content: &str) -> Result<()> {
        match self.target(explicit, default) {
            Some(path) => {
                self.write_file(&path, content)?;
                if self.manifest_at.is_none() {
                    self.manifest_at = Some(PathBuf::from(format!("{}.manifest.json", path.display())));
                }
            }
            None => {
                io::stdout().write_all(content.as_bytes())?;
            }
        }
        Ok(())
    }

    fn write_file(&mut self, path: &Path, content: &str) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(path.display().to_string(), hex::encode(Sha256::digest(content.as_bytes())));
        Ok(())
    }

    fn note_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let path = match (&self.out_dir, &self.manifest_at) {
            (Some(d), _) => d.join("manifest.json"),
            (None, Some(p)) => p.clone(),
            (None, None) => return Ok(()),
        };
        let files = |m: &BTreeMap<String, String>| -> Vec<Value> {
            m.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect()
        };
        let manifest = json!({
            "tool": "chainedit",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "settings": self.settings,
            "inputs": files(&self.inputs),
            "outputs": files(&self.outputs),
        });
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    fn store(&mut self, args: &StoreArgs) -> Result<TripleStore> {
        let path = args
            .store
            .clone()
            .or_else(|| self.cfg.paths.store.clone())
            .ok_or_else(|| usage("--store is required"))?;
        let labels = args.labels.clone().or_else(|| self.cfg.paths.labels.clone());
        let path = self.input(&path)?;
        let labels = labels.map(|l| self.input(&l)).transpose()?;
        Ok(TripleStore::ingest(&path, labels.as_deref())?)
    }

    fn meta(&mut self, args: &MetaArgs) -> Result<MetaTable> {
        match args.meta.clone().or_else(|| self.cfg.paths.meta.clone()) {
            Some(p) => {
                let p = self.input(&p)?;
                Ok(MetaTable::load(&p)?)
            }
            None => Ok(MetaTable::with_fallback()),
        }
    }

    fn oracle(&mut self, args: &OracleArgs) -> Result<OracleHandle> {
        let uri = args
            .oracle
            .clone()
            .or_else(|| self.cfg.oracle_uri.clone())
            .ok_or_else(|| usage("--oracle is required"))?;
        let judge = match args.judge_table.clone().or_else(|| self.cfg.paths.judge_table.clone()) {
            Some(p) => {
                let p = self.input(&p)?;
                Some(JudgeTable::load(&p)?)
            }
            None => None,
        };
        if let Some(path) = uri.strip_prefix("mock:") {
            let path = self.input(Path::new(path))?;
            let labels = args.oracle_labels.clone().map(|l| self.input(&l)).transpose()?;
            let store = TripleStore::ingest(&path, labels.as_deref())?;
            let mut o = StoreOracle::new(Arc::new(store));
            if let Some(j) = judge {
                o = o.with_judge(j);
            }
            return Ok(OracleHandle {
                oracle: Box::new(o),
                _replay: None,
            });
        }
        let mut oc = self.cfg.oracle.clone();
        if let Some(m) = &args.model {
            oc.model = m.clone();
        }
        if let Some(path) = uri.strip_prefix("replay:") {
            let path = self.input(Path::new(path))?;
            let server = ReplayServer::start(load_fixtures(&path)?)?;
            oc.endpoint = server.endpoint();
            return Ok(OracleHandle {
                oracle: Box::new(ChatOracle::new(oc)?),
                _replay: Some(server),
            });
        }
        if uri.starts_with("http://") || uri.starts_with("https://") {
            oc.endpoint = uri;
            return Ok(OracleHandle {
                oracle: Box::new(ChatOracle::new(oc)?),
                _replay: None,
            });
        }
        Err(usage(format!("unsupported oracle `{uri}`; use mock:, replay:, http:// or https://")))
    }

    fn expansion(&self, args: &ExpansionArgs) -> Result<crate::chain::ExpansionConfig> {
        let mut e = self.cfg.expansion.clone();
        if let Some(d) = args.depth {
            e.depth = d;
        }
        if let Some(p) = &args.conflict_policy {
            e.conflict_policy = p.parse().map_err(usage)?;
        }
        e.include_disabled_dual_paths |= args.include_disabled_dual_paths;
        e.skip_noop |= args.skip_noop;
        if e.depth == 0 {
            return Err(usage("--depth must be at least 1"));
        }
        Ok(e)
    }
}

struct OracleHandle {
    oracle: Box<dyn KnowledgeOracle>,
    _replay: Option<ReplayServer>,
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out_dir = cli.out_dir.clone().or_else(|| cfg.paths.out_dir.clone());
    let command = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Mine(_) => "mine",
        Command::Align(_) => "align",
        Command::Derive(_) => "derive",
        Command::Expand(_) => "expand",
        Command::BuildDataset(_) => "build-dataset",
        Command::Evaluate(_) => "evaluate",
        Command::Compare(_) => "compare",
        Command::ServeSubject(_) => "serve-subject",
    };
    let mut s = Session {
        cfg,
        out_dir,
        command,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        manifest_at: None,
        settings: Value::Null,
    };
    if let Some(p) = &cli.config {
        s.input(p)?;
    }
    match cli.command {
        Command::Ingest(a) => ingest(&mut s, a)?,
        Command::Mine(a) => mine(&mut s, a)?,
        Command::Align(a) => align(&mut s, a)?,
        Command::Derive(a) => derive(&mut s, a)?,
        Command::Expand(a) => expand_cmd(&mut s, a)?,
        Command::BuildDataset(a) => build(&mut s, a)?,
        Command::Evaluate(a) => evaluate_cmd(&mut s, a)?,
        Command::Compare(a) => compare(&mut s, a)?,
        Command::ServeSubject(a) => return serve(&mut s, a),
    }
    s.finish()
}

fn ingest(s: &mut Session, a: IngestArgs) -> Result<()> {
    let store = s.store(&a.store)?;
    let card = store.index_cardinalities();
    let per_relation: BTreeMap<&String, &usize> = card.by_relation.iter().collect();
    let stats = json!({
        "triples": store.len(),
        "entities": store.entity_count(),
        "relations": per_relation,
        "indexes_consistent": store.indexes_consistent(),
    });
    s.settings = json!({});
    s.emit(a.out.as_ref(), "store-stats.json", &(serde_json::to_string_pretty(&stats)? + "\n"))
}

fn mine(s: &mut Session, a: MineArgs) -> Result<()> {
    let store = s.store(&a.store)?;
    let mut targets: Vec<String> = a.targets.iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    if targets.is_empty() {
        targets = s.cfg.mining.targets.clone();
    }
    if targets.is_empty() {
        return Err(usage("--targets is required"));
    }
    let m = &s.cfg.mining;
    let mut cfg = MiningConfig::default();
    cfg.sample_n = a.sample_n.or(m.sample_n).unwrap_or(cfg.sample_n);
    cfg.gamma = a.gamma.or(m.gamma).unwrap_or_else(|| default_gamma(cfg.sample_n));
    cfg.max_hops = a.max_hops.or(m.max_hops).unwrap_or(cfg.max_hops);
    cfg.seed = a.seed.or(m.seed).or(s.cfg.seed).unwrap_or(cfg.seed);
    cfg.degree_cap = a.degree_cap.or(m.degree_cap).unwrap_or(cfg.degree_cap);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let targets: Vec<RelationId> = targets.into_iter().map(RelationId::from).collect();
    let rules = mine_all(&store, &targets, &cfg)?;
    eprintln!("mined {} candidate rule(s)", rules.len());
    s.settings = json!({ "targets": targets, "mining": cfg });
    let file = CandidateFile::new(rules, Some(cfg));
    match a.format {
        RuleFormat::Text => s.emit(a.out.as_ref(), "candidates.txt", &file.to_text()),
        RuleFormat::Json => s.emit(a.out.as_ref(), "candidates.json", &file.to_json()),
    }
}

fn align(s: &mut Session, a: AlignArgs) -> Result<()> {
    let path = s.input(&a.candidates)?;
    let candidates = CandidateFile::load(&path)?;
    let meta = s.meta(&a.meta)?;
    let handle = s.oracle(&a.oracle)?;
    let report = a
        .report
        .clone()
        .or_else(|| s.out_dir.as_ref().map(|d| d.join("alignment-report.jsonl")));
    let outcome = if a.resume {
        let report = report.clone().ok_or_else(|| usage("--resume needs --report or --out-dir"))?;
        resume_alignment(&candidates.rules, handle.oracle.as_ref(), &meta, &report)?
    } else {
        if let Some(r) = &report {
            if let Some(parent) = r.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
        }
        align_rules(&candidates.rules, handle.oracle.as_ref(), &meta, report.as_deref())?
    };
    if let Some(r) = &report {
        s.note_output(r)?;
    }
    eprintln!(
        "accepted {} of {} candidate rule(s) with {} judge call(s)",
        outcome.accepted.len(),
        candidates.rules.len(),
        outcome.oracle_calls
    );
    s.settings = json!({ "resume": a.resume, "oracle": a.oracle.oracle });
    let file = CandidateFile::new(outcome.accepted, candidates.config);
    match a.format {
        RuleFormat::Text => s.emit(a.out.as_ref(), "aligned.txt", &file.to_text()),
        RuleFormat::Json => s.emit(a.out.as_ref(), "aligned.json", &file.to_json()),
    }
}

fn derive(s: &mut Session, a: DeriveArgs) -> Result<()> {
    let path = s.input(&a.candidates)?;
    let candidates = CandidateFile::load(&path)?;
    let meta = s.meta(&a.meta)?;
    let mut directives = Vec::new();
    for rule in &candidates.rules {
        match derive_directives(rule, &meta) {
            Derivation::Derived(ds) => {
                for d in ds {
                    if !directives.iter().any(|e: &crate::dsl::DirectiveRule| e.id == d.id) {
                        directives.push(d);
                    }
                }
            }
            Derivation::NotAutoDerivable { rule, reason } => {
                eprintln!("not derived: {}: {reason}", rule.rule_id());
            }
        }
    }
    let rules = RuleSet::new(directives)?;
    eprintln!("derived {} directive(s)", rules.len());
    s.settings = json!({});
    s.emit(a.out.as_ref(), "ruleset.json", &rules.to_json())
}

fn load_rules(s: &mut Session, explicit: Option<&PathBuf>) -> Result<Option<RuleSet>> {
    match explicit.cloned().or_else(|| s.cfg.paths.rules.clone()) {
        Some(p) => {
            let p = s.input(&p)?;
            Ok(Some(RuleSet::load(&p)?))
        }
        None => Ok(None),
    }
}

fn expand_cmd(s: &mut Session, a: ExpandArgs) -> Result<()> {
    let edit: EditRequest = a.edit.parse().map_err(|e: crate::chain::ExpandError| usage(e.to_string()))?;
    let rules = load_rules(s, a.rules.as_ref())?.unwrap_or_default();
    let meta = s.meta(&a.meta)?;
    let cfg = s.expansion(&a.expansion)?;
    let batch = if rules.is_empty() {
        EditBatch::original_only(edit)
    } else {
        let handle = s.oracle(&a.oracle)?;
        expand(&edit, &rules, handle.oracle.as_ref(), &meta, &cfg)?
    };
    s.settings = json!({ "edit": a.edit, "expansion": cfg });
    s.emit(a.out.as_ref(), "batch.jsonl", &batch.to_jsonl())
}

fn dataset_path(s: &mut Session, explicit: Option<&PathBuf>) -> Result<PathBuf> {
    let p = explicit
        .cloned()
        .or_else(|| s.cfg.paths.dataset.clone())
        .ok_or_else(|| usage("--dataset is required"))?;
    s.input(&p)
}

fn build(s: &mut Session, a: BuildArgs) -> Result<()> {
    let variant: VariantKind = a.variant.parse().map_err(usage)?;
    let path = dataset_path(s, a.dataset.as_ref())?;
    let cases = load_cases(&path)?;
    let meta = s.meta(&a.meta)?;
    let log_path = a
        .log
        .clone()
        .or_else(|| s.out_dir.as_ref().map(|d| d.join(format!("{variant}-decisions.jsonl"))));
    let mut log = match &log_path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            DecisionLog::open(p)?
        }
        None => DecisionLog::in_memory(),
    };
    let out = match variant {
        VariantKind::Filtered => {
            let h = s.oracle(&a.oracle)?;
            build_filtered(&cases, h.oracle.as_ref(), &meta, &mut log)?
        }
        VariantKind::Replaced => {
            let h = s.oracle(&a.oracle)?;
            build_replaced(&cases, h.oracle.as_ref(), &meta, &mut log)?
        }
        VariantKind::InPrompt => build_in_prompt(&cases, &meta, &mut log)?,
        VariantKind::Original => return Err(usage("--variant must be filtered, replaced or in-prompt")),
    };
    drop(log);
    if let Some(p) = &log_path {
        s.note_output(p)?;
    }
    let before: usize = cases.iter().map(|c| c.queries.len()).sum();
    let after: usize = out.iter().map(|c| c.queries.len()).sum();
    eprintln!("{variant}: {} case(s), {after} of {before} queries", out.len());
    s.settings = json!({ "variant": variant });
    s.emit(a.out.as_ref(), &format!("dataset-{variant}.json"), &cases_to_json(&out))
}

fn read_aliases(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(a, c)| (a.trim().to_string(), c.trim().to_string()))
                .ok_or_else(|| anyhow!("{} line {}: expected `alias<TAB>canonical`", path.display(), i + 1))
        })
        .collect()
}

fn batch_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn evaluate_cmd(s: &mut Session, a: EvaluateArgs) -> Result<()> {
    let path = dataset_path(s, a.dataset.as_ref())?;
    let cases = load_cases(&path)?;
    let meta = s.meta(&a.meta)?;
    let cfg = EvalConfig {
        expansion: s.expansion(&a.expansion)?,
        seed: a.seed.or(s.cfg.seed).unwrap_or(0),
    };
    let mut subject: Box<dyn SubjectModel> = if let Some(p) = a.subject.strip_prefix("symbolic:") {
        let store_path = s.input(Path::new(p))?;
        let labels = a.subject_labels.clone().map(|l| s.input(&l)).transpose()?;
        let store = TripleStore::ingest(&store_path, labels.as_deref())?;
        let mut subj = SymbolicSubject::new(Arc::new(store), meta.clone());
        if let Some(al) = &a.aliases {
            let al = s.input(al)?;
            subj = subj.with_aliases(read_aliases(&al)?);
        }
        Box::new(subj)
    } else if a.subject.starts_with("http://") || a.subject.starts_with("https://") {
        let token = a.run_token.clone().unwrap_or_else(|| format!("run-{}", cfg.seed));
        Box::new(RemoteSubject::new(&a.subject, token, Duration::from_secs(120))?)
    } else {
        return Err(usage(format!("unsupported subject `{}`", a.subject)));
    };

    let report: MetricReport = if !a.batches.is_empty() {
        let mut batches = Vec::new();
        for p in &a.batches {
            for f in batch_files(p)? {
                let f = s.input(&f)?;
                batches.push(load_batch(&f)?);
            }
        }
        evaluate_batches(&cases, subject.as_mut(), &batches, &cfg)
    } else {
        let rules = load_rules(s, a.rules.as_ref())?;
        match &rules {
            Some(r) => {
                let h = s.oracle(&a.oracle)?;
                evaluate(&cases, subject.as_mut(), Some(r), h.oracle.as_ref(), &meta, &cfg)
            }
            None => {
                let none = StoreOracle::new(Arc::new(TripleStore::default()));
                evaluate(&cases, subject.as_mut(), None, &none, &meta, &cfg)
            }
        }
    };
    s.settings = json!({ "subject": a.subject, "config": cfg });
    let table = report.render_table();
    let json = report.to_json();
    if s.target(a.out.as_ref(), "report.json").is_some() {
        s.emit(a.out.as_ref(), "report.json", &json)?;
        print!("{table}");
    } else {
        eprint!("{table}");
        print!("{json}");
    }
    Ok(())
}

fn compare(s: &mut Session, a: CompareArgs) -> Result<()> {
    let w = s.input(&a.with_rules)?;
    let wo = s.input(&a.without_rules)?;
    let with = MetricReport::from_json(&fs::read_to_string(&w)?)?;
    let without = MetricReport::from_json(&fs::read_to_string(&wo)?)?;
    let cmp = compare_reports(&with, &without)?;
    s.settings = json!({});
    if s.target(a.out.as_ref(), "comparison.json").is_some() {
        s.emit(a.out.as_ref(), "comparison.json", &(serde_json::to_string_pretty(&cmp)? + "\n"))?;
    }
    print!("{}", cmp.render_table());
    Ok(())
}

fn serve(s: &mut Session, a: ServeArgs) -> Result<()> {
    let store = s.store(&a.store)?;
    let meta = s.meta(&a.meta)?;
    let mut subject = SymbolicSubject::new(Arc::new(store), meta);
    if let Some(al) = &a.aliases {
        subject = subject.with_aliases(read_aliases(al)?);
    }
    let server = serve_subject(subject, &a.addr)?;
    eprintln!("serving subject on {}", server.url());
    server.join();
    Ok(())
}
