//! Command-line front end for the hereditarily finite set laboratory.
//!
//! One binary, `vlab`, exposes every public operation of the core
//! library through exactly one subcommand (see [`OPERATION_REGISTRY`]).
//! Each invocation produces a [`report::Report`]: a deterministic body
//! (operation, config digest, inputs digest, verdicts, findings) plus a
//! runtime field outside the body. Identical configuration and inputs
//! yield byte-identical bodies.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use vlab_core::coding::{
    self, encode_set, quotient, validate_coding_pair, CodingTree, MutationKind, RawTree,
};
use vlab_core::forcing::{
    absoluteness_check, all_filters, extension, forces_semantic, forces_syntactic,
    generic_filters, name_space, PName, Poset,
};
use vlab_core::hf::SetValue;
use vlab_core::lab::{
    global_covers, ConsistencyVerdict, DefPool, ExtensionMode, Lab, SearchCaps,
    UniverseModel, DEFAULT_ELEMENT_CAP,
};
use vlab_core::lhier::{
    build_levels, collection_instance, proof_code, proof_rank, separation_instance,
};
use vlab_core::logic::{
    classify, decode_formula, encode_formula, parse_formula, satisfies, Assignment,
    ComplexityClass, Formula, Signature,
};
use vlab_core::proofs::{
    check_proof, refutation_search, sample_mutant, sample_valid_proof, ProofTree, Theory,
};
use vlab_core::structure::{FiniteStructure, PredName};

use report::{Finding, InputRecorder, OutputFormat, Report, ReportBody, RunConfig};

/// Rank budget of the closure operations behind every universe model.
pub const DESK_BUDGET: u32 = 2;

/// Environment variable overriding the directory reports are written to.
pub const OUTPUT_DIR_VAR: &str = "VLAB_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{source_name}: {message}")]
    Input {
        source_name: String,
        message: String,
    },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Core(String),
}

macro_rules! core_errors {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> CliError {
                CliError::Core(e.to_string())
            }
        })*
    };
}

core_errors!(
    vlab_core::hf::HfError,
    vlab_core::logic::LogicError,
    vlab_core::coding::CodingError,
    vlab_core::proofs::ProofError,
    vlab_core::lhier::LhierError,
    vlab_core::forcing::ForcingError,
    vlab_core::lab::LabError,
    vlab_core::structure::StructureError
);

// ---------------------------------------------------------------------------
// Command-line grammar
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "vlab",
    version,
    about = "A desk-scale laboratory for hereditarily finite set universes"
)]
pub struct Cli {
    /// Optional JSON config file; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Write the report here instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Report rendering.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,

    /// Cumulative stage bounding outer-model and witness searches.
    #[arg(long, global = true, value_name = "N")]
    pub stage_budget: Option<u32>,

    /// Rank cap for forcing-name spaces.
    #[arg(long, global = true, value_name = "N")]
    pub rank_cap: Option<u32>,

    /// Depth cap for proof search.
    #[arg(long, global = true, value_name = "N")]
    pub proof_depth: Option<u32>,

    /// Level cap for constructible towers.
    #[arg(long, global = true, value_name = "N")]
    pub level_cap: Option<u32>,

    /// Default sentence-pool file for pool-driven subcommands.
    #[arg(long, global = true, value_name = "FILE")]
    pub pool: Option<String>,

    /// Seed for generated corpora.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hereditarily finite set utilities.
    #[command(subcommand)]
    Hf(HfCmd),
    /// First-order formulas: parsing, complexity, set codes, truth.
    #[command(subcommand)]
    Formula(FormulaCmd),
    /// Membership-tree codings of sets and operations on codes.
    #[command(subcommand)]
    Code(CodeCmd),
    /// Proof checking and bounded proof search.
    #[command(subcommand)]
    Prove(ProveCmd),
    /// Definability towers over a base set.
    #[command(subcommand)]
    Lhier(LhierCmd),
    /// Finite forcing: posets, names, extensions, the forcing relation.
    #[command(subcommand)]
    Force(ForceCmd),
    /// Universe models and the relations between them.
    #[command(subcommand)]
    Lab(LabCmd),
}

#[derive(Debug, Subcommand)]
pub enum HfCmd {
    /// Parse a set literal and describe it.
    Show { set: String },
    /// The n-th von Neumann ordinal.
    Ordinal { n: u32 },
    /// The n-th cumulative stage.
    Stage { n: u32 },
}

#[derive(Debug, Subcommand)]
pub enum FormulaCmd {
    /// Parse a formula; report its complexity class and free variables.
    Info { formula: String },
    /// Encode a formula as a hereditarily finite set.
    Code {
        formula: String,
        /// File holding the base domain gathered as one set literal.
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        /// Declare this many uninterpreted width predicates W0, W1, ...
        #[arg(long, default_value_t = 0, value_name = "N")]
        extras: u32,
    },
    /// Decode a set code back into a formula.
    Decode {
        code: String,
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, default_value_t = 0, value_name = "N")]
        extras: u32,
    },
    /// Evaluate a formula over a base structure.
    Eval {
        formula: String,
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        /// Variable assignments, e.g. `--assign x={}`.
        #[arg(long, value_name = "VAR=SET")]
        assign: Vec<String>,
        /// Width-predicate interpretations, e.g. `--with W0={{} {{}}}`
        /// (the set gathers the predicate's members).
        #[arg(long, value_name = "NAME=SET")]
        with: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CodeCmd {
    /// Encode a set as a membership tree, canonicalize, and decode back.
    Tree { set: String },
    /// Validate a raw tree file as a coding pair.
    Validate { tree: PathBuf },
    /// The canonical ordered-pair representative of two sets.
    Rep { x: String, y: String },
    /// Compare two sets through their canonical codes.
    Compare { x: String, y: String },
    /// Pairing, union, and separation computed on codes.
    Ops {
        #[arg(long, value_name = "SET")]
        left: String,
        #[arg(long, value_name = "SET")]
        right: Option<String>,
        /// Separation formula with exactly one free variable.
        #[arg(long, value_name = "FORMULA")]
        sep: Option<String>,
        #[arg(long, default_value = "x", value_name = "VAR")]
        sep_var: String,
    },
    /// Exhaustive encode/canonicalize/decode audit up to a rank.
    Roundtrip {
        #[arg(long, default_value_t = 3, value_name = "N")]
        max_rank: u32,
        /// Relation-agreement pairs sampled when the fleet is large.
        #[arg(long, default_value_t = 1000, value_name = "N")]
        pairs: usize,
    },
    /// Seeded corpus fuzzing of the coding-pair conditions.
    Fuzz {
        #[arg(long, default_value_t = 200, value_name = "N")]
        pairs: usize,
        #[arg(long, default_value_t = 100, value_name = "N")]
        mutations: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProveCmd {
    /// Check a proof file against a theory.
    Check {
        proof: PathBuf,
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "FILE")]
        theory: Option<PathBuf>,
    },
    /// Search for a refutation of a theory.
    Search {
        #[arg(long, value_name = "FILE")]
        theory: PathBuf,
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "N")]
        depth: Option<u32>,
    },
    /// Tandem refutation/model search with a three-way verdict.
    Consistent {
        #[arg(long, value_name = "FILE")]
        theory: PathBuf,
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "N")]
        depth: Option<u32>,
        #[arg(long, value_name = "N")]
        stage: Option<u32>,
    },
    /// Emit a seeded sample proof (optionally with a rejected mutant).
    Sample {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "FILE")]
        theory: Option<PathBuf>,
        #[arg(long)]
        mutate: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum LhierCmd {
    /// Build the definability tower over a base set.
    Level {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "N")]
        steps: Option<u32>,
        #[arg(long, value_enum, default_value_t = DefPoolArg::Standard)]
        def_pool: DefPoolArg,
    },
    /// Check a separation or collection instance against the tower.
    Kp {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_enum)]
        axiom: KpAxiom,
        #[arg(long, value_name = "FORMULA")]
        formula: String,
        /// The bounding set the instance ranges over.
        #[arg(long, value_name = "SET")]
        bound: String,
        #[arg(long, default_value = "x", value_name = "VAR")]
        var: String,
        /// Witness variable for collection instances.
        #[arg(long, default_value = "y", value_name = "VAR")]
        yvar: String,
        #[arg(long, value_name = "N")]
        steps: Option<u32>,
        #[arg(long, value_enum, default_value_t = DefPoolArg::Standard)]
        def_pool: DefPoolArg,
    },
    /// Locate a proof's set code in the adjunction tower over a theory.
    Rank {
        #[arg(long, value_name = "FILE")]
        proof: PathBuf,
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "FILE")]
        theory: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ForceCmd {
    /// Describe a poset: atoms, generic filters, genericity audit.
    Poset { poset: PathBuf },
    /// Chain condition report with a maximum-antichain witness.
    Ccc { poset: PathBuf },
    /// Evaluate a name under a filter.
    Eval {
        #[arg(long, value_name = "FILE")]
        poset: PathBuf,
        /// `generic`, `check <set>`, or a name-coded set literal.
        #[arg(long, value_name = "NAME")]
        name: String,
        /// Condition label whose upward closure is the filter.
        #[arg(long, value_name = "LABEL")]
        generic: String,
    },
    /// Build a generic extension of a ground structure.
    Extend {
        #[arg(long, value_name = "FILE")]
        ground: PathBuf,
        #[arg(long, value_name = "FILE")]
        poset: PathBuf,
        #[arg(long, value_name = "LABEL")]
        generic: String,
        #[arg(long, value_name = "N")]
        name_rank: Option<u32>,
    },
    /// The forcing relation, computed semantically and syntactically.
    Relation {
        #[arg(long, value_name = "FILE")]
        ground: PathBuf,
        #[arg(long, value_name = "FILE")]
        poset: PathBuf,
        #[arg(long, value_name = "FORMULA")]
        formula: String,
        /// Condition label; defaults to the greatest condition.
        #[arg(long, value_name = "LABEL")]
        condition: Option<String>,
        #[arg(long, value_name = "N")]
        name_rank: Option<u32>,
    },
    /// Existential-absoluteness audit over a formula pool (set the pool
    /// with the global `--pool`).
    MaCheck {
        #[arg(long, value_name = "FILE")]
        ground: PathBuf,
        #[arg(long, value_name = "FILE")]
        poset: PathBuf,
        #[arg(long, default_value = "x", value_name = "VAR")]
        var: String,
        #[arg(long, value_name = "N")]
        name_rank: Option<u32>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LabCmd {
    /// Enumerate outer models inside a stage.
    Outer {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "N")]
        stage: Option<u32>,
    },
    /// Enumerate inner models.
    Inner {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
    },
    /// Reflection check: inner-of-outer truths reflect to inner truths
    /// (set the sentence pool with the global `--pool`).
    Imh {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::AllOuter)]
        mode: ModeArg,
        /// Search the stage's model zoo for truth-equivalent pairs with
        /// differing verdicts instead of checking one base.
        #[arg(long)]
        pairwise: bool,
        #[arg(long, value_name = "N")]
        stage: Option<u32>,
        #[arg(long, default_value_t = 3, value_name = "N")]
        cap: usize,
    },
    /// Covering multiplicity between an inner and an outer model.
    Covering {
        #[arg(long, value_name = "FILE")]
        ground: PathBuf,
        #[arg(long, value_name = "FILE")]
        wide: PathBuf,
        #[arg(long, value_name = "N")]
        kappa: usize,
        #[arg(long, default_value_t = 3, value_name = "N")]
        cap: usize,
    },
    /// Grounds, mantle, and the ground axiom.
    Geology {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, default_value_t = 3, value_name = "N")]
        cap: usize,
    },
    /// Dual refutation/outer-model search for a width theory.
    Barwise {
        #[arg(long, value_name = "FILE")]
        base: PathBuf,
        #[arg(long, value_name = "FILE")]
        theory: PathBuf,
        #[arg(long, value_name = "N")]
        depth: Option<u32>,
        #[arg(long, value_name = "N")]
        stage: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DefPoolArg {
    Standard,
    AdjunctionOnly,
    Audit,
}

impl DefPoolArg {
    fn to_pool(self) -> DefPool {
        match self {
            DefPoolArg::Standard => DefPool::standard(),
            DefPoolArg::AdjunctionOnly => DefPool::adjunction_only(),
            DefPoolArg::Audit => DefPool::audit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KpAxiom {
    Separation,
    Collection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Admit only forcing extensions into the antecedent.
    SetGeneric,
    /// Admit every outer model inside the stage.
    AllOuter,
}

impl ModeArg {
    fn to_mode(self) -> ExtensionMode {
        match self {
            ModeArg::SetGeneric => ExtensionMode::ForcingExtensions,
            ModeArg::AllOuter => ExtensionMode::AllOuter,
        }
    }
}

// ---------------------------------------------------------------------------
// Operation registry
// ---------------------------------------------------------------------------

/// Maps every public core operation to the one subcommand that exposes
/// it. The audit test checks the table is duplicate-free and that every
/// listed subcommand path exists.
pub const OPERATION_REGISTRY: &[(&str, &str)] = &[
    ("hf.make_set", "hf show"),
    ("hf.ordinal", "hf ordinal"),
    ("hf.stage", "hf stage"),
    ("hf.closure_rank_and_predicates", "hf show"),
    ("logic.encode_formula", "formula code"),
    ("logic.decode_formula", "formula decode"),
    ("logic.satisfies", "formula eval"),
    ("logic.classify", "formula info"),
    ("coding.validate_coding_pair", "code validate"),
    ("coding.encode_set", "code tree"),
    ("coding.quotient", "code tree"),
    ("coding.decode", "code tree"),
    ("coding.rep_pair", "code rep"),
    ("coding.membership_and_equality_on_codes", "code compare"),
    ("coding.operations_on_codes", "code ops"),
    ("proofs.check_proof", "prove check"),
    ("proofs.refutation_search", "prove search"),
    ("proofs.consistent", "prove consistent"),
    ("lhier.build_levels", "lhier level"),
    ("lhier.instance_checks", "lhier kp"),
    ("lhier.proof_rank", "lhier rank"),
    ("forcing.atoms_and_generic_filters", "force poset"),
    ("forcing.chain_condition", "force ccc"),
    ("forcing.eval_name", "force eval"),
    ("forcing.extension", "force extend"),
    ("forcing.forces", "force relation"),
    ("forcing.absoluteness_check", "force ma-check"),
    ("lab.outer_models", "lab outer"),
    ("lab.inner_models", "lab inner"),
    ("lab.reflection_check", "lab imh"),
    ("lab.global_covers", "lab covering"),
    ("lab.geology", "lab geology"),
    ("lab.dual_search", "lab barwise"),
];

/// Subcommands that only orchestrate operations already owned by another
/// subcommand (suite runners and corpus emitters).
pub const AUXILIARY_SUBCOMMANDS: &[&str] = &[
    "code roundtrip",
    "code fuzz",
    "prove sample",
];

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parses the process arguments, runs the command, and writes the
/// report. Returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let out = cli.out.clone();
    match dispatch(cli) {
        Ok((report, config)) => {
            let rendered = report.render(config.format);
            match write_report(&rendered, out.as_deref()) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Resolves the configuration, runs the subcommand, and assembles the
/// timed report.
pub fn dispatch(cli: Cli) -> Result<(Report, RunConfig), CliError> {
    let config = resolve_config(&cli)?;
    let start = Instant::now();
    let body = handle(&cli.command, &config)?;
    Ok((
        Report {
            body,
            runtime_ms: start.elapsed().as_millis(),
        },
        config,
    ))
}

/// Test and tooling hook: run as if invoked with these arguments.
pub fn run_with_args<I, S>(args: I) -> Result<(Report, RunConfig), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut full = vec!["vlab".to_string()];
    full.extend(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(full).map_err(|e| CliError::Usage(e.to_string()))?;
    dispatch(cli)
}

fn write_report(rendered: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        None => {
            print!("{rendered}");
            Ok(())
        }
        Some(path) => {
            let resolved = match std::env::var_os(OUTPUT_DIR_VAR) {
                Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
                _ => path.to_path_buf(),
            };
            std::fs::write(&resolved, rendered).map_err(|e| CliError::Io {
                path: resolved.display().to_string(),
                message: e.to_string(),
            })
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = read_text(path)?;
        let file: report::ConfigFile =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!(
                "{}: {e}",
                path.display()
            )))?;
        file.apply(&mut config);
    }
    if let Some(v) = cli.stage_budget {
        config.stage_budget = v;
    }
    if let Some(v) = cli.rank_cap {
        config.rank_cap = v;
    }
    if let Some(v) = cli.proof_depth {
        config.proof_depth = v;
    }
    if let Some(v) = cli.level_cap {
        config.level_cap = v;
    }
    if let Some(v) = &cli.pool {
        config.pool = Some(v.clone());
    }
    if let Some(v) = cli.format {
        config.format = v;
    }
    if let Some(v) = cli.seed {
        config.seed = v;
    }
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads a file holding one set literal (comments allowed) and records
/// its bytes under the given input name.
fn load_set_file(
    rec: &mut InputRecorder,
    name: &str,
    path: &Path,
) -> Result<SetValue, CliError> {
    let text = read_text(path)?;
    rec.arg(name, &text);
    SetValue::parse(strip_comments(&text).trim()).map_err(|e| CliError::Input {
        source_name: path.display().to_string(),
        message: e.to_string(),
    })
}

/// A base file gathers a structure's domain as one set literal.
fn load_structure(
    rec: &mut InputRecorder,
    name: &str,
    path: &Path,
) -> Result<FiniteStructure, CliError> {
    let set = load_set_file(rec, name, path)?;
    FiniteStructure::new(set.elements().iter().cloned()).map_err(|e| CliError::Input {
        source_name: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_formula_lines(
    rec: &mut InputRecorder,
    name: &str,
    path: &Path,
) -> Result<Vec<Formula>, CliError> {
    let text = read_text(path)?;
    rec.arg(name, &text);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(parse_formula(t).map_err(|e| CliError::Input {
            source_name: format!("{} line {}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Theory files hold `extra <Name>` declarations followed by sentences,
/// one per line.
fn load_theory(
    rec: &mut InputRecorder,
    name: &str,
    path: &Path,
    base: &FiniteStructure,
) -> Result<Theory, CliError> {
    let text = read_text(path)?;
    rec.arg(name, &text);
    let mut sig = Signature::new(base.clone());
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(extra) = t.strip_prefix("extra ") {
            sig.declare_extra(extra.trim(), None);
            continue;
        }
        sentences.push(parse_formula(t).map_err(|e| CliError::Input {
            source_name: format!("{} line {}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Theory::new(sig, sentences).map_err(|e| CliError::Input {
        source_name: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_poset(rec: &mut InputRecorder, name: &str, path: &Path) -> Result<Poset, CliError> {
    let text = read_text(path)?;
    rec.arg(name, &text);
    Poset::parse(&text).map_err(|e| CliError::Input {
        source_name: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse_inline_formula(rec: &mut InputRecorder, name: &str, text: &str) -> Result<Formula, CliError> {
    rec.arg(name, text);
    parse_formula(text).map_err(|e| CliError::Input {
        source_name: format!("argument {name}"),
        message: e.to_string(),
    })
}

fn parse_inline_set(rec: &mut InputRecorder, name: &str, text: &str) -> Result<SetValue, CliError> {
    rec.arg(name, text);
    SetValue::parse(text).map_err(|e| CliError::Input {
        source_name: format!("argument {name}"),
        message: e.to_string(),
    })
}

fn condition_index(poset: &Poset, label: &str) -> Result<usize, CliError> {
    poset.index_of(label).ok_or_else(|| CliError::Usage(format!(
        "no condition labeled '{label}' in the poset"
    )))
}

fn upward_filter(poset: &Poset, p: usize) -> BTreeSet<usize> {
    (0..poset.len()).filter(|&q| poset.le(p, q)).collect()
}

fn model_of(lab: &mut Lab, structure: &FiniteStructure, source: &str) -> Result<UniverseModel, CliError> {
    lab.model(structure.domain().iter().cloned())
        .map_err(|e| CliError::Input {
            source_name: source.to_string(),
            message: e.to_string(),
        })
}

fn complexity_name(c: ComplexityClass) -> String {
    match c {
        ComplexityClass::Delta0 => "Delta0".to_string(),
        ComplexityClass::Sigma(n) => format!("Sigma{n}"),
        ComplexityClass::Pi(n) => format!("Pi{n}"),
    }
}

fn one_line(text: &str) -> String {
    text.lines().collect::<Vec<_>>().join("; ")
}

fn v(x: impl ToString) -> String {
    x.to_string()
}

type Verdicts = BTreeMap<String, String>;

fn finding(label: impl Into<String>, detail: impl Into<String>) -> Finding {
    Finding {
        label: label.into(),
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

pub fn handle(command: &Command, config: &RunConfig) -> Result<ReportBody, CliError> {
    match command {
        Command::Hf(c) => handle_hf(c, config),
        Command::Formula(c) => handle_formula(c, config),
        Command::Code(c) => handle_code(c, config),
        Command::Prove(c) => handle_prove(c, config),
        Command::Lhier(c) => handle_lhier(c, config),
        Command::Force(c) => handle_force(c, config),
        Command::Lab(c) => handle_lab(c, config),
    }
}

fn handle_hf(cmd: &HfCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    match cmd {
        HfCmd::Show { set } => {
            let mut rec = InputRecorder::new("hf show");
            let x = parse_inline_set(&mut rec, "set", set)?;
            let tc = x.transitive_closure();
            let mut verdicts = Verdicts::new();
            verdicts.insert("notation".into(), x.notation());
            verdicts.insert("rank".into(), v(x.rank()));
            verdicts.insert("elements".into(), v(x.len()));
            verdicts.insert("is_transitive".into(), v(x.is_transitive()));
            verdicts.insert("is_ordinal".into(), v(x.is_ordinal()));
            verdicts.insert("closure_size".into(), v(tc.len()));
            let findings = vec![finding("transitive_closure", tc.notation())];
            Ok(rec.body(config, verdicts, findings))
        }
        HfCmd::Ordinal { n } => {
            let mut rec = InputRecorder::new("hf ordinal");
            rec.arg("n", n.to_string());
            let x = SetValue::ordinal(*n);
            let mut verdicts = Verdicts::new();
            verdicts.insert("notation".into(), x.notation());
            verdicts.insert("rank".into(), v(x.rank()));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        HfCmd::Stage { n } => {
            let mut rec = InputRecorder::new("hf stage");
            rec.arg("n", n.to_string());
            let x = SetValue::stage(*n)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("members".into(), v(x.len()));
            verdicts.insert("rank".into(), v(x.rank()));
            let findings = if x.len() <= 16 {
                vec![finding("stage", x.notation())]
            } else {
                Vec::new()
            };
            Ok(rec.body(config, verdicts, findings))
        }
    }
}

fn signature_with_extras(base: &FiniteStructure, extras: u32) -> Signature {
    let mut sig = Signature::new(base.clone());
    for k in 0..extras {
        sig.declare_extra(format!("W{k}"), None);
    }
    sig
}

fn handle_formula(cmd: &FormulaCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    match cmd {
        FormulaCmd::Info { formula } => {
            let mut rec = InputRecorder::new("formula info");
            let f = parse_inline_formula(&mut rec, "formula", formula)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("formula".into(), f.to_string());
            verdicts.insert("class".into(), complexity_name(classify(&f)));
            verdicts.insert("free_variables".into(), f.free_vars().join(" "));
            verdicts.insert("is_sentence".into(), v(f.is_sentence()));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        FormulaCmd::Code {
            formula,
            base,
            extras,
        } => {
            let mut rec = InputRecorder::new("formula code");
            let f = parse_inline_formula(&mut rec, "formula", formula)?;
            let structure = load_structure(&mut rec, "base", base)?;
            rec.arg("extras", extras.to_string());
            let sig = signature_with_extras(&structure, *extras);
            let code = encode_formula(&f, &sig)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("code_rank".into(), v(code.rank()));
            let findings = vec![finding("code", code.notation())];
            Ok(rec.body(config, verdicts, findings))
        }
        FormulaCmd::Decode {
            code,
            base,
            extras,
        } => {
            let mut rec = InputRecorder::new("formula decode");
            let c = parse_inline_set(&mut rec, "code", code)?;
            let structure = load_structure(&mut rec, "base", base)?;
            rec.arg("extras", extras.to_string());
            let sig = signature_with_extras(&structure, *extras);
            let f = decode_formula(&c, &sig)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("formula".into(), f.to_string());
            verdicts.insert("class".into(), complexity_name(classify(&f)));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        FormulaCmd::Eval {
            formula,
            base,
            assign,
            with,
        } => {
            let mut rec = InputRecorder::new("formula eval");
            let f = parse_inline_formula(&mut rec, "formula", formula)?;
            let mut structure = load_structure(&mut rec, "base", base)?;
            let mut asg = Assignment::new();
            for entry in assign {
                rec.arg("assign", entry);
                let (var, set_text) = entry.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--assign wants VAR=SET, got '{entry}'"))
                })?;
                let value = SetValue::parse(set_text).map_err(|e| CliError::Input {
                    source_name: format!("assignment {var}"),
                    message: e.to_string(),
                })?;
                asg.insert(var.trim().to_string(), value);
            }
            for entry in with {
                rec.arg("with", entry);
                let (name, set_text) = entry.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--with wants NAME=SET, got '{entry}'"))
                })?;
                let k: u32 = name
                    .trim()
                    .strip_prefix('W')
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| {
                        CliError::Usage(format!("--with names look like W0, got '{name}'"))
                    })?;
                let value = SetValue::parse(set_text).map_err(|e| CliError::Input {
                    source_name: format!("interpretation {name}"),
                    message: e.to_string(),
                })?;
                structure.set_pred(PredName::W(k), value.elements().iter().cloned())?;
            }
            let truth = satisfies(&structure, &f, &asg)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("holds".into(), v(truth));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
    }
}

fn handle_code(cmd: &CodeCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    match cmd {
        CodeCmd::Tree { set } => {
            let mut rec = InputRecorder::new("code tree");
            let x = parse_inline_set(&mut rec, "set", set)?;
            let tree = encode_set(&x);
            let q = quotient(&tree);
            let back = q.decode();
            let mut verdicts = Verdicts::new();
            verdicts.insert("tree_nodes".into(), v(tree.node_count()));
            verdicts.insert("canonical_nodes".into(), v(q.node_count()));
            verdicts.insert("roundtrip_ok".into(), v(back == x));
            verdicts.insert("decoded".into(), back.notation());
            let findings = vec![
                finding("membership_tree", tree.to_outline()),
                finding("canonical_tree", q.describe()),
            ];
            Ok(rec.body(config, verdicts, findings))
        }
        CodeCmd::Validate { tree } => {
            let mut rec = InputRecorder::new("code validate");
            let text = read_text(tree)?;
            rec.arg("tree", &text);
            let raw = RawTree::parse(&text).map_err(|e| CliError::Input {
                source_name: tree.display().to_string(),
                message: e.to_string(),
            })?;
            let mut verdicts = Verdicts::new();
            let mut findings = Vec::new();
            match validate_coding_pair(&raw) {
                Ok(()) => {
                    verdicts.insert("valid".into(), v(true));
                }
                Err(violation) => {
                    verdicts.insert("valid".into(), v(false));
                    findings.push(finding("violation", violation.to_string()));
                }
            }
            Ok(rec.body(config, verdicts, findings))
        }
        CodeCmd::Rep { x, y } => {
            let mut rec = InputRecorder::new("code rep");
            let a = parse_inline_set(&mut rec, "x", x)?;
            let b = parse_inline_set(&mut rec, "y", y)?;
            let pair = coding::rep_pair(&a, &b);
            let mut verdicts = Verdicts::new();
            verdicts.insert("pair".into(), pair.notation());
            verdicts.insert("rank".into(), v(pair.rank()));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        CodeCmd::Compare { x, y } => {
            let mut rec = InputRecorder::new("code compare");
            let a = parse_inline_set(&mut rec, "x", x)?;
            let b = parse_inline_set(&mut rec, "y", y)?;
            let qa = quotient(&encode_set(&a));
            let qb = quotient(&encode_set(&b));
            let mut verdicts = Verdicts::new();
            verdicts.insert("codes_equal".into(), v(coding::tt_equal(&qa, &qb)));
            verdicts.insert("code_membership".into(), v(coding::et_related(&qb, &qa)));
            verdicts.insert("sets_equal".into(), v(a == b));
            verdicts.insert("set_membership".into(), v(b.contains(&a)));
            verdicts.insert(
                "agreement".into(),
                v(coding::tt_equal(&qa, &qb) == (a == b)
                    && coding::et_related(&qb, &qa) == b.contains(&a)),
            );
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        CodeCmd::Ops {
            left,
            right,
            sep,
            sep_var,
        } => {
            let mut rec = InputRecorder::new("code ops");
            let a = parse_inline_set(&mut rec, "left", left)?;
            let qa = quotient(&encode_set(&a));
            let mut verdicts = Verdicts::new();
            let mut findings = Vec::new();
            verdicts.insert("union".into(), coding::union_plus(&qa).decode().notation());
            verdicts.insert("transitivity_check".into(), v(coding::transitivity_check(&qa)));
            if let Some(right) = right {
                let b = parse_inline_set(&mut rec, "right", right)?;
                let qb = quotient(&encode_set(&b));
                let paired = coding::pairing_plus(&qa, &qb).decode();
                verdicts.insert("pairing".into(), paired.notation());
                findings.push(finding(
                    "pairing_agrees_with_sets",
                    v(paired == SetValue::make_set([a.clone(), b.clone()])),
                ));
            }
            if let Some(sep) = sep {
                let phi = parse_inline_formula(&mut rec, "sep", sep)?;
                rec.arg("sep_var", sep_var);
                let ctx = FiniteStructure::hull(&a);
                let separated = coding::separation_plus(&qa, sep_var, &phi, &ctx)?.decode();
                verdicts.insert("separation".into(), separated.notation());
            }
            Ok(rec.body(config, verdicts, findings))
        }
        CodeCmd::Roundtrip { max_rank, pairs } => {
            let mut rec = InputRecorder::new("code roundtrip");
            rec.arg("max_rank", max_rank.to_string());
            rec.arg("pairs", pairs.to_string());
            if *max_rank > 4 {
                return Err(CliError::Usage(format!(
                    "rank cap exceeded: the exhaustive fleet is capped at rank 4, got {max_rank}"
                )));
            }
            let fleet_holder = SetValue::stage(max_rank + 1)?;
            let fleet = fleet_holder.elements();
            let mut roundtrip_mismatches = 0usize;
            let mut quotients = Vec::with_capacity(fleet.len());
            for x in fleet {
                let q = quotient(&encode_set(x));
                if q.decode() != *x {
                    roundtrip_mismatches += 1;
                }
                quotients.push(q);
            }
            let index_pairs: Vec<(usize, usize)> = if fleet.len() <= 64 {
                (0..fleet.len())
                    .flat_map(|i| (0..fleet.len()).map(move |j| (i, j)))
                    .collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                (0..*pairs)
                    .map(|_| {
                        (
                            rand::Rng::gen_range(&mut rng, 0..fleet.len()),
                            rand::Rng::gen_range(&mut rng, 0..fleet.len()),
                        )
                    })
                    .collect()
            };
            let mut relation_mismatches = 0usize;
            for &(i, j) in &index_pairs {
                let tt = coding::tt_equal(&quotients[i], &quotients[j]);
                let et = coding::et_related(&quotients[j], &quotients[i]);
                if tt != (fleet[i] == fleet[j]) || et != fleet[j].contains(&fleet[i]) {
                    relation_mismatches += 1;
                }
            }
            let mut verdicts = Verdicts::new();
            verdicts.insert("sets_checked".into(), v(fleet.len()));
            verdicts.insert("roundtrip_mismatches".into(), v(roundtrip_mismatches));
            verdicts.insert("relation_pairs_checked".into(), v(index_pairs.len()));
            verdicts.insert("relation_mismatches".into(), v(relation_mismatches));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        CodeCmd::Fuzz { pairs, mutations } => {
            let mut rec = InputRecorder::new("code fuzz");
            rec.arg("pairs", pairs.to_string());
            rec.arg("mutations", mutations.to_string());
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut valid_ok = 0usize;
            for _ in 0..*pairs {
                let raw = coding::sample_coding_pair(&mut rng, 4);
                if validate_coding_pair(&raw).is_ok() {
                    valid_ok += 1;
                }
            }
            let mut flagged = 0usize;
            let mut misclassified = 0usize;
            let mut produced = 0usize;
            for i in 0..*mutations {
                let kind = MutationKind::ALL[i % MutationKind::ALL.len()];
                let tree = sample_mutable_tree(&mut rng);
                if let Some(bad) = coding::mutate(&tree, kind, &mut rng) {
                    produced += 1;
                    match validate_coding_pair(&bad) {
                        Err(violation) if kind.expected()(&violation) => flagged += 1,
                        _ => misclassified += 1,
                    }
                }
            }
            let mut verdicts = Verdicts::new();
            verdicts.insert("valid_pairs".into(), v(*pairs));
            verdicts.insert("valid_accepted".into(), v(valid_ok));
            verdicts.insert("mutants_produced".into(), v(produced));
            verdicts.insert("mutants_flagged_correctly".into(), v(flagged));
            verdicts.insert("misclassifications".into(), v(misclassified));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
    }
}

/// A random tree big enough to host any mutation kind.
fn sample_mutable_tree<R: rand::Rng>(rng: &mut R) -> CodingTree {
    loop {
        let x = coding::sample_set(rng, 4);
        if x.rank() >= 2 {
            return encode_set(&x);
        }
    }
}

fn default_theory(base: &FiniteStructure) -> Result<Theory, CliError> {
    Ok(Theory::new(Signature::new(base.clone()), [])?)
}

fn handle_prove(cmd: &ProveCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    match cmd {
        ProveCmd::Check {
            proof,
            base,
            theory,
        } => {
            let mut rec = InputRecorder::new("prove check");
            let text = read_text(proof)?;
            rec.arg("proof", &text);
            let structure = load_structure(&mut rec, "base", base)?;
            let th = match theory {
                Some(path) => load_theory(&mut rec, "theory", path, &structure)?,
                None => default_theory(&structure)?,
            };
            let tree = ProofTree::parse(&text).map_err(|e| CliError::Input {
                source_name: proof.display().to_string(),
                message: e.to_string(),
            })?;
            check_proof(&th, &tree).map_err(|e| CliError::Verification(e.to_string()))?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("accepted".into(), v(true));
            verdicts.insert("depth".into(), v(tree.depth()));
            verdicts.insert("steps".into(), v(tree.node_count()));
            verdicts.insert("conclusion".into(), tree.conclusion.to_string());
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        ProveCmd::Search {
            theory,
            base,
            depth,
        } => {
            let mut rec = InputRecorder::new("prove search");
            let structure = load_structure(&mut rec, "base", base)?;
            let th = load_theory(&mut rec, "theory", theory, &structure)?;
            let depth = depth.unwrap_or(config.proof_depth);
            rec.arg("depth", depth.to_string());
            let found = refutation_search(&th, depth);
            let mut verdicts = Verdicts::new();
            let mut findings = Vec::new();
            verdicts.insert("refutation_found".into(), v(found.is_some()));
            verdicts.insert("depth_cap".into(), v(depth));
            if let Some(tree) = found {
                verdicts.insert("refutation_depth".into(), v(tree.depth()));
                findings.push(finding("refutation", tree.render()));
            }
            Ok(rec.body(config, verdicts, findings))
        }
        ProveCmd::Consistent {
            theory,
            base,
            depth,
            stage,
        } => {
            let mut rec = InputRecorder::new("prove consistent");
            let structure = load_structure(&mut rec, "base", base)?;
            let th = load_theory(&mut rec, "theory", theory, &structure)?;
            let depth = depth.unwrap_or(config.proof_depth);
            let stage = stage.unwrap_or(config.stage_budget);
            rec.arg("depth", depth.to_string());
            rec.arg("stage", stage.to_string());
            let mut lab = Lab::new(DESK_BUDGET, &DefPool::standard(), DEFAULT_ELEMENT_CAP)?;
            let m = model_of(&mut lab, &structure, &base.display().to_string())?;
            let verdict = lab.consistent(&th, &m, depth, stage)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert(
                "verdict".into(),
                match verdict {
                    ConsistencyVerdict::Refuted => "refuted",
                    ConsistencyVerdict::ModelFound => "model-found",
                    ConsistencyVerdict::Unknown => "unknown",
                }
                .to_string(),
            );
            verdicts.insert("depth_cap".into(), v(depth));
            verdicts.insert("stage_cap".into(), v(stage));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        ProveCmd::Sample {
            base,
            theory,
            mutate,
        } => {
            let mut rec = InputRecorder::new("prove sample");
            let structure = load_structure(&mut rec, "base", base)?;
            let th = match theory {
                Some(path) => load_theory(&mut rec, "theory", path, &structure)?,
                None => default_theory(&structure)?,
            };
            rec.arg("mutate", mutate.to_string());
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let proof = sample_valid_proof(&mut rng, &th);
            check_proof(&th, &proof).map_err(|e| CliError::Verification(e.to_string()))?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("accepted".into(), v(true));
            verdicts.insert("depth".into(), v(proof.depth()));
            verdicts.insert("steps".into(), v(proof.node_count()));
            let mut findings = vec![finding("proof", proof.render())];
            if *mutate {
                match sample_mutant(&mut rng, &proof, &th) {
                    Some(bad) => {
                        let rejection = check_proof(&th, &bad)
                            .expect_err("mutants are rejected by construction");
                        verdicts.insert("mutant_rejected".into(), v(true));
                        findings.push(finding("mutant", bad.render()));
                        findings.push(finding("mutant_rejection", rejection.to_string()));
                    }
                    None => {
                        verdicts.insert("mutant_rejected".into(), "not-produced".into());
                    }
                }
            }
            Ok(rec.body(config, verdicts, findings))
        }
    }
}

fn handle_lhier(cmd: &LhierCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    match cmd {
        LhierCmd::Level {
            base,
            steps,
            def_pool,
        } => {
            let mut rec = InputRecorder::new("lhier level");
            let base_set = load_set_file(&mut rec, "base", base)?;
            let steps = steps.unwrap_or(config.level_cap);
            rec.arg("steps", steps.to_string());
            rec.arg("def_pool", format!("{def_pool:?}"));
            let tower = build_levels(&base_set, steps, &def_pool.to_pool(), DEFAULT_ELEMENT_CAP)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("levels".into(), v(tower.level_count()));
            verdicts.insert("base_hull_size".into(), v(tower.level(0).len()));
            verdicts.insert("top_size".into(), v(tower.top().len()));
            let findings = (0..tower.level_count())
                .map(|i| finding(format!("level_{i}"), v(tower.level(i).len())))
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        LhierCmd::Kp {
            base,
            axiom,
            formula,
            bound,
            var,
            yvar,
            steps,
            def_pool,
        } => {
            let mut rec = InputRecorder::new("lhier kp");
            let base_set = load_set_file(&mut rec, "base", base)?;
            let phi = parse_inline_formula(&mut rec, "formula", formula)?;
            let bound_set = parse_inline_set(&mut rec, "bound", bound)?;
            rec.arg("axiom", format!("{axiom:?}"));
            rec.arg("var", var);
            rec.arg("yvar", yvar);
            let steps = steps.unwrap_or(config.level_cap);
            rec.arg("steps", steps.to_string());
            rec.arg("def_pool", format!("{def_pool:?}"));
            let tower = build_levels(&base_set, steps, &def_pool.to_pool(), DEFAULT_ELEMENT_CAP)?;
            let report = match axiom {
                KpAxiom::Separation => separation_instance(&tower, var, &phi, &bound_set)?,
                KpAxiom::Collection => {
                    collection_instance(&tower, var, yvar, &phi, &bound_set)?
                }
            };
            let mut verdicts = Verdicts::new();
            verdicts.insert("holds".into(), v(report.holds));
            if let Some(w) = &report.witness {
                verdicts.insert("witness".into(), w.notation());
            }
            if let Some(l) = report.enumerated_level {
                verdicts.insert("enumerated_level".into(), v(l));
            }
            if let Some(b) = report.adjunction_bound {
                verdicts.insert("adjunction_bound".into(), v(b));
            }
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        LhierCmd::Rank {
            proof,
            base,
            theory,
        } => {
            let mut rec = InputRecorder::new("lhier rank");
            let text = read_text(proof)?;
            rec.arg("proof", &text);
            let structure = load_structure(&mut rec, "base", base)?;
            let th = match theory {
                Some(path) => load_theory(&mut rec, "theory", path, &structure)?,
                None => default_theory(&structure)?,
            };
            let tree = ProofTree::parse(&text).map_err(|e| CliError::Input {
                source_name: proof.display().to_string(),
                message: e.to_string(),
            })?;
            let code = proof_code(&tree, th.signature())?;
            let rank = proof_rank(&tree, &th)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("tower_rank".into(), v(rank));
            verdicts.insert("code_rank".into(), v(code.rank()));
            verdicts.insert("steps".into(), v(tree.node_count()));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
    }
}

fn handle_force(cmd: &ForceCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    match cmd {
        ForceCmd::Poset { poset } => {
            let mut rec = InputRecorder::new("force poset");
            let p = load_poset(&mut rec, "poset", poset)?;
            let atoms = p.atoms();
            let generics = generic_filters(&p);
            // Audit both directions: the returned generics are exactly
            // the filters meeting every dense set.
            let generic_set: BTreeSet<BTreeSet<usize>> = generics.iter().cloned().collect();
            let n = p.len();
            let mut audit_ok = true;
            for filter in all_filters(&p) {
                let meets_all = (0u32..(1 << n))
                    .map(|mask| {
                        (0..n)
                            .filter(|i| mask & (1 << i) != 0)
                            .collect::<BTreeSet<usize>>()
                    })
                    .filter(|d| p.is_dense(d))
                    .all(|d| !d.is_disjoint(&filter));
                if meets_all != generic_set.contains(&filter) {
                    audit_ok = false;
                }
            }
            let labels = |set: &BTreeSet<usize>| {
                set.iter().map(|&i| p.label(i)).collect::<Vec<_>>().join(" ")
            };
            let mut verdicts = Verdicts::new();
            verdicts.insert("conditions".into(), v(p.len()));
            verdicts.insert("greatest".into(), p.label(p.top()).to_string());
            verdicts.insert(
                "atoms".into(),
                atoms.iter().map(|&i| p.label(i)).collect::<Vec<_>>().join(" "),
            );
            verdicts.insert("generic_filters".into(), v(generics.len()));
            verdicts.insert("genericity_audit".into(), v(audit_ok));
            let findings = generics
                .iter()
                .enumerate()
                .map(|(i, g)| finding(format!("generic_{i}"), labels(g)))
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        ForceCmd::Ccc { poset } => {
            let mut rec = InputRecorder::new("force ccc");
            let p = load_poset(&mut rec, "poset", poset)?;
            let (ccc, witness) = p.is_ccc();
            let mut verdicts = Verdicts::new();
            verdicts.insert("chain_condition".into(), v(ccc));
            verdicts.insert("max_antichain_size".into(), v(witness.len()));
            verdicts.insert(
                "witness".into(),
                witness
                    .iter()
                    .map(|&i| p.label(i))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        ForceCmd::Eval {
            poset,
            name,
            generic,
        } => {
            let mut rec = InputRecorder::new("force eval");
            let p = load_poset(&mut rec, "poset", poset)?;
            rec.arg("name", name);
            rec.arg("generic", generic);
            let n = if name.trim() == "generic" {
                PName::generic(&p)
            } else if let Some(rest) = name.trim().strip_prefix("check ") {
                let x = SetValue::parse(rest.trim()).map_err(|e| CliError::Input {
                    source_name: "argument name".into(),
                    message: e.to_string(),
                })?;
                PName::check(&x, &p)
            } else {
                let x = SetValue::parse(name.trim()).map_err(|e| CliError::Input {
                    source_name: "argument name".into(),
                    message: e.to_string(),
                })?;
                PName::parse(&x, &p).ok_or_else(|| CliError::Input {
                    source_name: "argument name".into(),
                    message: format!("{} is not a name-coded set for this poset", x.notation()),
                })?
            };
            let cond = condition_index(&p, generic)?;
            let filter = upward_filter(&p, cond);
            let value = n.eval(&filter);
            let mut verdicts = Verdicts::new();
            verdicts.insert("value".into(), value.notation());
            verdicts.insert("name_rank".into(), v(n.rank()));
            verdicts.insert(
                "filter".into(),
                filter
                    .iter()
                    .map(|&i| p.label(i))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        ForceCmd::Extend {
            ground,
            poset,
            generic,
            name_rank,
        } => {
            let mut rec = InputRecorder::new("force extend");
            let g = load_structure(&mut rec, "ground", ground)?;
            let p = load_poset(&mut rec, "poset", poset)?;
            rec.arg("generic", generic);
            let rank_cap = name_rank.unwrap_or(config.rank_cap);
            rec.arg("name_rank", rank_cap.to_string());
            let cond = condition_index(&p, generic)?;
            let filter = upward_filter(&p, cond);
            let names = name_space(&g, &p, rank_cap);
            let ext = extension(&g, &filter, &names)?;
            let new_elements: Vec<&SetValue> =
                ext.domain().iter().filter(|x| !g.contains(x)).collect();
            let same_naturals = ext.natural_height() == g.natural_height();
            let mut verdicts = Verdicts::new();
            verdicts.insert("ground_size".into(), v(g.domain().len()));
            verdicts.insert("extension_size".into(), v(ext.domain().len()));
            verdicts.insert("names".into(), v(names.len()));
            verdicts.insert("new_elements".into(), v(new_elements.len()));
            verdicts.insert("same_naturals".into(), v(same_naturals));
            let findings = new_elements
                .iter()
                .map(|x| finding("new", x.notation()))
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        ForceCmd::Relation {
            ground,
            poset,
            formula,
            condition,
            name_rank,
        } => {
            let mut rec = InputRecorder::new("force relation");
            let g = load_structure(&mut rec, "ground", ground)?;
            let p = load_poset(&mut rec, "poset", poset)?;
            let sentence = parse_inline_formula(&mut rec, "formula", formula)?;
            let cond = match condition {
                Some(label) => {
                    rec.arg("condition", label);
                    condition_index(&p, label)?
                }
                None => p.top(),
            };
            let rank_cap = name_rank.unwrap_or(config.rank_cap);
            rec.arg("name_rank", rank_cap.to_string());
            let names = name_space(&g, &p, rank_cap);
            let semantic = forces_semantic(&g, &p, cond, &sentence, &names)?;
            let syntactic = forces_syntactic(&g, &p, cond, &sentence, &names)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("condition".into(), p.label(cond).to_string());
            verdicts.insert("semantic".into(), v(semantic));
            verdicts.insert("syntactic".into(), v(syntactic));
            verdicts.insert("agree".into(), v(semantic == syntactic));
            Ok(rec.body(config, verdicts, Vec::new()))
        }
        ForceCmd::MaCheck {
            ground,
            poset,
            var,
            name_rank,
        } => {
            let mut rec = InputRecorder::new("force ma-check");
            let g = load_structure(&mut rec, "ground", ground)?;
            let p = load_poset(&mut rec, "poset", poset)?;
            let pool_path = require_pool(config)?;
            let formulas = load_formula_lines(&mut rec, "pool", &pool_path)?;
            rec.arg("var", var);
            let rank_cap = name_rank.unwrap_or(config.rank_cap);
            rec.arg("name_rank", rank_cap.to_string());
            let names = name_space(&g, &p, rank_cap);
            let mut holds = 0usize;
            let mut findings = Vec::new();
            for phi in &formulas {
                let report = absoluteness_check(&g, &p, var, phi, &names)?;
                if report.conclusion_holds {
                    holds += 1;
                }
                let detail = match (&report.forced_by, &report.ground_witness) {
                    (None, _) => "never forced; holds vacuously".to_string(),
                    (Some(c), Some(w)) => format!(
                        "forced by {}; ground witness {}",
                        p.label(*c),
                        w.notation()
                    ),
                    (Some(c), None) => format!(
                        "forced by {} but no ground witness: new object exhibited",
                        p.label(*c)
                    ),
                };
                findings.push(finding(phi.to_string(), detail));
            }
            let mut verdicts = Verdicts::new();
            verdicts.insert("formulas".into(), v(formulas.len()));
            verdicts.insert("implications_hold".into(), v(holds));
            verdicts.insert("new_objects".into(), v(formulas.len() - holds));
            Ok(rec.body(config, verdicts, findings))
        }
    }
}

fn require_pool(config: &RunConfig) -> Result<PathBuf, CliError> {
    match &config.pool {
        Some(p) => Ok(PathBuf::from(p)),
        None => Err(CliError::Usage(
            "a formula pool is required: pass --pool or set it in the config".into(),
        )),
    }
}

fn caps_for(config: &RunConfig, cap: usize, stage: Option<u32>) -> SearchCaps {
    SearchCaps {
        poset_size: cap,
        rank_cap: config.rank_cap,
        code_pool_max: 4,
        budget_stage: stage.unwrap_or(config.stage_budget),
    }
}

fn model_summary(m: &UniverseModel) -> String {
    format!(
        "size {} naturals {} domain {}",
        m.len(),
        m.naturals().len(),
        SetValue::make_set(m.domain().iter().cloned()).notation()
    )
}

fn handle_lab(cmd: &LabCmd, config: &RunConfig) -> Result<ReportBody, CliError> {
    let mut lab = Lab::new(DESK_BUDGET, &DefPool::standard(), DEFAULT_ELEMENT_CAP)?;
    match cmd {
        LabCmd::Outer { base, stage } => {
            let mut rec = InputRecorder::new("lab outer");
            let structure = load_structure(&mut rec, "base", base)?;
            let stage = stage.unwrap_or(config.stage_budget);
            rec.arg("stage", stage.to_string());
            let m = model_of(&mut lab, &structure, &base.display().to_string())?;
            let outers = lab.outer_models(&m, stage)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("outer_models".into(), v(outers.len()));
            verdicts.insert("base_size".into(), v(m.len()));
            let findings = outers
                .iter()
                .enumerate()
                .map(|(i, o)| finding(format!("outer_{i}"), model_summary(o)))
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        LabCmd::Inner { base } => {
            let mut rec = InputRecorder::new("lab inner");
            let structure = load_structure(&mut rec, "base", base)?;
            let m = model_of(&mut lab, &structure, &base.display().to_string())?;
            let inners = lab.inner_models(&m)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("inner_models".into(), v(inners.len()));
            verdicts.insert("base_size".into(), v(m.len()));
            verdicts.insert("least_size".into(), v(inners[0].len()));
            let findings = inners
                .iter()
                .enumerate()
                .map(|(i, o)| finding(format!("inner_{i}"), model_summary(o)))
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        LabCmd::Imh {
            base,
            mode,
            pairwise,
            stage,
            cap,
        } => {
            let mut rec = InputRecorder::new("lab imh");
            let structure = load_structure(&mut rec, "base", base)?;
            let pool_path = require_pool(config)?;
            let sentences = load_formula_lines(&mut rec, "pool", &pool_path)?;
            rec.arg("mode", format!("{mode:?}"));
            rec.arg("pairwise", pairwise.to_string());
            let caps = caps_for(config, *cap, *stage);
            rec.arg("stage", caps.budget_stage.to_string());
            rec.arg("cap", cap.to_string());
            if *pairwise {
                let report = lab.pairwise_reflection_search(
                    caps.budget_stage,
                    &sentences,
                    mode.to_mode(),
                    &caps,
                )?;
                let mut verdicts = Verdicts::new();
                verdicts.insert("models_examined".into(), v(report.models_examined));
                verdicts.insert("pairs_compared".into(), v(report.pairs_compared));
                verdicts.insert("agreeing_pairs".into(), v(report.agreeing_pairs));
                verdicts.insert("divergent_pairs".into(), v(report.findings.len()));
                let findings = report
                    .findings
                    .iter()
                    .map(|f| {
                        finding(
                            "divergent_pair",
                            format!(
                                "first [{}] holds={}; second [{}] holds={}",
                                model_summary(&f.first),
                                f.first_holds,
                                model_summary(&f.second),
                                f.second_holds
                            ),
                        )
                    })
                    .collect();
                return Ok(rec.body(config, verdicts, findings));
            }
            let m = model_of(&mut lab, &structure, &base.display().to_string())?;
            let report = lab.reflection_check(&m, &sentences, mode.to_mode(), &caps)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("holds".into(), v(report.holds));
            verdicts.insert("sentences".into(), v(report.sentences.len()));
            let findings = report
                .sentences
                .iter()
                .map(|s| {
                    let detail = match (&s.extension_witness, &s.inner_witness) {
                        (None, _) => "no extension's inner model satisfies it; holds vacuously"
                            .to_string(),
                        (Some((outer, inner)), Some(own)) => format!(
                            "satisfied in a size-{} inner model of a size-{} extension; reflected to a size-{} inner model: holds",
                            inner.len(),
                            outer.len(),
                            own.len()
                        ),
                        (Some((outer, inner)), None) => format!(
                            "satisfied in a size-{} inner model of a size-{} extension but in no inner model of the base: violated",
                            inner.len(),
                            outer.len()
                        ),
                    };
                    finding(s.sentence.to_string(), detail)
                })
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        LabCmd::Covering {
            ground,
            wide,
            kappa,
            cap,
        } => {
            let mut rec = InputRecorder::new("lab covering");
            let ground_structure = load_structure(&mut rec, "ground", ground)?;
            let wide_structure = load_structure(&mut rec, "wide", wide)?;
            rec.arg("kappa", kappa.to_string());
            rec.arg("cap", cap.to_string());
            let w = model_of(&mut lab, &ground_structure, &ground.display().to_string())?;
            let vm = model_of(&mut lab, &wide_structure, &wide.display().to_string())?;
            let covers = global_covers(&w, &vm, *kappa)?;
            let caps = caps_for(config, *cap, None);
            let witness = lab.forcing_extension_witness(&w, &vm, &caps)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("covers".into(), v(covers));
            verdicts.insert("kappa".into(), v(*kappa));
            verdicts.insert("forcing_extension".into(), v(witness.is_some()));
            let mut findings = Vec::new();
            if let Some((poset, filter)) = witness {
                verdicts.insert(
                    "max_antichain".into(),
                    v(poset.max_antichain_size()),
                );
                findings.push(finding("witness_poset", one_line(&poset.render())));
                findings.push(finding(
                    "witness_filter",
                    filter
                        .iter()
                        .map(|&i| poset.label(i))
                        .collect::<Vec<_>>()
                        .join(" "),
                ));
            }
            Ok(rec.body(config, verdicts, findings))
        }
        LabCmd::Geology { base, cap } => {
            let mut rec = InputRecorder::new("lab geology");
            let structure = load_structure(&mut rec, "base", base)?;
            rec.arg("cap", cap.to_string());
            let m = model_of(&mut lab, &structure, &base.display().to_string())?;
            let caps = caps_for(config, *cap, None);
            let witnesses = lab.grounds(&m, &caps)?;
            let mantle = lab.mantle(&m, &caps)?;
            let axiom = lab.ground_axiom(&m, &caps)?;
            let distinct: BTreeSet<&BTreeSet<SetValue>> =
                witnesses.iter().map(|w| w.ground.domain()).collect();
            let mut verdicts = Verdicts::new();
            verdicts.insert("ground_witnesses".into(), v(witnesses.len()));
            verdicts.insert("distinct_grounds".into(), v(distinct.len()));
            verdicts.insert("ground_axiom".into(), v(axiom));
            verdicts.insert("mantle_size".into(), v(mantle.len()));
            verdicts.insert("trivial_ground_present".into(), v(witnesses
                .iter()
                .any(|w| w.ground.domain() == m.domain())));
            let findings = witnesses
                .iter()
                .map(|w| {
                    finding(
                        format!("ground_size_{}", w.ground.len()),
                        format!(
                            "{} via poset [{}] filter [{}]",
                            model_summary(&w.ground),
                            one_line(&w.poset.render()),
                            w.filter
                                .iter()
                                .map(|&i| w.poset.label(i))
                                .collect::<Vec<_>>()
                                .join(" ")
                        ),
                    )
                })
                .collect();
            Ok(rec.body(config, verdicts, findings))
        }
        LabCmd::Barwise {
            base,
            theory,
            depth,
            stage,
        } => {
            let mut rec = InputRecorder::new("lab barwise");
            let structure = load_structure(&mut rec, "base", base)?;
            let th = load_theory(&mut rec, "theory", theory, &structure)?;
            let depth = depth.unwrap_or(config.proof_depth);
            let stage = stage.unwrap_or(config.stage_budget);
            rec.arg("depth", depth.to_string());
            rec.arg("stage", stage.to_string());
            let m = model_of(&mut lab, &structure, &base.display().to_string())?;
            let report = lab.dual_search(&th, &m, depth, stage)?;
            let mut verdicts = Verdicts::new();
            verdicts.insert("refutation_found".into(), v(report.refutation.is_some()));
            verdicts.insert("model_found".into(), v(report.model.is_some()));
            verdicts.insert("conflict".into(), v(report.conflict));
            let mut findings = Vec::new();
            if let Some(tree) = &report.refutation {
                findings.push(finding("refutation", tree.render()));
            }
            if let Some(model) = &report.model {
                findings.push(finding("witness_model", model_summary(model)));
            }
            Ok(rec.body(config, verdicts, findings))
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
