//! Command-line front end. Exit codes are a stable contract:
//! 0 success (for `prove`: contradiction established, i.e. the proof
//! goal), 1 violations / no contradiction, 2 input errors, 3 saturation
//! bound reached during a proof.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cgraph::{ConceptualGraph, Marker};
use crate::fol;
use crate::frontio::{self, Bundle};
use crate::ingest::{model_to_cg, HandleFunctionRegistry};
use crate::projection::Morphism;
use crate::propmodel::{
    check_property_graph, Coords, Perspective, PropertyGraph, Typology, VerifyContext,
};
use crate::reasoning::{
    prove_refutation, saturate, verify_all, Constraint, ProofOutcome, Status,
};

#[derive(Parser)]
#[command(
    name = "cgvv",
    about = "Verification and validation of process models over conceptual graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Report,
}

#[derive(Args)]
struct CommonOpts {
    /// Input files: ontologies, graphs, rules, constraints, properties,
    /// fact stores, models (format detected per file)
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Saturation iteration bound
    #[arg(long, default_value_t = 100)]
    bound: usize,
    /// Cap on enumerated projections (default unbounded)
    #[arg(long)]
    limit: Option<usize>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Verify all constraints and properties against the model graph
    Check(CommonOpts),
    /// Run a refutation proof: saturate under rules, watching the
    /// negative constraints for a contradiction
    Prove(CommonOpts),
    /// Saturate the graph under the rules and print the result
    Saturate(CommonOpts),
    /// Print the first-order formula of each graph
    ExportFol(CommonOpts),
    /// Translate a process model into its conceptual graph
    Translate(CommonOpts),
    /// Work with the generic-property reference matrix
    Matrix {
        #[command(subcommand)]
        command: MatrixCommand,
    },
}

#[derive(Subcommand)]
enum MatrixCommand {
    /// List generic properties, optionally filtered
    List {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        perspective: Option<String>,
        #[arg(long)]
        typology: Option<String>,
    },
    /// Substitute placeholder bindings into a template and print the
    /// resulting property file
    Instantiate {
        /// Template name
        template: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Placeholder bindings, `name=value`
        #[arg(long = "bind")]
        bindings: Vec<String>,
    },
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Check(opts) => with_bundle(&opts, cmd_check),
        Command::Prove(opts) => with_bundle(&opts, cmd_prove),
        Command::Saturate(opts) => with_bundle(&opts, cmd_saturate),
        Command::ExportFol(opts) => with_bundle(&opts, cmd_export_fol),
        Command::Translate(opts) => with_bundle(&opts, cmd_translate),
        Command::Matrix { command } => match command {
            MatrixCommand::List {
                files,
                perspective,
                typology,
            } => cmd_matrix_list(&files, perspective.as_deref(), typology.as_deref()),
            MatrixCommand::Instantiate {
                template,
                files,
                bindings,
            } => cmd_matrix_instantiate(&template, &files, &bindings),
        },
    }
}

fn load(files: &[PathBuf]) -> Result<Bundle, i32> {
    let bundle = match frontio::parse_bundle(files) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(2);
        }
    };
    for d in &bundle.diagnostics {
        eprintln!("{d}");
    }
    if frontio::has_errors(&bundle.diagnostics) {
        return Err(2);
    }
    Ok(bundle)
}

fn with_bundle(opts: &CommonOpts, f: fn(&CommonOpts, &Bundle) -> i32) -> i32 {
    if opts.bound == 0 {
        eprintln!("error: --bound must be at least 1");
        return 2;
    }
    match load(&opts.files) {
        Ok(bundle) => f(opts, &bundle),
        Err(code) => code,
    }
}

/// The working graph: the model's translation merged with every named
/// graph in the bundle.
fn working_graph(bundle: &Bundle) -> Result<ConceptualGraph, String> {
    let ontology = bundle.ontology();
    let mut g = ConceptualGraph::new(ontology.clone());
    if let Some(model) = &bundle.model {
        g = model_to_cg(model, &ontology).map_err(|e| e.to_string())?;
    }
    for (_, graph) in &bundle.graphs {
        g.absorb_keep_vars(graph);
    }
    g.normalize_coref().map_err(|e| e.to_string())
}

fn node_label(g: &ConceptualGraph, marker: &Marker, ctype: &str) -> String {
    let _ = g;
    match marker {
        Marker::Individual(name) => format!("{ctype}:{name}"),
        Marker::Generic => format!("{ctype}:*"),
        Marker::CorefVar(v) => format!("{ctype}:*{v}"),
    }
}

/// A witness summary: the distinct target nodes a morphism touches.
fn witness_summary(g: &ConceptualGraph, m: &Morphism) -> String {
    let mut labels: Vec<String> = m
        .concept_map
        .values()
        .filter_map(|id| g.concept(*id))
        .map(|n| node_label(g, &n.marker, &n.ctype))
        .collect();
    labels.sort();
    labels.dedup();
    labels.join(",")
}

fn print_verdict(
    format: Format,
    name: &str,
    satisfied: bool,
    witness: Option<String>,
    notes: &[String],
) {
    let status = if satisfied { "Satisfied" } else { "Violated" };
    match format {
        Format::Report => {
            let mut line = format!("VERDICT {name} {status}");
            if let Some(w) = witness {
                line.push_str(&format!(" witness={w}"));
            }
            println!("{line}");
        }
        Format::Human => {
            println!("{name}: {status}");
            if let Some(w) = witness {
                println!("  witness: {w}");
            }
            for note in notes {
                println!("  note: {note}");
            }
        }
    }
}

fn cmd_check(opts: &CommonOpts, bundle: &Bundle) -> i32 {
    let graph = match working_graph(bundle) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let (saturated, sat_report) = match saturate(&graph, &bundle.rules, opts.bound) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if opts.format == Format::Human && !sat_report.added.is_empty() {
        println!(
            "saturation: {} addition(s) over {} pass(es){}",
            sat_report.added.len(),
            sat_report.iterations,
            if sat_report.reached_fixpoint {
                ""
            } else {
                " (bound reached)"
            }
        );
    }
    let mut all_ok = true;
    match verify_all(&saturated, &bundle.constraints) {
        Ok(report) => {
            for (name, verdict) in &report.entries {
                let ok = verdict.status == Status::Satisfied;
                all_ok &= ok;
                let witness = verdict
                    .witnesses
                    .first()
                    .map(|m| witness_summary(&saturated, m));
                print_verdict(opts.format, name, ok, witness, &[]);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    }
    if !bundle.properties.is_empty() {
        let mut pgraph = PropertyGraph::new();
        for def in &bundle.properties {
            let coords = def.coords.unwrap_or_else(Coords::default);
            if let Err(e) = pgraph.place(def.clone(), coords) {
                eprintln!("error: {e}");
                return 2;
            }
        }
        let registry = HandleFunctionRegistry::with_builtins();
        let ctx = VerifyContext {
            graph: &graph,
            store: &bundle.facts,
            rules: &bundle.rules,
            registry: Some(&registry),
            model: bundle.model.as_ref(),
            bound: opts.bound,
        };
        match check_property_graph(&pgraph, &ctx) {
            Ok(report) => {
                for (coords, name, verdict) in &report.entries {
                    let ok = verdict.status == Status::Satisfied;
                    all_ok &= ok;
                    let label = match opts.format {
                        Format::Human => format!("{name} [{coords}]"),
                        Format::Report => name.clone(),
                    };
                    let witness = verdict
                        .witnesses
                        .first()
                        .map(|m| witness_summary(&saturated, m))
                        .or_else(|| verdict.notes.first().cloned());
                    print_verdict(opts.format, &label, ok, witness, &verdict.notes);
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    if all_ok {
        0
    } else {
        1
    }
}

fn cmd_prove(opts: &CommonOpts, bundle: &Bundle) -> i32 {
    let graph = match working_graph(bundle) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let negatives: Vec<_> = bundle
        .constraints
        .iter()
        .filter_map(|c| match c {
            Constraint::Negative(nc) => Some(nc.clone()),
            Constraint::Positive(_) => None,
        })
        .collect();
    let result = match prove_refutation(&graph, &bundle.rules, &negatives, opts.bound) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    for (i, step) in result.trace.iter().enumerate() {
        println!("step {}: rule {} — {}", i + 1, step.rule, step.added);
    }
    match result.outcome {
        ProofOutcome::ContradictionEstablished => {
            let name = result.violated_constraint.as_deref().unwrap_or("?");
            println!("contradiction established (constraint {name} violated); proof complete");
            0
        }
        ProofOutcome::NoContradiction => {
            println!("fixpoint reached without contradiction; proof failed");
            1
        }
        ProofOutcome::BoundReached => {
            println!("saturation bound {} reached; proof inconclusive", opts.bound);
            3
        }
    }
}

fn cmd_saturate(opts: &CommonOpts, bundle: &Bundle) -> i32 {
    let graph = match working_graph(bundle) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let (saturated, report) = match saturate(&graph, &bundle.rules, opts.bound) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    for step in &report.added {
        println!("# {}: {}", step.rule, step.added);
    }
    match frontio::graph_to_text("saturated", &saturated) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    }
    if !report.reached_fixpoint {
        eprintln!("warning: iteration bound reached before fixpoint");
    }
    0
}

fn cmd_export_fol(_opts: &CommonOpts, bundle: &Bundle) -> i32 {
    for (name, graph) in &bundle.graphs {
        match fol::phi_translate(graph) {
            Ok(formula) => println!("{name}: {}", fol::render(&formula)),
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    if let Some(model) = &bundle.model {
        match model_to_cg(model, &bundle.ontology()) {
            Ok(g) => match fol::phi_translate(&g) {
                Ok(formula) => println!("model: {}", fol::render(&formula)),
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            },
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    0
}

fn cmd_translate(_opts: &CommonOpts, bundle: &Bundle) -> i32 {
    let Some(model) = &bundle.model else {
        eprintln!("error: no model file among the inputs");
        return 2;
    };
    let graph = match model_to_cg(model, &bundle.ontology()) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match frontio::graph_to_text("model", &graph) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn perspective_name(p: Perspective) -> &'static str {
    match p {
        Perspective::Stability => "stability",
        Perspective::Reliability => "reliability",
        Perspective::Integrity => "integrity",
    }
}

fn typology_name(t: Typology) -> &'static str {
    match t {
        Typology::System => "system",
        Typology::ModelingLanguage => "language",
        Typology::Axiomatic => "axiomatic",
    }
}

fn cmd_matrix_list(
    files: &[PathBuf],
    perspective: Option<&str>,
    typology: Option<&str>,
) -> i32 {
    let bundle = match load(files) {
        Ok(b) => b,
        Err(code) => return code,
    };
    for g in &bundle.generics {
        if let Some(p) = perspective {
            if !g.perspectives.iter().any(|pp| perspective_name(*pp) == p) {
                continue;
            }
        }
        if let Some(t) = typology {
            if typology_name(g.typology) != t {
                continue;
            }
        }
        let perspectives: Vec<&str> = g.perspectives.iter().map(|p| perspective_name(*p)).collect();
        let placeholders: Vec<String> = g
            .placeholders
            .iter()
            .map(|(n, ty)| format!("${n}: {ty}"))
            .collect();
        println!(
            "{}\t{}\t{}\t{}",
            g.name,
            perspectives.join(","),
            typology_name(g.typology),
            placeholders.join(", ")
        );
    }
    0
}

fn cmd_matrix_instantiate(template: &str, files: &[PathBuf], bindings: &[String]) -> i32 {
    let bundle = match load(files) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let Some(generic) = bundle.generics.iter().find(|g| g.name == template) else {
        eprintln!("error: no generic property named `{template}`");
        return 2;
    };
    let mut map = BTreeMap::new();
    for b in bindings {
        match b.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                eprintln!("error: binding `{b}` is not of the form name=value");
                return 2;
            }
        }
    }
    let ontology = bundle.ontology();
    let text = match generic.instantiate_text(&map, Some(&ontology), bundle.model.as_ref()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    // the instantiated text must itself be a valid property file
    let (_, _, diags) = frontio::parse_properties("<instantiated>", &text, &ontology);
    for d in &diags {
        eprintln!("{d}");
    }
    if frontio::has_errors(&diags) {
        return 2;
    }
    println!("{text}");
    0
}
