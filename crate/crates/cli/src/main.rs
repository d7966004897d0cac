use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use dialschema::pack::{load_pack, parse_tree_tests, run_tree_tests, validate_pack, Pack};
use dialschema::session::{Session, SessionConfig, SystemClock};
use dialschema_cli::chat::{parse_script, render_turns, run_script};
use dialschema_cli::eval::{build_report, EvalInputs};
use dialstats::formats::{parse_balance_items, read_file};
use dialstats::{balance_hits, BalanceConfig, BalanceError, CorrectionOrder};

/// Exit codes.
const OK: u8 = 0;
const FAILED_CHECKS: u8 = 1;
const BAD_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "dialschema", version, about = "Schema-guided dialogue tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Talk to a persona, interactively or from a script.
    Chat {
        pack: PathBuf,
        /// Doctor lines to replay; `/wait N` lets N seconds pass.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Where to write the JSONL transcript.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        show_trace: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a pack's schemas, trees and lexicon.
    Validate { pack: PathBuf },
    /// Run tree tests (`tree<TAB>input<TAB>kind<TAB>output`) and the pack corpus.
    TestTree {
        pack: PathBuf,
        /// Defaults to the pack's tests/trees.tsv.
        tests: Option<PathBuf>,
    },
    /// Annotation metrics, agreement and rating summaries.
    Eval {
        /// Turn annotations: `turn,annotator,gist,response,asr`.
        #[arg(long = "annotations")]
        annotations: Vec<PathBuf>,
        /// Ratings: `item,system_a,system_b,rater,question,a,b`.
        #[arg(long = "ratings")]
        ratings: Vec<PathBuf>,
        /// Transcripts the annotated turn ids refer to.
        #[arg(long = "transcript")]
        transcripts: Vec<PathBuf>,
        /// Correct for ASR errors per annotator (default) or after pooling.
        #[arg(long, value_enum, default_value_t = Order::PerAnnotator)]
        order: Order,
        #[arg(long)]
        json: bool,
    },
    /// Split rating items into batches balanced on text length.
    Balance {
        items: PathBuf,
        #[arg(long, default_value_t = 20)]
        hits: usize,
        #[arg(long, default_value_t = 16)]
        per_hit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write `hit,id` rows here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the session service.
    Serve { config: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Order {
    PerAnnotator,
    Pooled,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Chat { pack, script, transcript, show_trace, seed } => chat(pack, script, transcript, show_trace, seed),
        Command::Validate { pack } => validate(pack),
        Command::TestTree { pack, tests } => test_tree(pack, tests),
        Command::Eval { annotations, ratings, transcripts, order, json } => {
            let order = match order {
                Order::PerAnnotator => CorrectionOrder::PerAnnotator,
                Order::Pooled => CorrectionOrder::Pooled,
            };
            eval(EvalInputs { annotations, ratings, transcripts, order }, json)
        }
        Command::Balance { items, hits, per_hit, seed, out } => balance(items, hits, per_hit, seed, out),
        Command::Serve { config } => serve(config),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(BAD_INPUT)
        }
    }
}

fn open_pack(path: &std::path::Path) -> Option<Arc<Pack>> {
    match load_pack(path) {
        Ok(p) => Some(Arc::new(p)),
        Err(diags) => {
            for d in diags {
                eprintln!("{d}");
            }
            None
        }
    }
}

fn chat(
    pack: PathBuf,
    script: Option<PathBuf>,
    transcript: Option<PathBuf>,
    show_trace: bool,
    seed: u64,
) -> anyhow::Result<u8> {
    let Some(pack) = open_pack(&pack) else { return Ok(BAD_INPUT) };
    if let Some(script) = script {
        let lines = parse_script(&std::fs::read_to_string(&script)?)?;
        let run = run_script(pack, &lines, seed, show_trace)?;
        print!("{}", run.display);
        if let Some(path) = transcript {
            std::fs::write(path, run.transcript)?;
        }
        return Ok(OK);
    }
    let config = SessionConfig { seed, ..SessionConfig::default() };
    let mut session = Session::create(pack, config, Arc::new(SystemClock::default()))?;
    let mut out = String::new();
    render_turns(&session, session.history(), show_trace, &mut out);
    print!("{out}");
    let you = session.pack().you.to_string();
    let stdin = io::stdin();
    loop {
        if session.is_closed() {
            break;
        }
        print!("{you}> ");
        io::stdout().flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let turns = session.run_turn(line.trim())?;
        out.clear();
        render_turns(&session, &turns, show_trace, &mut out);
        print!("{out}");
    }
    if let Some(path) = transcript {
        std::fs::write(path, dialschema::session::transcript_string(session.history()))?;
    }
    Ok(OK)
}

fn validate(pack: PathBuf) -> anyhow::Result<u8> {
    let (_, diags) = validate_pack(&pack);
    let errors = diags.iter().filter(|d| d.is_error()).count();
    for d in &diags {
        println!("{d}");
    }
    println!("{errors} error(s), {} warning(s)", diags.len() - errors);
    Ok(if errors == 0 { OK } else { FAILED_CHECKS })
}

fn test_tree(pack_path: PathBuf, tests: Option<PathBuf>) -> anyhow::Result<u8> {
    let Some(pack) = open_pack(&pack_path) else { return Ok(BAD_INPUT) };
    let file = tests.unwrap_or_else(|| pack_path.join("tests/trees.tsv"));
    let parsed = match parse_tree_tests(&std::fs::read_to_string(&file)?) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}:{}: {}", file.display(), e.line, e.message);
            return Ok(BAD_INPUT);
        }
    };
    let mut failures = 0;
    for f in run_tree_tests(&pack.trees, &parsed) {
        println!("{}:{}: FAIL {}", file.display(), f.line, f.message);
        failures += 1;
    }
    for m in pack.check_corpus() {
        println!("corpus:{}: FAIL {}", m.line, m.message);
        failures += 1;
    }
    println!("{} tree test(s), {} corpus line(s), {failures} failure(s)", parsed.len(), pack.corpus.len());
    Ok(if failures == 0 { OK } else { FAILED_CHECKS })
}

fn eval(inputs: EvalInputs, json: bool) -> anyhow::Result<u8> {
    if inputs.annotations.is_empty() && inputs.ratings.is_empty() {
        anyhow::bail!("give at least one --annotations or --ratings file");
    }
    let report = build_report(&inputs)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render());
    }
    Ok(OK)
}

fn balance(items: PathBuf, hits: usize, per_hit: usize, seed: u64, out: Option<PathBuf>) -> anyhow::Result<u8> {
    let parsed = parse_balance_items(&items.display().to_string(), &read_file(&items)?)?;
    let config = BalanceConfig { seed, ..BalanceConfig::default() };
    let (assignment, code) = match balance_hits(&parsed, hits, per_hit, config) {
        Ok(a) => (a, OK),
        Err(BalanceError::InfeasibleExact { best }) => {
            eprintln!("warning: exact length balance not reached; writing best effort");
            (*best, FAILED_CHECKS)
        }
        Err(e) => return Err(e.into()),
    };
    let mut rows = String::from("hit,id\n");
    for (h, members) in assignment.hits.iter().enumerate() {
        for &i in members {
            rows.push_str(&format!("{},{}\n", h + 1, parsed[i].id));
        }
    }
    match out {
        Some(path) => std::fs::write(path, rows)?,
        None => print!("{rows}"),
    }
    eprintln!(
        "{hits} batch(es) of {per_hit}; worst length deviation {}, worst quality deviation {:.2}",
        assignment.field_deviation, assignment.quality_deviation
    );
    Ok(code)
}

fn serve(config: PathBuf) -> anyhow::Result<u8> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let config = match dialservice::ServiceConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return Ok(BAD_INPUT);
        }
    };
    let runtime = tokio::runtime::Runtime::new()?;
    match runtime.block_on(dialservice::serve(config)) {
        Ok(()) => Ok(OK),
        Err(dialservice::ServiceError::PackValidationFailed(diags)) => {
            for d in diags {
                eprintln!("{d}");
            }
            Ok(BAD_INPUT)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(BAD_INPUT)
        }
    }
}
