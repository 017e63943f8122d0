//! Command-line front end: training, fine-tuning, evaluation, an
//! interactive chat loop, synthetic data generation, and DSTC2
//! conversion. Exit codes: 0 on success, 2 for usage and configuration
//! mistakes, 1 for everything else.

use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use gendp::bundle::{init_model, ModelBundle};
use gendp::chat::{ChatError, ChatSession};
use gendp::config::{self, require, ConfigError, Overrides, RunConfig};
use gendp::corpus::{load_corpus, Split, VocabPolicy};
use gendp::dstc2::{self, Dstc2Options};
use gendp::eval::{evaluate, render_table, EvalContext, TableRow};
use gendp::kb::{load_ontology, Kb};
use gendp::nlg::TemplateBank;
use gendp::toy::{gen_data, ToyDomainSpec};
use gendp::training::{
    prepare_examples, train_rl, train_supervised, write_rl_curve, write_supervised_curve,
    RlSetup,
};

#[derive(Parser)]
#[command(
    name = "gendp",
    version,
    about = "Task-oriented dialogue with a generative, sequence-decoding dialogue policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy on a JSONL corpus and write a checkpoint.
    Train(CommonArgs),
    /// Fine-tune a trained generative policy with policy gradients.
    FinetuneRl(CommonArgs),
    /// Score a checkpoint on a corpus and print the report table.
    Eval(CommonArgs),
    /// Talk to a trained checkpoint on stdin/stdout.
    Chat(ChatArgs),
    /// Generate the synthetic restaurant corpus, KB, ontology, and templates.
    GenData(GenDataArgs),
    /// Convert a DSTC2 log/label tree into the JSONL corpus shape.
    ConvertDstc2(ConvertArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    ov: Overrides,
}

#[derive(Args)]
struct ChatArgs {
    #[command(flatten)]
    ov: Overrides,
    /// Print the decoded belief, KB bucket, and action with each reply.
    #[arg(long)]
    debug: bool,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    ov: Overrides,
    /// Toy-domain spec file (JSON); flags below override it.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Restaurants in the generated KB.
    #[arg(long, value_name = "N")]
    restaurants: Option<usize>,
    /// Training dialogues.
    #[arg(long, value_name = "N")]
    train_dialogues: Option<usize>,
    /// Dev dialogues.
    #[arg(long, value_name = "N")]
    dev_dialogues: Option<usize>,
    /// Test dialogues.
    #[arg(long, value_name = "N")]
    test_dialogues: Option<usize>,
    /// Target fraction of turns with multi-act gold actions.
    #[arg(long, value_name = "X")]
    multi_act_fraction: Option<f64>,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    ov: Overrides,
    /// Root of the unpacked DSTC2 tree (searched recursively).
    #[arg(long, value_name = "DIR", required = true)]
    root: PathBuf,
}

fn main() -> ExitCode {
    // Die quietly when stdout is a closed pipe (`gendp eval | head`)
    // instead of panicking inside println!.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let env_seed = std::env::var("GENDP_SEED").ok();
    let resolve = |ov: &Overrides| config::resolve(ov, env_seed.as_deref());
    match cli.command {
        Command::Train(a) => cmd_train(resolve(&a.ov)?),
        Command::FinetuneRl(a) => cmd_finetune_rl(resolve(&a.ov)?),
        Command::Eval(a) => cmd_eval(resolve(&a.ov)?),
        Command::Chat(a) => cmd_chat(resolve(&a.ov)?, a.debug),
        Command::GenData(a) => {
            let cfg = resolve(&a.ov)?;
            cmd_gen_data(cfg, a)
        }
        Command::ConvertDstc2(a) => {
            let cfg = resolve(&a.ov)?;
            cmd_convert_dstc2(cfg, a)
        }
    }
}

fn cmd_train(cfg: RunConfig) -> anyhow::Result<()> {
    let corpus_path = require(&cfg.corpus, "corpus", "corpus")?;
    let dev_path = require(&cfg.dev_corpus, "dev-corpus", "dev_corpus")?;
    let ckpt_path = require(&cfg.checkpoint, "checkpoint", "checkpoint")?;

    let (train_corpus, vocab) = load_corpus(corpus_path, Split::Train, VocabPolicy::Build)
        .with_context(|| format!("loading {}", corpus_path.display()))?;
    let (dev_corpus, _) = load_corpus(dev_path, Split::Dev, VocabPolicy::Frozen(vocab.clone()))
        .with_context(|| format!("loading {}", dev_path.display()))?;
    println!(
        "training {} on {} turns ({} dev), vocabulary {}",
        cfg.policy,
        train_corpus.turn_count(),
        dev_corpus.turn_count(),
        vocab.size()
    );

    let mut bundle = init_model(
        cfg.policy,
        &cfg.model_config(),
        &train_corpus,
        vocab,
        cfg.threshold,
        cfg.seed,
    )?;
    let train_ex = prepare_examples(&train_corpus, &bundle.vocab);
    let dev_ex = prepare_examples(&dev_corpus, &bundle.vocab);
    let outcome =
        train_supervised(&mut bundle.ps, &bundle.model, &train_ex, &dev_ex, &cfg.train_config())?;

    if let Some(curve_path) = &cfg.curve {
        write_supervised_curve(curve_path, &outcome.curve)?;
        println!("curve -> {}", curve_path.display());
    }
    if let Some(tpl_path) = &cfg.templates {
        let bank = TemplateBank::build_from_corpus(&train_corpus, &bundle.lexicons);
        bank.save(tpl_path)?;
        println!("templates ({}) -> {}", bank.len(), tpl_path.display());
    }
    bundle.save(ckpt_path)?;
    println!(
        "done after {} epoch(s): best dev loss {:.4} at epoch {}; checkpoint -> {}",
        outcome.curve.len(),
        outcome.best_dev_loss,
        outcome.best_epoch,
        ckpt_path.display()
    );
    Ok(())
}

fn cmd_finetune_rl(cfg: RunConfig) -> anyhow::Result<()> {
    let corpus_path = require(&cfg.corpus, "corpus", "corpus")?;
    let dev_path = require(&cfg.dev_corpus, "dev-corpus", "dev_corpus")?;
    let ckpt_path = require(&cfg.checkpoint, "checkpoint", "checkpoint")?;
    let out_path = require(&cfg.out, "out", "out")?;
    let kb_path = require(&cfg.kb, "kb", "kb")?;
    let ont_path = require(&cfg.ontology, "ontology", "ontology")?;

    let mut bundle = ModelBundle::load(ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    let (train_corpus, _) =
        load_corpus(corpus_path, Split::Train, VocabPolicy::Frozen(bundle.vocab.clone()))
            .with_context(|| format!("loading {}", corpus_path.display()))?;
    let (dev_corpus, _) =
        load_corpus(dev_path, Split::Dev, VocabPolicy::Frozen(bundle.vocab.clone()))
            .with_context(|| format!("loading {}", dev_path.display()))?;
    let kb = Kb::load(kb_path)?;
    let ontology = load_ontology(ont_path)?;

    let train_ex = prepare_examples(&train_corpus, &bundle.vocab);
    let setup = RlSetup {
        model: &bundle.model,
        vocab: &bundle.vocab,
        lexicons: &bundle.lexicons,
        kb: &kb,
        ontology: &ontology,
    };
    println!(
        "fine-tuning on {} turns for {} epoch(s), {} rollouts per step",
        train_ex.len(),
        cfg.rl_epochs,
        cfg.rollouts
    );
    let outcome = train_rl(
        &mut bundle.ps,
        &setup,
        &train_ex,
        &dev_corpus,
        &cfg.train_config(),
        &cfg.reward_spec(),
        cfg.rl_epochs,
    )?;

    if let Some(curve_path) = &cfg.curve {
        write_rl_curve(curve_path, &outcome.curve)?;
        println!("curve -> {}", curve_path.display());
    }
    bundle.save(out_path)?;
    if let (Some(first), Some(last)) = (outcome.curve.first(), outcome.curve.last()) {
        println!(
            "mean reward {:.3} -> {:.3}; best dev APRA {:.4} at epoch {}",
            first.mean_reward, last.mean_reward, outcome.best_dev_apra, outcome.best_epoch
        );
    }
    println!("checkpoint -> {}", out_path.display());
    Ok(())
}

fn cmd_eval(cfg: RunConfig) -> anyhow::Result<()> {
    let corpus_path = require(&cfg.corpus, "corpus", "corpus")?;
    let ckpt_path = require(&cfg.checkpoint, "checkpoint", "checkpoint")?;
    let kb_path = require(&cfg.kb, "kb", "kb")?;
    let ont_path = require(&cfg.ontology, "ontology", "ontology")?;
    let tpl_path = require(&cfg.templates, "templates", "templates")?;

    let bundle = ModelBundle::load(ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    let (corpus, _) = load_corpus(corpus_path, cfg.split, VocabPolicy::Frozen(bundle.vocab.clone()))
        .with_context(|| format!("loading {}", corpus_path.display()))?;
    let kb = Kb::load(kb_path)?;
    let ontology = load_ontology(ont_path)?;
    let templates = TemplateBank::load(tpl_path, &bundle.lexicons)?;

    let ctx = EvalContext {
        ps: &bundle.ps,
        model: &bundle.model,
        vocab: &bundle.vocab,
        lexicons: &bundle.lexicons,
        kb: &kb,
        ontology: &ontology,
    };
    let (report, timings) = evaluate(&ctx, &corpus, &templates)?;
    print!("{}", render_table(&[TableRow::new(&report, timings)]));
    println!(
        "{} {} turns, {} malformed action(s), lexicalized BLEU {:.4}",
        report.split, report.turns, report.malformed_actions, report.bleu_lexicalized
    );
    if let Some(report_path) = &cfg.report {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        fs::write(report_path, json)?;
        println!("report -> {}", report_path.display());
    }
    Ok(())
}

fn cmd_chat(cfg: RunConfig, debug: bool) -> anyhow::Result<()> {
    let ckpt_path = require(&cfg.checkpoint, "checkpoint", "checkpoint")?;
    let kb_path = require(&cfg.kb, "kb", "kb")?;
    let ont_path = require(&cfg.ontology, "ontology", "ontology")?;
    let tpl_path = require(&cfg.templates, "templates", "templates")?;

    let bundle = ModelBundle::load(ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    let kb = Kb::load(kb_path)?;
    let ontology = load_ontology(ont_path)?;
    let templates = TemplateBank::load(tpl_path, &bundle.lexicons)?;
    let mut session = ChatSession::new(bundle, kb, ontology, templates);

    println!(
        "{} policy, vocabulary {}. /reset clears the dialogue, /quit exits.",
        session.bundle().model.kind(),
        session.bundle().vocab.size(),
    );
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut out = io::stdout();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            print!("you> ");
            out.flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        let text = line.trim();
        match text {
            "" => continue,
            "/quit" | "/exit" => break,
            "/reset" => {
                session.reset();
                println!("(dialogue cleared)");
                continue;
            }
            _ => {}
        }
        match session.respond(text) {
            Ok(turn) => {
                if debug {
                    println!("  C_t: [{}]", turn.belief.join(", "));
                    println!("  k_t: {} match(es) -> bucket {}", turn.kb_count, turn.kb_bucket);
                    println!(
                        "  A_t: {}{}",
                        turn.action_tokens.join(" "),
                        if turn.malformed { "  (malformed)" } else { "" }
                    );
                }
                println!("sys> {}", turn.reply);
            }
            Err(ChatError::EmptyUtterance) => println!("(nothing to respond to)"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn cmd_gen_data(cfg: RunConfig, a: GenDataArgs) -> anyhow::Result<()> {
    let out_dir = require(&cfg.out, "out", "out")?;
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ToyDomainSpec>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ToyDomainSpec::default(),
    };
    if let Some(n) = a.restaurants {
        spec.n_restaurants = n;
    }
    if let Some(n) = a.train_dialogues {
        spec.train_dialogues = n;
    }
    if let Some(n) = a.dev_dialogues {
        spec.dev_dialogues = n;
    }
    if let Some(n) = a.test_dialogues {
        spec.test_dialogues = n;
    }
    if let Some(f) = a.multi_act_fraction {
        spec.multi_act_fraction = f;
    }

    let summary = gen_data(&spec, cfg.seed, out_dir)?;
    println!("wrote {} KB records and 3 splits to {}", summary.kb_records, out_dir.display());
    for s in &summary.splits {
        println!(
            "  {}: {} dialogues, {} turns, multi-act fraction {:.3}",
            s.split, s.dialogues, s.turns, s.multi_act_fraction
        );
    }
    Ok(())
}

fn cmd_convert_dstc2(cfg: RunConfig, a: ConvertArgs) -> anyhow::Result<()> {
    let out_path = require(&cfg.out, "out", "out")?;
    let opts = Dstc2Options {
        kb: cfg.kb.as_deref().map(Kb::load).transpose()?,
        ontology: cfg.ontology.as_deref().map(load_ontology).transpose()?,
    };
    let dialogues = dstc2::convert_tree(&a.root, &opts)?;
    dstc2::write_jsonl(&dialogues, out_path)?;
    let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
    println!(
        "converted {} dialogue(s), {} turns -> {}",
        dialogues.len(),
        turns,
        out_path.display()
    );
    Ok(())
}
