//! Command-line front end. Exit codes: 0 success, 1 invalid input, 2 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use sepattn::commands::{self, EvaluateOptions, GenerateOptions, ListOptions};
use sepattn::config::RunConfig;
use sepattn::model::ModelKind;
use sepattn::synth::{LabelRule, SynthConfig};
use sepattn::{Error, Result};

fn run_config_args(cmd: Command) -> Command {
    let cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value file; flags override it"),
        )
        .arg(
            Arg::new("preset")
                .long("preset")
                .value_parser(["synthetic", "email"])
                .default_value("synthetic")
                .help("defaults used when no --config is given"),
        );
    RunConfig::KEYS.iter().fold(cmd, |cmd, &key| {
        cmd.arg(Arg::new(key).long(key).value_name("VALUE").help(format!("override `{key}`")))
    })
}

fn run_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::load(path)?,
        None => match m.get_one::<String>("preset").map(String::as_str) {
            Some("email") => RunConfig::email(ModelKind::SepAttn),
            _ => RunConfig::synthetic(ModelKind::SepAttn),
        },
    };
    for key in RunConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn path(m: &ArgMatches, id: &str) -> PathBuf {
    PathBuf::from(m.get_one::<String>(id).expect("required argument"))
}

fn floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("not a number: {x:?}")))
        })
        .collect()
}

fn cli() -> Command {
    let usize_arg = |id: &'static str, default: &'static str| {
        Arg::new(id)
            .long(id)
            .value_parser(clap::value_parser!(usize))
            .default_value(default)
    };
    Command::new("sepattn")
        .about("Sparse/dense learning-to-rank with prediction-level attention")
        .subcommand_required(true)
        .subcommand(
            Command::new("generate")
                .about("Write a synthetic train/test pair and its embedding sidecar")
                .arg(
                    Arg::new("dataset")
                        .long("dataset")
                        .value_parser(["1", "2", "3"])
                        .required(true),
                )
                .arg(Arg::new("out").long("out").required(true))
                .arg(Arg::new("seed").long("seed").value_parser(clap::value_parser!(u64)).default_value("7"))
                .arg(usize_arg("vocab-size", "50"))
                .arg(usize_arg("num-train", "20000"))
                .arg(usize_arg("num-test", "20000"))
                .arg(
                    Arg::new("list-size")
                        .long("list-size")
                        .value_parser(clap::value_parser!(usize))
                        .help("emit ranking lists of this size instead of single documents"),
                ),
        )
        .subcommand(run_config_args(Command::new("train").about("Train a model and write its run directory")))
        .subcommand(
            Command::new("evaluate")
                .about("Score a checkpoint on a dataset")
                .arg(Arg::new("checkpoint").long("checkpoint").required(true))
                .arg(Arg::new("dataset").long("dataset").required(true))
                .arg(Arg::new("compare").long("compare").help("second checkpoint for a paired t-test"))
                .arg(Arg::new("propensity").long("propensity").help("comma-separated weights by position"))
                .arg(Arg::new("run").long("run").default_value("model"))
                .arg(Arg::new("split").long("split").default_value("test"))
                .arg(Arg::new("output-dir").long("output-dir")),
        )
        .subcommand(
            Command::new("inspect-attention")
                .about("Print attention weights of sampled examples")
                .arg(Arg::new("checkpoint").long("checkpoint").required(true))
                .arg(Arg::new("dataset").long("dataset").required(true))
                .arg(usize_arg("samples", "20"))
                .arg(Arg::new("seed").long("seed").value_parser(clap::value_parser!(u64)).default_value("0"))
                .arg(Arg::new("output").long("output").help("CSV path; stdout when absent")),
        )
        .subcommand(
            run_config_args(Command::new("lambda-sweep").about("Train once per regularization weight")).arg(
                Arg::new("lambdas")
                    .long("lambdas")
                    .default_value("0,0.5,1,1.5,2,2.5"),
            ),
        )
        .subcommand(
            run_config_args(Command::new("gradcheck").about("Finite-difference check of a tiny model")).arg(
                Arg::new("tolerance")
                    .long("tolerance")
                    .value_parser(clap::value_parser!(f64))
                    .default_value("1e-4"),
            ),
        )
        .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue).global(true))
}

fn run(m: &ArgMatches) -> Result<bool> {
    let quiet = m.get_flag("quiet");
    match m.subcommand().expect("subcommand required") {
        ("generate", m) => {
            let rule = match m.get_one::<String>("dataset").map(String::as_str) {
                Some("1") => LabelRule::Sparse,
                Some("2") => LabelRule::Dense,
                _ => LabelRule::Combined,
            };
            let synth = SynthConfig {
                seed: *m.get_one("seed").expect("default"),
                vocab_size: *m.get_one("vocab-size").expect("default"),
                num_train: *m.get_one("num-train").expect("default"),
                num_test: *m.get_one("num-test").expect("default"),
                ..SynthConfig::default()
            };
            let lists = m.get_one::<usize>("list-size").map(|&list_size| ListOptions {
                list_size,
                num_train: synth.num_train,
                num_test: synth.num_test,
            });
            let out = commands::generate(&GenerateOptions {
                synth,
                rule,
                out_dir: path(m, "out"),
                lists,
            })?;
            println!(
                "wrote {} train and {} test examples; {} label mismatches",
                out.train_count, out.test_count, out.label_mismatches
            );
            Ok(out.label_mismatches == 0)
        }
        ("train", m) => {
            let cfg = run_config(m)?;
            let out = commands::train(&cfg)?;
            if !quiet {
                print!("{}", out.log.to_csv());
            }
            for row in &out.metrics {
                println!("{} {} {} = {}", row.run, row.split, row.metric, row.value);
            }
            Ok(true)
        }
        ("evaluate", m) => {
            let out = commands::evaluate_checkpoint(&EvaluateOptions {
                checkpoint: path(m, "checkpoint"),
                dataset: path(m, "dataset"),
                compare: m.get_one::<String>("compare").map(PathBuf::from),
                propensity: m.get_one::<String>("propensity").map(|s| floats(s)).transpose()?,
                run_name: m.get_one::<String>("run").expect("default").clone(),
                split: m.get_one::<String>("split").expect("default").clone(),
                output_dir: m.get_one::<String>("output-dir").map(PathBuf::from),
            })?;
            print!("{}", sepattn::metrics::metrics_csv(&out.rows));
            Ok(true)
        }
        ("inspect-attention", m) => {
            let report = commands::inspect_attention(
                &path(m, "checkpoint"),
                &path(m, "dataset"),
                *m.get_one("samples").expect("default"),
                *m.get_one("seed").expect("default"),
            )?;
            match m.get_one::<String>("output") {
                Some(p) => std::fs::write(p, report.to_csv()).map_err(|e| Error::Io {
                    path: p.into(),
                    source: e,
                })?,
                None => print!("{}", report.to_csv()),
            }
            Ok(true)
        }
        ("lambda-sweep", m) => {
            let cfg = run_config(m)?;
            let lambdas = floats(m.get_one::<String>("lambdas").expect("default"))?;
            let out = commands::lambda_sweep(&cfg, &lambdas)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", out.to_csv());
            Ok(true)
        }
        ("gradcheck", m) => {
            let cfg = run_config(m)?;
            let tol: f64 = *m.get_one("tolerance").expect("default");
            let report = commands::gradcheck(&cfg)?;
            println!("group,checked,max_rel_error");
            for g in &report.groups {
                println!("{},{},{:e}", g.name, g.checked, g.max_rel_error);
            }
            println!("{}", if report.passes(tol) { "PASS" } else { "FAIL" });
            Ok(report.passes(tol))
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&matches) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
