//! Command-line front end: `holoscope run` and `holoscope gallery`.

pub mod config;
pub mod render;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::gallery;
use config::{ConfigDocument, Model};
use run::RunOptions;

#[derive(Debug, Parser)]
#[command(name = "holoscope", version, about = "Holonomy of foliations given by charts and transition maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the tasks of a configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Built-in instances.
    Gallery {
        #[command(subcommand)]
        command: GalleryCommand,
    },
}

#[derive(Debug, Subcommand)]
enum GalleryCommand {
    /// List built-in instance names.
    List,
    /// Print an instance as a configuration file.
    Export { name: String },
    /// Run the tasks of a built-in instance without going through a file.
    Run {
        name: String,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Debug, Args)]
struct Flags {
    /// Jet order, overriding task parameters [default: 4]
    #[arg(long)]
    order: Option<usize>,
    /// Equality tolerance, overriding task parameters [default: 1e-9]
    #[arg(long)]
    tol: Option<f64>,
    /// Print a text rendering instead of JSON.
    #[arg(long)]
    pretty: bool,
    /// Threads used for classification.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Flags {
    fn options(&self) -> RunOptions {
        RunOptions {
            order: self.order,
            tol: self.tol,
            jobs: self.jobs,
            seed: self.seed,
        }
    }
}

/// Exit status, standard output and standard error of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn input_error(message: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            stdout: String::new(),
            stderr: format!("error: {message}\n"),
        }
    }
}

fn execute_model(model: &Model, doc: &ConfigDocument, flags: &Flags) -> Outcome {
    match run::run_tasks(model, &doc.tasks, &flags.options()) {
        Ok(report) => Outcome {
            code: if report.violations == 0 { 0 } else { 1 },
            stdout: if flags.pretty { render::render(&report) } else { report.to_json() },
            stderr: String::new(),
        },
        Err(e) => Outcome::input_error(e),
    }
}

/// Runs the command line `args` (including the program name).
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return Outcome {
                code,
                stdout: if code == 0 { text.clone() } else { String::new() },
                stderr: if code == 0 { String::new() } else { text },
            };
        }
    };
    match cli.command {
        Command::Run { config, flags } => {
            let doc = match config::read_document(&config) {
                Ok(doc) => doc,
                Err(e) => return Outcome::input_error(e),
            };
            match Model::from_document(&doc) {
                Ok(model) => execute_model(&model, &doc, &flags),
                Err(e) => Outcome::input_error(e),
            }
        }
        Command::Gallery { command } => match command {
            GalleryCommand::List => Outcome::ok(gallery::NAMES.iter().map(|n| format!("{n}\n")).collect()),
            GalleryCommand::Export { name } => match gallery::builtin(&name) {
                Some(g) => {
                    let mut s = serde_json::to_string_pretty(&g.document).expect("document serializes");
                    s.push('\n');
                    Outcome::ok(s)
                }
                None => Outcome::input_error(format!("unknown gallery instance `{name}`")),
            },
            GalleryCommand::Run { name, flags } => match gallery::builtin(&name) {
                Some(g) => execute_model(&g.model, &g.document, &flags),
                None => Outcome::input_error(format!("unknown gallery instance `{name}`")),
            },
        },
    }
}
