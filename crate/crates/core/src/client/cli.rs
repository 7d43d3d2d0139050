//! Command-line parsing: exactly one verb per invocation.

use std::path::PathBuf;

use clap::{ArgGroup, Parser};
use thiserror::Error;

pub const USAGE: &str = "\
usage: pacloud [--config PATH] <verb>

verbs:
  -s, --search KEY        search the local database
  -i, --install PKG...    install packages and their runtime dependencies
  -r, --remove PKG...     remove packages and dependencies nothing else needs
  -U, --upgrade [PKG...]  upgrade explicit (or the named) packages
  -u, --update            update the local database from the store
  -h, --help              show this help";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}\n\n{USAGE}")]
pub struct UsageError {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Search(String),
    Install(Vec<String>),
    Remove(Vec<String>),
    Upgrade(Vec<String>),
    Update,
    Help,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub command: Command,
}

#[derive(Parser, Debug)]
#[command(name = "pacloud", disable_help_flag = true, disable_version_flag = true)]
#[command(group(ArgGroup::new("verb").required(true).multiple(false)))]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(short = 's', long, value_name = "KEY", group = "verb")]
    search: Option<String>,
    #[arg(short = 'i', long, value_name = "PKG", num_args = 1.., group = "verb")]
    install: Option<Vec<String>>,
    #[arg(short = 'r', long, value_name = "PKG", num_args = 1.., group = "verb")]
    remove: Option<Vec<String>>,
    #[arg(short = 'U', long, value_name = "PKG", num_args = 0.., group = "verb")]
    upgrade: Option<Vec<String>>,
    #[arg(short = 'u', long, group = "verb")]
    update: bool,
    #[arg(short = 'h', long, group = "verb")]
    help: bool,
}

/// Parses the arguments after the program name.
pub fn cli_parse<I, S>(args: I) -> Result<Invocation, UsageError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("pacloud")).chain(args.into_iter().map(Into::into));
    let args = Args::try_parse_from(argv).map_err(|e| {
        let rendered = e.render().to_string();
        let first = rendered.lines().next().unwrap_or("invalid arguments");
        UsageError { message: first.trim_start_matches("error: ").to_string() }
    })?;
    let command = if let Some(key) = args.search {
        Command::Search(key)
    } else if let Some(pkgs) = args.install {
        Command::Install(pkgs)
    } else if let Some(pkgs) = args.remove {
        Command::Remove(pkgs)
    } else if let Some(pkgs) = args.upgrade {
        Command::Upgrade(pkgs)
    } else if args.update {
        Command::Update
    } else {
        Command::Help
    };
    Ok(Invocation { config: args.config, command })
}
