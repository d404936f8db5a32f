//! Library side of the `pvnext` command line tool.

pub mod args;
pub mod bench;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod imitator_eval;

use args::{Cli, Command};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => commands::cmd_synth(a).map(drop),
        Command::Train(a) => commands::cmd_train(a).map(drop),
        Command::Eval(a) => commands::cmd_eval(a).map(drop),
        Command::ImitatorEval(a) => commands::cmd_imitator_eval(a).map(drop),
        Command::Bench(a) => commands::cmd_bench(a).map(drop),
    }
}
