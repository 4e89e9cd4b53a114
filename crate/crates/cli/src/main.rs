//! `hcf` — signed-engagement recommendation from the command line.
//!
//! Six subcommands cover the whole workflow: `datagen` plants a
//! synthetic world, `ingest` normalizes an event log, `train` fits a
//! factorization machine, `recommend` ranks items for users,
//! `disseminate` grows an audience for an item against a response
//! oracle, and `evaluate` compares the signed variant against its
//! positive-only ablation. Every artifact-producing command writes a
//! JSON manifest next to its output with the fully resolved
//! configuration, so any artifact can be rebuilt from the manifest
//! alone. Seeded commands are bit-reproducible.

mod cli;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = cli::Cli::parse();
    match commands::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
