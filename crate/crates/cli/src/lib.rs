//! Command-line front end: `simulate`, `train`, `despeckle` and `evaluate`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

pub use args::{Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Sizes the worker pool. A pool that already exists is kept; the thread
/// count never changes results.
fn init_threads(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("keeping existing thread pool: {e}");
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve()?;
    init_threads(cfg.threads);
    match &cli.command {
        Command::Simulate { clean, .. } => {
            commands::simulate(&cfg, clean)?;
        }
        Command::Train { manifest, .. } => {
            commands::train(&cfg, manifest)?;
        }
        Command::Despeckle { checkpoint, inputs, .. } => {
            commands::despeckle(&cfg, checkpoint, inputs)?;
        }
        Command::Evaluate { pairs, .. } => {
            commands::evaluate(&cfg, pairs)?;
        }
    }
    Ok(())
}
