//! Config files, output formats and the command-line runs for `ddft-core`.
//!
//! - [`config`]: sectioned text / JSON run configs and the assumption gate.
//! - [`kernel`]: `kind:param=value` kernel strings.
//! - [`output`]: CSV and JSON writers.
//! - [`commands`]: `evolve`, `equilibrium`, `particles`.
//! - [`validate`]: the built-in acceptance suite.

// `!(x > 0.0)` is deliberate: it also rejects NaN. Index loops mirror the
// stencils they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod kernel;
pub mod output;
pub mod validate;

/// Worker threads from `DDFT_THREADS` (default 1).
pub fn threads_from_env() -> Result<usize, String> {
    match std::env::var("DDFT_THREADS") {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("DDFT_THREADS must be a positive integer, got `{s}`")),
        },
    }
}
