//! One module per subcommand; each takes the loaded config and an output
//! directory, runs its experiment, and writes files through the emitter.

pub mod audit;
pub mod protocol;
pub mod region;
pub mod softcover;
pub mod task;
pub mod wyner;
