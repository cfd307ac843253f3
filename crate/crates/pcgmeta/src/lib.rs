//! File formats, exports, the staged command pipeline and the walkthrough
//! server built on `pcgmeta-core`.

pub mod commands;
pub mod export;
pub mod io;
pub mod server;
