//! File formats, experiment configuration and the `anicap` command line on
//! top of [`anicap_core`].

pub mod aniso;
pub mod cli;
pub mod experiment;
pub mod io;
pub mod ladder;
pub mod perturb;
