pub mod diagnostics;
pub mod error;
pub mod extensions;
pub mod kato;
mod lyapunov;
pub mod operators;
pub mod quantum;
pub mod series;
pub mod state_space;
pub mod zoo;

pub use error::{KatoError, Result};
