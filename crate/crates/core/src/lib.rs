pub mod aparch;
pub mod config;
pub mod arfima;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod forecast;
pub mod ingestion;
pub mod pipeline;
pub mod presets;
pub mod quad;
pub mod seasonal;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};

// The guide's code blocks run as doc tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/seasonal.md")]
    mod seasonal {}
    #[doc = include_str!("../../../book/src/memory.md")]
    mod memory {}
    #[doc = include_str!("../../../book/src/scale.md")]
    mod scale {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/forecasting.md")]
    mod forecasting {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
