//! Fairness audits for name de-identification systems.
//!
//! The crate generates synthetic clinical notes by filling name placeholders
//! from demographically profiled name sets, runs one or more de-identification
//! backends over them, scores which inserted names each backend recovered, and
//! tests whether recall differs across gender, race, popularity and decade.
//!
//! ```
//! use deidaudit::catalog::Catalog;
//! use deidaudit::template::{bundled_templates, generate_corpus};
//!
//! let catalog = Catalog::bundled();
//! let templates = bundled_templates();
//! let corpus = generate_corpus(&catalog, &templates, 1, 42).unwrap();
//! assert_eq!(corpus.len(), templates.len() * 16);
//! ```

pub mod audit;
pub mod backends;
pub mod catalog;
pub mod eval;
pub mod rng;
pub mod span;
pub mod stats;
pub mod template;

pub use catalog::Catalog;
pub use span::Span;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/gaps.md")]
    mod gaps {}
    #[doc = include_str!("../../../book/src/tests.md")]
    mod tests {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/audit.md")]
    mod audit {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
