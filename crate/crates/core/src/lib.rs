//! Holonomy of foliations and foliated bundles presented by charts and
//! transverse transition maps, computed as truncated jets.

pub mod atlas;
pub mod bundle;
pub mod cli;
pub mod expr;
pub mod gallery;
pub mod hierarchy;
pub mod holonomy;
pub mod jet;
pub mod path;
pub mod sampling;

/// The guide under `book/` and the README, compiled here so its examples run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/jets.md")]
    pub mod jets {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    pub mod expressions {}
    #[doc = include_str!("../../../book/src/atlases.md")]
    pub mod atlases {}
    #[doc = include_str!("../../../book/src/paths.md")]
    pub mod paths {}
    #[doc = include_str!("../../../book/src/holonomy.md")]
    pub mod holonomy {}
    #[doc = include_str!("../../../book/src/bundles.md")]
    pub mod bundles {}
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    pub mod hierarchy {}
    #[doc = include_str!("../../../book/src/gallery.md")]
    pub mod gallery {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
}
