//! Keeps the guide's code snippets honest: every fenced Rust block in the
//! mdBook chapters compiles and runs as a doctest of this crate.

#[cfg(doctest)]
mod chapters {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/flash.md")]
    pub mod flash {}
    #[doc = include_str!("../../../book/src/deltas.md")]
    pub mod deltas {}
    #[doc = include_str!("../../../book/src/packets.md")]
    pub mod packets {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    pub mod protocol {}
    #[doc = include_str!("../../../book/src/energy.md")]
    pub mod energy {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    pub mod benchmarks {}
}
