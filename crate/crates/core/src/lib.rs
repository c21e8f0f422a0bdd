//! Birthday-paradox support-size estimation.
//!
//! Draw batches from a distribution, look for repeated (or near-duplicate)
//! samples, estimate how often a batch of size `s` contains one, and turn
//! that into an estimate of how many distinct outcomes the distribution
//! really has. If batches of about `s` samples collide half the time, the
//! support is roughly `s^2`; the [`bounds`] module turns collision
//! statistics into rigorous statements under stated assumptions.
//!
//! | module | what it does |
//! |---|---|
//! | [`dist`] | explicit distributions, exact and Monte Carlo collision probability |
//! | [`bounds`] | closed-form collision and support bounds |
//! | [`similarity`] | Euclidean metrics, exact top-k closest pairs, nearest neighbor |
//! | [`census`] | repeated trials, 50%-collision batch search, support reports |
//! | [`ingest`] | PGM/PPM images, embeddings, manifests |
//! | [`review`] | verdict log and the HTTP review backend |
//! | [`cli`] | the `birthday-census` command line |

pub mod bounds;
pub mod census;
pub mod cli;
pub mod dist;
pub mod error;
pub mod ingest;
pub mod review;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
