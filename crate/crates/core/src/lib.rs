pub mod channel;
pub mod detect;
pub mod distance;
pub mod eigen;
pub mod error;
pub mod gain;
pub mod signal;
pub mod sim;
pub mod trellis;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapters {
        ($($name:ident => $file:literal),* $(,)?) => {
            $(#[doc = include_str!(concat!("../../../book/src/", $file))] mod $name {})*
        };
    }
    chapters! {
        introduction => "introduction.md",
        channel => "channel.md",
        eigen => "eigen.md",
        detectors => "detectors.md",
        gain_loops => "gain-loops.md",
        distance => "distance.md",
        simulation => "simulation.md",
    }
}
