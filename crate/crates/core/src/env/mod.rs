//! Seeded simulator of the four 15×15 room variants.
//!
//! The room interior sits at a fixed anchor on a 21×79 canvas. Traps are
//! invisible until triggered, monsters chase the agent, and on unlit maps
//! only cells that have been inside the agent's 3×3 light are drawn.

mod config;
mod glyph;
mod observation;
mod state;

pub use config::{ActionSet, MapKind, RoomConfig};
pub use glyph::{Glyph, GLYPH_COUNT};
pub use observation::Observation;
pub use state::{EnvState, Monster, Pos, StepInfo, StepResult, Trap};

#[cfg(test)]
mod tests;
