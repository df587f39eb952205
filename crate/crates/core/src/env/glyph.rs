use serde::{Deserialize, Serialize};

/// Rendered cell identity. Hidden traps have no glyph: they render as floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Glyph {
    Floor = 0,
    Wall = 1,
    Agent = 2,
    StairUp = 3,
    StairDown = 4,
    Monster = 5,
    Corpse = 6,
    TrapRevealed = 7,
    Unseen = 8,
    Pad = 9,
}

/// Size of the glyph vocabulary (embedding rows).
pub const GLYPH_COUNT: usize = 10;

impl Glyph {
    pub const ALL: [Glyph; GLYPH_COUNT] = [
        Glyph::Floor,
        Glyph::Wall,
        Glyph::Agent,
        Glyph::StairUp,
        Glyph::StairDown,
        Glyph::Monster,
        Glyph::Corpse,
        Glyph::TrapRevealed,
        Glyph::Unseen,
        Glyph::Pad,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Glyph> {
        Self::ALL.get(id as usize).copied()
    }

    /// Debug text mapping, one character per glyph.
    pub fn to_char(self) -> char {
        match self {
            Glyph::Floor => '.',
            Glyph::Wall => '#',
            Glyph::Agent => '@',
            Glyph::StairUp => '<',
            Glyph::StairDown => '>',
            Glyph::Monster => 'M',
            Glyph::Corpse => '%',
            Glyph::TrapRevealed => '^',
            Glyph::Unseen => ' ',
            Glyph::Pad => '`',
        }
    }
}
