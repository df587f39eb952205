use super::state::{EnvState, Pos};
use super::Glyph;

/// What the agent sees: an agent-centred crop, plus the whole canvas when
/// the room config asks for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub crop_size: usize,
    /// `crop_size²` glyph ids, row-major.
    pub crop: Vec<u8>,
    /// `canvas_rows × canvas_cols` glyph ids, row-major.
    pub full_map: Option<Vec<u8>>,
}

impl EnvState {
    /// Glyph shown at a canvas cell under the current visibility rules.
    pub fn glyph_at(&self, p: Pos) -> Glyph {
        if p == self.agent_pos {
            return Glyph::Agent;
        }
        let i = p.0 * self.config.canvas_cols + p.1;
        if !self.config.lit && !self.explored[i] {
            return Glyph::Unseen;
        }
        let in_light = p.0.abs_diff(self.agent_pos.0) <= 1 && p.1.abs_diff(self.agent_pos.1) <= 1;
        if (self.config.lit || in_light) && self.monsters.iter().any(|m| m.alive && m.pos == p) {
            return Glyph::Monster;
        }
        if self.monsters.iter().any(|m| !m.alive && m.pos == p) {
            return Glyph::Corpse;
        }
        if self.traps.iter().any(|t| t.revealed && t.pos == p) {
            return Glyph::TrapRevealed;
        }
        self.grid[i]
    }

    /// Renders the full canvas as glyph ids.
    pub fn canvas_glyphs(&self) -> Vec<u8> {
        let (rows, cols) = (self.config.canvas_rows, self.config.canvas_cols);
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(self.glyph_at((r, c)).id());
            }
        }
        out
    }

    pub fn crop(&self, k: usize) -> Vec<u8> {
        let half = (k / 2) as isize;
        let (rows, cols) = (self.config.canvas_rows as isize, self.config.canvas_cols as isize);
        let (ar, ac) = (self.agent_pos.0 as isize, self.agent_pos.1 as isize);
        let mut out = Vec::with_capacity(k * k);
        for dr in -half..=half {
            for dc in -half..=half {
                let (r, c) = (ar + dr, ac + dc);
                let g = if r < 0 || c < 0 || r >= rows || c >= cols {
                    Glyph::Pad
                } else {
                    self.glyph_at((r as usize, c as usize))
                };
                out.push(g.id());
            }
        }
        out
    }

    pub fn observe(&self) -> Observation {
        Observation {
            crop_size: self.config.crop_size,
            crop: self.crop(self.config.crop_size),
            full_map: self.config.full_map.then(|| self.canvas_glyphs()),
        }
    }

    /// One character per canvas cell, rows separated by newlines.
    pub fn render_text(&self) -> String {
        let cols = self.config.canvas_cols;
        let glyphs = self.canvas_glyphs();
        let mut s = String::with_capacity(glyphs.len() + self.config.canvas_rows);
        for row in glyphs.chunks(cols) {
            s.extend(row.iter().map(|&g| Glyph::from_id(g).map_or('?', Glyph::to_char)));
            s.push('\n');
        }
        s
    }
}
