use std::collections::HashMap;
use std::fmt::Write as _;

use super::EnvError;
use crate::ltl::{Alphabet, LabelSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Wall,
    /// Cell labeled with one proposition, by alphabet id.
    Prop(usize),
}

/// A rectangular map: walls, labeled cells and the agent start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub start: (usize, usize),
    alphabet: Alphabet,
    glyphs: Vec<char>,
}

pub const OFFICE_LAYOUT: &str = include_str!("../../layouts/office.txt");

impl GridLayout {
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<Cell>,
        start: (usize, usize),
        alphabet: Alphabet,
        glyphs: Vec<char>,
    ) -> Result<Self, EnvError> {
        let bad = |message: String| EnvError::Layout { line: 0, message };
        if cells.len() != width * height || width == 0 || height == 0 {
            return Err(bad(format!("{} cells for a {width}x{height} grid", cells.len())));
        }
        if start.0 >= width || start.1 >= height {
            return Err(bad(format!("start {start:?} out of bounds")));
        }
        if cells[start.1 * width + start.0] == Cell::Wall {
            return Err(bad("start cell is a wall".into()));
        }
        if let Some(Cell::Prop(id)) = cells.iter().find(|c| matches!(c, Cell::Prop(id) if *id >= alphabet.len())) {
            return Err(bad(format!("proposition id {id} outside alphabet")));
        }
        Ok(Self {
            width,
            height,
            cells,
            start,
            alphabet,
            glyphs,
        })
    }

    /// The shipped office reference map.
    pub fn office() -> Result<Self, EnvError> {
        Self::parse(OFFICE_LAYOUT)
    }

    /// Parses the text layout format: `#` comment lines, then a legend of
    /// `<char> = <Proposition>` lines, a blank line, and one text row per grid
    /// row using `#` (wall), `.` (empty), `@` (start) and legend characters.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let err = |line: usize, message: String| EnvError::Layout { line, message };
        let mut legend: Vec<(char, String)> = Vec::new();
        let mut rows: Vec<(usize, &str)> = Vec::new();
        let mut in_map = false;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim_end();
            if !in_map {
                if line.starts_with('#') && line.contains(' ') || line.starts_with("# ") || line == "#" {
                    continue;
                }
                if line.trim().is_empty() {
                    if !legend.is_empty() {
                        in_map = true;
                    }
                    continue;
                }
                if let Some((lhs, rhs)) = line.split_once('=') {
                    let lhs = lhs.trim();
                    let mut chars = lhs.chars();
                    let glyph = match (chars.next(), chars.next()) {
                        (Some(c), None) => c,
                        _ => return Err(err(line_no, format!("legend key `{lhs}` is not one character"))),
                    };
                    if matches!(glyph, '#' | '.' | '@') {
                        return Err(err(line_no, format!("legend key `{glyph}` is reserved")));
                    }
                    legend.push((glyph, rhs.trim().to_string()));
                    continue;
                }
                // a layout without legend starts its map immediately
                in_map = true;
            }
            if line.is_empty() {
                continue;
            }
            rows.push((line_no, line));
        }
        if rows.is_empty() {
            return Err(err(0, "no map rows".into()));
        }
        let alphabet = Alphabet::new(legend.iter().map(|(_, name)| name.as_str()))?;
        let glyph_ids: HashMap<char, usize> = legend.iter().enumerate().map(|(i, (c, _))| (*c, i)).collect();
        let width = rows[0].1.chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut start = None;
        for (y, (line_no, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(err(*line_no, format!("row width {} != {width}", row.chars().count())));
            }
            for (x, c) in row.chars().enumerate() {
                let cell = match c {
                    '#' => Cell::Wall,
                    '.' => Cell::Empty,
                    '@' => {
                        if start.replace((x, y)).is_some() {
                            return Err(err(*line_no, "more than one start cell".into()));
                        }
                        Cell::Empty
                    }
                    other => match glyph_ids.get(&other) {
                        Some(&id) => Cell::Prop(id),
                        None => return Err(err(*line_no, format!("unknown cell character `{other}`"))),
                    },
                };
                cells.push(cell);
            }
        }
        let start = start.ok_or_else(|| err(0, "no start cell `@`".into()))?;
        let glyphs = legend.iter().map(|(c, _)| *c).collect();
        Self::new(width, height, cells, start, alphabet, glyphs)
    }

    /// Renders back to the text format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.alphabet.names().enumerate() {
            let _ = writeln!(out, "{} = {}", self.glyph(i), name);
        }
        out.push('\n');
        for y in 0..self.height {
            for x in 0..self.width {
                let c = if (x, y) == self.start {
                    '@'
                } else {
                    match self.cell(x, y) {
                        Cell::Empty => '.',
                        Cell::Wall => '#',
                        Cell::Prop(id) => self.glyph(id),
                    }
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    fn glyph(&self, id: usize) -> char {
        self.glyphs
            .get(id)
            .copied()
            .unwrap_or_else(|| char::from(b'a' + (id % 26) as u8))
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn cell_at_key(&self, key: usize) -> Cell {
        self.cells[key]
    }

    pub fn key(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, key: usize) -> (usize, usize) {
        (key % self.width, key / self.width)
    }

    pub fn label(&self, x: usize, y: usize) -> LabelSet {
        match self.cell(x, y) {
            Cell::Prop(id) => LabelSet::singleton(id),
            _ => LabelSet::EMPTY,
        }
    }

    /// Cells carrying proposition `id`.
    pub fn cells_with(&self, id: usize) -> Vec<(usize, usize)> {
        (0..self.cells.len())
            .filter(|&k| self.cells[k] == Cell::Prop(id))
            .map(|k| self.coords(k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn office_layout_parses() {
        let l = GridLayout::office().unwrap();
        assert_eq!((l.width, l.height), (9, 7));
        assert_eq!(l.start, (4, 3));
        let names: Vec<&str> = l.alphabet().names().collect();
        assert_eq!(
            names,
            ["Coffee", "Office", "Email", "Decoration", "A", "B", "C", "D"]
        );
        assert_eq!(l.cells_with(0), vec![(1, 2)]);
        assert_eq!(l.cells_with(1), vec![(7, 4)]);
        assert_eq!(l.cells_with(3).len(), 4);
        assert_eq!(l.cell(2, 1), Cell::Wall);
    }

    #[test]
    fn render_round_trips() {
        let l = GridLayout::office().unwrap();
        assert_eq!(GridLayout::parse(&l.render()).unwrap(), l);
    }

    #[test]
    fn layout_errors() {
        assert!(GridLayout::parse("a = A\n\n.a.\n..\n@..\n").is_err());
        assert!(GridLayout::parse("a = A\n\n.a.\n...\n").is_err());
        assert!(GridLayout::parse("a = A\n\n.z@\n").is_err());
        assert!(GridLayout::parse("a = A\n\n#a@#\n").is_ok());
    }
}
