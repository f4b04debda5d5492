use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layout::{Cell, GridLayout};
use super::{EnvError, EnvState, Environment, StepOutcome};
use crate::ltl::{Alphabet, LabelSet};

pub use super::layout::OFFICE_LAYOUT;

pub const MINICRAFT_SIZE: usize = 45;
const MINICRAFT_GOALS: usize = 5;
const MINICRAFT_HAZARDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    North,
    East,
    South,
    West,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::North, Move::East, Move::South, Move::West];

    pub fn from_action(action: usize) -> Option<Move> {
        Self::ALL.get(action).copied()
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Move::North => (0, -1),
            Move::East => (1, 0),
            Move::South => (0, 1),
            Move::West => (-1, 0),
        }
    }
}

#[derive(Clone, Debug)]
enum Generator {
    Fixed,
    MiniCraft,
}

/// Four-connected gridworld with deterministic moves. Labels depend on the
/// agent's cell only.
#[derive(Clone, Debug)]
pub struct GridEnv {
    name: String,
    layout: GridLayout,
    generator: Generator,
    patch: usize,
    step_cap: usize,
    pos: Option<(usize, usize)>,
}

impl GridEnv {
    /// A gridworld over a fixed layout; reset seeds do not change the map.
    pub fn fixed(name: &str, layout: GridLayout, patch: usize) -> Self {
        Self {
            name: name.to_string(),
            layout,
            generator: Generator::Fixed,
            patch: patch.max(1),
            step_cap: 200,
            pos: None,
        }
    }

    pub fn office(patch: usize) -> Result<Self, EnvError> {
        Ok(Self::fixed("office", GridLayout::office()?, patch))
    }

    /// The 45x45 crafting world. The map is regenerated from every reset
    /// seed; before the first reset it holds the seed-0 map.
    pub fn minicraft(patch: usize) -> Result<Self, EnvError> {
        Ok(Self {
            name: "minicraft".to_string(),
            layout: minicraft_layout(0)?,
            generator: Generator::MiniCraft,
            patch: patch.max(1),
            step_cap: 1000,
            pos: None,
        })
    }

    pub fn with_step_cap(mut self, cap: usize) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn position(&self) -> Option<(usize, usize)> {
        self.pos
    }

    fn make_state(&self, x: usize, y: usize) -> EnvState {
        EnvState {
            key: self.layout.key(x, y),
            label: self.layout.label(x, y),
            terminal: false,
        }
    }

    fn target(&self, (x, y): (usize, usize), mv: Move) -> Option<(usize, usize)> {
        let (dx, dy) = mv.delta();
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        if nx >= self.layout.width || ny >= self.layout.height {
            return None;
        }
        (self.layout.cell(nx, ny) != Cell::Wall).then_some((nx, ny))
    }
}

impl Environment for GridEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn alphabet(&self) -> &Alphabet {
        self.layout.alphabet()
    }

    fn num_actions(&self) -> usize {
        Move::ALL.len()
    }

    fn feature_len(&self) -> usize {
        2 + self.patch * self.patch * (1 + self.layout.alphabet().len())
    }

    fn default_step_cap(&self) -> usize {
        self.step_cap
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        if let Generator::MiniCraft = self.generator {
            self.layout = minicraft_layout(seed).expect("minicraft generation is infallible for a fixed alphabet");
        }
        let (x, y) = self.layout.start;
        self.pos = Some((x, y));
        self.make_state(x, y)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        self.check_action(action)?;
        let pos = self.pos.ok_or(EnvError::NotReset)?;
        let mv = Move::ALL[action];
        let (next, blocked) = match self.target(pos, mv) {
            Some(p) => (p, false),
            None => (pos, true),
        };
        self.pos = Some(next);
        Ok(StepOutcome {
            state: self.make_state(next.0, next.1),
            blocked,
        })
    }

    /// Normalized `(x, y)` followed by a `k x k` egocentric patch, row-major
    /// from the top-left, with one channel for wall/outside and one per
    /// proposition.
    fn features(&self, state: &EnvState) -> Vec<f64> {
        let l = &self.layout;
        let (x, y) = l.coords(state.key);
        let norm = |v: usize, extent: usize| if extent > 1 { v as f64 / (extent - 1) as f64 } else { 0.0 };
        let channels = 1 + l.alphabet().len();
        let mut out = vec![0.0; self.feature_len()];
        out[0] = norm(x, l.width);
        out[1] = norm(y, l.height);
        let half = (self.patch / 2) as isize;
        for py in 0..self.patch {
            for px in 0..self.patch {
                let base = 2 + (py * self.patch + px) * channels;
                let cx = x as isize + px as isize - half;
                let cy = y as isize + py as isize - half;
                let inside = cx >= 0 && cy >= 0 && (cx as usize) < l.width && (cy as usize) < l.height;
                if !inside {
                    out[base] = 1.0;
                    continue;
                }
                match l.cell(cx as usize, cy as usize) {
                    Cell::Wall => out[base] = 1.0,
                    Cell::Prop(id) => out[base + 1 + id] = 1.0,
                    Cell::Empty => {}
                }
            }
        }
        out
    }

    fn num_states(&self) -> usize {
        self.layout.width * self.layout.height
    }

    fn state(&self, key: usize) -> EnvState {
        let (x, y) = self.layout.coords(key);
        self.make_state(x, y)
    }

    fn successor(&self, key: usize, action: usize) -> usize {
        let pos = self.layout.coords(key);
        match self.target(pos, Move::ALL[action]) {
            Some((x, y)) => self.layout.key(x, y),
            None => key,
        }
    }

    fn current(&self) -> Option<EnvState> {
        self.pos.map(|(x, y)| self.make_state(x, y))
    }

    fn label_universe(&self) -> Vec<LabelSet> {
        let mut labels: Vec<LabelSet> = std::iter::once(LabelSet::EMPTY)
            .chain((0..self.layout.alphabet().len()).map(LabelSet::singleton))
            .collect();
        labels.sort();
        labels
    }
}

/// Generates the seeded 45x45 crafting map: 5 Wood, 5 Workshop, 10 Trap and
/// 10 Marsh cells. Each sub-goal cell gets one hazard on a neighbouring cell
/// (Trap and Marsh alternating), the remaining hazards and the start are
/// placed uniformly on free cells.
pub fn minicraft_layout(seed: u64) -> Result<GridLayout, EnvError> {
    let alphabet = Alphabet::new(["Wood", "Workshop", "Trap", "Marsh"])?;
    let (wood, workshop, trap, marsh) = (0, 1, 2, 3);
    let n = MINICRAFT_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = vec![Cell::Empty; n * n];

    let free = |cells: &[Cell]| -> Vec<usize> { (0..cells.len()).filter(|&k| cells[k] == Cell::Empty).collect() };

    let mut goals = Vec::new();
    for prop in [wood, workshop] {
        for _ in 0..MINICRAFT_GOALS {
            // sub-goals never touch, so each keeps free neighbours for its hazard
            let candidates: Vec<usize> = free(&cells)
                .into_iter()
                .filter(|&k| neighbours(k, n).iter().all(|&j| cells[j] == Cell::Empty))
                .collect();
            let &k = candidates.choose(&mut rng).expect("45x45 grid has room for the sub-goals");
            cells[k] = Cell::Prop(prop);
            goals.push(k);
        }
    }

    let mut placed = [0usize; 4];
    for (i, &g) in goals.iter().enumerate() {
        let hazard = if i % 2 == 0 { trap } else { marsh };
        let options: Vec<usize> = neighbours(g, n).into_iter().filter(|&j| cells[j] == Cell::Empty).collect();
        let &k = options.choose(&mut rng).expect("sub-goal neighbourhood kept free");
        cells[k] = Cell::Prop(hazard);
        placed[hazard] += 1;
    }
    for hazard in [trap, marsh] {
        while placed[hazard] < MINICRAFT_HAZARDS {
            let &k = free(&cells).choose(&mut rng).expect("free cells remain");
            cells[k] = Cell::Prop(hazard);
            placed[hazard] += 1;
        }
    }

    let &start = free(&cells).choose(&mut rng).expect("free cells remain");
    GridLayout::new(n, n, cells, (start % n, start / n), alphabet, vec!['w', 'k', 't', 'm'])
}

fn neighbours(k: usize, n: usize) -> Vec<usize> {
    let (x, y) = (k % n, k / n);
    let mut out = Vec::with_capacity(4);
    if y > 0 {
        out.push(k - n);
    }
    if x + 1 < n {
        out.push(k + 1);
    }
    if y + 1 < n {
        out.push(k + n);
    }
    if x > 0 {
        out.push(k - 1);
    }
    out
}
