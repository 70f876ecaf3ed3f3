use serde::{Deserialize, Serialize};

use super::{movement_index, placing_interaction, quiet_interaction, Policy, StrategyError};
use crate::env::{Action, EpisodeConfig, FireEnv, Movement};
use crate::firespread::CellStatus;
use crate::grid::Cell;

/// Fireline segments, each rasterized as a 4-connected line so a walking
/// agent can lay it without diagonal gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirelinePlan {
    pub segments: Vec<[[usize; 2]; 2]>,
}

/// 4-connected cells from `a` to `b`, both included.
pub fn rasterize_segment(a: Cell, b: Cell) -> Vec<Cell> {
    let (nr, nc) = (a.0.abs_diff(b.0), a.1.abs_diff(b.1));
    let mut out = Vec::with_capacity(nr + nc + 1);
    let (mut r, mut c) = a;
    let (mut ir, mut ic) = (0usize, 0usize);
    out.push((r, c));
    while ir < nr || ic < nc {
        // step along whichever axis lags the ideal line more
        let col_first = ir == nr || (ic < nc && (1 + 2 * ic) * nr < (1 + 2 * ir) * nc);
        if col_first {
            c = if b.1 > a.1 { c + 1 } else { c - 1 };
            ic += 1;
        } else {
            r = if b.0 > a.0 { r + 1 } else { r - 1 };
            ir += 1;
        }
        out.push((r, c));
    }
    out
}

impl FirelinePlan {
    pub fn new(segments: Vec<(Cell, Cell)>) -> Self {
        Self {
            segments: segments
                .into_iter()
                .map(|(a, b)| [[a.0, a.1], [b.0, b.1]])
                .collect(),
        }
    }

    /// Closed polyline through `vertices`.
    pub fn closed(vertices: &[Cell]) -> Self {
        let n = vertices.len();
        if n == 1 {
            return Self::new(vec![(vertices[0], vertices[0])]);
        }
        Self::new((0..n).map(|i| (vertices[i], vertices[(i + 1) % n])).collect())
    }

    /// Open polyline through `vertices`.
    pub fn open(vertices: &[Cell]) -> Self {
        if vertices.len() == 1 {
            return Self::new(vec![(vertices[0], vertices[0])]);
        }
        Self::new(vertices.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// Axis-aligned rectangle outline with corners `(r0, c0)` and `(r1, c1)`.
    pub fn rectangle((r0, c0): Cell, (r1, c1): Cell) -> Self {
        Self::closed(&[(r0, c0), (r0, c1), (r1, c1), (r1, c0)])
    }

    /// Cells in laying order, each listed once.
    pub fn cells(&self) -> Vec<Cell> {
        let mut seen = std::collections::HashSet::new();
        self.segments
            .iter()
            .flat_map(|[a, b]| rasterize_segment((a[0], a[1]), (b[0], b[1])))
            .filter(|&cell| seen.insert(cell))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.cells().len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn validate(&self, (rows, cols): (usize, usize), budget: Option<usize>) -> Result<(), StrategyError> {
        if self.segments.is_empty() {
            return Err(StrategyError::InvalidPlan("plan has no segments".into()));
        }
        for seg in &self.segments {
            for p in seg {
                if p[0] >= rows || p[1] >= cols {
                    return Err(StrategyError::InvalidPlan(format!(
                        "endpoint {p:?} outside the {rows}x{cols} grid"
                    )));
                }
            }
        }
        if let Some(budget) = budget {
            let len = self.len();
            if len > budget {
                return Err(StrategyError::InvalidPlan(format!("plan covers {len} cells, budget is {budget}")));
            }
        }
        Ok(())
    }
}

/// Walks to each plan cell in order (rows first, then columns) and places a
/// mitigation there. Cells that are no longer unburned are skipped.
#[derive(Debug, Clone)]
pub struct PlanPolicy {
    cells: Vec<Cell>,
    next: usize,
    stay: usize,
    up: usize,
    down: usize,
    left: usize,
    right: usize,
    place: usize,
    quiet: usize,
}

impl PlanPolicy {
    pub fn new(config: &EpisodeConfig, plan: &FirelinePlan, dims: (usize, usize)) -> Result<Self, StrategyError> {
        plan.validate(dims, None)?;
        let need = |m: Movement| {
            movement_index(config, m)
                .ok_or_else(|| StrategyError::Unsupported(format!("plan following needs the \"{}\" movement", m.name())))
        };
        Ok(Self {
            cells: plan.cells(),
            next: 0,
            stay: need(Movement::Nothing)?,
            up: need(Movement::Up)?,
            down: need(Movement::Down)?,
            left: need(Movement::Left)?,
            right: need(Movement::Right)?,
            place: placing_interaction(config)?,
            quiet: quiet_interaction(config)?,
        })
    }
}

impl Policy for PlanPolicy {
    fn act(&mut self, env: &FireEnv) -> Action {
        while self.next < self.cells.len() && env.state().status_at(self.cells[self.next]) != CellStatus::Unburned {
            self.next += 1;
        }
        let Some(&(tr, tc)) = self.cells.get(self.next) else {
            return Action {
                movement: self.stay,
                interaction: self.quiet,
            };
        };
        let (r, c) = env.agent();
        let movement = if r > tr {
            self.up
        } else if r < tr {
            self.down
        } else if c > tc {
            self.left
        } else if c < tc {
            self.right
        } else {
            self.stay
        };
        // the interaction lands on the cell after the move
        let lands = r.abs_diff(tr) + c.abs_diff(tc) <= 1;
        Action {
            movement,
            interaction: if lands { self.place } else { self.quiet },
        }
    }
}
