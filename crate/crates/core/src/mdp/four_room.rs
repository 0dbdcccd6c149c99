use super::TabularMdp;
use crate::Result;

/// Default discount for the four-room domain.
pub const FOUR_ROOM_GAMMA: f64 = 0.99;

// 11x11 interior, four rooms joined by four doorways.
const LAYOUT: [&str; 13] = [
    "wwwwwwwwwwwww",
    "w     w     w",
    "w     w     w",
    "w           w",
    "w     w     w",
    "w     w     w",
    "ww wwww     w",
    "w     www www",
    "w     w     w",
    "w     w     w",
    "w           w",
    "w     w     w",
    "wwwwwwwwwwwww",
];

const START_CELL: (usize, usize) = (11, 1);
const GOAL_CELL: (usize, usize) = (1, 11);

/// Grid actions, in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Down = 0,
    Left = 1,
    Up = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [Self::Down, Self::Left, Self::Up, Self::Right];

    fn offset(self) -> (isize, isize) {
        match self {
            Self::Down => (1, 0),
            Self::Left => (0, -1),
            Self::Up => (-1, 0),
            Self::Right => (0, 1),
        }
    }
}

/// The four-room MDP together with its grid geometry.
#[derive(Debug, Clone)]
pub struct FourRoom {
    pub mdp: TabularMdp,
    /// `(row, col)` of every state, rows counted from the top.
    pub cells: Vec<(usize, usize)>,
    pub start: usize,
    pub goal: usize,
}

impl FourRoom {
    pub fn state_of(&self, cell: (usize, usize)) -> Option<usize> {
        self.cells.iter().position(|&c| c == cell)
    }

    /// Cell reached from `cell` under `action`; walls leave the agent in place.
    pub fn step_cell(&self, cell: (usize, usize), action: GridAction) -> (usize, usize) {
        step_cell(cell, action)
    }
}

fn step_cell(cell: (usize, usize), action: GridAction) -> (usize, usize) {
    let (dr, dc) = action.offset();
    let next = (
        cell.0.wrapping_add_signed(dr),
        cell.1.wrapping_add_signed(dc),
    );
    if is_open(next) {
        next
    } else {
        cell
    }
}

fn is_open((r, c): (usize, usize)) -> bool {
    LAYOUT
        .get(r)
        .and_then(|row| row.as_bytes().get(c))
        .is_some_and(|&b| b == b' ')
}

/// Four-room gridworld with the default discount.
///
/// Deterministic moves, wall bumps keep the agent in place, entering the
/// upper-right goal pays +1 and the goal is absorbing with zero reward. The
/// agent starts in the lower-left corner.
pub fn build_four_room() -> TabularMdp {
    four_room(FOUR_ROOM_GAMMA)
        .expect("default four-room discount is valid")
        .mdp
}

pub fn four_room(gamma: f64) -> Result<FourRoom> {
    let cells: Vec<(usize, usize)> = (0..LAYOUT.len())
        .flat_map(|r| (0..LAYOUT[r].len()).map(move |c| (r, c)))
        .filter(|&cell| is_open(cell))
        .collect();
    let index = |cell: (usize, usize)| cells.iter().position(|&c| c == cell).unwrap();
    let ns = cells.len();
    let na = GridAction::ALL.len();
    let start = index(START_CELL);
    let goal = index(GOAL_CELL);

    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for (s, &cell) in cells.iter().enumerate() {
        for action in GridAction::ALL {
            let a = action as usize;
            let next = if s == goal {
                goal
            } else {
                index(step_cell(cell, action))
            };
            transition[(s * na + a) * ns + next] = 1.0;
            if s != goal && next == goal {
                reward[s * na + a] = 1.0;
            }
        }
    }
    let mut d0 = vec![0.0; ns];
    d0[start] = 1.0;
    let mut terminal = vec![false; ns];
    terminal[goal] = true;
    Ok(FourRoom {
        mdp: TabularMdp::from_flat(ns, na, gamma, d0, terminal, transition, reward)?,
        cells,
        start,
        goal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn bfs_distance(room: &FourRoom) -> usize {
        let mut dist = vec![usize::MAX; room.cells.len()];
        let mut queue = VecDeque::from([room.start]);
        dist[room.start] = 0;
        while let Some(s) = queue.pop_front() {
            for action in GridAction::ALL {
                let t = room
                    .state_of(room.step_cell(room.cells[s], action))
                    .unwrap();
                if dist[t] == usize::MAX {
                    dist[t] = dist[s] + 1;
                    queue.push_back(t);
                }
            }
        }
        dist[room.goal]
    }

    #[test]
    fn geometry() {
        let room = four_room(0.99).unwrap();
        assert_eq!(room.cells.len(), 104);
        assert_eq!(room.mdp.n_actions(), 4);
        assert_eq!(room.cells[room.start], (11, 1));
        assert_eq!(room.cells[room.goal], (1, 11));
        assert_eq!(bfs_distance(&room), 20);
    }

    #[test]
    fn wall_bump_stays_put() {
        let room = four_room(0.99).unwrap();
        // the goal sits in the top-right corner: up and right hit walls
        let below_goal = room.state_of((2, 11)).unwrap();
        let right = GridAction::Right as usize;
        assert_eq!(room.mdp.transition(below_goal, right)[below_goal], 1.0);
        assert_eq!(room.mdp.reward(below_goal, right), 0.0);
        let start = room.start;
        assert_eq!(
            room.mdp.transition(start, GridAction::Down as usize)[start],
            1.0
        );
        assert_eq!(
            room.mdp.transition(start, GridAction::Left as usize)[start],
            1.0
        );
        for a in 0..4 {
            assert_eq!(room.mdp.transition(room.goal, a)[room.goal], 1.0);
            assert_eq!(room.mdp.reward(room.goal, a), 0.0);
        }
    }

    #[test]
    fn reward_only_on_entering_goal() {
        let room = four_room(0.99).unwrap();
        let mdp = &room.mdp;
        let mut paying = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..4 {
                let r = mdp.reward(s, a);
                if r != 0.0 {
                    assert_eq!(r, 1.0);
                    assert_eq!(mdp.transition(s, a)[room.goal], 1.0);
                    paying.push(room.cells[s]);
                }
            }
        }
        paying.sort();
        assert_eq!(paying, vec![(1, 10), (2, 11)]);
    }
}
