//! Exact reference computations over a layout. Used by tests, evaluation
//! and heatmap export; never by the learning agents.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::{Action, Cell, GridSpec, NUM_ACTIONS};
use crate::error::{Error, Result};

/// Per-cell action distribution, indexed by `GridSpec::cell_index`.
pub type Policy = Vec<[f64; NUM_ACTIONS]>;

pub fn uniform_policy(spec: &GridSpec) -> Policy {
    vec![[1.0 / NUM_ACTIONS as f64; NUM_ACTIONS]; spec.n_cells()]
}

/// Cell-to-cell transition matrix under `policy`.
///
/// Covers the movement dynamics only: rewards, terminals and apple
/// bookkeeping are ignored, so the result is square in `n_cells`.
pub fn transition_matrix(spec: &GridSpec, policy: &[[f64; NUM_ACTIONS]]) -> Result<DMatrix<f64>> {
    let n = spec.n_cells();
    if policy.len() != n {
        return Err(Error::InvalidPolicy(format!(
            "policy has {} rows, layout has {n} cells",
            policy.len()
        )));
    }
    let mut p = DMatrix::zeros(n, n);
    for (i, &c) in spec.cells().iter().enumerate() {
        let row = &policy[i];
        let total: f64 = row.iter().sum();
        if row.iter().any(|&w| w < 0.0 || !w.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPolicy(format!("row {i} is not a distribution")));
        }
        for a in Action::ALL {
            let j = spec.cell_index(spec.move_from(c, a)).expect("moves stay on open cells");
            p[(i, j)] += row[a.index()];
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Steps(usize),
    Unreachable,
}

impl Distance {
    pub fn steps(self) -> Option<usize> {
        match self {
            Distance::Steps(n) => Some(n),
            Distance::Unreachable => None,
        }
    }
}

/// BFS distance from `from` to every open cell, by cell index.
pub fn bfs_distances(spec: &GridSpec, from: Cell) -> Result<Vec<Distance>> {
    let src = spec
        .cell_index(from)
        .ok_or(Error::WallCell { x: from.x, y: from.y })?;
    let mut dist = vec![Distance::Unreachable; spec.n_cells()];
    dist[src] = Distance::Steps(0);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[spec.cell_index(c).unwrap()].steps().unwrap();
        for a in Action::ALL {
            let n = spec.move_from(c, a);
            let j = spec.cell_index(n).unwrap();
            if dist[j] == Distance::Unreachable {
                dist[j] = Distance::Steps(d + 1);
                queue.push_back(n);
            }
        }
    }
    Ok(dist)
}

pub fn shortest_path_distance(spec: &GridSpec, from: Cell, to: Cell) -> Result<Distance> {
    let dst = spec.cell_index(to).ok_or(Error::WallCell { x: to.x, y: to.y })?;
    Ok(bfs_distances(spec, from)?[dst])
}

/// One shortest action sequence from `from` to `to`, if reachable.
pub fn shortest_path(spec: &GridSpec, from: Cell, to: Cell) -> Option<Vec<Action>> {
    let dist = bfs_distances(spec, to).ok()?;
    let mut c = from;
    let mut path = Vec::new();
    let mut d = dist[spec.cell_index(c)?].steps()?;
    while d > 0 {
        let (a, n) = Action::ALL
            .into_iter()
            .map(|a| (a, spec.move_from(c, a)))
            .find(|&(_, n)| dist[spec.cell_index(n).unwrap()] == Distance::Steps(d - 1))?;
        path.push(a);
        c = n;
        d -= 1;
    }
    Some(path)
}

/// Room id per cell index: connected components of open cells once the
/// doorway cells are removed. Doorways themselves get `None`.
pub fn room_labels(spec: &GridSpec) -> Vec<Option<usize>> {
    let n = spec.n_cells();
    let mut labels = vec![None; n];
    let mut next = 0;
    for (i, &c) in spec.cells().iter().enumerate() {
        if labels[i].is_some() || spec.is_doorway(c) {
            continue;
        }
        labels[i] = Some(next);
        let mut queue = VecDeque::from([c]);
        while let Some(c) = queue.pop_front() {
            for a in Action::ALL {
                let m = spec.move_from(c, a);
                let j = spec.cell_index(m).unwrap();
                if labels[j].is_none() && !spec.is_doorway(m) {
                    labels[j] = Some(next);
                    queue.push_back(m);
                }
            }
        }
        next += 1;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridEnv, ANCHOR_THREE_ROOMS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn chain_uniform_left_right() {
        let spec = GridSpec::builtin("chain:3").unwrap();
        let policy = vec![[0.0, 0.0, 0.5, 0.5]; 3];
        let p = transition_matrix(&spec, &policy).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5]);
        assert_eq!(p, expected);
    }

    #[test]
    fn chain_always_right_is_deterministic() {
        let spec = GridSpec::builtin("chain:6").unwrap();
        let policy = vec![[0.0, 0.0, 0.0, 1.0]; 6];
        let p = transition_matrix(&spec, &policy).unwrap();
        for i in 0..6 {
            assert_eq!(p[(i, (i + 1).min(5))], 1.0);
        }
    }

    #[test]
    fn rows_are_stochastic() {
        for name in ["three_rooms", "flytrap", "distraction"] {
            let spec = GridSpec::builtin(name).unwrap();
            let p = transition_matrix(&spec, &uniform_policy(&spec)).unwrap();
            for i in 0..p.nrows() {
                assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_policy() {
        let spec = GridSpec::builtin("chain:3").unwrap();
        assert!(transition_matrix(&spec, &[[0.25; 4]; 2]).is_err());
        assert!(transition_matrix(&spec, &[[0.5; 4]; 3]).is_err());
    }

    #[test]
    fn bfs_basics() {
        let spec = GridSpec::builtin("three_rooms").unwrap();
        let a = ANCHOR_THREE_ROOMS;
        assert_eq!(shortest_path_distance(&spec, a, a).unwrap(), Distance::Steps(0));
        let right = Cell::new(a.x + 1, a.y);
        assert_eq!(shortest_path_distance(&spec, a, right).unwrap(), Distance::Steps(1));
        assert!(matches!(
            shortest_path_distance(&spec, a, Cell::new(5, 0)),
            Err(Error::WallCell { .. })
        ));
    }

    #[test]
    fn three_rooms_far_corner() {
        // anchor (2,5) -> door (5,5) is 3 steps, door to door 6, then from
        // (11,5) to (16,0) is 5 + 5 = 10: 3 + 6 + 10 = 19.
        let spec = GridSpec::builtin("three_rooms").unwrap();
        let d = shortest_path_distance(&spec, ANCHOR_THREE_ROOMS, Cell::new(16, 0)).unwrap();
        assert_eq!(d, Distance::Steps(19));
    }

    #[test]
    fn unreachable_cell() {
        let spec = GridSpec::parse("t", "S.#..\n", 5).unwrap();
        let d = shortest_path_distance(&spec, Cell::new(0, 0), Cell::new(4, 0)).unwrap();
        assert_eq!(d, Distance::Unreachable);
    }

    #[test]
    fn room_labels_three_rooms() {
        let spec = GridSpec::builtin("three_rooms").unwrap();
        let labels = room_labels(&spec);
        let rooms: std::collections::BTreeSet<_> = labels.iter().flatten().collect();
        assert_eq!(rooms.len(), 3);
        assert_eq!(labels.iter().filter(|l| l.is_none()).count(), 2);
    }

    #[test]
    fn doorways_do_not_change_dynamics() {
        let with = GridSpec::builtin("three_rooms").unwrap();
        let without = GridSpec::parse("t", &with.to_map_string(), with.max_steps()).unwrap();
        let policy = uniform_policy(&with);
        assert_eq!(
            transition_matrix(&with, &policy).unwrap(),
            transition_matrix(&without, &policy).unwrap()
        );
    }

    // Powers of P against Monte-Carlo k-step visit frequencies.
    #[test]
    fn matrix_power_matches_rollouts() {
        let spec = GridSpec::parse("t", "#######\n#S...##\n#.#...#\n#...#.#\n#######\n", 1000).unwrap();
        let n = spec.n_cells();
        assert!(n <= 30);
        let p = transition_matrix(&spec, &uniform_policy(&spec)).unwrap();
        let k = 4;
        let pk = (0..k - 1).fold(p.clone(), |acc, _| &acc * &p);
        let spec = Arc::new(spec);
        let mut env = GridEnv::new(spec.clone(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rollouts = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..rollouts {
            env.reset();
            let mut obs = env.observation();
            for _ in 0..k {
                let a = Action::from_index(rng.random_range(0..4)).unwrap();
                obs = env.step(a).unwrap().observation;
            }
            counts[obs.state_id] += 1;
        }
        let start = spec.cell_index(spec.starts()[0]).unwrap();
        let mut chi2 = 0.0;
        let mut dof = 0;
        for j in 0..n {
            let expected = pk[(start, j)] * rollouts as f64;
            if expected > 0.0 {
                chi2 += (counts[j] as f64 - expected).powi(2) / expected;
                dof += 1;
            } else {
                assert_eq!(counts[j], 0);
            }
        }
        // generous bound: mean dof-1, sd sqrt(2 dof)
        let dof = (dof - 1) as f64;
        assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");
    }
}
