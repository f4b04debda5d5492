use std::collections::VecDeque;

use super::TabularQ;
use crate::envs::Environment;
use crate::ltl::{TaskRef, TaskSet};
use crate::tlmdp::TlState;

/// Optimal action values of the product of an environment with a task
/// closure, with the same reward and bootstrap rules as the learners.
#[derive(Clone, Debug)]
pub struct ProductValues {
    pub q: TabularQ,
    pub iterations: usize,
    pub residual: f64,
}

/// Value iteration until the max-norm change falls below `tol` or
/// `max_iterations` sweeps were made.
pub fn value_iteration<E: Environment + ?Sized>(
    env: &E,
    tasks: &TaskSet,
    gamma: f64,
    tol: f64,
    max_iterations: usize,
) -> ProductValues {
    let (ns, nt, na) = (env.num_states(), tasks.len(), env.num_actions());
    // successor table: (next key, next task, reward, bootstrap)
    let mut table = Vec::with_capacity(ns * nt * na);
    for s in 0..ns {
        for t in 0..nt {
            for a in 0..na {
                let next = env.successor(s, a);
                let st = env.state(next);
                let task = tasks.step(t, st.label);
                let boot = match task {
                    TaskRef::Active(j) if !st.terminal => Some((next, j)),
                    _ => None,
                };
                table.push((f64::from(task.reward()), boot));
            }
        }
    }
    let mut q = TabularQ::zeros(ns, nt, na);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations && residual >= tol {
        let mut next = q.clone();
        residual = 0.0;
        for (i, &(r, boot)) in table.iter().enumerate() {
            let v = match boot {
                Some((s, t)) => r + gamma * q.max(s, t),
                None => r,
            };
            residual = f64::max(residual, (v - q.values[i]).abs());
            next.values[i] = v;
        }
        q = next;
        iterations += 1;
    }
    ProductValues { q, iterations, residual }
}

/// Non-terminal product states `(env key, task index)` reachable from
/// `start`, in breadth-first order.
pub fn reachable_product<E: Environment + ?Sized>(env: &E, tasks: &TaskSet, start: TlState) -> Vec<(usize, usize)> {
    let Some(t0) = start.task.active() else {
        return Vec::new();
    };
    if start.env.terminal {
        return Vec::new();
    }
    let nt = tasks.len();
    let mut seen = vec![false; env.num_states() * nt];
    let mut order = vec![(start.env.key, t0)];
    seen[start.env.key * nt + t0] = true;
    let mut queue = VecDeque::from([(start.env.key, t0)]);
    while let Some((s, t)) = queue.pop_front() {
        for a in 0..env.num_actions() {
            let next = env.successor(s, a);
            let st = env.state(next);
            if st.terminal {
                continue;
            }
            if let TaskRef::Active(j) = tasks.step(t, st.label) {
                if !seen[next * nt + j] {
                    seen[next * nt + j] = true;
                    order.push((next, j));
                    queue.push_back((next, j));
                }
            }
        }
    }
    order
}

/// Fewest steps from `start` to a product transition that satisfies the
/// task, or `None` when no such path exists.
pub fn shortest_steps<E: Environment + ?Sized>(env: &E, tasks: &TaskSet, start: TlState) -> Option<usize> {
    match start.task {
        TaskRef::Satisfied => return Some(0),
        TaskRef::Falsified => return None,
        TaskRef::Active(_) => {}
    }
    if start.env.terminal {
        return None;
    }
    let nt = tasks.len();
    let t0 = start.task.active()?;
    let mut dist = vec![usize::MAX; env.num_states() * nt];
    dist[start.env.key * nt + t0] = 0;
    let mut queue = VecDeque::from([(start.env.key, t0)]);
    while let Some((s, t)) = queue.pop_front() {
        let d = dist[s * nt + t];
        for a in 0..env.num_actions() {
            let next = env.successor(s, a);
            let st = env.state(next);
            match tasks.step(t, st.label) {
                TaskRef::Satisfied => return Some(d + 1),
                TaskRef::Falsified => {}
                TaskRef::Active(j) => {
                    if !st.terminal && dist[next * nt + j] == usize::MAX {
                        dist[next * nt + j] = d + 1;
                        queue.push_back((next, j));
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::envs::{GridEnv, GridLayout};
    use crate::ltl::{closure, parse, Alphabet};
    use crate::tlmdp::TlMdp;

    fn office_start(formula: &str) -> (GridEnv, Arc<TaskSet>, TlState) {
        let env = GridEnv::office(5).unwrap();
        let f = parse(formula, env.alphabet()).unwrap();
        let tasks = Arc::new(closure(&f, env.alphabet()).unwrap());
        let mut mdp = TlMdp::new(env, tasks.clone());
        let start = mdp.reset(0);
        (mdp.env().clone(), tasks, start)
    }

    #[test]
    fn office_shortest_paths() {
        let (env, tasks, start) = office_start("F Coffee");
        assert_eq!(shortest_steps(&env, &tasks, start), Some(4));
        let (env, tasks, start) = office_start("F Office & G !Decoration");
        // east, then down the column x=5 and along the bottom row
        assert_eq!(shortest_steps(&env, &tasks, start), Some(8));
        let (env, tasks, start) = office_start("F (Coffee & F Office) & G !Decoration");
        assert_eq!(shortest_steps(&env, &tasks, start), Some(16));
    }

    #[test]
    fn open_grid_values_are_discounted_distances() {
        // 3x3 grid, a in the corner: Q along a shortest path of length d is
        // gamma^(d-1)
        let ab = Alphabet::new(["a"]).unwrap();
        let layout = GridLayout::parse("a = a\n\n..a\n...\n@..\n").unwrap();
        let env = GridEnv::fixed("grid3", layout, 1);
        let f = parse("F a", &ab).unwrap();
        let tasks = closure(&f, &ab).unwrap();
        let vi = value_iteration(&env, &tasks, 0.9, 1e-14, 10_000);
        let start = env.layout().key(0, 2);
        // from the far corner the distance is 4
        let best = vi.q.max(start, 0);
        assert!((best - 0.9f64.powi(3)).abs() < 1e-12, "{best}");
    }

    #[test]
    fn unreachable_goal_has_no_path() {
        let ab = Alphabet::new(["a"]).unwrap();
        let layout = GridLayout::parse("a = a\n\n@#a\n").unwrap();
        let env = GridEnv::fixed("walled", layout, 1);
        let f = parse("F a", &ab).unwrap();
        let tasks = Arc::new(closure(&f, &ab).unwrap());
        let mut mdp = TlMdp::new(env, tasks.clone());
        let start = mdp.reset(0);
        assert_eq!(shortest_steps(mdp.env(), &tasks, start), None);
        assert_eq!(reachable_product(mdp.env(), &tasks, start).len(), 1);
    }
}
