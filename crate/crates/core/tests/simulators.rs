use std::collections::VecDeque;

use proptest::prelude::*;

use quip::simulators::{maze_cost, rover_cost, snake_reward, Action, GridWorld, ObstacleCourse, SnakeRules};
use quip::Point;

/// Independent BFS distance from `from` to the goal over free cells.
fn bfs(world: &GridWorld, from: [i64; 2]) -> Option<u32> {
    let goal = world.goal.unwrap();
    let free = |c: [i64; 2]| {
        c[0] >= 1 && c[0] <= world.width && c[1] >= 1 && c[1] <= world.height && !world.obstacles.contains(&c)
    };
    let mut seen = vec![from];
    let mut queue = VecDeque::from([(from, 0u32)]);
    while let Some((c, k)) = queue.pop_front() {
        if c == goal {
            return Some(k);
        }
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = [c[0] + dx, c[1] + dy];
            if free(n) && !seen.contains(&n) {
                seen.push(n);
                queue.push_back((n, k + 1));
            }
        }
    }
    None
}

fn walk(world: &GridWorld, codes: &[u32]) -> [i64; 2] {
    let mut p = world.start;
    for &c in codes {
        let n = match world.actions[c as usize - 1] {
            Action::Up => [p[0], p[1] + 1],
            Action::Down => [p[0], p[1] - 1],
            Action::Left => [p[0] - 1, p[1]],
            Action::Right => [p[0] + 1, p[1]],
            Action::Stay => p,
        };
        let inside = n[0] >= 1 && n[0] <= world.width && n[1] >= 1 && n[1] <= world.height;
        if inside && !world.obstacles.contains(&n) {
            p = n;
        }
    }
    p
}

proptest! {
    #[test]
    fn maze_cost_matches_bfs(codes in prop::collection::vec(1u32..=5, 12)) {
        let world = GridWorld::maze();
        let r = maze_cost(&world, &Point::new(codes.clone(), 5).unwrap()).unwrap();
        let end = walk(&world, &codes);
        let want = bfs(&world, end).map_or((world.width * world.height) as f64, f64::from);
        prop_assert_eq!(r.value, want);
        let last = r.trace.last().unwrap().position;
        prop_assert_eq!([last[0] as i64, last[1] as i64], end);
    }
}

#[test]
fn shipped_maze_start_reaches_goal() {
    let world = GridWorld::maze();
    assert!(bfs(&world, world.start).is_some());
    let stay = maze_cost(&world, &Point::new(vec![5; 12], 5).unwrap()).unwrap();
    assert_eq!(stay.value, f64::from(bfs(&world, world.start).unwrap()));
}

#[test]
fn snake_prize_chain_doubles() {
    // Two consecutive prize squares: the second step earns the chained rate.
    let mut world = GridWorld::snake().with_path_length(3).unwrap();
    world.prizes = vec![[2, 1], [3, 1]];
    world.snake = SnakeRules { consume_prizes: true, ..world.snake };
    let r = snake_reward(&world, &Point::new(vec![4, 4, 4], 5).unwrap()).unwrap();
    let values: Vec<f64> = r.trace.iter().map(|s| s.value).collect();
    assert_eq!(values, vec![15.0, 20.0, -4.0]);
}

#[test]
fn rover_trace_sums_to_value() {
    let course = ObstacleCourse::shipped();
    let r = rover_cost(&course, &Point::new(vec![5, 6, 7, 8, 1, 2, 3, 4], 9).unwrap()).unwrap();
    assert!((r.value - r.recomputed()).abs() < 1e-12);
    assert_eq!(r.trace.len(), 8);
}

#[test]
fn malformed_world_is_rejected() {
    assert!(GridWorld::from_json_str("{\"width\": 0, \"height\": 3, \"start\": [1, 1], \"path_length\": 2}").is_err());
    assert!(GridWorld::from_json_str("{\"width\": 3").is_err());
}
