use std::time::Duration;

use quip::encoding::min_pairwise_distance;
use quip::maximin::{brute_force_maximin, optimize_maximin, solve_feasibility, FeasibilityInstance, SolveStatus};
use quip::Design;

fn status(n: usize, d: usize, m: u32, q: usize) -> SolveStatus {
    solve_feasibility(&FeasibilityInstance::new(n, d, m, q)).unwrap().status
}

#[test]
fn feasibility_is_monotone_in_q() {
    for (n, d, m) in [(4, 3, 2), (5, 4, 2), (6, 3, 3), (7, 4, 3), (3, 5, 2)] {
        let flags: Vec<bool> = (0..=d).map(|q| matches!(status(n, d, m, q), SolveStatus::Feasible(_))).collect();
        assert!(flags[0], "q = 0 is always feasible");
        assert!(flags.windows(2).all(|w| w[0] || !w[1]), "({n},{d},{m}): {flags:?}");
    }
}

#[test]
fn returned_designs_satisfy_their_distance() {
    for q in 0..=4 {
        if let SolveStatus::Feasible(design) = status(6, 4, 3, q) {
            assert_eq!(design.n(), 6);
            assert!(min_pairwise_distance(&design).unwrap() >= q);
        }
    }
}

#[test]
fn optimum_is_feasible_and_next_distance_is_not() {
    for (n, d, m) in [(5, 4, 2), (6, 3, 3), (9, 4, 3)] {
        let res = optimize_maximin(n, d, m, None).unwrap();
        assert!(res.certified);
        assert_eq!(min_pairwise_distance(&res.design).unwrap(), res.q_star);
        if res.q_star < d {
            assert_eq!(status(n, d, m, res.q_star + 1), SolveStatus::InfeasibleCertified);
        }
    }
}

#[test]
fn optimizer_is_deterministic() {
    let a = optimize_maximin(10, 5, 3, None).unwrap();
    let b = optimize_maximin(10, 5, 3, None).unwrap();
    assert_eq!(a.design, b.design);
    assert_eq!(a.q_star, b.q_star);
}

#[test]
fn brute_force_agrees_on_a_hand_checked_case() {
    // Five points in {1,2}^3: two of them agree in at least two factors.
    let (q, design) = brute_force_maximin(5, 3, 2).unwrap();
    assert_eq!(q, 1);
    assert_eq!(design.n(), 5);
    assert_eq!(optimize_maximin(5, 3, 2, None).unwrap().q_star, 1);
}

#[test]
fn warm_start_meeting_the_target_needs_no_search() {
    let warm = Design::from_rows(vec![vec![1, 1, 1], vec![2, 2, 2], vec![3, 3, 3]], 3).unwrap();
    let r = solve_feasibility(&FeasibilityInstance::new(3, 3, 3, 3).with_warm_start(Some(warm))).unwrap();
    assert!(matches!(r.status, SolveStatus::Feasible(_)));
    assert_eq!(r.nodes_explored, 0);
}

#[test]
fn time_limit_yields_uncertified_lower_bound() {
    let res = optimize_maximin(40, 10, 4, Some(Duration::from_millis(50))).unwrap();
    assert_eq!(res.design.n(), 40);
    assert!(min_pairwise_distance(&res.design).unwrap() >= res.q_star);
}
