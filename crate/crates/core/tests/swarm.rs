use std::collections::HashMap;

use proptest::prelude::*;
use swarmshm::grid::distance;
use swarmshm::swarm::{run_mission, CommsParams, EventKind, LocationOnly, MissionConfig, MissionResult, NavParams};

fn mission(n_robots: usize, r_t: f64, seed: u64) -> (MissionConfig, MissionResult) {
    let cfg = MissionConfig { n_robots, nav: NavParams { r_t, ..NavParams::default() }, ..MissionConfig::default() };
    let result = run_mission(&cfg, &LocationOnly, seed).unwrap();
    (cfg, result)
}

#[test]
fn sampling_stops_take_the_sampling_time() {
    let (cfg, m) = mission(1, 0.15, 3);
    let nav = &cfg.nav;
    let mut position = match m.events[0].kind {
        EventKind::Start { x, y } => [x, y],
        _ => unreachable!(),
    };
    // The first stop is at the start position.
    let mut last_target = Some((0.0, position, position));
    let mut checked = 0;
    let mut avoided = false;
    for e in &m.events {
        match e.kind {
            EventKind::Avoid { .. } | EventKind::Retarget { .. } => avoided = true,
            EventKind::Target { x, y, .. } => {
                last_target = Some((e.t, position, [x, y]));
                avoided = false;
            }
            EventKind::Sample { x, y, .. } => {
                let (t0, from, to) = last_target.expect("sample without target");
                assert_eq!([x, y], to);
                let travel = distance(from, to) / nav.speed;
                let elapsed = e.t - t0;
                assert!(elapsed >= nav.sample_time + travel - nav.dt - 1e-9, "{elapsed} s for {travel} s of travel");
                if !avoided {
                    assert!(elapsed <= nav.sample_time + travel + std::f64::consts::PI / nav.turn_rate + 2.0 * nav.dt + 1e-9);
                    checked += 1;
                }
                position = to;
            }
            _ => {}
        }
    }
    assert!(checked > 5);
}

#[test]
fn lossy_links_can_split_datasets() {
    let cfg = MissionConfig { comms: CommsParams { drop_probability: 0.5, ..CommsParams::default() }, ..MissionConfig::default() };
    let m = run_mission(&cfg, &LocationOnly, 1).unwrap();
    let first = m.robots[0].dataset.locations();
    assert!(m.robots.iter().any(|r| r.dataset.locations() != first));
    let dropped: usize = m
        .events
        .iter()
        .map(|e| match e.kind {
            EventKind::Broadcast { dropped, .. } => dropped,
            _ => 0,
        })
        .sum();
    assert!(dropped > 0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mission_invariants(n in 1usize..=6, r in 0usize..3, seed in 0u64..10_000) {
        let r_t = [0.05, 0.10, 0.15][r];
        let (cfg, m) = mission(n, r_t, seed);
        let side = cfg.side;
        let budget = cfg.nav.battery;

        // Lossless broadcast: every robot ends with the same dataset.
        let first = m.robots[0].dataset.locations();
        for rb in &m.robots {
            prop_assert_eq!(rb.dataset.locations(), first.clone());
            prop_assert!(rb.position[0] >= 0.0 && rb.position[0] <= side);
            prop_assert!(rb.position[1] >= 0.0 && rb.position[1] <= side);
        }
        for (i, a) in first.iter().enumerate() {
            for b in &first[..i] {
                prop_assert!(distance(*a, *b) >= cfg.nav.theta_x);
            }
        }
        prop_assert_eq!(&m.committed, &first);

        // Global uncertainty never grows and the log ends at the budget.
        for w in m.probes.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-9);
        }
        prop_assert!((m.probes.last().unwrap().0 - budget).abs() < 1e-9);
        prop_assert!(m.events.iter().all(|e| e.t <= budget + 1e-9));

        // Each robot samples at most once per sampling time.
        let mut last: HashMap<usize, f64> = HashMap::new();
        for e in &m.events {
            if let (EventKind::Sample { .. } | EventKind::Discard { .. }, Some(id)) = (&e.kind, e.robot) {
                if let Some(prev) = last.insert(id, e.t) {
                    prop_assert!(e.t - prev >= cfg.nav.sample_time - 1e-9);
                }
            }
        }

        let again = run_mission(&cfg, &LocationOnly, seed).unwrap();
        prop_assert_eq!(again.events_jsonl(), m.events_jsonl());
    }
}
