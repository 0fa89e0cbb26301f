//! Property suites over the symbolic core.

use proptest::prelude::*;

use latentplan::ama1::{compile, emit_pddl, parse_pddl, step};
use latentplan::bits::LatentBitVector;
use latentplan::planner::{astar, goal_count, SearchLimits, StripsSuccessors, SuccessorFn};

fn arb_state(n: usize) -> impl Strategy<Value = LatentBitVector> {
    prop::collection::vec(any::<bool>(), n).prop_map(|bs| LatentBitVector::from_bools(&bs))
}

fn arb_transitions(n: usize, max: usize) -> impl Strategy<Value = Vec<(LatentBitVector, LatentBitVector)>> {
    prop::collection::vec((arb_state(n), arb_state(n)), 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_reproduces_recorded_successors(transitions in arb_transitions(10, 40)) {
        // soundness: each compiled action applied to its own precondition
        // state yields exactly the recorded successor
        let (problem, _) = compile(&transitions).unwrap();
        for action in &problem.actions {
            let t = step(&action.pre, action).unwrap();
            prop_assert_eq!(&t, &action.post());
            prop_assert!(transitions.iter().any(|(s, u)| s == &action.pre && u == &t));
        }
        // completeness over input: every transition is one step away
        for (s, t) in &transitions {
            prop_assert!(problem.actions.iter().any(|a| &a.pre == s && &a.post() == t));
        }
    }

    #[test]
    fn effects_never_assert_both_polarities(transitions in arb_transitions(8, 30)) {
        let (problem, _) = compile(&transitions).unwrap();
        for action in &problem.actions {
            for (add, del) in action.add.iter().zip(&action.del) {
                prop_assert_eq!(add.bit, del.bit);
                prop_assert_ne!(add.polarity, del.polarity);
            }
            // applying from the precondition keeps one polarity per bit by
            // construction: the state stays a total assignment
            let t = step(&action.pre, action).unwrap();
            prop_assert_eq!(t.len(), problem.num_bits);
        }
    }

    #[test]
    fn pddl_roundtrip_is_identity(transitions in arb_transitions(6, 24)) {
        let (mut problem, _) = compile(&transitions).unwrap();
        let init = transitions[0].0.clone();
        let goal = transitions[transitions.len() - 1].1.clone();
        problem.set_instance(init, goal).unwrap();
        let (d, p) = emit_pddl(&problem, "latent", "inst").unwrap();
        let back = parse_pddl(&d, &p).unwrap();
        prop_assert_eq!(back.num_bits, problem.num_bits);
        prop_assert_eq!(&back.init, &problem.init);
        prop_assert_eq!(&back.goal, &problem.goal);
        prop_assert_eq!(back.actions.len(), problem.actions.len());
        for (a, b) in problem.actions.iter().zip(&back.actions) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn bitvector_codecs_roundtrip(bits in prop::collection::vec(any::<bool>(), 1..90)) {
        let v = LatentBitVector::from_bools(&bits);
        let packed = v.to_packed_bytes();
        prop_assert_eq!(LatentBitVector::from_packed_bytes(v.len(), &packed).unwrap(), v.clone());
        let s = v.to_string();
        prop_assert_eq!(s.parse::<LatentBitVector>().unwrap(), v);
    }

    #[test]
    fn hamming_is_a_metric_on_fixed_width(a in arb_state(24), b in arb_state(24), c in arb_state(24)) {
        let ab = a.hamming(&b).unwrap();
        let ba = b.hamming(&a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(a.hamming(&a).unwrap(), 0);
        prop_assert!(ab <= a.hamming(&c).unwrap() + c.hamming(&b).unwrap());
        prop_assert_eq!(goal_count(&a, &b).unwrap(), ab);
    }

    #[test]
    fn solved_plans_replay_through_the_successor_function(
        transitions in arb_transitions(6, 30),
        goal_pick in any::<prop::sample::Index>(),
    ) {
        let (problem, _) = compile(&transitions).unwrap();
        let init = transitions[0].0.clone();
        let goal = transitions[goal_pick.index(transitions.len())].1.clone();
        let mut succ = StripsSuccessors::new(problem);
        let r = astar(&init, &goal, &mut succ, |_| 0, SearchLimits::default()).unwrap();
        if r.solved() {
            prop_assert_eq!(r.states.first().unwrap(), &init);
            prop_assert_eq!(r.states.last().unwrap(), &goal);
            let mut cur = init.clone();
            for (i, aid) in r.action_ids.iter().enumerate() {
                let succs = succ.successors(&cur).unwrap();
                let found = succs.into_iter().find(|(id, _)| id == aid);
                prop_assert!(found.is_some());
                cur = found.unwrap().1;
                prop_assert_eq!(&cur, &r.states[i + 1]);
            }
            // with h = 0 the plan is optimal: no shorter path exists by
            // breadth-first replay
            let mut frontier = vec![init.clone()];
            let mut seen = std::collections::HashSet::new();
            seen.insert(init.clone());
            let mut depth = 0usize;
            'bfs: while depth < r.plan_length() {
                let mut next = Vec::new();
                for s in &frontier {
                    for (_, t) in succ.successors(s).unwrap() {
                        if t == goal {
                            prop_assert_eq!(depth + 1, r.plan_length());
                            break 'bfs;
                        }
                        if seen.insert(t.clone()) {
                            next.push(t);
                        }
                    }
                }
                frontier = next;
                depth += 1;
            }
        }
    }
}
