//! Agreement protocol properties: validity, tie-breaking, variant parity,
//! termination.

use std::collections::BTreeMap;

use churnsim_core::adversary::build_adversary;
use churnsim_core::agreement::{decision_dump, AgreementProtocol, InputAssign};
use churnsim_core::config::{ProtocolKind, RunConfig, StrategyKind, TopologyMode};
use churnsim_core::engine::{run_simulation, NodeId};
use churnsim_core::graph::Graph;

fn agree_config(n: u64, seed: u64) -> RunConfig {
    RunConfig {
        protocol: ProtocolKind::Agree,
        k: 16,
        c_t: 3.0,
        ..RunConfig::base(n, seed)
    }
}

#[test]
fn unanimous_inputs_force_unanimous_decisions() {
    // Validity under every built-in adversary: when every injected input is
    // the same bit, every decided node outputs that bit.
    for strategy in [
        StrategyKind::ObliviousUniform,
        StrategyKind::AdaptiveFrontier,
        StrategyKind::AdaptiveCut,
    ] {
        for seed in 0..10 {
            for bit in [false, true] {
                // Churn keeps injecting contributors, so n_hat counts
                // ever-lived nodes and horizons stretch with it; the churn
                // rate stays low enough that elders outlive their horizon.
                let mut config = agree_config(24, seed);
                config.c_t = 2.0;
                config.churn = 2;
                config.rounds = 48;
                config.strategy = strategy;
                let adversary = build_adversary(&config).unwrap();
                let protocol = AgreementProtocol::low_communication(
                    16,
                    config.c_t,
                    InputAssign::Constant(bit),
                );
                let out = run_simulation(config, adversary, protocol).unwrap();
                let outcome = out.protocol.measure_outcome(&out.final_state.states);
                assert!(outcome.validity_ok, "{strategy:?} seed {seed} bit {bit}");
                assert!(outcome.decided > 0, "nobody decided");
                for st in out.final_state.states.values() {
                    if let Some(d) = st.decision {
                        assert_eq!(d, bit, "{strategy:?} seed {seed}");
                    }
                }
            }
        }
    }
}

#[test]
fn two_nodes_with_split_inputs_tie_to_zero() {
    // n=2 on a static edge, inputs {0, 1}: both see both origins, the tally
    // ties, and the tie rule sends both to 0.
    for seed in 0..10 {
        let edge = Graph::from_edges([NodeId(0), NodeId(1)], [(NodeId(0), NodeId(1))]).unwrap();
        let mut config = agree_config(2, seed);
        config.mode = TopologyMode::Adversarial;
        config.degree = 1;
        config.rounds = 24;
        config.initial_graph = Some(edge);
        let adversary = build_adversary(&config).unwrap();
        let protocol = AgreementProtocol::low_communication(
            16,
            config.c_t,
            InputAssign::Vector(vec![false, true]),
        );
        let out = run_simulation(config, adversary, protocol).unwrap();
        for (id, st) in &out.final_state.states {
            assert_eq!(st.decision, Some(false), "seed {seed} node {id}");
            assert_eq!(st.tally.len(), 2, "both origins seen");
        }
    }
}

#[test]
fn high_communication_variant_matches_low_without_churn() {
    // With no churn the redundancy is a no-op: same seeds, same decisions.
    for seed in 0..5 {
        let decisions = |high: bool| -> BTreeMap<NodeId, Option<bool>> {
            let mut config = agree_config(32, seed);
            config.rounds = 28;
            config.protocol = if high {
                ProtocolKind::AgreeAdaptive
            } else {
                ProtocolKind::Agree
            };
            let adversary = build_adversary(&config).unwrap();
            let protocol = if high {
                AgreementProtocol::high_communication(16, config.c_t, InputAssign::Iid)
            } else {
                AgreementProtocol::low_communication(16, config.c_t, InputAssign::Iid)
            };
            let out = run_simulation(config, adversary, protocol).unwrap();
            out.final_state
                .states
                .iter()
                .map(|(&id, st)| (id, st.decision))
                .collect()
        };
        let low = decisions(false);
        let high = decisions(true);
        assert_eq!(low, high, "seed {seed}");
        assert!(low.values().all(|d| d.is_some()), "everyone decides");
    }
}

#[test]
fn undecided_nodes_are_still_young() {
    // Termination: any node still undecided at the final round must be
    // within its first horizon rounds of life.
    for seed in 0..10 {
        let mut config = agree_config(64, seed);
        config.churn = 8;
        config.rounds = 40;
        let adversary = build_adversary(&config).unwrap();
        let protocol = AgreementProtocol::low_communication(16, config.c_t, InputAssign::Iid);
        let out = run_simulation(config.clone(), adversary, protocol).unwrap();
        for (id, st) in &out.final_state.states {
            if st.decision.is_none() {
                let elapsed = config.rounds - st.joined.0;
                let horizon = st.horizon(config.c_t);
                assert!(
                    elapsed < horizon,
                    "seed {seed} node {id}: undecided after {elapsed} >= horizon {horizon}"
                );
            }
        }
    }
}

#[test]
fn outcome_fractions_match_decision_dump_recount() {
    // Independent recount: parse the external dump and recompute fractions.
    let mut config = agree_config(64, 123);
    config.churn = 6;
    config.rounds = 36;
    let adversary = build_adversary(&config).unwrap();
    let protocol = AgreementProtocol::low_communication(16, config.c_t, InputAssign::Iid);
    let out = run_simulation(config, adversary, protocol).unwrap();
    let outcome = out.protocol.measure_outcome(&out.final_state.states);

    let dump = decision_dump(&out.final_state.states);
    let mut zeros = 0usize;
    let mut ones = 0usize;
    let mut undecided = 0usize;
    for line in dump.lines() {
        match line.split('\t').nth(1).unwrap() {
            "0" => zeros += 1,
            "1" => ones += 1,
            "undecided" => undecided += 1,
            other => panic!("bad dump cell {other}"),
        }
    }
    let live = zeros + ones + undecided;
    assert_eq!(live, 64);
    let plurality = zeros.max(ones);
    assert_eq!(outcome.agree_fraction, plurality as f64 / 64.0);
    assert_eq!(outcome.undecided_fraction, undecided as f64 / 64.0);
    assert_eq!(
        outcome.dissent_fraction,
        (zeros + ones - plurality) as f64 / 64.0
    );
}
