//! Frozen generator output. The ZX plans were checked layer by layer
//! against hand transcriptions of the reference schedule drawings before
//! being frozen; any change to them must be deliberate.

use crate::circuit::{lower, Circuit, NoisePlacement};
use crate::layout::{Basis, Layout, LayoutKind};
use crate::schedule::{generate, Method, SchedulePlan};

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn plan(d: usize, method: Method, rounds: usize) -> SchedulePlan {
    generate(&Layout::build(LayoutKind::Memory, d).unwrap(), method, rounds, Basis::Z).unwrap()
}

fn check_plan(name: &str, method: Method) {
    let frozen: SchedulePlan = serde_json::from_str(&fixture(name)).unwrap();
    let now = plan(5, method, 2);
    assert_eq!(now.qubit_coords, frozen.qubit_coords, "{name}: qubit layout changed");
    for (r, (a, b)) in now.rounds.iter().zip(&frozen.rounds).enumerate() {
        assert_eq!(a.pre_hadamards, b.pre_hadamards, "{name}: round {r} pre-Hadamards");
        assert_eq!(a.post_hadamards, b.post_hadamards, "{name}: round {r} post-Hadamards");
        for (l, (x, y)) in a.cnot_layers.iter().zip(&b.cnot_layers).enumerate() {
            assert_eq!(x, y, "{name}: round {r} CNOT layer {l}");
        }
    }
    assert_eq!(now, frozen, "{name}: detectors or observables changed");
}

#[test]
fn zx_same_d5_plan_is_frozen() {
    check_plan("memory_d5_zx_same_2rounds.json", Method::ZxSame);
}

#[test]
fn zx_cross_d5_plan_is_frozen() {
    check_plan("memory_d5_zx_cross_2rounds.json", Method::ZxCross);
}

#[test]
fn nz_d3_circuit_text_is_frozen() {
    let text = lower(&plan(3, Method::NzHookAvoiding, 2), 1e-3, NoisePlacement::AllOps).unwrap().to_string();
    let frozen = fixture("memory_d3_nz_2rounds.stim");
    assert_eq!(text, frozen);
    assert_eq!(Circuit::parse(&frozen).unwrap().to_string(), frozen);
}
