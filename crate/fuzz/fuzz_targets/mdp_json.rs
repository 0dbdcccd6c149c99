#![no_main]

use libfuzzer_sys::fuzz_target;
use pgop_core::mdp::{evaluate_policy, PolicyTable};
use pgop_core::TabularMdp;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mdp) = TabularMdp::from_json(text) else {
        return;
    };
    // Anything that loads must evaluate and survive a round trip.
    if mdp.n_states() <= 64 {
        let pi = PolicyTable::uniform(mdp.n_states(), mdp.n_actions());
        let eval = evaluate_policy(&mdp, &pi).expect("valid MDP evaluates");
        assert!(eval.j.is_finite());
    }
    let again = TabularMdp::from_json(&mdp.to_json().unwrap()).unwrap();
    assert_eq!(again, mdp);
});
