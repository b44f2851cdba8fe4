#![no_main]
//! Arbitrary bytes through the experiment config parser and the cheap
//! derived views. Errors are fine; panics are not.

use gil_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_json(text) else {
        return;
    };
    let _ = cfg.validate();
    let _ = cfg.torus();
    let _ = cfg.potential();
    let _ = cfg.grid();
    for command in ["free-energy", "hessian", "verify-lemma", "sample"] {
        let _ = cfg.chain_for(command, Some(7));
    }
});
