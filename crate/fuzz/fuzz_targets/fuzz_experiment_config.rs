//! Fuzz the experiment-config TOML parser: arbitrary bytes must never panic,
//! and anything that parses must survive a serialize/parse round trip
//! unchanged.

#![no_main]

use brinkman_rom::driver::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let rendered = cfg.to_toml();
        let reparsed = ExperimentConfig::from_toml(&rendered)
            .expect("a config that parsed once must round-trip");
        assert_eq!(cfg, reparsed, "round trip changed the config");
    }
});
