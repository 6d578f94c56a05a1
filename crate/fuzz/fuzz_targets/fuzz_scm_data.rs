//! Fuzz the trained-SCM file parser: no panics on arbitrary input; accepted
//! data must answer a bound query at its own anchor without panicking, with
//! the indicator inside [0, 1].

#![no_main]

use brinkman_rom::scm::parse_scm_data;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scm) = parse_scm_data(text) {
        let anchor = scm.parameter_box.anchor_point();
        let mut theta = Vec::with_capacity(anchor.len() + 1);
        theta.push(1.0);
        theta.extend(anchor.iter().map(|&x| 1.0 / x));
        let unit = scm.parameter_box.to_unit(&anchor);
        // The query may legitimately fail (e.g. an infeasible tampered
        // pool), but it must not panic, and a successful answer must be
        // coherent.
        if let Ok(bound) = scm.bound_from_theta(&theta, &unit) {
            assert!(bound.certified.is_finite());
            assert!((0.0..=1.0).contains(&bound.indicator));
        }
    }
});
