//! Fuzz the parameter-box sidecar parser: no panics on arbitrary input, and
//! accepted boxes must satisfy their own invariants.

#![no_main]

use brinkman_rom::param::parse_parameter_box;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((model, pb)) = parse_parameter_box(text) {
        assert_eq!(pb.dimension(), model.dimension());
        pb.validate().expect("accepted box must validate");
        let anchor = pb.anchor_point();
        pb.check_membership(&anchor)
            .expect("the anchor lies inside its own box");
        for (u, &(a, b)) in pb.to_unit(&anchor).iter().zip(&pb.intervals) {
            assert!(u.is_finite(), "unit coordinates finite for [{a}, {b}]");
        }
    }
});
