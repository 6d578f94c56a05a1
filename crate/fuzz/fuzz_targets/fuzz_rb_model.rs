//! Fuzz the reduced-basis file parser: no panics on arbitrary input;
//! accepted models must run the online phase (reduced solve and residual
//! dual norms) without panicking on synthetic coefficients.

#![no_main]

use brinkman_rom::rb::parse_rb_model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = parse_rb_model(text) {
        let n_a = model.offline.n_affine();
        let n_f = model.offline.n_force();
        let nv = model.offline.n_velocity();
        let np = model.offline.n_pressure();
        let theta_a: Vec<f64> = (0..n_a).map(|i| 1.0 + i as f64).collect();
        let theta_f: Vec<f64> = (0..n_f).map(|i| 1.0 / (1.0 + i as f64)).collect();
        // The solve may fail (singular tampered blocks) but must not panic.
        if let Ok((u, p)) = model.solve_reduced(&theta_a, &theta_f) {
            let (r1, r2) = model.residual_dual_norms(&theta_a, &theta_f, &u, &p);
            assert!(r1 >= 0.0 && r2 >= 0.0, "dual norms are nonnegative");
        }
        let zero_u = brinkman_rom::linalg::DVec::zeros(nv);
        let zero_p = brinkman_rom::linalg::DVec::zeros(np);
        let (r1, r2) = model.residual_dual_norms(&theta_a, &theta_f, &zero_u, &zero_p);
        assert!(r1 >= 0.0 && r2 >= 0.0);
    }
});
