#![no_main]

use gpemu::simulators::read_points;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = read_points(data, "fuzz") {
        for p in &points {
            assert!(p.coords().iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
});
