#![no_main]

use gpemu::simulators::{read_dataset, write_dataset, PoolSimulator};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(samples) = read_dataset(data, "fuzz") else { return };
    let mut buf = Vec::new();
    write_dataset(&mut buf, &samples).unwrap();
    assert_eq!(read_dataset(&buf[..], "fuzz").unwrap(), samples);
    let _ = PoolSimulator::from_samples(samples);
});
