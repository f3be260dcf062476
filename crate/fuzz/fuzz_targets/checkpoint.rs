#![no_main]

use libfuzzer_sys::fuzz_target;
use nbp::run::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cp) = Checkpoint::from_json(text) else { return };
    let again = Checkpoint::from_json(&cp.to_json()).unwrap();
    assert_eq!(again.to_json(), cp.to_json());
});
