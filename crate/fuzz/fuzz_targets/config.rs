#![no_main]

use libfuzzer_sys::fuzz_target;
use nbp::run::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = RunConfig::from_toml_str(text) else { return };
    // NaN fields parse but never compare equal; validation rejects them
    if config.validate().is_err() {
        return;
    }
    assert_eq!(RunConfig::from_toml_str(&config.to_toml()).unwrap(), config);
});
