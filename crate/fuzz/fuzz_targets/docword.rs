#![no_main]

use libfuzzer_sys::fuzz_target;
use nbp::corpus::parse_docword;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = parse_docword(data) else { return };
    // anything accepted must survive a write/parse round trip
    let mut buf = Vec::new();
    m.write_docword(&mut buf).unwrap();
    assert_eq!(parse_docword(&buf[..]).unwrap(), m);
});
