#![no_main]

use libfuzzer_sys::fuzz_target;
use nbp::corpus::{parse_vocab, write_vocab};

fuzz_target!(|data: &[u8]| {
    let Ok(vocab) = parse_vocab(data) else { return };
    let mut buf = Vec::new();
    write_vocab(&vocab, &mut buf).unwrap();
    assert_eq!(parse_vocab(&buf[..]).unwrap(), vocab);
});
