#![no_main]
//! Field codec: decoding must never panic, and whatever decodes must
//! survive an encode/decode round trip unchanged.

use gil_core::codec::{decode_field, decode_stream, encode_field, encode_stream};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((t, f)) = decode_field(text) {
        let (t2, f2) = decode_field(&encode_field(&t, &f)).expect("re-decode");
        assert_eq!(t, t2);
        assert_eq!(f.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), f2.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
    if let Ok((t, fields)) = decode_stream(text) {
        let (t2, fields2) = decode_stream(&encode_stream(&t, &fields)).expect("re-decode");
        assert_eq!(t, t2);
        assert_eq!(fields.len(), fields2.len());
    }
});
