#![no_main]

use libfuzzer_sys::fuzz_target;

use molr::train::{decode_weights, Manifest};

// Input layout: 2-byte little-endian manifest length, manifest JSON bytes,
// then the weight blob.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let manifest_len = u16::from_le_bytes([data[0], data[1]]) as usize;
    let rest = &data[2..];
    if manifest_len > rest.len() {
        return;
    }
    let (manifest_bytes, blob) = rest.split_at(manifest_len);
    let Ok(text) = std::str::from_utf8(manifest_bytes) else {
        return;
    };
    let Ok(manifest) = Manifest::from_json(text) else {
        return;
    };
    // decoding either succeeds or reports a structured error; never panics
    if let Ok(weights) = decode_weights(&manifest, blob) {
        assert_eq!(weights.params.len(), {
            let unique: std::collections::BTreeSet<&str> =
                manifest.params.iter().map(|p| p.name.as_str()).collect();
            unique.len()
        });
    }
});
