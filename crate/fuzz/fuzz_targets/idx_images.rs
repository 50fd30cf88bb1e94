#![no_main]
use libfuzzer_sys::fuzz_target;
use orbitfl::fl::idx::{encode_idx_images, parse_idx_images};

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = parse_idx_images(data) {
        assert_eq!(images.pixels.len(), images.count * images.rows * images.cols);
        let again = parse_idx_images(&encode_idx_images(&images)).unwrap();
        assert_eq!(again, images);
    }
});
