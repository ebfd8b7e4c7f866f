#![no_main]
use crowdnav::net::{load_checkpoint, save_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = load_checkpoint(data, None) else { return };
    let bytes = save_checkpoint(&ckpt);
    let back = load_checkpoint(&bytes, Some(&ckpt.model.config)).expect("saved checkpoint loads");
    assert_eq!(save_checkpoint(&back), bytes);
});
