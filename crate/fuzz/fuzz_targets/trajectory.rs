#![no_main]
use crowdnav::io::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(traj) = text.parse::<Trajectory>() else { return };
    let once = traj.to_string();
    let again: Trajectory = once.parse().expect("formatted trajectory parses");
    assert_eq!(again.to_string(), once);
});
