#![no_main]
use crowdnav::env::ScenarioSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = line.parse::<ScenarioSpec>() {
        assert_eq!(spec.to_string().parse::<ScenarioSpec>().unwrap(), spec);
    }
});
