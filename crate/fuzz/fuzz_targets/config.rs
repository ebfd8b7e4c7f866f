#![no_main]
use crowdnav::app::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::from_toml(text) else { return };
    if cfg.validate().is_ok() {
        let dumped = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&dumped).unwrap(), cfg);
    }
});
