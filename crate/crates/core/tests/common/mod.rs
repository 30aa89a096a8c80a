#![allow(dead_code)]

use magnav::config::Config;

/// Two short rows over three dipoles, with a same-heading revisit of the
/// first row.
pub const SMALL: &str = r#"
seed = 5

[world]
background = [20.0, 0.0, -45.0]
dipoles = [
  { position = [1.0, 0.5, -1.5], moment = [800.0, 2000.0, -1500.0] },
  { position = [3.5, -0.8, -1.4], moment = [-1800.0, 900.0, 2200.0] },
  { position = [5.5, 1.0, -1.7], moment = [1200.0, -2400.0, -800.0] },
]

[trajectory]
waypoints = [[6.0, 0.0], [6.0, 1.5], [-1.0, 1.5], [-1.0, 0.0], [5.0, 0.0]]
speeds = [0.8]

[sensors]
array_baseline = 0.2

[estimator]
array_baseline = 0.2
"#;

pub fn small() -> Config {
    Config::from_toml(SMALL).unwrap()
}

/// The small scene over a uniform-gradient field and without dipoles.
pub fn linear() -> Config {
    let mut cfg = small();
    cfg.world.dipoles.clear();
    cfg.world.background_gradient = Some([[10.0, 4.0, 3.0], [4.0, -6.0, 3.0], [3.0, 3.0, -4.0]]);
    cfg
}
