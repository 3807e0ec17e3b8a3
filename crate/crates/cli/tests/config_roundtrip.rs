use proptest::prelude::*;

use mixpot::params::ParamSet;
use mixpot_cli::{PotentialKind, RunConfig};

const NAMES: &[&str] = &["pointwise", "monotonicity", "energy", "tail_decay", "all"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_parse_is_identity(
        n in 1usize..=2,
        s in 0.05f64..0.95,
        p in 1.6f64..4.0,
        seed in prop::option::of(0..=i64::MAX as u64),
        threads in 1usize..8,
        dense in any::<bool>(),
        wolff in any::<bool>(),
        radii in prop::collection::vec(0.01f64..5.0, 1..6),
        picks in prop::collection::vec(0..NAMES.len(), 0..4),
        out in "[a-z]{1,8}",
        beta in 0.1f64..2.0,
    ) {
        let mut cfg = RunConfig {
            params: ParamSet::new(n, s, p).unwrap(),
            seed,
            threads,
            dense_check: dense,
            experiments: picks.iter().map(|&i| NAMES[i].to_string()).collect(),
            output: out.into(),
            ..Default::default()
        };
        cfg.potential.kind = if wolff { PotentialKind::Wolff } else { PotentialKind::Riesz };
        cfg.potential.radii = radii;
        cfg.potential.beta = beta;
        let text = cfg.to_toml().unwrap();
        let parsed = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.to_toml().unwrap(), text);
    }
}
