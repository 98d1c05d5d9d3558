use proptest::prelude::*;

use kasnerlab_cli::{Experiment, ExperimentConfig};

fn config_text() -> impl Strategy<Value = String> {
    (
        0usize..9,
        any::<u64>(),
        1usize..6,
        0.0f64..3.0,
        prop::bool::ANY,
        100usize..50_000,
        prop::sample::select(vec!["ou", "squared-exp"]),
        0.05f64..4.0,
        1e-3f64..0.1,
        2usize..500,
        prop::bool::ANY,
    )
        .prop_map(|(e, seed, n, zeta, shared, size, kind, varsigma, dt, steps, diag)| {
            let e = Experiment::ALL[e];
            let p = vec!["0"; n - 1].into_iter().chain(["1"]).collect::<Vec<_>>().join(",");
            format!(
                "experiment = {e}\nseed = {seed}\nn = {n}\nzeta = {zeta}\nmode = {}\nsize = {size}\n\
                 kernel.kind = {kind}\nkernel.varsigma = {varsigma}\ngrid.t_start = 0.5\ngrid.dt = {dt}\n\
                 grid.n_steps = {steps}\nkasner.p = {p}\ncross = {}\nt = 0.6\n",
                if shared { "shared" } else { "iid" },
                if diag { "diagonal" } else { "full" },
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialize_then_parse_is_identity(text in config_text()) {
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.hash(), cfg.hash());
        prop_assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn seed_flag_overrides_file(text in config_text(), seed in any::<u64>()) {
        let cfg = ExperimentConfig::load(&text, Some(seed), &[]).unwrap();
        prop_assert_eq!(cfg.seed, seed);
    }
}
