use std::path::PathBuf;

use proptest::prelude::*;
use srrw::process::{AlphaSchedule, RestartPolicy, StartNode};
use srrw_cli::config::{CheckpointSpec, ExperimentConfig, GraphSource, KernelSpec, VectorSpec};

fn positive() -> impl Strategy<Value = f64> {
    (1u32..10_000).prop_map(|k| f64::from(k) / 64.0)
}

fn schedule() -> impl Strategy<Value = AlphaSchedule> {
    prop_oneof![
        (-0.49f64..20.0).prop_map(AlphaSchedule::Constant),
        (positive(), positive(), positive()).prop_map(|(a, b, cap)| AlphaSchedule::Sigmoid1 { a, b, cap }),
        (positive(), positive()).prop_map(|(a, b)| AlphaSchedule::Sigmoid2 { a, b }),
        prop::collection::btree_set(1u64..10_000, 0..4).prop_flat_map(|starts| {
            let starts: Vec<u64> = std::iter::once(0).chain(starts).collect();
            let n = starts.len();
            prop::collection::vec(0.0f64..10.0, n)
                .prop_map(move |alphas| AlphaSchedule::Table(starts.iter().copied().zip(alphas).collect()))
        }),
    ]
}

fn distribution_spec(n: usize) -> impl Strategy<Value = VectorSpec> {
    prop_oneof![
        Just(VectorSpec::Uniform),
        prop::collection::vec(positive(), n).prop_map(VectorSpec::Values),
        Just(VectorSpec::File(PathBuf::from("weights/target.txt"))),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    let graph = prop_oneof![
        (2usize..50, any::<u64>()).prop_map(|(n, seed)| GraphSource::ErdosRenyi { n, m: n, seed }),
        (2usize..50).prop_map(GraphSource::Complete),
        (2usize..50).prop_map(GraphSource::Path),
        Just(GraphSource::File(PathBuf::from("graphs/a b.edges"))),
    ];
    let kernel = prop_oneof![Just(KernelSpec::Srw), Just(KernelSpec::Mhrw)];
    let checkpoints = prop_oneof![
        (1.01f64..3.0).prop_map(CheckpointSpec::Geometric),
        prop::collection::btree_set(1u64..1000, 1..5).prop_map(|s| CheckpointSpec::List(s.into_iter().collect())),
    ];
    (
        (graph, any::<bool>(), kernel, distribution_spec(4), prop::collection::vec(schedule(), 1..4)),
        (1000u64..100_000, checkpoints, 1usize..500, any::<u64>()),
        (prop::option::of(positive()), any::<bool>(), distribution_spec(4), prop::option::of(0usize..4)),
        (prop_oneof![Just(VectorSpec::Degree), Just(VectorSpec::Index), distribution_spec(4)], positive(), positive()),
        (1usize..1000, distribution_spec(4), any::<bool>(), prop::option::of(Just(PathBuf::from("out/run")))),
    )
        .prop_map(|(a, b, c, d, e)| ExperimentConfig {
            graph: Some(a.0),
            lcc: a.1,
            kernel: a.2,
            target: a.3,
            alphas: a.4,
            n_max: b.0,
            checkpoints: b.1,
            runs: b.2,
            seed: b.3,
            truncation: c.0,
            restart: if c.1 { RestartPolicy::Dirichlet } else { RestartPolicy::ReuseInitial },
            init_mode: c.2,
            start: c.3.map_or(StartNode::Random, StartNode::Fixed),
            observable: d.0,
            ode_horizon: d.1,
            ode_dt: d.2 / 1000.0,
            ode_stride: e.0,
            ode_x0: e.1,
            dump_matrices: e.2,
            output_dir: e.3,
        })
}

proptest! {
    #[test]
    fn canonical_text_parses_back_to_the_same_config(cfg in config()) {
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
    }
}

#[test]
fn matrix_kernels_round_trip() {
    let text = "kernel = matrix\nmatrix = 0.25,0.75; 0.5,0.5\ntarget = 0.4,0.6\nobservable = index\nalpha = 1, sigmoid2:2:0.5\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    assert_eq!(cfg.kernel, KernelSpec::Matrix(vec![vec![0.25, 0.75], vec![0.5, 0.5]]));
    assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
}
