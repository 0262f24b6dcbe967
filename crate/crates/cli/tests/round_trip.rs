use hoc_cli::branch_file::{self, load, read_csv, save, write_csv, Metadata};
use hoc_cli::RunConfig;
use hoc_core::continuation::Diagnostics;
use hoc_core::{BranchF64, BranchPointF64, Layout, PointClass, Termination};
use nalgebra::DVector;
use proptest::prelude::*;

fn class() -> impl Strategy<Value = PointClass> {
    prop_oneof![
        Just(PointClass::Regular),
        Just(PointClass::Turning),
        Just(PointClass::SimpleBifurcation),
        Just(PointClass::SingularOther),
    ]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3..1e3f64,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn points(n: usize) -> impl Strategy<Value = Vec<BranchPointF64>> {
    let point = (
        proptest::collection::vec(finite(), n),
        proptest::collection::vec(finite(), n),
        prop_oneof![Just(1i8), Just(-1i8)],
        0.0..1e4f64,
        class(),
        (finite(), 0usize..50, -1i8..=1),
    )
        .prop_map(|(u, t, direction, arclength, class, (res, it, det))| BranchPointF64 {
            u: DVector::from_vec(u),
            tangent: DVector::from_vec(t),
            direction,
            arclength,
            class,
            diagnostics: Diagnostics {
                residual_norm: res,
                iterations: it,
                det_sign: det,
            },
        });
    proptest::collection::vec(point, 0..6)
}

fn layouts() -> impl Strategy<Value = Layout> {
    proptest::collection::vec(1usize..6, 1..4).prop_map(|d| Layout::new(d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trips_bit_for_bit(
        (layout, pts) in layouts().prop_flat_map(|l| { let n = l.unknowns(); (Just(l), points(n)) })
    ) {
        let mut buf = Vec::new();
        write_csv(&mut buf, &layout, &pts).unwrap();
        let (back_layout, back) = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back_layout, layout);
        prop_assert_eq!(back.len(), pts.len());
        for (a, b) in pts.iter().zip(&back) {
            let bits = |v: &DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.u), bits(&b.u));
            prop_assert_eq!(bits(&a.tangent), bits(&b.tangent));
            prop_assert_eq!(a.arclength.to_bits(), b.arclength.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn saved_branch_loads_back_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(vec![2]).unwrap();
    let n = layout.unknowns();
    let p = BranchPointF64 {
        u: DVector::from_fn(n, |i, _| 0.1 * i as f64 + 1.0 / 3.0),
        tangent: DVector::from_fn(n, |i, _| (i as f64).sin()),
        direction: -1,
        arclength: std::f64::consts::PI,
        class: PointClass::Turning,
        diagnostics: Diagnostics {
            residual_norm: 1.25e-11,
            iterations: 3,
            det_sign: 1,
        },
    };
    let branch = BranchF64 {
        points: vec![p],
        termination: Termination::StepUnderflow { reason: "x".into() },
    };
    let cfg = RunConfig {
        model: "ball".into(),
        ..RunConfig::default()
    };
    let path = dir.path().join("b.csv");
    save(&path, &layout, &branch, &Metadata::new(&cfg, &layout, &branch)).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back.branch, branch);
    assert_eq!(back.layout, layout);
    assert_eq!(back.metadata.config, cfg);
    assert_eq!(back.metadata.turning_points, 1);
    assert!(branch_file::sidecar_path(&path).ends_with("b.json"));
}
