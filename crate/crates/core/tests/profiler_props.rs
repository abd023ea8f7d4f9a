use proptest::prelude::*;

use strata_profiles::group::{GroupSpec, Point};
use strata_profiles::profiler::{classify_pair, extract, ClassifyParams, ExtractParams, ScaleCorePair, Verdict};
use strata_profiles::sampling::preset_sampling_set;
use strata_profiles::workbench::formats::{read_snapshots, write_snapshots};
use strata_profiles::workbench::generate::{BundleAtom, Component, GeneratorKind, GeneratorSpec, Track};
use strata_profiles::workbench::generate;

fn cp() -> ClassifyParams {
    ClassifyParams {
        tail: 6,
        t_div: 4.0,
        eps_stable: 1e-9,
    }
}

fn track(h: &[i32], k: &[[i64; 3]]) -> ScaleCorePair {
    ScaleCorePair {
        h: h.iter().map(|j| 2f64.powi(-j)).collect(),
        kappa: k.iter().map(|v| Point(v.iter().map(|&x| x as f64).collect())).collect(),
    }
}

fn bundle(offsets: &[(i32, i64)], top: f64, step: f64) -> Vec<BundleAtom> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = vec![BundleAtom {
        j: 0,
        gamma: vec![0],
        re: top,
        im: 0.0,
    }];
    seen.insert((0, 0));
    for &(j, g) in offsets {
        if seen.insert((j, g)) {
            out.push(BundleAtom {
                j,
                gamma: vec![g],
                re: top - step * out.len() as f64,
                im: 0.0,
            });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn classification_is_symmetric(
        ja in proptest::collection::vec(-3i32..3, 10),
        jb in proptest::collection::vec(-3i32..3, 10),
        ka in proptest::collection::vec([-5i64..5, -5i64..5, -5i64..5], 10),
        kb in proptest::collection::vec([-5i64..5, -5i64..5, -5i64..5], 10),
    ) {
        let g = GroupSpec::heisenberg(1);
        let a = track(&ja, &ka);
        let b = track(&jb, &kb);
        let ab = classify_pair(&g, &a, &b, &cp()).unwrap();
        let ba = classify_pair(&g, &b, &a, &cp()).unwrap();
        match (&ab, &ba) {
            (Verdict::NotOrthogonal { rel_scale: s, .. }, Verdict::NotOrthogonal { rel_scale: t, .. }) => {
                prop_assert_eq!(*s, -*t)
            }
            _ => prop_assert_eq!(&ab, &ba),
        }
    }

    #[test]
    fn bookkeeping_on_generated_mixtures(
        off_a in proptest::collection::vec((0i32..3, -6i64..6), 1..6),
        off_b in proptest::collection::vec((0i32..3, -6i64..6), 1..6),
        speed in 1i64..4,
        m_extra in 0usize..4,
    ) {
        let gs = preset_sampling_set(&GroupSpec::abelian(1), 1.0).unwrap();
        let a = bundle(&off_a, 1.0, 0.03);
        let b = bundle(&off_b, 0.71, 0.03);
        let total = a.len() + b.len();
        let spec = GeneratorSpec {
            kind: GeneratorKind::Mixture,
            horizon: 16,
            n0: 1,
            p: 3.0,
            components: vec![
                Component { track: Track { j0: 5, j1: 1, g0: vec![2], g1: vec![] }, bundle: a },
                Component { track: Track { j0: 0, j1: 0, g0: vec![0], g1: vec![8 * speed] }, bundle: b },
            ],
            noise: None,
            allow_overlap: false,
            check: None,
        };
        let s = generate(&gs, &spec).unwrap();
        let m_max = total.saturating_sub(m_extra).max(1);
        let d = extract(&s, &ExtractParams { m_max, tail: 6, ..Default::default() }).unwrap();
        prop_assert!(d.check_bookkeeping().holds());
        prop_assert!(d.diagnostics.max_m_independence <= 1e-12);
        if m_max == total {
            prop_assert_eq!(d.profile_count(), 2);
            prop_assert!(d.diagnostics.max_energy_defect <= 1e-12);
        }
        prop_assert!(d.diagnostics.r2_monotone);
    }

    #[test]
    fn snapshots_round_trip(off in proptest::collection::vec((0i32..3, -6i64..6), 1..8), v in 1i64..5) {
        let gs = preset_sampling_set(&GroupSpec::abelian(1), 0.5).unwrap();
        let spec = GeneratorSpec {
            kind: GeneratorKind::Translating,
            horizon: 5,
            n0: -2,
            p: 4.0,
            components: vec![Component { track: Track { j0: -1, j1: 0, g0: vec![0], g1: vec![v] }, bundle: bundle(&off, 0.9, 0.07) }],
            noise: None,
            allow_overlap: false,
            check: None,
        };
        let s = generate(&gs, &spec).unwrap();
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &s).unwrap();
        prop_assert_eq!(read_snapshots(buf.as_slice()).unwrap(), s);
    }
}
