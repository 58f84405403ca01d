use opfam_core::adapted::{
    certify_adapted_pair, find_adapted_pair, lemma_equivalence, GridRange, SearchOptions,
};
use opfam_core::family::{sample, AffinePath, FamilySample, FamilySpec, ParameterGrid};
use opfam_core::spectral::RealWindow;
use proptest::prelude::*;

fn builtins() -> Vec<(FamilySample, Vec<f64>)> {
    let grid = ParameterGrid::uniform(-0.45, 0.45, 61).unwrap();
    let unit = ParameterGrid::uniform(0.0, 1.0, 61).unwrap();
    let tangent = ParameterGrid::uniform_excluding(0.1, 0.9, 80, 0.5, 0.02).unwrap();
    let dirac = FamilySpec::DiracCircle {
        modes: 6,
        flux: AffinePath::default(),
    };
    let harmonic = FamilySpec::HarmonicPerturbed {
        levels: 8,
        coupling: AffinePath::default(),
    };
    let tangent_spec = FamilySpec::TangentBlowup {
        padding: vec![2.0, -2.0, 3.0, -3.0],
    };
    vec![
        (sample(&dirac, &grid).unwrap(), vec![0.5, 2.0, 4.0]),
        (sample(&harmonic, &unit).unwrap(), vec![0.5, 1.5]),
        (sample(&tangent_spec, &tangent).unwrap(), vec![0.5, 1.0]),
        (
            sample(&FamilySpec::LinearCrossing { dim: 5 }, &unit).unwrap(),
            vec![0.3, 1.0],
        ),
        (
            sample(
                &FamilySpec::Constant {
                    diagonal: vec![-1.0, 0.25, 2.0],
                },
                &unit,
            )
            .unwrap(),
            vec![0.5, 1.0],
        ),
    ]
}

#[test]
fn lemma_equivalence_on_builtin_families() {
    for (s, levels) in builtins() {
        let r = lemma_equivalence(&s, &levels, &SearchOptions::default()).unwrap();
        assert!(
            r.agree,
            "lemma and sweep routes disagree at levels {levels:?}"
        );
    }
}

#[test]
fn lemma_equivalence_on_random_families() {
    let mut outcomes = [0usize; 2];
    for seed in 0..50u64 {
        let dim = 2 + (seed as usize % 9);
        let points = 20 + (seed as usize * 7) % 81;
        let grid = ParameterGrid::uniform(0.0, 1.0, points).unwrap();
        let s = sample(&FamilySpec::RandomCrossings { dim, seed }, &grid).unwrap();
        let r = lemma_equivalence(&s, &[0.1, 0.4, 0.8], &SearchOptions::default()).unwrap();
        assert!(r.agree, "seed {seed}: routes disagree");
        outcomes[r.lemma.passes as usize] += 1;
    }
    assert!(outcomes[0] > 0 && outcomes[1] > 0, "{outcomes:?}");
}

fn random_sample() -> impl Strategy<Value = FamilySample> {
    (2usize..8, any::<u64>(), 8usize..40).prop_map(|(dim, seed, points)| {
        let grid = ParameterGrid::uniform(0.0, 1.0, points).unwrap();
        sample(&FamilySpec::RandomCrossings { dim, seed }, &grid).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn certificates_are_monotone_on_subranges(s in random_sample(), x in 0usize..8, b in 0.05f64..0.6, cut in (0.0f64..1.0, 0.0f64..1.0)) {
        let Ok(cert) = find_adapted_pair(&s, x, b, &SearchOptions::default()) else {
            return Ok(());
        };
        let r = cert.range;
        let lo = r.lo_index + ((x - r.lo_index) as f64 * cut.0) as usize;
        let hi = x + ((r.hi_index - x) as f64 * cut.1) as usize;
        let sub = GridRange::new(lo, hi);
        let again = certify_adapted_pair(&s, &sub, cert.level, None).unwrap();
        prop_assert_eq!(again.rank, cert.rank);
        prop_assert!(again.projection_modulus <= cert.projection_modulus);
        prop_assert!(again.restriction_modulus <= cert.restriction_modulus);
        prop_assert!(again.margin >= cert.margin);
    }

    #[test]
    fn shift_covariance(s in random_sample(), lambda in -2.0f64..2.0, eps in 0.01f64..1.0) {
        let shifted = s.shifted(lambda);
        for y in 0..s.len() {
            let moved = shifted.spectrum(y).count_in(&RealWindow::symmetric(eps));
            let window = RealWindow::closed(lambda - eps, lambda + eps);
            prop_assert_eq!(moved, s.spectrum(y).count_in(&window));
        }
    }
}
