use gaunet::data::{read_csv, vif_columns, write_csv_to, Dataset, Observation, Provenance};
use gaunet::utility::AlternativeSet;
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..4, 1usize..4, 1usize..20).prop_flat_map(|(p0, p1, n)| {
        let obs = (0usize..2, prop::collection::vec(-1e9f64..1e9, p0), prop::collection::vec(prop::num::f64::NORMAL, p1))
            .prop_map(|(chosen, a, b)| Observation { chosen, values: vec![a, b] });
        prop::collection::vec(obs, n).prop_map(move |observations| {
            let alts = AlternativeSet::new(
                vec!["car".into(), "rail".into()],
                vec![(0..p0).map(|i| format!("v{i}")).collect(), (0..p1).map(|i| format!("w{i}")).collect()],
            )
            .unwrap();
            Dataset::new(alts, observations, Provenance::Memory).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(d in dataset_strategy()) {
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), Some(d.alternatives()), Provenance::Memory).unwrap();
        prop_assert_eq!(back.observations(), d.observations());
    }

    #[test]
    fn vif_ignores_affine_rescaling(seed in 0u64..1000, scale in 1e-3f64..1e3, shift in -1e3f64..1e3) {
        let mut rng = gaunet::numcore::Rng::new(seed);
        let x1: Vec<f64> = (0..300).map(|_| rng.uniform(0.0, 1.0)).collect();
        let x2: Vec<f64> = x1.iter().map(|v| v + rng.uniform(0.0, 1.0)).collect();
        let x3: Vec<f64> = (0..300).map(|_| rng.uniform(0.0, 1.0)).collect();
        let names: Vec<String> = (0..3).map(|i| format!("x{i}")).collect();
        let base = vif_columns(&[x1.clone(), x2.clone(), x3.clone()], &names).unwrap();
        let moved: Vec<f64> = x2.iter().map(|v| v * scale + shift).collect();
        let other = vif_columns(&[x1, moved, x3], &names).unwrap();
        for (a, b) in base.iter().zip(&other) {
            prop_assert!((a.vif - b.vif).abs() <= 1e-9 * a.vif.max(1.0), "{} vs {}", a.vif, b.vif);
        }
    }
}
