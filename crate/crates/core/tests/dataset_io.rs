mod common;

use fairsel::dataset::{generate_synthetic, load_csv, Dataset, FeatureRole, SyntheticSpec};
use fairsel::eval::{acc, kmeans};
use ndarray::Array2;
use proptest::prelude::*;

fn spec(separation: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        cluster_separation: separation,
        ..SyntheticSpec::standard(200, seed)
    }
}

#[test]
fn wide_separation_is_recoverable_from_utility_features() {
    for seed in 0..3 {
        let data = generate_synthetic(&spec(6.0, seed)).unwrap();
        let utility = data.indices_with(FeatureRole::Utility);
        let points = data.dataset.select_features(&utility).unwrap();
        let best = kmeans(&points, 2, 10, seed).unwrap();
        let labels = data.dataset.labels.as_ref().unwrap();
        let score = best
            .iter()
            .map(|a| acc(&a.labels, labels).unwrap())
            .fold(0.0, f64::max);
        assert!(score > 0.95, "seed {seed}: acc {score}");
    }
}

#[test]
fn all_features_cluster_well_when_separable() {
    // raw generator output: z-scoring would make the sensitive block as
    // bimodal as the utility block and split the restarts between the two
    for seed in 0..3 {
        let ds = generate_synthetic(&spec(6.0, seed)).unwrap().dataset;
        let all: Vec<usize> = (0..ds.d()).collect();
        let report = fairsel::evaluate_selection(&ds, &all, &Default::default()).unwrap();
        assert!(
            report.acc.unwrap() > 0.95,
            "seed {seed}: acc {:?}",
            report.acc
        );
    }
}

#[test]
fn sensitive_features_track_the_protected_attribute() {
    let data = generate_synthetic(&SyntheticSpec::standard(400, 2)).unwrap();
    let protected: Vec<f64> = data.dataset.p_mat.row(0).to_vec();
    for i in data.indices_with(FeatureRole::Sensitive) {
        let r = fairsel::dataset::pearson(&data.dataset.x.row(i).to_vec(), &protected);
        assert!(r > 0.7, "feature {i}: r = {r}");
    }
    for i in data.indices_with(FeatureRole::Noise) {
        let r = fairsel::dataset::pearson(&data.dataset.x.row(i).to_vec(), &protected);
        assert!(r.abs() < 0.2, "feature {i}: r = {r}");
    }
}

#[test]
fn one_hot_protected_categories() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "x,race,label\n1,b,0\n2,a,1\n3,c,0\n4,a,1\n").unwrap();
    let ds = load_csv(&path, &["race".into()], Some("label"), false).unwrap();
    assert_eq!(ds.p(), 3);
    assert_eq!(
        ds.protected_names.as_deref().unwrap(),
        ["race=a", "race=b", "race=c"]
    );
    assert_eq!(ds.p_mat.row(0).to_vec(), [0.0, 1.0, 0.0, 1.0]);
    assert_eq!(ds.labels.as_deref().unwrap(), [0, 1, 0, 1]);
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..5, 2usize..9, 1usize..3).prop_flat_map(|(d, n, p)| {
        (
            proptest::collection::vec(-1e6f64..1e6, d * n),
            proptest::collection::vec(0u8..3, p * n),
            proptest::option::of(proptest::collection::vec(0usize..3, n)),
        )
            .prop_map(move |(x, pm, labels)| {
                let x = Array2::from_shape_vec((d, n), x).unwrap();
                let pm = Array2::from_shape_vec((p, n), pm.into_iter().map(f64::from).collect())
                    .unwrap();
                // labels are stored densified, so round-trip through the same mapping
                let labels = labels.map(|l| {
                    let mut ids: Vec<usize> = l.clone();
                    ids.sort_unstable();
                    ids.dedup();
                    l.iter().map(|v| ids.binary_search(v).unwrap()).collect()
                });
                Dataset::new(x, pm, labels).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(ds in arb_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        let protected = ds.protected_header();
        let label = ds.labels.as_ref().map(|_| "label");
        let back = load_csv(&path, &protected, label, false).unwrap();
        prop_assert_eq!(&back.x, &ds.x);
        prop_assert_eq!(&back.p_mat, &ds.p_mat);
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert_eq!(back.feature_header(), ds.feature_header());
    }

    #[test]
    fn standardized_rows_have_zero_mean_unit_variance(ds in arb_dataset()) {
        let z = ds.standardized();
        for row in z.x.rows() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(var.abs() < 1e-12 || (var - 1.0).abs() < 1e-9);
        }
    }
}
