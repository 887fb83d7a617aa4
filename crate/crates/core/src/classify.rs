//! 1-nearest-neighbor classification and seeded k-fold cross-validation.
//!
//! Distances are Euclidean by default. Equal distances are resolved by the
//! lexicographically smallest source identifier, so predictions never
//! depend on dataset order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub features: FeatureVector,
    pub label: String,
    /// Where the sample came from (usually a video path); also the tie-break key.
    pub source: String,
}

impl LabeledItem {
    pub fn new(features: FeatureVector, label: impl Into<String>, source: impl Into<String>) -> Self {
        LabeledItem {
            features,
            label: label.into(),
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    items: Vec<LabeledItem>,
}

impl LabeledDataset {
    /// Requires one shared fingerprint and length, and at least two classes.
    pub fn new(items: Vec<LabeledItem>) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid_input("dataset is empty"))?;
        let (fp, len) = (first.features.fingerprint().to_string(), first.features.len());
        for item in &items {
            if item.features.fingerprint() != fp {
                return Err(Error::IncompatibleFeatures {
                    expected: fp,
                    found: item.features.fingerprint().to_string(),
                });
            }
            if item.features.len() != len {
                return Err(Error::invalid_input(format!(
                    "feature length {} differs from {len} for {}",
                    item.features.len(),
                    item.source
                )));
            }
        }
        let dataset = LabeledDataset { items };
        if dataset.classes().len() < 2 {
            return Err(Error::invalid_input("dataset needs at least two classes"));
        }
        Ok(dataset)
    }

    pub fn items(&self) -> &[LabeledItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        self.items[0].features.fingerprint()
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.items.iter().map(|i| i.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Same items with labels replaced by `labels` (in item order).
    pub fn relabeled(&self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.items.len() {
            return Err(Error::invalid_input("label count does not match dataset size"));
        }
        let items = self
            .items
            .iter()
            .zip(labels)
            .map(|(item, label)| LabeledItem { label, ..item.clone() })
            .collect();
        LabeledDataset::new(items)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    /// A monotone proxy of the distance: squared for Euclidean.
    fn rank_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "l1" => Ok(Metric::Manhattan),
            other => Err(Error::invalid_parameter(format!(
                "unknown metric '{other}' (expected euclidean|manhattan)"
            ))),
        }
    }
}

fn nearest<'a>(
    train: impl Iterator<Item = (&'a [f64], &'a LabeledItem)>,
    query: &[f64],
    metric: Metric,
) -> Option<&'a LabeledItem> {
    train
        .map(|(values, item)| (metric.rank_distance(values, query), item))
        .min_by(|(da, a), (db, b)| {
            da.partial_cmp(db)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.source.cmp(&b.source))
        })
        .map(|(_, item)| item)
}

/// Label of the Euclidean-nearest training vector.
pub fn knn_predict(train: &LabeledDataset, query: &FeatureVector) -> Result<String> {
    knn_predict_with(train, query, Metric::Euclidean)
}

pub fn knn_predict_with(train: &LabeledDataset, query: &FeatureVector, metric: Metric) -> Result<String> {
    if query.fingerprint() != train.fingerprint() {
        return Err(Error::IncompatibleFeatures {
            expected: train.fingerprint().to_string(),
            found: query.fingerprint().to_string(),
        });
    }
    if query.len() != train.items[0].features.len() {
        return Err(Error::invalid_input("query length differs from training features"));
    }
    let best = nearest(
        train.items.iter().map(|i| (i.features.values(), i)),
        query.values(),
        metric,
    )
    .expect("dataset is non-empty");
    Ok(best.label.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Standardize each feature with mean/std fitted on the training folds.
    pub zscore: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            seed: 0,
            metric: Metric::Euclidean,
            zscore: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    /// Fold index of every dataset item.
    pub fold_of: Vec<usize>,
    pub folds: usize,
    pub stratified: bool,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }
}

/// Seeded fold assignment. Stratifies when every class has at least
/// `folds` items: each class is shuffled, classes are concatenated in label
/// order, and position `p` goes to fold `p mod folds`. Otherwise the whole
/// dataset is shuffled and dealt the same way.
pub fn assign_folds(labels: &[&str], folds: usize, seed: u64) -> Result<FoldAssignment> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::invalid_parameter(format!(
            "fold count {folds} must be in 2..={}",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stratified = by_class.values().all(|members| members.len() >= folds);
    let order: Vec<usize> = if stratified {
        by_class
            .into_values()
            .flat_map(|mut members| {
                members.shuffle(&mut rng);
                members
            })
            .collect()
    } else {
        log::warn!("some class has fewer than {folds} items; folds are not stratified");
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut fold_of = vec![0; labels.len()];
    for (position, &item) in order.iter().enumerate() {
        fold_of[item] = position % folds;
    }
    Ok(FoldAssignment {
        fold_of,
        folds,
        stratified,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (`n - 1`) of the fold accuracies.
    pub std_dev: f64,
    /// `confusion[true][predicted]`, classes in [`CvReport::classes`] order.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<String>,
    pub seed: u64,
    pub stratified: bool,
    pub metric: Metric,
    pub zscore: bool,
}

impl CvReport {
    /// `mean(std)` in percent with two decimals, e.g. `91.50(5.20)`.
    pub fn table_entry(&self) -> String {
        format!("{:.2}({:.2})", 100.0 * self.mean_accuracy, 100.0 * self.std_dev)
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&csv_field(c));
            for n in row {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[&[f64]]) -> Self {
        let dims = rows[0].len();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dims).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let scale = (0..dims)
            .map(|d| {
                let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub fn cross_validate(data: &LabeledDataset, folds: usize, seed: u64) -> Result<CvReport> {
    cross_validate_with(
        data,
        CvOptions {
            folds,
            seed,
            ..CvOptions::default()
        },
    )
}

pub fn cross_validate_with(data: &LabeledDataset, opts: CvOptions) -> Result<CvReport> {
    let labels: Vec<&str> = data.items.iter().map(|i| i.label.as_str()).collect();
    let assignment = assign_folds(&labels, opts.folds, opts.seed)?;
    let classes = data.classes();
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    // (true class, predicted class) per test item, one list per fold
    let outcomes: Vec<Vec<(usize, usize)>> = (0..opts.folds)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment.fold_of[i] == fold);
            let rows: Vec<Vec<f64>> = if opts.zscore {
                let train_rows: Vec<&[f64]> = train.iter().map(|&i| data.items[i].features.values()).collect();
                let z = Standardizer::fit(&train_rows);
                data.items.iter().map(|i| z.apply(i.features.values())).collect()
            } else {
                data.items.iter().map(|i| i.features.values().to_vec()).collect()
            };
            test.iter()
                .map(|&q| {
                    let best = nearest(
                        train.iter().map(|&i| (rows[i].as_slice(), &data.items[i])),
                        &rows[q],
                        opts.metric,
                    )
                    .expect("training fold is non-empty");
                    (
                        class_index[data.items[q].label.as_str()],
                        class_index[best.label.as_str()],
                    )
                })
                .collect()
        })
        .collect();

    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    let mut fold_accuracies = Vec::with_capacity(opts.folds);
    for fold in &outcomes {
        let correct = fold.iter().filter(|(t, p)| t == p).count();
        fold_accuracies.push(correct as f64 / fold.len() as f64);
        for &(t, p) in fold {
            confusion[t][p] += 1;
        }
    }
    let n = fold_accuracies.len() as f64;
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / n;
    let std_dev = (fold_accuracies.iter().map(|a| (a - mean_accuracy).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(CvReport {
        fold_accuracies,
        mean_accuracy,
        std_dev,
        confusion,
        classes,
        seed: opts.seed,
        stratified: assignment.stratified,
        metric: opts.metric,
        zscore: opts.zscore,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn item(values: &[f64], label: &str, source: &str) -> LabeledItem {
        LabeledItem::new(FeatureVector::new(values.to_vec(), "fp").unwrap(), label, source)
    }

    #[test]
    fn exact_match_and_geometry() {
        let train = LabeledDataset::new(vec![item(&[0.0, 0.0], "A", "a"), item(&[10.0, 10.0], "B", "b")]).unwrap();
        let q = FeatureVector::new(vec![1.0, 1.0], "fp").unwrap();
        assert_eq!(knn_predict(&train, &q).unwrap(), "A");
        let q = FeatureVector::new(vec![10.0, 10.0], "fp").unwrap();
        assert_eq!(knn_predict(&train, &q).unwrap(), "B");
    }

    #[test]
    fn ties_go_to_smallest_source() {
        let train = LabeledDataset::new(vec![item(&[2.0], "B", "z.avi"), item(&[0.0], "A", "m.avi")]).unwrap();
        let q = FeatureVector::new(vec![1.0], "fp").unwrap();
        assert_eq!(knn_predict(&train, &q).unwrap(), "A");
    }

    #[test]
    fn fingerprint_mismatch() {
        let train = LabeledDataset::new(vec![item(&[0.0], "A", "a"), item(&[1.0], "B", "b")]).unwrap();
        let q = FeatureVector::new(vec![1.0], "other").unwrap();
        assert!(matches!(
            knn_predict(&train, &q),
            Err(Error::IncompatibleFeatures { .. })
        ));
        let mixed = vec![
            item(&[0.0], "A", "a"),
            LabeledItem::new(FeatureVector::new(vec![1.0], "other").unwrap(), "B", "b"),
        ];
        assert!(LabeledDataset::new(mixed).is_err());
    }

    #[test]
    fn dataset_needs_two_classes() {
        assert!(LabeledDataset::new(vec![item(&[0.0], "A", "a"), item(&[1.0], "A", "b")]).is_err());
    }

    #[test]
    fn separable_clusters_are_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut items = Vec::new();
        for (c, center) in [(0, 0.0), (1, 100.0), (2, 200.0)] {
            for k in 0..10 {
                let v = center + rng.random_range(0.0..1.0);
                items.push(item(&[v, 300.0 - v], &format!("c{c}"), &format!("{c}-{k}")));
            }
        }
        let data = LabeledDataset::new(items).unwrap();
        let report = cross_validate(&data, 10, 1).unwrap();
        assert_eq!(report.mean_accuracy, 1.0);
        assert_eq!(report.std_dev, 0.0);
        assert!(report.stratified);
        assert_eq!(report.table_entry(), "100.00(0.00)");
        let row_sums: Vec<usize> = report.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![10, 10, 10]);
        assert_eq!(report, cross_validate(&data, 10, 1).unwrap());
    }

    #[test]
    fn fold_count_limits() {
        let data = LabeledDataset::new(vec![item(&[0.0], "A", "a"), item(&[1.0], "B", "b")]).unwrap();
        assert!(matches!(cross_validate(&data, 1, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(cross_validate(&data, 3, 0), Err(Error::InvalidParameter(_))));
        let report = cross_validate(&data, 2, 0).unwrap();
        assert!(!report.stratified);
    }

    #[test]
    fn manhattan_differs_from_euclidean() {
        // query (0,0): A at (3,0) is L2=3, L1=3; B at (2,2) is L2≈2.83, L1=4
        let train = LabeledDataset::new(vec![item(&[3.0, 0.0], "A", "a"), item(&[2.0, 2.0], "B", "b")]).unwrap();
        let q = FeatureVector::new(vec![0.0, 0.0], "fp").unwrap();
        assert_eq!(knn_predict_with(&train, &q, Metric::Euclidean).unwrap(), "B");
        assert_eq!(knn_predict_with(&train, &q, Metric::Manhattan).unwrap(), "A");
    }

    #[test]
    fn zscore_rescues_badly_scaled_dimension() {
        // dimension 0 carries the class, dimension 1 is large-scale noise
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut items = Vec::new();
        for k in 0..20 {
            let class = k % 2;
            let signal = class as f64 + rng.random_range(0.0..0.1);
            let noise = rng.random_range(0.0..2000.0);
            items.push(item(&[signal, noise], &format!("c{class}"), &format!("s{k}")));
        }
        let data = LabeledDataset::new(items).unwrap();
        let plain = cross_validate_with(
            &data,
            CvOptions {
                folds: 5,
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let scaled = cross_validate_with(
            &data,
            CvOptions {
                folds: 5,
                seed: 2,
                zscore: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(scaled.mean_accuracy >= plain.mean_accuracy);
        assert!(scaled.zscore);
    }

    #[test]
    fn confusion_csv_layout() {
        let report = CvReport {
            fold_accuracies: vec![1.0, 0.5],
            mean_accuracy: 0.75,
            std_dev: 0.3535,
            confusion: vec![vec![2, 0], vec![1, 1]],
            classes: vec!["a".into(), "b,c".into()],
            seed: 0,
            stratified: true,
            metric: Metric::Euclidean,
            zscore: false,
        };
        assert_eq!(
            report.confusion_csv(),
            "true\\predicted,a,\"b,c\"\na,2,0\n\"b,c\",1,1\n"
        );
    }

    fn brute_force(train: &LabeledDataset, q: &[f64]) -> String {
        let mut best: Option<(f64, &LabeledItem)> = None;
        for item in train.items() {
            let d: f64 = item.features.values().iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
            let better = match best {
                None => true,
                Some((bd, b)) => d < bd || (d == bd && item.source < b.source),
            };
            if better {
                best = Some((d, item));
            }
        }
        best.unwrap().1.label.clone()
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> LabeledDataset {
        let items = (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..5.0)).collect();
                item(&values, &format!("c{}", i % 3), &format!("s{i:03}"))
            })
            .collect();
        LabeledDataset::new(items).unwrap()
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let train = random_dataset(&mut rng, 50, 3);
        for _ in 0..200 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..6.0)).collect();
            let predicted = knn_predict(&train, &FeatureVector::new(q.clone(), "fp").unwrap()).unwrap();
            assert_eq!(predicted, brute_force(&train, &q));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn folds_partition_the_data(
            sizes in proptest::collection::vec(1usize..15, 2..5),
            folds in 2usize..8,
            seed in 0u64..10_000,
        ) {
            let labels: Vec<String> = sizes
                .iter()
                .enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(format!("c{c}"), n))
                .collect();
            proptest::prop_assume!(folds <= labels.len());
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let a = assign_folds(&refs, folds, seed).unwrap();
            proptest::prop_assert_eq!(&a, &assign_folds(&refs, folds, seed).unwrap());
            let mut covered = vec![0usize; labels.len()];
            let mut fold_sizes = Vec::new();
            for f in 0..folds {
                let m = a.members(f);
                for &i in &m {
                    covered[i] += 1;
                }
                fold_sizes.push(m.len());
            }
            proptest::prop_assert!(covered.iter().all(|&c| c == 1));
            let spread = fold_sizes.iter().max().unwrap() - fold_sizes.iter().min().unwrap();
            proptest::prop_assert!(spread <= 1);
            proptest::prop_assert_eq!(a.stratified, sizes.iter().all(|&n| n >= folds));
            if a.stratified {
                for c in 0..sizes.len() {
                    let per_fold: Vec<usize> = (0..folds)
                        .map(|f| a.members(f).iter().filter(|&&i| labels[i] == format!("c{c}")).count())
                        .collect();
                    proptest::prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
                }
            }
        }

        #[test]
        fn prediction_ignores_common_rescaling(seed in 0u64..10_000, c in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train = random_dataset(&mut rng, 12, 4);
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..5.0)).collect();
            let scaled_items = train
                .items()
                .iter()
                .map(|it| {
                    let v: Vec<f64> = it.features.values().iter().map(|x| x * c).collect();
                    item(&v, &it.label, &it.source)
                })
                .collect();
            let scaled = LabeledDataset::new(scaled_items).unwrap();
            let plain = knn_predict(&train, &FeatureVector::new(q.clone(), "fp").unwrap()).unwrap();
            let sq: Vec<f64> = q.iter().map(|x| x * c).collect();
            proptest::prop_assert_eq!(plain, knn_predict(&scaled, &FeatureVector::new(sq, "fp").unwrap()).unwrap());
        }

        #[test]
        fn duplicates_never_change_predictions(seed in 0u64..10_000, dup in 0usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train = random_dataset(&mut rng, 12, 3);
            let mut items = train.items().to_vec();
            let mut copy = items[dup].clone();
            copy.source = format!("{}-copy", copy.source);
            items.push(copy);
            let doubled = LabeledDataset::new(items).unwrap();
            for _ in 0..10 {
                let q = FeatureVector::new((0..3).map(|_| rng.random_range(0.0..5.0)).collect(), "fp").unwrap();
                proptest::prop_assert_eq!(knn_predict(&train, &q).unwrap(), knn_predict(&doubled, &q).unwrap());
            }
        }
    }
}
