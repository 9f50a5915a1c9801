mod common;

use finesent_core::augment::AugmentMode;
use finesent_core::corpus::{Span, Split};
use finesent_core::eval::token_f1;
use finesent_core::models::classifier::softmax;
use finesent_core::models::{
    ensemble_union, pool, train_classifier, train_tagger, viterbi, target_examples, ClassifierModel,
    EmbeddingMatrix, EmbeddingProvider, ExpressionSource, FileEmbeddings, ModelError, PoolingStrategy,
    TrainConfig, TransitionMask,
};
use finesent_core::synth::{class_corpus, pivot_corpus};
use finesent_core::tagscheme::{label_inventory, Element, Strategy, Tag, TagScheme, TaskMode};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, integer: bool) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        if integer {
            rng.gen_range(-2..=2) as f64
        } else {
            rng.gen_range(-3.0..3.0)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn viterbi_matches_brute_force(seed in any::<u64>(), n in 1usize..=6, l in 1usize..=7, integer in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_matrix(&mut rng, n, l, integer);
        let t = random_matrix(&mut rng, l, l, integer);
        let allowed: Vec<bool> = (0..l * l).map(|_| rng.gen_bool(0.7)).collect();
        let start: Vec<bool> = (0..l).map(|_| rng.gen_bool(0.8)).collect();
        let mask = TransitionMask::from_fn(l, |a| start[a], |a, b| allowed[a * l + b]);
        let oracle = common::brute_force_viterbi(&e, &t, &|a| start[a], &|a, b| allowed[a * l + b]);
        match (viterbi(&e, &t, &mask), oracle) {
            (Ok((path, score)), Some((opath, oscore))) => {
                prop_assert_eq!(path, opath);
                prop_assert_eq!(score, oscore);
            }
            (Err(ModelError::AllPathsMasked), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got.map(|x| x.0), want),
        }
    }

    #[test]
    fn bio_masked_viterbi_is_legal(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = label_inventory(TagScheme::new(Strategy::JointPolarity, TaskMode::Targeted));
        let e = random_matrix(&mut rng, n, labels.len(), false);
        let t = random_matrix(&mut rng, labels.len(), labels.len(), false);
        let (path, _) = viterbi(&e, &t, &TransitionMask::bio(&labels)).unwrap();
        let tags: Vec<Tag> = path.iter().map(|&i| labels[i]).collect();
        prop_assert!(common::is_valid_bio(&tags));
    }

    #[test]
    fn ensemble_union_is_set_union(seed in any::<u64>(), n in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = label_inventory(TagScheme::new(Strategy::Joint, TaskMode::Full));
        let gold = finesent_core::tagscheme::repair(&common::random_tags(&mut rng, &labels, n), TagScheme::new(Strategy::Joint, TaskMode::Full)).unwrap();
        let members: Vec<Vec<Tag>> = (0..3).map(|_| common::random_tags(&mut rng, &labels, n)).collect();
        let union = ensemble_union(&members).unwrap();
        prop_assert!(common::is_valid_bio(union.as_slice()));
        for i in 0..n {
            let any = members.iter().any(|m| m[i].element() == Some(Element::Expression));
            prop_assert_eq!(union[i].element() == Some(Element::Expression), any);
            prop_assert!(union[i].is_outside() || union[i].element() == Some(Element::Expression));
        }
        let recall = |p: &[Tag]| token_f1(&[gold.as_slice()], &[p], &[Element::Expression]).unwrap().micro().recall;
        let best = members.iter().map(|m| recall(m)).fold(0.0, f64::max);
        prop_assert!(recall(union.as_slice()) >= best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..8);
        let p = EmbeddingProvider::hashed(d, 1, 1);
        let mut m = ClassifierModel::zeros(PoolingStrategy::Mean, AugmentMode::Original, p.spec(), d);
        m.weights = random_matrix(&mut rng, 3, d, false);
        m.bias = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));
        let batch = rng.gen_range(1..6);
        let xs: Vec<Array1<f64>> = (0..batch).map(|_| Array1::from_shape_fn(d, |_| rng.gen_range(-2.0..2.0))).collect();
        let ys: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..3)).collect();
        prop_assert!((m.loss(&xs, &ys) - common::cross_entropy(&m.weights, &m.bias, &xs, &ys)).abs() < 1e-12);

        let (gw, gb) = m.gradient(&xs, &ys);
        let h = 1e-5;
        // below ~1e-6 central differences are dominated by roundoff (eps * loss / h)
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        let (c, j) = (rng.gen_range(0..3), rng.gen_range(0..d));
        let mut plus = m.clone();
        plus.weights[[c, j]] += h;
        let mut minus = m.clone();
        minus.weights[[c, j]] -= h;
        let fd = (common::cross_entropy(&plus.weights, &plus.bias, &xs, &ys)
            - common::cross_entropy(&minus.weights, &minus.bias, &xs, &ys)) / (2.0 * h);
        prop_assert!(rel(gw[[c, j]], fd) <= 1e-4, "w[{},{}]: {} vs {}", c, j, gw[[c, j]], fd);
        let mut plus = m.clone();
        plus.bias[c] += h;
        let mut minus = m.clone();
        minus.bias[c] -= h;
        let fd = (common::cross_entropy(&plus.weights, &plus.bias, &xs, &ys)
            - common::cross_entropy(&minus.weights, &minus.bias, &xs, &ys)) / (2.0 * h);
        prop_assert!(rel(gb[c], fd) <= 1e-4, "b[{}]: {} vs {}", c, gb[c], fd);
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-700.0f64..700.0, 3)) {
        let p = softmax(&Array1::from(v));
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pooling_permutation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (6, 5);
        let rows = random_matrix(&mut rng, n, d, false);
        let m = EmbeddingMatrix { sentence_vector: rows.mean_axis(ndarray::Axis(0)).unwrap(), token_vectors: rows.clone() };
        let target = [Span::new(1, 4)];
        let mut swapped = rows.clone();
        for k in 0..d {
            swapped.swap([1, k], [3, k]);
        }
        let s = EmbeddingMatrix { sentence_vector: m.sentence_vector.clone(), token_vectors: swapped };
        for strategy in [PoolingStrategy::Mean, PoolingStrategy::Max, PoolingStrategy::MaxMM] {
            let (a, b) = (pool(&m, &target, strategy).unwrap(), pool(&s, &target, strategy).unwrap());
            prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        prop_assert_ne!(pool(&m, &target, PoolingStrategy::First).unwrap(), pool(&s, &target, PoolingStrategy::First).unwrap());
        // a single-token target pools to its own row under First, Mean and Max
        let one = [Span::new(2, 3)];
        let first = pool(&m, &one, PoolingStrategy::First).unwrap();
        prop_assert_eq!(&first, &rows.row(2).to_owned());
        prop_assert_eq!(&pool(&m, &one, PoolingStrategy::Mean).unwrap(), &first);
        prop_assert_eq!(&pool(&m, &one, PoolingStrategy::Max).unwrap(), &first);
    }

    #[test]
    fn embedding_file_round_trip_is_bit_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..6);
        let mut f = FileEmbeddings::new(d);
        for i in 0..rng.gen_range(0..5) {
            let n = rng.gen_range(1..7);
            // the file stores f32, so draw values that f32 represents exactly
            let mut tv = random_matrix(&mut rng, n, d, false).mapv(|v| v as f32 as f64);
            let bits = f32::from_bits(rng.gen());
            tv[[0, 0]] = if bits.is_nan() { -0.0 } else { bits as f64 };
            let sv = Array1::from_shape_fn(d, |_| rng.gen::<f32>() as f64);
            let m = EmbeddingMatrix { sentence_vector: sv, token_vectors: tv };
            f.insert(&format!("s{i}"), m).unwrap();
        }
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let back = FileEmbeddings::read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), f.len());
        for i in 0..f.len() {
            let id = format!("s{i}");
            let (a, b) = (f.get(&id).unwrap(), back.get(&id).unwrap());
            let bits = |m: &EmbeddingMatrix| m.token_vectors.iter().chain(&m.sentence_vector).map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a), bits(b));
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, buf);
    }
}

#[test]
fn training_is_deterministic() {
    let p = EmbeddingProvider::hashed(16, 3, 1);
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let train = pivot_corpus(60, 5, Split::Train);
    let scheme = TagScheme::new(Strategy::Joint, TaskMode::Full);
    let run = || train_tagger(&train, None, scheme, AugmentMode::Full, &p, &ExpressionSource::Gold, &cfg).unwrap();
    assert_eq!(run(), run());

    let c = class_corpus(30, 5, Split::Train);
    let ex = target_examples(&c);
    let run = || {
        train_classifier(&ex, None, PoolingStrategy::MaxMM, AugmentMode::Full, &p, &ExpressionSource::Gold, &cfg).unwrap()
    };
    assert_eq!(run(), run());
    let other = train_classifier(&ex, None, PoolingStrategy::MaxMM, AugmentMode::Full, &p, &ExpressionSource::Gold, &cfg.clone().with_seed(9)).unwrap();
    assert_ne!(run().weights, other.weights);
}
