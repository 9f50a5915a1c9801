mod common;

use finesent_core::corpus::Polarity;
use finesent_core::eval::{aggregate_runs, macro_f1, pearson, significance_swap, token_f1};
use finesent_core::tagscheme::{label_inventory, repair, Element, Strategy, Tag, TagScheme, TaskMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POLAR_FULL: TagScheme = TagScheme::new(Strategy::JointPolarity, TaskMode::Full);

fn random_sequences(rng: &mut ChaCha8Rng, k: usize) -> (Vec<Vec<Tag>>, Vec<Vec<Tag>>) {
    let labels = label_inventory(POLAR_FULL);
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for _ in 0..k {
        let n = rng.gen_range(0..12);
        let g = common::random_tags(rng, &labels, n);
        let p = common::random_tags(rng, &labels, n);
        gold.push(repair(&g, POLAR_FULL).unwrap().into_vec());
        pred.push(repair(&p, POLAR_FULL).unwrap().into_vec());
    }
    (gold, pred)
}

fn random_polarities(rng: &mut ChaCha8Rng, n: usize, conflict: bool) -> Vec<Polarity> {
    let all = [Polarity::Positive, Polarity::Neutral, Polarity::Negative, Polarity::Conflict];
    let k = if conflict { 4 } else { 3 };
    (0..n).map(|_| all[rng.gen_range(0..k)]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn token_f1_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..6);
        let (gold, pred) = random_sequences(&mut rng, k);
        let report = token_f1(&gold, &pred, &Element::ALL).unwrap();
        for el in Element::ALL {
            let (tp, fp, fn_, f1) = common::token_f1_oracle(&gold, &pred, el);
            let got = report.get(el).unwrap();
            prop_assert_eq!((got.tp, got.fp, got.fn_), (tp, fp, fn_));
            prop_assert!((got.f1 - f1).abs() <= 1e-12);
        }
        let (a, b) = significance_swap(&gold, &pred, &Element::ALL).unwrap();
        for el in Element::ALL {
            let (x, y) = (a.get(el).unwrap(), b.get(el).unwrap());
            prop_assert_eq!(x.precision, y.recall);
            prop_assert_eq!(x.recall, y.precision);
            prop_assert!((x.f1 - y.f1).abs() <= 1e-15);
        }
    }

    #[test]
    fn macro_f1_matches_oracle(seed in any::<u64>(), n in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = random_polarities(&mut rng, n, true);
        let pred = random_polarities(&mut rng, n, false);
        let r = macro_f1(&gold, &pred).unwrap();
        let (m, per) = common::macro_f1_oracle(&gold, &pred);
        prop_assert!((r.macro_f1 - m).abs() <= 1e-12);
        for (k, c) in Polarity::CLASSES.iter().enumerate() {
            prop_assert!((r.get(*c).unwrap().f1 - per[k]).abs() <= 1e-12);
        }
        // jointly relabel classes with a cyclic permutation
        let rot = |p: &Polarity| match p {
            Polarity::Positive => Polarity::Neutral,
            Polarity::Neutral => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            Polarity::Conflict => Polarity::Conflict,
        };
        let g2: Vec<_> = gold.iter().map(rot).collect();
        let p2: Vec<_> = pred.iter().map(rot).collect();
        prop_assert!((macro_f1(&g2, &p2).unwrap().macro_f1 - r.macro_f1).abs() <= 1e-15);
    }

    #[test]
    fn aggregate_matches_two_pass(values in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let a = aggregate_runs(&values).unwrap();
        let (m, s) = common::two_pass_mean_std(&values);
        prop_assert_eq!(a.n, values.len());
        prop_assert!((a.mean - m).abs() <= 1e-12);
        prop_assert!((a.std - s).abs() <= 1e-12);
    }

    #[test]
    fn pearson_matches_oracle(seed in any::<u64>(), n in 3usize..30, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 * x + rng.gen_range(-10.0..10.0)).collect();
        let (r, p) = pearson(&xs, &ys).unwrap();
        let (ro, po) = common::pearson_oracle(&xs, &ys);
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - ro).abs() <= 1e-9, "r {} vs {}", r, ro);
        prop_assert!((p - po).abs() <= 1e-9, "p {} vs {}", p, po);
        let (rs, ps) = pearson(&ys, &xs).unwrap();
        prop_assert!((rs - r).abs() <= 1e-12 && (ps - p).abs() <= 1e-12);
        prop_assume!(a.abs() > 1e-3);
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let (ra, _) = pearson(&scaled, &ys).unwrap();
        prop_assert!((ra - a.signum() * r).abs() <= 1e-9);
    }
}
