use cfopt::builder::HullNorm;
use cfopt::data::{Dataset, FeatureSchema, FeatureSpec, FeatureValue, Labels, Record};
use cfopt::embed::ValidityTarget;
use cfopt::evaluate::*;
use cfopt::learners::{LinearLoss, LinearModel, Model, Task, TrainedModel};
use proptest::prelude::*;

fn num(x: f64) -> FeatureValue {
    FeatureValue::Number(x)
}

fn level(s: &str) -> FeatureValue {
    FeatureValue::Level(s.into())
}

const C_LEVELS: [&str; 3] = ["x", "y", "z"];
const D_LEVELS: [&str; 2] = ["p", "q"];

fn mixed_schema() -> FeatureSchema {
    let feats = vec![
        FeatureSpec::continuous("a", 0.0, 10.0),
        FeatureSpec::integer("b", 0.0, 5.0),
        FeatureSpec::categorical("c", &C_LEVELS),
        FeatureSpec::categorical("d", &D_LEVELS),
    ];
    FeatureSchema::new(feats, "label", Some(vec!["no".into(), "yes".into()])).unwrap()
}

/// Columns: a, b, c=x, c=y, c=z, d=p, d=q.
const W: [f64; 7] = [1.0, -0.5, 0.3, -0.2, 0.1, 0.25, -0.4];
// Off the lattice of reachable scores, so no record sits on the boundary.
const BIAS: f64 = -0.3137;

fn model() -> TrainedModel {
    let m = Model::Linear(LinearModel { weights: W.to_vec(), bias: BIAS, loss: LinearLoss::Hinge });
    TrainedModel::from_model(m, Task::Classification, W.len()).unwrap()
}

const TARGET: ValidityTarget = ValidityTarget::Class { class: 1, margin: 0.0 };

fn record() -> impl Strategy<Value = Record> {
    // Coarse grids make exact ties between records common.
    (0..=8u32, 0..=5u32, 0..3usize, 0..2usize).prop_map(|(a, b, c, d)| {
        Record(vec![num(a as f64 * 1.25), num(b as f64), level(C_LEVELS[c]), level(D_LEVELS[d])])
    })
}

fn set() -> impl Strategy<Value = (Record, Vec<Record>)> {
    (record(), prop::collection::vec(record(), 1..6))
}

struct Plain {
    a: f64,
    b: f64,
    c: String,
    d: String,
}

fn plain(r: &Record) -> Plain {
    let n = |v: &FeatureValue| v.as_number().unwrap();
    let l = |v: &FeatureValue| match v {
        FeatureValue::Level(s) => s.clone(),
        _ => panic!("not a level"),
    };
    Plain { a: n(&r.0[0]), b: n(&r.0[1]), c: l(&r.0[2]), d: l(&r.0[3]) }
}

fn oracle_score(r: &Plain) -> f64 {
    let c = C_LEVELS.iter().position(|&s| s == r.c).unwrap();
    let d = D_LEVELS.iter().position(|&s| s == r.d).unwrap();
    W[0] * r.a / 10.0 + W[1] * r.b / 5.0 + W[2 + c] + W[5 + d] + BIAS
}

/// Changed-feature count split as (numeric, categorical).
fn oracle_changes(x: &Plain, y: &Plain) -> (usize, usize) {
    let numeric = usize::from(x.a != y.a) + usize::from(x.b != y.b);
    let cat = usize::from(x.c != y.c) + usize::from(x.d != y.d);
    (numeric, cat)
}

fn oracle_report(factual: &Record, ces: &[Record]) -> [Option<f64>; 7] {
    let f = plain(factual);
    let cs: Vec<Plain> = ces.iter().map(plain).collect();
    let m = cs.len() as f64;
    let valid = cs.iter().filter(|c| oracle_score(c) >= 0.0).count() as f64 / m;
    let mut changed = 0.0;
    let mut cat_changed = 0.0;
    let mut l1 = 0.0;
    for c in &cs {
        let (n, k) = oracle_changes(&f, c);
        changed += (n + k) as f64 / 4.0;
        cat_changed += k as f64 / 2.0;
        l1 += (f.a - c.a).abs() + (f.b - c.b).abs();
    }
    let mut pairs = 0.0;
    let (mut cat_div, mut cont_div, mut count_div) = (0.0, 0.0, 0.0);
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let (n, k) = oracle_changes(&cs[i], &cs[j]);
            cat_div += k as f64 / 2.0;
            count_div += (n + k) as f64 / 4.0;
            cont_div += (cs[i].a - cs[j].a).abs() + (cs[i].b - cs[j].b).abs();
            pairs += 1.0;
        }
    }
    let div = |x: f64| (pairs > 0.0).then(|| x / pairs);
    [
        Some(valid),
        Some(1.0 - changed / m),
        Some(1.0 - cat_changed / m),
        Some(-l1 / m),
        div(cat_div),
        div(cont_div),
        div(count_div),
    ]
}

fn close(a: [Option<f64>; 7], b: [Option<f64>; 7], tol: f64) -> bool {
    a.iter().zip(&b).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_oracle((factual, ces) in set()) {
        let r = score_set(&factual, &ces, &model(), &mixed_schema(), TARGET).unwrap();
        let want = oracle_report(&factual, &ces);
        prop_assert!(close(r.values(), want, 1e-12), "{:?} vs {:?}", r.values(), want);
    }

    #[test]
    fn metrics_stay_in_range((factual, ces) in set()) {
        let r = score_set(&factual, &ces, &model(), &mixed_schema(), TARGET).unwrap();
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        prop_assert!(unit(r.validity) && unit(r.sparsity));
        prop_assert!(unit(r.cat_proximity.unwrap()));
        prop_assert!(r.cont_proximity.unwrap() <= 0.0);
        if let Some(v) = r.cat_diversity { prop_assert!(unit(v)); }
        if let Some(v) = r.count_diversity { prop_assert!(unit(v)); }
        if let Some(v) = r.cont_diversity { prop_assert!(v >= 0.0); }
        prop_assert_eq!(r.cat_diversity.is_none(), ces.len() == 1);
        prop_assert_eq!(r.count, ces.len());
    }

    #[test]
    fn metrics_ignore_ce_order((factual, mut ces) in set(), seed in any::<u64>()) {
        let a = score_set(&factual, &ces, &model(), &mixed_schema(), TARGET).unwrap();
        let k = ces.len();
        ces.rotate_left(seed as usize % k);
        ces.reverse();
        let b = score_set(&factual, &ces, &model(), &mixed_schema(), TARGET).unwrap();
        prop_assert!(close(a.values(), b.values(), 1e-12));
    }

    #[test]
    fn the_factual_itself_is_maximally_close(factual in record()) {
        let r = score_set(&factual, std::slice::from_ref(&factual), &model(), &mixed_schema(), TARGET).unwrap();
        prop_assert_eq!(r.sparsity, 1.0);
        prop_assert_eq!(r.cat_proximity, Some(1.0));
        prop_assert_eq!(r.cont_proximity, Some(0.0));
    }

    #[test]
    fn aggregate_matches_hand_mean_and_se(sets in prop::collection::vec(set(), 1..8)) {
        let reports: Vec<MetricsReport> = sets
            .iter()
            .map(|(f, c)| score_set(f, c, &model(), &mixed_schema(), TARGET).unwrap())
            .collect();
        let s = aggregate(&reports).unwrap();
        prop_assert_eq!(s.instances, reports.len());
        for (k, got) in s.values().into_iter().enumerate() {
            let xs: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
            match got {
                None => prop_assert!(xs.is_empty()),
                Some(ms) => {
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let se = if xs.len() < 2 {
                        0.0
                    } else {
                        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
                    };
                    prop_assert!((ms.mean - mean).abs() <= 1e-12);
                    prop_assert!((ms.se - se).abs() <= 1e-12);
                    prop_assert_eq!(ms.n, xs.len());
                }
            }
        }
    }
}

#[test]
fn worked_example() {
    let factual = Record(vec![num(2.0), num(1.0), level("x"), level("p")]);
    let ces = vec![
        Record(vec![num(6.0), num(1.0), level("x"), level("p")]),
        Record(vec![num(2.0), num(3.0), level("y"), level("p")]),
    ];
    let r = score_set(&factual, &ces, &model(), &mixed_schema(), TARGET).unwrap();
    // Changes: {a} and {b, c}; sparsity 1 - (1/4 + 2/4) / 2.
    assert!((r.sparsity - 0.625).abs() < 1e-15);
    assert!((r.cat_proximity.unwrap() - 0.75).abs() < 1e-15);
    assert!((r.cont_proximity.unwrap() + 3.0).abs() < 1e-15);
    // The pair differs in a, b and c.
    assert!((r.count_diversity.unwrap() - 0.75).abs() < 1e-15);
    assert!((r.cat_diversity.unwrap() - 0.5).abs() < 1e-15);
    assert!((r.cont_diversity.unwrap() - 6.0).abs() < 1e-15);
    // Scores before the bias: 0.6 - 0.1 + 0.3 + 0.25 = 1.05 and 0.2 - 0.3 - 0.2 + 0.25 = -0.05.
    assert_eq!(r.validity, 0.5);
}

#[test]
fn empty_inputs_are_errors() {
    let f = Record(vec![num(2.0), num(1.0), level("x"), level("p")]);
    assert!(matches!(score_set(&f, &[], &model(), &mixed_schema(), TARGET), Err(EvalError::Empty)));
    assert!(matches!(aggregate(&[]), Err(EvalError::NoReports)));
}

#[test]
fn table_lists_every_metric() {
    let f = Record(vec![num(2.0), num(1.0), level("x"), level("p")]);
    let r = score_set(&f, std::slice::from_ref(&f), &model(), &mixed_schema(), TARGET).unwrap();
    let s = aggregate(&[r.clone(), r]).unwrap();
    let t = render_table(&[("Part A".into(), s)]);
    for m in METRICS {
        assert!(t.lines().next().unwrap().contains(m));
    }
    assert!(t.lines().nth(1).unwrap().starts_with("Part A"));
    assert!(t.contains("1.00 (0.00)"));
    assert!(t.contains("--"));
}

/// Class-1 rows are the corners of the unit square; a class-0 row sits far away.
fn square() -> Dataset {
    let feats = vec![FeatureSpec::continuous("u", 0.0, 1.0), FeatureSpec::continuous("v", 0.0, 1.0)];
    let schema = FeatureSchema::new(feats, "label", Some(vec!["no".into(), "yes".into()])).unwrap();
    let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)];
    let rows = pts.iter().map(|&(u, v)| Record(vec![num(u), num(v)])).collect();
    Dataset::from_records(schema, rows, Labels::Class(vec![1, 1, 1, 1, 0])).unwrap()
}

fn pt(u: f64, v: f64) -> Record {
    Record(vec![num(u), num(v)])
}

#[test]
fn hull_vertex_and_interior_are_inside() {
    let ds = square();
    for p in [HullNorm::L1, HullNorm::Inf] {
        for q in [pt(1.0, 1.0), pt(0.5, 0.5), pt(0.25, 0.9)] {
            let h = hull_membership(&q, &ds, 1, 0.0, p).unwrap();
            assert!(h.inside && h.distance <= 1e-9 && h.violation == 0.0);
            let total: f64 = h.lambda.iter().map(|l| l.1).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(h.lambda.iter().all(|&(i, _)| i < 4));
        }
    }
}

#[test]
fn hull_midpoint_uses_two_vertices() {
    let ds = square();
    let h = hull_membership(&pt(0.5, 0.0), &ds, 1, 0.0, HullNorm::L1).unwrap();
    assert!(h.inside);
    let mut rows: Vec<usize> = h.lambda.iter().filter(|l| l.1 > 1e-9).map(|l| l.0).collect();
    rows.sort();
    assert_eq!(rows, vec![0, 1]);
}

#[test]
fn hull_outside_point_reports_distance_and_violation() {
    let ds = square();
    // Class 0 is the single point (0.5, 0.5).
    let h = hull_membership(&pt(0.9, 0.2), &ds, 0, 0.25, HullNorm::L1).unwrap();
    assert!((h.distance - 0.7).abs() < 1e-9);
    assert!((h.violation - 0.45).abs() < 1e-9);
    assert!(!h.inside);
    let h = hull_membership(&pt(0.9, 0.2), &ds, 0, 0.25, HullNorm::Inf).unwrap();
    assert!((h.distance - 0.4).abs() < 1e-9);
    assert!((h.violation - 0.15).abs() < 1e-9);
    let h = hull_membership(&pt(0.9, 0.2), &ds, 0, 0.4, HullNorm::Inf).unwrap();
    assert!(h.inside && h.violation == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn convex_combinations_are_inside(w in prop::array::uniform4(0.0f64..1.0)) {
        let s: f64 = w.iter().sum::<f64>() + 1e-9;
        let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
        let u = corners.iter().zip(&w).map(|(c, w)| c.0 * w / s).sum();
        let v = corners.iter().zip(&w).map(|(c, w)| c.1 * w / s).sum();
        let h = hull_membership(&pt(u, v), &square(), 1, 0.0, HullNorm::L1).unwrap();
        prop_assert!(h.inside, "({u}, {v}) at distance {}", h.distance);
    }

    #[test]
    fn single_point_distance_is_the_norm(u in 0.0f64..1.0, v in 0.0f64..1.0, eps in 0.0f64..0.5) {
        let (du, dv) = ((u - 0.5f64).abs(), (v - 0.5f64).abs());
        let h1 = hull_membership(&pt(u, v), &square(), 0, eps, HullNorm::L1).unwrap();
        prop_assert!((h1.distance - (du + dv)).abs() < 1e-9);
        prop_assert!((h1.violation - (du + dv - eps).max(0.0)).abs() < 1e-9);
        let hi = hull_membership(&pt(u, v), &square(), 0, eps, HullNorm::Inf).unwrap();
        prop_assert!((hi.distance - du.max(dv)).abs() < 1e-9);
    }
}
