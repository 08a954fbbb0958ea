//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p cfopt --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cfopt::builder::{build, generate, CeConfig, CeResult, HullNorm, Manifold, Mechanism, Sparsity};
use cfopt::data::{Actionability, Dataset, FeatureKind, FeatureValue, Record};
use cfopt::demo::{Demo, DemoName};
use cfopt::embed::{embed, ValidityTarget};
use cfopt::evaluate::{aggregate, hull_membership, mean_se, resolve_target, score_set, MetricsReport, HULL_TOL};
use cfopt::learners::TrainedModel;
use cfopt::milp::{MilpModel, VarId};
use cfopt::solver::{solve_lp, solve_milp, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: `Err` carries the first reason it failed.
type Check = Result<String, String>;

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

/// A fixture with its demo model and the first 30 rows predicted away from
/// the demo target.
struct Fixture {
    name: DemoName,
    demo: Demo,
    rows: Vec<usize>,
    target: ValidityTarget,
}

impl Fixture {
    fn load(name: DemoName) -> Self {
        let demo = Demo::load(name).expect("demo loads");
        let rows = demo.factual_rows(30).expect("factual rows");
        let target = resolve_target(&demo.dataset.schema, &demo.model, demo.target()).unwrap();
        Fixture { name, demo, rows, target }
    }

    fn ds(&self) -> &Dataset {
        &self.demo.dataset
    }

    fn factual(&self, row: usize) -> &Record {
        &self.ds().rows[row]
    }

    fn target_class(&self) -> usize {
        match self.target {
            ValidityTarget::Class { class, .. } => class,
            ValidityTarget::Regression { .. } => unreachable!("demos are classifiers"),
        }
    }

    /// Demo part config by index, with overrides applied through JSON.
    fn config(&self, part: usize, patch: &str) -> CeConfig {
        let mut v = serde_json::to_value(&self.demo.parts[part].config).unwrap();
        let p: serde_json::Value = serde_json::from_str(patch).unwrap();
        for (k, x) in p.as_object().unwrap() {
            v[k] = x.clone();
        }
        serde_json::from_value(v).unwrap()
    }
}

/// Every CE generated anywhere in the gate, with its factual and config.
struct Run {
    fixture: DemoName,
    row: usize,
    config: CeConfig,
    result: CeResult,
}

struct Gate {
    german: Fixture,
    heart: Fixture,
    runs: Vec<Run>,
}

impl Gate {
    fn fixture(&self, name: DemoName) -> &Fixture {
        match name {
            DemoName::GermanCredit => &self.german,
            DemoName::Heart => &self.heart,
        }
    }

    /// Generates for every row; failures are returned by row.
    fn sweep(&mut self, name: DemoName, rows: &[usize], config: &CeConfig) -> Vec<(usize, String)> {
        let mut failed = Vec::new();
        for &row in rows {
            let f = self.fixture(name);
            match generate(f.factual(row), &f.demo.model, f.ds(), config) {
                Ok(result) => self.runs.push(Run { fixture: name, row, config: config.clone(), result }),
                Err(e) => failed.push((row, e.to_string())),
            }
        }
        failed
    }
}

fn embedded_score(model: &TrainedModel, x: &[f64]) -> f64 {
    let mut m = MilpModel::new();
    let vars: Vec<VarId> = x.iter().enumerate().map(|(i, &v)| m.add_continuous(format!("x{i}"), v, v).unwrap()).collect();
    let art = embed(&mut m, model, &vars, "h_").unwrap();
    let r = solve_milp(&m, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    r.pool[0].values[art.output.0]
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let families: [(&str, f64, Box<dyn Fn(&mut ChaCha8Rng) -> (TrainedModel, usize)>); 4] = [
        ("linear", 1e-6, Box::new(|r| (common::random_linear(r, 4), 4))),
        ("tree", 0.0, Box::new(|r| (common::random_tree_model(r, 3, 4), 3))),
        ("ensemble", 1e-6, Box::new(|r| (common::random_ensemble(r, 3, 5, 3), 3))),
        ("relu 2-4-1", 1e-6, Box::new(|r| (common::random_relunet(r, &[2, 4, 1]), 2))),
    ];
    let mut worst = [0.0f64; 4];
    for (k, (name, tol, make)) in families.iter().enumerate() {
        for i in 0..200 {
            let (model, n) = make(&mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let gap = (embedded_score(&model, &x) - model.score(&x).unwrap()).abs();
            worst[k] = worst[k].max(gap);
            ensure(gap <= *tol, || format!("{name} solve {i} off by {gap:e}"))?;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:.1?}"))?;
    Ok(format!(
        "800 solves, max |gap| linear {:.1e}, tree {:.1e}, ensemble {:.1e}, relu {:.1e}, {t:.1?}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut infeasible = 0;
    for i in 0..50 {
        let binaries = rng.gen_range(4..=12);
        let rows = rng.gen_range(1..=10);
        let inst = common::random_integer_milp(&mut rng, binaries, 0, rows);
        let r = solve_milp(&inst.model, &SolveOptions::default()).map_err(|e| e.to_string())?;
        match inst.feasible.first() {
            Some(&opt) => {
                let got = r.best_objective.ok_or(format!("MILP {i}: no solution, status {:?}", r.status))?;
                ensure(r.status == Status::Optimal && (got - opt).abs() <= 1e-6, || format!("MILP {i}: {got} vs {opt}"))?;
            }
            None => {
                infeasible += 1;
                ensure(r.status == Status::Infeasible, || format!("MILP {i}: expected infeasible, got {:?}", r.status))?;
            }
        }
    }
    for i in 0..50 {
        let rows = rng.gen_range(1..=4);
        let lp = common::random_lp3(&mut rng, rows);
        let r = solve_lp(&lp.model).map_err(|e| e.to_string())?;
        match lp.optimum {
            Some(opt) => {
                let got = r.objective.ok_or(format!("LP {i}: status {:?}", r.status))?;
                ensure((got - opt).abs() <= 1e-8, || format!("LP {i}: {got} vs {opt}"))?;
            }
            None => ensure(r.status == Status::Infeasible, || format!("LP {i}: expected infeasible"))?,
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:.1?}"))?;
    Ok(format!("50 MILPs ({infeasible} infeasible) and 50 LPs match enumeration, {t:.1?}"))
}

/// Criteria 3, 5 (immutables) and 7 share the Part D sweep.
fn criterion_3(gate: &mut Gate) -> Check {
    let mut notes = Vec::new();
    for name in [DemoName::GermanCredit, DemoName::Heart] {
        let f = gate.fixture(name);
        let cfg = f.config(3, "{}");
        let rows = f.rows.clone();
        let failed = gate.sweep(name, &rows, &cfg);
        ensure(failed.is_empty(), || format!("{name}: no CE for rows {failed:?}"))?;
        let f = gate.fixture(name);
        let reports: Vec<MetricsReport> = gate
            .runs
            .iter()
            .filter(|r| r.fixture == name && r.config == cfg)
            .map(|r| {
                let ces: Vec<Record> = r.result.counterfactuals.iter().map(|c| c.record.clone()).collect();
                score_set(f.factual(r.row), &ces, &f.demo.model, &f.ds().schema, f.target).unwrap()
            })
            .collect();
        let v = aggregate(&reports).unwrap().validity.unwrap();
        ensure(reports.len() == 30 && v.mean == 1.0 && v.se == 0.0, || {
            format!("{name}: validity {} ({}) over {} instances", v.mean, v.se, reports.len())
        })?;
        notes.push(format!("{name} {:.2} ({:.2}) n={}", v.mean, v.se, v.n));
    }
    Ok(format!("validity {}", notes.join(", ")))
}

fn criterion_4(gate: &mut Gate) -> Check {
    // Every CE so far decoded; re-encode to be sure each group has one level.
    let mut ces = 0;
    for r in &gate.runs {
        let schema = &gate.fixture(r.fixture).ds().schema;
        for c in &r.result.counterfactuals {
            let enc = schema.encode(&c.record).map_err(|e| e.to_string())?;
            for j in 0..schema.n_features() {
                if schema.feature(j).is_categorical() {
                    let s: f64 = schema.feature_columns(j).map(|k| enc.values[k]).sum();
                    ensure(s == 1.0, || format!("{}: row {} decodes incoherently", r.fixture, r.row))?;
                }
            }
            ces += 1;
        }
    }
    // ε = 0 hull with explicit coherence off: raw solver binaries.
    let mut groups = 0;
    let mut solved = 0;
    for name in [DemoName::GermanCredit, DemoName::Heart] {
        let f = gate.fixture(name);
        let cfg = f.config(0, r#"{"coherence": false, "manifold": {"mode": "hard", "epsilon": 0, "p": "1"}}"#);
        let schema = &f.ds().schema;
        for &row in f.rows.iter().take(10) {
            let p = build(f.factual(row), &f.demo.model, f.ds(), &cfg).map_err(|e| e.to_string())?;
            ensure(!p.milp.tag_census().contains_key("coherence"), || "coherence rows present".into())?;
            let r = solve_milp(&p.milp, &SolveOptions::default()).map_err(|e| e.to_string())?;
            let Some(best) = r.best() else { continue };
            solved += 1;
            for j in 0..schema.n_features() {
                if schema.feature(j).is_categorical() {
                    let s: f64 = schema.feature_columns(j).map(|c| best.values[p.x[c].0]).sum();
                    ensure(s == 1.0, || format!("{name} row {row}: `{}` one-hot sum {s}", schema.feature(j).name))?;
                    groups += 1;
                }
            }
        }
    }
    ensure(solved > 0, || "no ε = 0 model was feasible".into())?;
    Ok(format!("{ces} CEs coherent; ε=0 without coherence rows: {groups} one-hot sums exactly 1 over {solved} solves"))
}

fn criterion_5(gate: &mut Gate) -> Check {
    for name in [DemoName::GermanCredit, DemoName::Heart] {
        for k in 1..=3 {
            let f = gate.fixture(name);
            let cfg = f.config(3, &format!(r#"{{"sparsity": {{"mode": "hard", "k": {k}}}}}"#));
            let rows: Vec<usize> = f.rows.iter().take(10).copied().collect();
            gate.sweep(name, &rows, &cfg);
        }
    }
    let (mut ces, mut budgeted) = (0, 0);
    for r in &gate.runs {
        let f = gate.fixture(r.fixture);
        let schema = &f.ds().schema;
        let factual = f.factual(r.row);
        for c in &r.result.counterfactuals {
            let changed = schema.changed_features(factual, &c.record);
            if r.config.actionability.enforce {
                for (j, spec) in schema.features().iter().enumerate() {
                    let rule = r.config.actionability.overrides.get(&spec.name).copied().unwrap_or(spec.actionability);
                    if rule == Actionability::Immutable {
                        ensure(!changed[j], || format!("{} row {}: immutable `{}` changed", r.fixture, r.row, spec.name))?;
                    }
                }
            }
            if let Sparsity::Hard { k } = r.config.sparsity {
                let n = changed.iter().filter(|&&c| c).count();
                ensure(n <= k, || format!("{} row {}: {n} changes with K = {k}", r.fixture, r.row))?;
                budgeted += 1;
            }
            ces += 1;
        }
    }
    ensure(budgeted > 0, || "no hard-K counterfactuals".into())?;
    Ok(format!("{ces} CEs, 0 immutable changes; {budgeted} hard-K CEs within budget"))
}

fn criterion_6(gate: &mut Gate) -> Check {
    for name in [DemoName::GermanCredit, DemoName::Heart] {
        let f = gate.fixture(name);
        let last = f.demo.parts.iter().position(|p| matches!(p.config.manifold, Manifold::Hard { .. })).unwrap();
        let soft = f.config(last, "{}");
        let exact = f.config(0, r#"{"manifold": {"mode": "hard", "epsilon": 0, "p": "1"}}"#);
        let rows: Vec<usize> = f.rows.iter().take(10).copied().collect();
        gate.sweep(name, &rows, &soft);
        gate.sweep(name, &rows, &exact);
    }
    let (mut checked, mut at_zero, mut worst) = (0, 0, 0.0f64);
    for r in &gate.runs {
        let Manifold::Hard { epsilon, p } = r.config.manifold else { continue };
        let f = gate.fixture(r.fixture);
        for c in &r.result.counterfactuals {
            let h = hull_membership(&c.record, f.ds(), f.target_class(), epsilon, p).map_err(|e| e.to_string())?;
            ensure(h.distance <= epsilon + HULL_TOL, || {
                format!("{} row {}: hull distance {} > ε = {epsilon}", r.fixture, r.row, h.distance)
            })?;
            if epsilon == 0.0 {
                let cert = c.manifold.as_ref().ok_or("missing certificate")?;
                let res = match p {
                    HullNorm::L1 => cert.residual_l1,
                    HullNorm::Inf => cert.residual_inf,
                };
                worst = worst.max(res);
                ensure(res <= 1e-6, || format!("{} row {}: reconstruction residual {res:e}", r.fixture, r.row))?;
                at_zero += 1;
            }
            checked += 1;
        }
    }
    ensure(at_zero > 0, || "no ε = 0 counterfactual to certify".into())?;
    Ok(format!("{checked} hard-manifold CEs inside the hull oracle; {at_zero} at ε=0 with residual ≤ {worst:.1e}"))
}

fn criterion_7(gate: &Gate) -> Check {
    let f = &gate.german;
    let cfg = f.config(3, "{}");
    let (mut full, mut flagged, mut instances) = (0, 0, 0);
    for r in gate.runs.iter().filter(|r| r.fixture == DemoName::GermanCredit && r.config == cfg) {
        let ces = &r.result.counterfactuals;
        instances += 1;
        let schema = &f.ds().schema;
        for a in 0..ces.len() {
            for b in a + 1..ces.len() {
                let diff = schema.changed_features(&ces[a].record, &ces[b].record);
                ensure(diff.iter().any(|&d| d), || format!("row {}: CEs {a} and {b} coincide", r.row))?;
            }
        }
        ensure(ces.len() <= 3, || "pool padded past m".into())?;
        if ces.len() == 3 {
            full += 1;
        } else {
            ensure(r.result.partial, || format!("row {}: shortfall not flagged", r.row))?;
            flagged += 1;
        }
    }
    ensure(instances == 30, || format!("only {instances} German instances"))?;
    ensure(full >= 25, || format!("{full} of 30 instances with 3 distinct CEs"))?;
    Ok(format!("{full}/30 German instances with 3 pairwise-distinct CEs, {flagged} shortfalls flagged"))
}

fn scaled(ds: &Dataset, r: &Record, name: &str) -> f64 {
    let j = ds.schema.feature_index(name).unwrap();
    ds.schema.feature(j).scale(r.0[j].as_number().unwrap())
}

fn demo_shape(name: DemoName, labels: &[&str]) -> Result<String, String> {
    let d = Demo::load(name).map_err(|e| e.to_string())?;
    let row = d.factual_row().map_err(|e| e.to_string())?;
    let out = d.run(row).map_err(|e| e.to_string())?;
    let got: Vec<&str> = out.iter().map(|o| o.label.as_str()).collect();
    ensure(got == labels, || format!("{name}: parts {got:?}"))?;
    let mut m = Vec::new();
    for o in &out {
        m.push(o.metrics.clone().ok_or_else(|| format!("{name} {}: {}", o.label, o.error.clone().unwrap_or_default()))?);
    }
    ensure(m[1].sparsity > m[0].sparsity, || format!("{name}: A→B sparsity {} → {}", m[0].sparsity, m[1].sparsity))?;
    ensure(m[4].sparsity <= m[3].sparsity, || format!("{name}: D→E sparsity {} → {}", m[3].sparsity, m[4].sparsity))?;
    ensure(m[4].cat_proximity <= m[3].cat_proximity, || {
        format!("{name}: D→E categorical proximity {:?} → {:?}", m[3].cat_proximity, m[4].cat_proximity)
    })?;
    let mut note = format!(
        "{name} row {row}: sparsity A {:.2} → B {:.2}, D {:.2} → E {:.2}, cat prox D {:.2} → E {:.2}",
        m[0].sparsity,
        m[1].sparsity,
        m[3].sparsity,
        m[4].sparsity,
        m[3].cat_proximity.unwrap_or(f64::NAN),
        m[4].cat_proximity.unwrap_or(f64::NAN)
    );
    if let Some(f) = out.get(5) {
        let factual = &d.dataset.rows[row];
        let mut worst = 0.0f64;
        for rel in &f.config.causality {
            let Mechanism::Learned { model } = &rel.mechanism else { continue };
            let parents = |r: &Record| -> Vec<f64> { rel.parents.iter().map(|p| scaled(&d.dataset, r, p)).collect() };
            for c in &f.result.as_ref().unwrap().counterfactuals {
                let lhs = scaled(&d.dataset, &c.record, &rel.endogenous) - scaled(&d.dataset, factual, &rel.endogenous);
                let rhs = model.score(&parents(&c.record)).unwrap() - model.score(&parents(factual)).unwrap();
                worst = worst.max((lhs - rhs).abs());
            }
        }
        ensure(worst <= 1e-4, || format!("{name}: Part F causal residual {worst:e}"))?;
        note.push_str(&format!(", Part F causal residual {worst:.1e}"));
    }
    Ok(note)
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let g = demo_shape(DemoName::GermanCredit, &["Part A", "Part B", "Part C", "Part D", "Part E", "Part F"])?;
    let h = demo_shape(DemoName::Heart, &["Part A", "Part B", "Part C", "Part D", "Part E"])?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(300), || format!("took {t:.1?}"))?;
    Ok(format!("{g}; {h}; {t:.1?}"))
}

fn random_record(rng: &mut impl Rng, ds: &Dataset) -> Record {
    Record(
        ds.schema
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Categorical => FeatureValue::Level(f.levels[rng.gen_range(0..f.levels.len())].clone()),
                FeatureKind::Integer => FeatureValue::Number(rng.gen_range(f.lower as i64..=f.upper as i64) as f64),
                _ => FeatureValue::Number(rng.gen_range(f.lower..=f.upper)),
            })
            .collect(),
    )
}

/// Two-pass mean and sample-s.d. standard error, as a spreadsheet computes
/// AVERAGE and STDEV.S / SQRT(COUNT).
fn sheet(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

fn report(v: [f64; 7], count: usize) -> MetricsReport {
    let opt = |x: f64| (!x.is_nan()).then_some(x);
    MetricsReport {
        validity: v[0],
        sparsity: v[1],
        cat_proximity: opt(v[2]),
        cont_proximity: opt(v[3]),
        cat_diversity: opt(v[4]),
        cont_diversity: opt(v[5]),
        count_diversity: opt(v[6]),
        count,
    }
}

fn criterion_9(gate: &Gate) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    for i in 0..100 {
        let f = if i % 2 == 0 { &gate.german } else { &gate.heart };
        let factual = random_record(&mut rng, f.ds());
        let m = rng.gen_range(1..=4);
        let ces: Vec<Record> = (0..m)
            .map(|_| if rng.gen_bool(0.2) { factual.clone() } else { random_record(&mut rng, f.ds()) })
            .collect();
        let r = score_set(&factual, &ces, &f.demo.model, &f.ds().schema, f.target).map_err(|e| e.to_string())?;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = unit(r.validity)
            && unit(r.sparsity)
            && r.cat_proximity.is_none_or(unit)
            && r.cont_proximity.is_none_or(|x| x <= 0.0)
            && r.cat_diversity.is_none_or(unit)
            && r.count_diversity.is_none_or(unit)
            && r.cont_diversity.is_none_or(|x| x >= 0.0)
            && (r.count_diversity.is_none() == (m == 1))
            && r.count == m;
        ensure(ok, || format!("set {i} ({}) breaks a range invariant: {r:?}", f.name))?;
    }

    let nan = f64::NAN;
    let sets: [Vec<MetricsReport>; 5] = [
        vec![report([1.0, 0.9, 1.0, -2.0, nan, nan, nan], 1)],
        vec![report([1.0, 0.5, 0.5, -1.5, 0.5, 3.0, 0.25], 3), report([1.0, 0.75, 1.0, -0.5, 0.0, 1.0, 0.5], 2)],
        vec![
            report([1.0, 0.8, 0.9, -3.25, 0.1, 2.5, 0.2], 3),
            report([0.5, 0.6, 0.7, -1.75, nan, nan, nan], 1),
            report([1.0, 0.95, 0.85, -0.125, 0.3, 0.7, 0.15], 2),
        ],
        vec![report([1.0, 0.85, nan, -4.0, nan, 1.25, 0.3], 2); 4],
        (0..7)
            .map(|k| {
                let x = k as f64;
                report([1.0 - x / 10.0, 0.5 + x / 17.0, 0.3 + x / 11.0, -x * 1.7, x / 13.0, x * x / 3.0, 1.0 / (x + 2.0)], 3)
            })
            .collect(),
    ];
    let mut cells = 0;
    for (s, reports) in sets.iter().enumerate() {
        let agg = aggregate(reports).map_err(|e| e.to_string())?;
        for (k, got) in agg.values().into_iter().enumerate() {
            let xs: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
            match (got, xs.is_empty()) {
                (None, true) => {}
                (Some(g), false) => {
                    let (mean, se) = sheet(&xs);
                    ensure((g.mean - mean).abs() <= 1e-12 && (g.se - se).abs() <= 1e-12, || {
                        format!("set {s} metric {k}: {} ({}) vs {mean} ({se})", g.mean, g.se)
                    })?;
                    cells += 1;
                }
                _ => return Err(format!("set {s} metric {k}: presence mismatch")),
            }
        }
    }
    // One cell against literals: sparsity of set 2 has mean 2.35 / 3 and
    // sample variance 0.0308333....
    let g = aggregate(&sets[2]).unwrap().sparsity.unwrap();
    ensure((g.mean - 2.35 / 3.0).abs() <= 1e-12 && (g.se - (0.030833333333333333f64 / 3.0).sqrt()).abs() <= 1e-12, || {
        format!("literal cell: {} ({})", g.mean, g.se)
    })?;
    ensure(mean_se(&[]).is_none(), || "mean_se of nothing".into())?;
    Ok(format!("100 random sets within range; {cells} aggregate cells match the oracle to 1e-12"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut gate =
        Gate { german: Fixture::load(DemoName::GermanCredit), heart: Fixture::load(DemoName::Heart), runs: Vec::new() };
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let mut record = |n: usize, name: &'static str, c: Check| {
        let line = match &c {
            Ok(msg) => format!("PASS criterion {n} ({name}): {msg}"),
            Err(msg) => format!("FAIL criterion {n} ({name}): {msg}"),
        };
        println!("{line}");
        results.push((n, name, c));
    };
    record(1, "embedding fidelity", criterion_1());
    record(2, "solver exactness", criterion_2());
    record(3, "validity", criterion_3(&mut gate));
    record(4, "coherence", criterion_4(&mut gate));
    record(5, "actionability and sparsity", criterion_5(&mut gate));
    record(6, "manifold certificate", criterion_6(&mut gate));
    record(7, "diversity", criterion_7(&gate));
    record(8, "staged demo shape", criterion_8());
    record(9, "metric sanity", criterion_9(&gate));
    let failed: BTreeSet<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("acceptance: {} of 9 passed in {:.1?}", 9 - failed.len(), start.elapsed());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
