mod common;

use cfopt::embed::{embed, validity_constraint, EmbeddingArtifacts, ValidityTarget};
use cfopt::learners::{Model, TrainedModel};
use cfopt::milp::{MilpModel, VarId};
use cfopt::solver::{solve_milp, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Embeds `model` with inputs fixed at `x` and returns the solved output.
fn embedded_score(model: &TrainedModel, x: &[f64]) -> (f64, Vec<f64>, EmbeddingArtifacts) {
    let mut m = MilpModel::new();
    let vars: Vec<VarId> = x.iter().enumerate().map(|(i, &v)| m.add_continuous(format!("x{i}"), v, v).unwrap()).collect();
    let art = embed(&mut m, model, &vars, "h_").unwrap();
    let r = solve_milp(&m, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let values = r.pool[0].values.clone();
    (values[art.output.0], values, art)
}

fn sample(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

#[test]
fn linear_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let model = common::random_linear(&mut rng, 4);
        let x = sample(&mut rng, 4);
        let (y, _, _) = embedded_score(&model, &x);
        assert!((y - model.score(&x).unwrap()).abs() <= 1e-8);
    }
}

#[test]
fn tree_fidelity_and_single_active_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let model = common::random_tree_model(&mut rng, 3, 4);
        let x = sample(&mut rng, 3);
        let (y, values, art) = embedded_score(&model, &x);
        assert_eq!(y, model.score(&x).unwrap());
        let active = art.leaves[0].iter().filter(|(z, _)| values[z.0] == 1.0).count();
        assert_eq!(active, 1);
    }
}

#[test]
fn ensemble_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let model = common::random_ensemble(&mut rng, 3, 5, 3);
        let x = sample(&mut rng, 3);
        let (y, values, art) = embedded_score(&model, &x);
        assert!((y - model.score(&x).unwrap()).abs() <= 1e-12);
        for leaves in &art.leaves {
            assert_eq!(leaves.iter().filter(|(z, _)| values[z.0] == 1.0).count(), 1);
        }
    }
}

#[test]
fn relunet_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let model = common::random_relunet(&mut rng, &[2, 4, 1]);
        let x = sample(&mut rng, 2);
        let (y, _, _) = embedded_score(&model, &x);
        assert!((y - model.score(&x).unwrap()).abs() <= 1e-6);
    }
}

#[test]
fn relunet_pre_activations_stay_in_traced_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let model = common::random_relunet(&mut rng, &[3, 5, 4, 1]);
        let Model::ReluNet(net) = &model.model else { unreachable!() };
        let mut m = MilpModel::new();
        let vars: Vec<VarId> = (0..3).map(|i| m.add_continuous(format!("x{i}"), 0.0, 1.0).unwrap()).collect();
        let art = embed(&mut m, &model, &vars, "").unwrap();
        for _ in 0..50 {
            let x = sample(&mut rng, 3);
            let pre = net.pre_activations(&x);
            for (layer, bounds) in pre.iter().zip(&art.bounds_trace) {
                for (z, (l, u)) in layer.iter().zip(bounds) {
                    assert!(*z >= l - 1e-12 && *z <= u + 1e-12);
                }
            }
        }
    }
}

#[test]
fn validity_forces_target_class_for_every_family() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models = [
        common::random_linear(&mut rng, 3),
        common::random_tree_model(&mut rng, 3, 3),
        common::random_ensemble(&mut rng, 3, 5, 3),
        common::random_relunet(&mut rng, &[3, 4, 1]),
    ];
    for model in &models {
        for class in [0, 1] {
            let mut m = MilpModel::new();
            let vars: Vec<VarId> = (0..3).map(|i| m.add_continuous(format!("x{i}"), 0.0, 1.0).unwrap()).collect();
            let art = embed(&mut m, model, &vars, "").unwrap();
            validity_constraint(&mut m, &art, &model.model, ValidityTarget::Class { class, margin: 1e-4 }).unwrap();
            let r = solve_milp(&m, &SolveOptions::default()).unwrap();
            if r.status != Status::Optimal {
                // The class may be unreachable on the box; confirm by sampling.
                let hits = (0..2000).filter(|_| model.predict_class(&sample(&mut rng, 3)).unwrap() == class).count();
                assert_eq!(hits, 0, "{} class {class}", model.model.family_name());
                continue;
            }
            let x: Vec<f64> = vars.iter().map(|v| r.pool[0].values[v.0]).collect();
            assert_eq!(model.predict_class(&x).unwrap(), class, "{}", model.model.family_name());
        }
    }
}
