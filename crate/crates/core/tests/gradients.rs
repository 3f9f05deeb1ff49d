//! Analytic parameter gradients against central finite differences.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use seann_core::rng::{seeded, Rng};
use seann_core::{
    lambda_weights, BoundConstraint, CompositeObjective, ConstraintKind, Head, LossWeights, Matrix, MlpParams, Task,
};

const STEP: f64 = 1e-5;
const DRAWS: u64 = 20;

fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Random network with every parameter, biases included, drawn non-zero.
fn random_params(rng: &mut Rng, inputs: usize, hidden: usize, head: Head) -> MlpParams {
    let mut p = MlpParams::init(inputs, hidden, head, rng).unwrap();
    for t in p.as_flat_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *t += 0.3 * z;
    }
    p
}

/// Smallest |pre-activation| of any hidden unit over `x` and its perturbed
/// copies. Central differences straddling a rectifier kink measure a
/// one-sided slope, so draws closer than `KINK_MARGIN` are redrawn.
fn kink_distance(params: &MlpParams, x: &Matrix, constraints: &[BoundConstraint]) -> f64 {
    let (w1, b1, p) = (params.w1(), params.b1(), params.inputs());
    let mut shifts = vec![None];
    shifts.extend(constraints.iter().map(|c| Some((c.column, c.shift()))));
    let mut closest = f64::INFINITY;
    for shift in shifts {
        for row in x.rows() {
            let mut r = row.to_vec();
            if let Some((j, h)) = shift {
                r[j] += h;
            }
            for (u, b) in b1.iter().enumerate() {
                let z = b + w1[u * p..(u + 1) * p].iter().zip(&r).map(|(w, v)| w * v).sum::<f64>();
                closest = closest.min(z.abs());
            }
        }
    }
    closest
}

const KINK_MARGIN: f64 = 1e-4;

/// `||a - n|| / (||a|| + ||n||)` between the analytic and the numerical
/// gradient.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic) + norm(numeric);
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn numeric_gradient(objective: &CompositeObjective<'_>, params: &MlpParams, x: &Matrix, y: &[f64]) -> Vec<f64> {
    (0..params.as_flat().len())
        .map(|k| {
            let mut plus = params.clone();
            plus.as_flat_mut()[k] += STEP;
            let mut minus = params.clone();
            minus.as_flat_mut()[k] -= STEP;
            let fp = objective.value(&plus, x, y).unwrap().total;
            let fm = objective.value(&minus, x, y).unwrap().total;
            (fp - fm) / (2.0 * STEP)
        })
        .collect()
}

struct Case {
    task: Task,
    constraints: Vec<BoundConstraint>,
    weights: LossWeights,
    /// Shifts the output bias so that predictions stay positive.
    positive_output: bool,
}

fn worst_error(case: &Case, seed: u64) -> f64 {
    let objective = CompositeObjective::new(case.task, &case.constraints, &case.weights).unwrap();
    let mut worst: f64 = 0.0;
    for draw in 0..DRAWS {
        let mut rng = seeded(seed * 1000 + draw);
        let x = normal_matrix(&mut rng, 16, 3);
        let y: Vec<f64> = match case.task {
            Task::Regression => (0..16).map(|_| StandardNormal.sample(&mut rng)).collect(),
            Task::Classification => (0..16).map(|_| f64::from(rng.random::<bool>() as u8)).collect(),
        };
        let mut params = loop {
            let p = random_params(&mut rng, 3, 8, case.task.head());
            if kink_distance(&p, &x, &case.constraints) > KINK_MARGIN {
                break p;
            }
        };
        if case.positive_output {
            let n = params.as_flat().len();
            params.as_flat_mut()[n - 1] = 20.0;
        }
        let (_, grad) = objective.evaluate(&params, &x, &y).unwrap();
        let numeric = numeric_gradient(&objective, &params, &x, &y);
        worst = worst.max(relative_error(grad.as_flat(), &numeric));
    }
    worst
}

fn bound(kind: ConstraintKind, column: usize, value: f64, h: f64) -> BoundConstraint {
    BoundConstraint { kind, column, value, h }
}

/// Weights that leave the prediction loss a negligible share, so the
/// check exercises the penalty alone.
fn penalty_only(n: usize) -> LossWeights {
    let lambda0 = 1e-9;
    LossWeights::new(lambda0, vec![(1.0 - lambda0) / n as f64; n]).unwrap()
}

#[test]
fn squared_error_gradient() {
    let case = Case {
        task: Task::Regression,
        constraints: vec![],
        weights: LossWeights::agnostic(),
        positive_output: false,
    };
    let e = worst_error(&case, 1);
    assert!(e < 1e-4, "relative error {e:e}");
}

#[test]
fn cross_entropy_gradient() {
    let case = Case {
        task: Task::Classification,
        constraints: vec![],
        weights: LossWeights::agnostic(),
        positive_output: false,
    };
    let e = worst_error(&case, 2);
    assert!(e < 1e-4, "relative error {e:e}");
}

#[test]
fn src_penalty_gradient() {
    let case = Case {
        task: Task::Regression,
        constraints: vec![bound(ConstraintKind::Src, 1, -2.0, 1.0)],
        weights: penalty_only(1),
        positive_output: false,
    };
    let e = worst_error(&case, 3);
    assert!(e < 1e-4, "relative error {e:e}");
}

#[test]
fn or_penalty_gradient() {
    let case = Case {
        task: Task::Classification,
        constraints: vec![bound(ConstraintKind::Or, 2, 1.5, 1.0 / 1.5)],
        weights: penalty_only(1),
        positive_output: false,
    };
    let e = worst_error(&case, 4);
    assert!(e < 1e-4, "relative error {e:e}");
}

#[test]
fn rr_penalty_gradient() {
    let case = Case {
        task: Task::Regression,
        constraints: vec![bound(ConstraintKind::Rr, 0, 0.4, 2.5)],
        weights: penalty_only(1),
        positive_output: true,
    };
    let e = worst_error(&case, 5);
    assert!(e < 1e-4, "relative error {e:e}");
}

#[test]
fn composite_gradients() {
    let or = Case {
        task: Task::Classification,
        constraints: vec![
            bound(ConstraintKind::Or, 0, 1.0, 1.0),
            bound(ConstraintKind::Or, 1, -2.0, -0.5),
            bound(ConstraintKind::Or, 2, 5.0, 0.2),
        ],
        weights: lambda_weights(48.0, &[1e4, 1e4, 1e4]).unwrap(),
        positive_output: false,
    };
    let e = worst_error(&or, 6);
    assert!(e < 1e-4, "classification: relative error {e:e}");

    let mixed = Case {
        task: Task::Regression,
        constraints: vec![bound(ConstraintKind::Src, 0, 1.0, 1.0), bound(ConstraintKind::Rr, 2, -0.3, 1.0)],
        weights: lambda_weights(48.0, &[100.0, 1e6]).unwrap(),
        positive_output: true,
    };
    let e = worst_error(&mixed, 7);
    assert!(e < 1e-4, "regression: relative error {e:e}");
}
