//! Loss-landscape analysis: Monte-Carlo local flatness, two-dimensional loss
//! planes spanned by three weights, and a lower-bound estimator of the
//! worst-case loss within an L2 ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVector;
use crate::rng::SeededRng;

/// Loss evaluated at a weight vector.
pub type EvalFn<'a> = &'a dyn Fn(&ParamVector) -> f64;
/// Gradient of the loss at a weight vector.
pub type GradFn<'a> = &'a dyn Fn(&ParamVector) -> ParamVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatnessProfile {
    pub gammas: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

/// Mean loss change over random perturbations of radius gamma:
/// average of E(theta + gamma*u) - E(theta) for u uniform on the unit
/// sphere. Returns (estimate, Monte-Carlo standard error).
pub fn local_flatness(
    theta: &ParamVector,
    eval_fn: EvalFn<'_>,
    gamma: f64,
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    if gamma < 0.0 {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    if gamma == 0.0 {
        return Ok((0.0, 0.0));
    }
    let base = eval_fn(theta);
    let mut deltas = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let u = ParamVector::sample_unit_sphere(rng, theta.dim())?;
        let probe = ParamVector::axpy(gamma, &u, theta)?;
        deltas.push(eval_fn(&probe) - base);
    }
    let n = n_samples as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let stderr = if n_samples > 1 {
        let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// One flatness estimate per radius, sharing the baseline evaluation.
pub fn flatness_profile(
    theta: &ParamVector,
    eval_fn: EvalFn<'_>,
    gammas: &[f64],
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<FlatnessProfile> {
    if gammas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("gammas must be sorted ascending".into()));
    }
    let mut values = Vec::with_capacity(gammas.len());
    let mut stderr = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let (v, s) = local_flatness(theta, eval_fn, gamma, n_samples, rng)?;
        values.push(v);
        stderr.push(s);
    }
    Ok(FlatnessProfile {
        gammas: gammas.to_vec(),
        values,
        stderr,
        n_samples,
    })
}

/// Orthonormal basis of the plane through three weights: u = theta2-theta1,
/// then v = (theta3-theta1) minus its projection on u, both normalized.
pub fn plane_basis(
    theta1: &ParamVector,
    theta2: &ParamVector,
    theta3: &ParamVector,
) -> Result<(ParamVector, ParamVector)> {
    let u = theta2.sub(theta1)?;
    let u_norm = u.l2_norm();
    if u_norm == 0.0 {
        return Err(Error::DegenerateBasis("theta2 equals theta1".into()));
    }
    let w = theta3.sub(theta1)?;
    let proj = w.dot(&u)? / (u_norm * u_norm);
    let v = ParamVector::axpy(-proj, &u, &w)?;
    let v_norm = v.l2_norm();
    if v_norm <= 1e-12 * w.l2_norm().max(1.0) {
        return Err(Error::DegenerateBasis(
            "theta3 lies on the line through theta1 and theta2".into(),
        ));
    }
    Ok((u.scale(1.0 / u_norm), v.scale(1.0 / v_norm)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub resolution: usize,
}

/// In-plane coordinates of the three anchor weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaneMarkers {
    pub theta1: (f64, f64),
    pub theta2: (f64, f64),
    pub theta3: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct PlaneGrid {
    pub u_hat: ParamVector,
    pub v_hat: ParamVector,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Row-major (alpha outer, beta inner) train losses.
    pub train_loss: Vec<f64>,
    /// Row-major test losses.
    pub test_loss: Vec<f64>,
    pub markers: PlaneMarkers,
}

/// Evaluate train/test losses on a Cartesian grid in the plane through the
/// three weights, anchored at theta1. Cell (i,j) is
/// theta1 + alpha_i*u_hat + beta_j*v_hat.
pub fn loss_plane(
    theta1: &ParamVector,
    theta2: &ParamVector,
    theta3: &ParamVector,
    grid: &GridSpec,
    train_eval: EvalFn<'_>,
    test_eval: EvalFn<'_>,
) -> Result<PlaneGrid> {
    if grid.resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be >= 2".into()));
    }
    let (u_hat, v_hat) = plane_basis(theta1, theta2, theta3)?;

    let d2 = theta2.sub(theta1)?;
    let d3 = theta3.sub(theta1)?;
    let markers = PlaneMarkers {
        theta1: (0.0, 0.0),
        theta2: (d2.dot(&u_hat)?, d2.dot(&v_hat)?),
        theta3: (d3.dot(&u_hat)?, d3.dot(&v_hat)?),
    };

    let linspace = |lo: f64, hi: f64| -> Vec<f64> {
        let n = grid.resolution;
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let alphas = linspace(grid.alpha_range.0, grid.alpha_range.1);
    let betas = linspace(grid.beta_range.0, grid.beta_range.1);

    let mut train_loss = Vec::with_capacity(alphas.len() * betas.len());
    let mut test_loss = Vec::with_capacity(alphas.len() * betas.len());
    for &a in &alphas {
        let along_u = ParamVector::axpy(a, &u_hat, theta1)?;
        for &b in &betas {
            let point = ParamVector::axpy(b, &v_hat, &along_u)?;
            train_loss.push(train_eval(&point));
            test_loss.push(test_eval(&point));
        }
    }
    Ok(PlaneGrid {
        u_hat,
        v_hat,
        alphas,
        betas,
        train_loss,
        test_loss,
        markers,
    })
}

/// Radial fractions probed per random direction; the outermost is the full
/// radius, the inner ones make the estimate monotone under nested radii.
const RADIAL_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Lower-bound estimate of max over the gamma-ball of the loss: best of the
/// center, random probes at several radii, and a normalized gradient-ascent
/// trajectory projected to the ball. Never below eval_fn(theta).
pub fn robust_risk(
    theta: &ParamVector,
    eval_fn: EvalFn<'_>,
    grad_fn: GradFn<'_>,
    gamma: f64,
    probes: usize,
    ascent_steps: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    let center = eval_fn(theta);
    if gamma == 0.0 {
        return Ok(center);
    }

    let mut best = center;
    let mut best_point = theta.clone();
    for _ in 0..probes {
        let u = ParamVector::sample_unit_sphere(rng, theta.dim())?;
        for frac in RADIAL_FRACTIONS {
            let point = ParamVector::axpy(gamma * frac, &u, theta)?;
            let v = eval_fn(&point);
            if v > best {
                best = v;
                best_point = point.clone();
            }
        }
    }

    // gradient ascent from the best point found so far, projected back to
    // the ball after every step
    let mut x = best_point;
    let step = gamma / ascent_steps.max(1) as f64;
    for _ in 0..ascent_steps {
        let g = grad_fn(&x);
        let norm = g.l2_norm();
        if norm == 0.0 {
            break;
        }
        x = ParamVector::axpy(step / norm, &g, &x)?;
        let delta = x.sub(theta)?;
        let d = delta.l2_norm();
        if d > gamma {
            x = ParamVector::axpy(gamma / d, &delta, theta)?;
        }
        let v = eval_fn(&x);
        if v > best {
            best = v;
        }
    }
    Ok(best)
}
