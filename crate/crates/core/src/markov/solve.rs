use nalgebra::DMatrix;

use super::{StateLabel, SteadyState, TransitionMatrix};
use crate::error::{Error, Result};

/// Post-solve bound on `||pi P - pi||_inf`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Distance from 1 within which an eigenvalue counts as the unit eigenvalue.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-8;
/// Largest band storage (in doubles) the direct solver will allocate.
pub const DIRECT_BAND_BUDGET: usize = 40_000_000;

const NEGATIVE_MASS_TOL: f64 = 1e-9;
const RESCALE_AT: f64 = 1e150;

/// Default solver: direct elimination, falling back to Gauss-Seidel when the
/// band does not fit in [`DIRECT_BAND_BUDGET`].
pub fn solve_steady_state<L: StateLabel>(p: &TransitionMatrix<L>) -> Result<SteadyState<L>> {
    match solve_steady_state_direct(p) {
        Err(Error::Guard { .. }) => solve_steady_state_iterative(p, 1e-13, 200_000),
        other => other,
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` directly by banded state reduction.
///
/// The chain is first reduced to its unique closed class; transient states get
/// zero mass.
pub fn solve_steady_state_direct<L: StateLabel>(p: &TransitionMatrix<L>) -> Result<SteadyState<L>> {
    let class = unique_closed_class(p)?;
    let local = restrict(p, &class);
    let x = banded_gth_solve(&local)?;
    finalize(p, &class, x)
}

/// Left eigenvector of `P` for eigenvalue 1.
///
/// The spectrum of `P^T` (real Schur form) must contain exactly one eigenvalue
/// within [`UNIT_EIGENVALUE_TOL`] of 1; the eigenvector is then the right
/// singular vector of `P^T - I` with the smallest singular value. Dense, so
/// intended for chains of a few hundred states.
pub fn solve_steady_state_evd<L: StateLabel>(p: &TransitionMatrix<L>) -> Result<SteadyState<L>> {
    let n = p.n_states();
    let pt = DMatrix::from_fn(n, n, |r, c| p.get(c, r));
    let eigenvalues = pt.clone().complex_eigenvalues();
    let distances: Vec<f64> = eigenvalues
        .iter()
        .map(|z| ((z.re - 1.0).powi(2) + z.im.powi(2)).sqrt())
        .collect();
    let unit = distances.iter().filter(|&&d| d < UNIT_EIGENVALUE_TOL).count();
    if unit == 0 {
        return Err(Error::NoUnitEigenvalue {
            tolerance: UNIT_EIGENVALUE_TOL,
            distance: distances.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    if unit > 1 {
        return Err(Error::NonUnique { classes: unit });
    }

    let shifted = pt - DMatrix::identity(n, n);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Solver {
        reason: "SVD did not return singular vectors".into(),
        residual: f64::NAN,
    })?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
    let sum: f64 = v.iter().sum();
    if sum.abs() < f64::EPSILON {
        return Err(Error::Solver {
            reason: "null vector has zero sum".into(),
            residual: f64::NAN,
        });
    }
    v.iter_mut().for_each(|x| *x /= sum);
    let all: Vec<usize> = (0..n).collect();
    finalize(p, &all, v)
}

/// Gauss-Seidel sweeps on the closed class until the residual drops below
/// `tol`.
pub fn solve_steady_state_iterative<L: StateLabel>(
    p: &TransitionMatrix<L>,
    tol: f64,
    max_sweeps: usize,
) -> Result<SteadyState<L>> {
    let class = unique_closed_class(p)?;
    let local = restrict(p, &class);
    let n = local.len();
    // incoming[j] = (i, P_ij), i != j
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut stay = vec![0.0; n];
    for (i, row) in local.iter().enumerate() {
        for &(j, v) in row {
            if i == j {
                stay[j] = v;
            } else {
                incoming[j].push((i, v));
            }
        }
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for sweep in 0..max_sweeps {
        for j in 0..n {
            let leave = 1.0 - stay[j];
            if leave <= 0.0 {
                continue;
            }
            let inflow: f64 = incoming[j].iter().map(|&(i, v)| x[i] * v).sum();
            x[j] = inflow / leave;
        }
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        if sweep % 10 == 9 || n == 1 {
            residual = local_residual(&local, &x);
            if residual <= tol {
                return finalize(p, &class, x);
            }
        }
    }
    Err(Error::Solver {
        reason: format!("Gauss-Seidel did not converge in {max_sweeps} sweeps"),
        residual,
    })
}

fn unique_closed_class<L: StateLabel>(p: &TransitionMatrix<L>) -> Result<Vec<usize>> {
    let mut classes = p.closed_classes();
    match classes.len() {
        1 => Ok(classes.pop().unwrap()),
        k => Err(Error::NonUnique { classes: k }),
    }
}

/// Rows of `P` restricted to a closed class, re-indexed locally.
fn restrict<L: StateLabel>(p: &TransitionMatrix<L>, class: &[usize]) -> Vec<Vec<(usize, f64)>> {
    let mut local_index = vec![usize::MAX; p.n_states()];
    for (k, &g) in class.iter().enumerate() {
        local_index[g] = k;
    }
    class
        .iter()
        .map(|&g| {
            p.row(g)
                .map(|(j, v)| {
                    debug_assert!(local_index[j] != usize::MAX, "class is not closed");
                    (local_index[j], v)
                })
                .collect()
        })
        .collect()
}

fn local_residual(rows: &[Vec<(usize, f64)>], x: &[f64]) -> f64 {
    let mut y = vec![0.0; x.len()];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            y[j] += x[i] * v;
        }
    }
    y.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Banded GTH state reduction. States are censored out from the highest index
/// down; each pivot is the sum of the remaining off-diagonal mass in its row,
/// so no subtraction takes place. Returns an unnormalized solution.
fn banded_gth_solve(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let n = rows.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let (mut below, mut above) = (0usize, 0usize);
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            if j > i {
                above = above.max(j - i);
            } else {
                below = below.max(i - j);
            }
        }
    }
    let width = below + above + 1;
    let cells = (n as u128) * (width as u128);
    if cells > DIRECT_BAND_BUDGET as u128 {
        return Err(Error::Guard {
            states: cells,
            limit: DIRECT_BAND_BUDGET as u128,
        });
    }
    let mut band = vec![0.0f64; n * width];
    let at = |r: usize, c: usize| r * width + (c + below - r);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            if i != j {
                band[at(i, j)] += v;
            }
        }
    }

    let mut pivots = vec![0.0; n];
    for k in (1..n).rev() {
        let lo_col = k.saturating_sub(below);
        let s: f64 = (lo_col..k).map(|j| band[at(k, j)]).sum();
        if !(s > 0.0) {
            return Err(Error::Solver {
                reason: format!("zero pivot at state {k} during state reduction"),
                residual: f64::NAN,
            });
        }
        pivots[k] = s;
        for i in k.saturating_sub(above)..k {
            let f = band[at(i, k)] / s;
            if f == 0.0 {
                continue;
            }
            for j in lo_col..k {
                if j != i {
                    band[at(i, j)] += f * band[at(k, j)];
                }
            }
        }
    }

    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for k in 1..n {
        let inflow: f64 = (k.saturating_sub(above)..k).map(|i| x[i] * band[at(i, k)]).sum();
        x[k] = inflow / pivots[k];
        // heavily loaded chains grow geometrically; rescale before overflow
        if x[k] > RESCALE_AT {
            let s = x[k];
            x[..=k].iter_mut().for_each(|v| *v /= s);
        }
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    Ok(x)
}

/// Scatters a class-local solution, clamps round-off negatives and checks the
/// fixed-point residual.
fn finalize<L: StateLabel>(p: &TransitionMatrix<L>, class: &[usize], local: Vec<f64>) -> Result<SteadyState<L>> {
    let mut probs = vec![0.0; p.n_states()];
    let mut negative = 0.0;
    for (&g, &v) in class.iter().zip(&local) {
        if !v.is_finite() {
            return Err(Error::Solver {
                reason: "non-finite probability".into(),
                residual: f64::NAN,
            });
        }
        if v < 0.0 {
            negative -= v;
        } else {
            probs[g] = v;
        }
    }
    if negative > NEGATIVE_MASS_TOL {
        return Err(Error::Solver {
            reason: format!("negative probability mass {negative:.3e} after solve"),
            residual: p.residual(&probs),
        });
    }
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= sum);
    let residual = p.residual(&probs);
    if residual > RESIDUAL_TOL {
        return Err(Error::Solver {
            reason: "fixed-point residual above tolerance".into(),
            residual,
        });
    }
    SteadyState::new(p.space().clone(), probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::StateSpace;

    fn matrix(dense: &[Vec<f64>]) -> TransitionMatrix<usize> {
        TransitionMatrix::from_dense(StateSpace::scalar(dense.len() - 1), dense).unwrap()
    }

    #[test]
    fn single_absorbing_state() {
        let p = matrix(&[vec![1.0]]);
        assert_eq!(solve_steady_state_direct(&p).unwrap().probs(), &[1.0]);
    }

    #[test]
    fn symmetric_two_state() {
        let p = matrix(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        for ss in [solve_steady_state_direct(&p).unwrap(), solve_steady_state_evd(&p).unwrap()] {
            assert!((ss.probs()[0] - 0.5).abs() < 1e-15);
            assert!((ss.probs()[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn two_state_birth_death() {
        let p = matrix(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        for ss in [
            solve_steady_state_direct(&p).unwrap(),
            solve_steady_state_evd(&p).unwrap(),
            solve_steady_state_iterative(&p, 1e-14, 10_000).unwrap(),
        ] {
            assert!((ss.probs()[0] - 2.0 / 3.0).abs() < 1e-12);
            assert!((ss.probs()[1] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_is_not_unique() {
        let p = matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(solve_steady_state_evd(&p), Err(Error::NonUnique { classes: 2 })));
        assert!(matches!(solve_steady_state_direct(&p), Err(Error::NonUnique { classes: 2 })));
    }

    #[test]
    fn transient_states_get_zero_mass() {
        // state 0 drains into the {1, 2} class
        let p = matrix(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.3, 0.7],
            vec![0.0, 0.6, 0.4],
        ]);
        let ss = solve_steady_state_direct(&p).unwrap();
        assert_eq!(ss.probs()[0], 0.0);
        assert!((ss.probs()[1] - 6.0 / 13.0).abs() < 1e-14);
        let evd = solve_steady_state_evd(&p).unwrap();
        assert!(evd.probs()[0].abs() < 1e-12);
        assert!((evd.probs()[1] - 6.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_chain() {
        let p = matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let ss = solve_steady_state_direct(&p).unwrap();
        assert_eq!(ss.probs(), &[0.5, 0.5]);
        let ss = solve_steady_state_evd(&p).unwrap();
        assert!((ss.probs()[0] - 0.5).abs() < 1e-14);
    }
}
