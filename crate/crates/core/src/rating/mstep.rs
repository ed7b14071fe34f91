//! Closed-form ridge updates for the preference factors.
//!
//! For user `u` the update is
//! `theta_u = (lambda_y sum_i p_ui beta_i beta_i^T + lambda_theta I)^-1 (lambda_y sum_i p_ui y_ui beta_i)`
//! and symmetrically for items. Because `y_ui = 0` off the click set, the
//! right-hand side only runs over clicked items.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::InteractionMatrix;
use crate::error::Result;
use crate::linalg::{add_outer_lower, cholesky_solve, Matrix};
use crate::par;

use super::posterior::PosteriorSource;
use super::FactorModel;

/// Lower-triangular `sum_r v_r v_r^T` over the rows of `m`.
fn gram_lower(m: &Matrix) -> Vec<f64> {
    let k = m.cols();
    let mut g = vec![0.0; k * k];
    for row in m.iter_rows() {
        add_outer_lower(&mut g, row, 1.0);
    }
    g
}

struct SideUpdate<'a> {
    /// Opposite factor matrix (items when solving users, and vice versa).
    other: &'a Matrix,
    reg: f64,
    lambda_y: f64,
    /// `lambda_y * w * G` for the uniform-weight shortcut.
    scaled_gram: Option<(f64, Vec<f64>)>,
}

impl SideUpdate<'_> {
    /// Solves one row given its clicked indices and (for the general path)
    /// its dense posterior weights.
    fn solve(&self, clicked: &[usize], weights: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        let k = out.len();
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        match (&self.scaled_gram, weights) {
            (Some((w, g)), _) => {
                a.copy_from_slice(g);
                let corr = self.lambda_y * (1.0 - w);
                for &j in clicked {
                    add_outer_lower(&mut a, self.other.row(j), corr);
                }
            }
            (None, Some(p)) => {
                for (j, &pj) in p.iter().enumerate() {
                    if pj != 0.0 {
                        add_outer_lower(&mut a, self.other.row(j), self.lambda_y * pj);
                    }
                }
            }
            (None, None) => unreachable!("general path needs posterior weights"),
        }
        for d in 0..k {
            a[d * k + d] += self.reg;
        }
        for &j in clicked {
            let pj = weights.map_or(1.0, |p| p[j]);
            let coef = self.lambda_y * pj;
            for (bd, od) in b.iter_mut().zip(self.other.row(j)) {
                *bd += coef * od;
            }
        }
        cholesky_solve(&mut a, &mut b)?;
        out.copy_from_slice(&b);
        Ok(())
    }
}

fn solve_side<'y, F, G>(
    n_rows: usize,
    n_cols: usize,
    k: usize,
    side: &SideUpdate<'_>,
    clicked: F,
    weights: G,
) -> Result<Matrix>
where
    F: Fn(usize) -> &'y [usize] + Sync + Send,
    G: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut out = Matrix::zeros(n_rows, k);
    let failed = core::sync::atomic::AtomicBool::new(false);
    par::for_each_row(out.as_mut_slice(), k, |r, row| {
        let res = if side.scaled_gram.is_some() {
            side.solve(clicked(r), None, row)
        } else {
            let mut buf = vec![0.0; n_cols];
            weights(r, &mut buf);
            side.solve(clicked(r), Some(&buf), row)
        };
        if res.is_err() {
            failed.store(true, core::sync::atomic::Ordering::Relaxed);
        }
    });
    if failed.into_inner() {
        // lambda > 0 keeps every system positive definite, so this only
        // triggers on non-finite inputs.
        return Err(crate::error::Error::InvalidArgument(
            "factor update produced a non positive definite system".into(),
        ));
    }
    Ok(out)
}

fn side<'a>(other: &'a Matrix, reg: f64, lambda_y: f64, uniform: Option<f64>) -> SideUpdate<'a> {
    let scaled_gram = uniform.map(|w| {
        let mut g = gram_lower(other);
        for v in &mut g {
            *v *= lambda_y * w;
        }
        (w, g)
    });
    SideUpdate {
        other,
        reg,
        lambda_y,
        scaled_gram,
    }
}

/// New `theta` given the current `beta`.
pub fn update_user_factors(
    y: &InteractionMatrix,
    p: &dyn PosteriorSource,
    model: &FactorModel,
) -> Result<Matrix> {
    let s = side(&model.beta, model.lambda_theta, model.lambda_y, p.uniform_unobserved());
    solve_side(
        y.n_users(),
        y.n_items(),
        model.k(),
        &s,
        |u| y.items_of(u),
        |u, buf| p.row(u, buf),
    )
}

/// New `beta` given the current `theta`.
pub fn update_item_factors(
    y: &InteractionMatrix,
    p: &dyn PosteriorSource,
    model: &FactorModel,
) -> Result<Matrix> {
    let s = side(&model.theta, model.lambda_beta, model.lambda_y, p.uniform_unobserved());
    solve_side(
        y.n_items(),
        y.n_users(),
        model.k(),
        &s,
        |i| y.users_of(i),
        |i, buf| p.col(i, buf),
    )
}
