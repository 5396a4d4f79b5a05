//! Projected Newton for smooth convex objectives over a box (Bertsekas'
//! two-metric variant): Newton on the free coordinates, scaled gradient on
//! the coordinates held at an active bound, Armijo search along the
//! projection arc.

use nalgebra::{DMatrix, DVector};

pub(crate) trait BoxObjective {
    type Error;

    /// Objective value; `+∞` marks points the caller cannot evaluate.
    fn value(&mut self, z: &[f64]) -> Result<f64, Self::Error>;

    fn grad_hess(&mut self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), Self::Error>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxNewtonSettings {
    /// Stop when the projected gradient step `|z − P(z − ∇)|∞` is below this.
    pub pg_tol: f64,
    /// Stop when an accepted step improves the value by less than this, relatively.
    pub rel_decrease_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub shrink: f64,
}

impl Default for BoxNewtonSettings {
    fn default() -> Self {
        Self {
            pg_tol: 1e-10,
            rel_decrease_tol: 1e-15,
            max_iter: 100,
            armijo_c: 1e-4,
            shrink: 0.5,
        }
    }
}


fn clamp(z: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (l, h))| v.clamp(*l, *h))
        .collect()
}

pub(crate) fn minimize<O: BoxObjective>(
    obj: &mut O,
    z0: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: &BoxNewtonSettings,
) -> Result<Vec<f64>, O::Error> {
    let n = z0.len();
    let mut z = clamp(z0, lo, hi);
    let mut f = obj.value(&z)?;
    let mut iterations = 0;
    if n == 0 {
        return Ok(z);
    }
    while iterations < settings.max_iter {
        let (g, h) = obj.grad_hess(&z)?;
        let stepped: Vec<f64> = z.iter().zip(&g).map(|(v, gi)| v - gi).collect();
        let pg = clamp(&stepped, lo, hi)
            .iter()
            .zip(&z)
            .fold(0.0f64, |m, (p, v)| m.max((p - v).abs()));
        if pg <= settings.pg_tol {
            break;
        }
        let eps = pg.min(1e-6);
        let active: Vec<bool> = (0..n)
            .map(|i| (z[i] <= lo[i] + eps && g[i] > 0.0) || (z[i] >= hi[i] - eps && g[i] < 0.0))
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                let scale = if h[(i, i)] > 0.0 { h[(i, i)] } else { 1.0 };
                d[i] = -g[i] / scale;
            }
        }
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
            let df = solve_regularized(hff, &gf);
            for (k, &i) in free.iter().enumerate() {
                d[i] = df[k];
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-14 {
            let trial: Vec<f64> = clamp(
                &z.iter().zip(&d).map(|(v, di)| v + t * di).collect::<Vec<_>>(),
                lo,
                hi,
            );
            let decrease: f64 = g.iter().zip(trial.iter().zip(&z)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let ft = obj.value(&trial)?;
            if ft.is_finite() && ft <= f + settings.armijo_c * decrease {
                accepted = Some((trial, ft));
                break;
            }
            t *= settings.shrink;
        }
        iterations += 1;
        let Some((trial, ft)) = accepted else {
            break;
        };
        let gain = f - ft;
        z = trial;
        f = ft;
        if gain <= settings.rel_decrease_tol * (1.0 + f.abs()) {
            break;
        }
    }
    Ok(z)
}

/// Solves `H d = r`, adding a growing multiple of the identity when `H` is
/// not numerically positive definite.
fn solve_regularized(h: DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut shift = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(c) = m.cholesky() {
            let d = c.solve(r);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        shift = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
        if shift > 1e12 * scale {
            return r / scale;
        }
    }
}
