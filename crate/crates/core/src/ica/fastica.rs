//! Symmetric FastICA with the log-cosh contrast on PCA-whitened data.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::labeler::ComponentScores;
use crate::error::{Error, Result};
use crate::signal::Recording;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fit on every `fit_stride`-th sample; reconstruction always uses all samples.
    pub fit_stride: usize,
    /// Return the last iterate instead of failing when `max_iter` is hit.
    /// Several near-Gaussian sources leave the rotation inside their subspace
    /// undetermined, which is common in EEG backgrounds.
    pub accept_unconverged: bool,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            fit_stride: 1,
            accept_unconverged: false,
        }
    }
}

/// Fitted decomposition `S = unmixing · (X − mean)`, `X ≈ mean + mixing · S`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub mean: Array1<f64>,
    /// `[k × channels]`, whitening folded in.
    pub unmixing: Array2<f64>,
    /// `[channels × k]`, the pseudo-inverse of `unmixing` on the retained subspace.
    pub mixing: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// One entry per component once [`super::label_components`] has run.
    pub scores: Vec<ComponentScores>,
}

impl IcaModel {
    pub fn k(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.unmixing.ncols()
    }

    pub fn is_labeled(&self) -> bool {
        self.scores.len() == self.k()
    }

    /// Component time courses `[k × samples]` of `rec`.
    pub fn sources(&self, rec: &Recording) -> Result<Array2<f64>> {
        if rec.n_channels() != self.n_channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", self.n_channels()),
                got: format!("{} channels", rec.n_channels()),
            });
        }
        Ok(self.unmixing.dot(&centered(rec.data(), &self.mean)))
    }
}

pub(crate) fn centered(data: &Array2<f64>, mean: &Array1<f64>) -> Array2<f64> {
    let mut x = data.clone();
    for (mut row, m) in x.axis_iter_mut(Axis(0)).zip(mean.iter()) {
        row.mapv_inplace(|v| v - m);
    }
    x
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigen-decomposition sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// `(W Wᵀ)^(-1/2) W`.
fn symmetric_decorrelation(w: &Array2<f64>) -> Array2<f64> {
    let (values, vectors) = sorted_eigen(to_na(&w.dot(&w.t())));
    let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()),
    ));
    let factor = &vectors * inv_sqrt * vectors.transpose();
    from_na(&factor).dot(w)
}

/// Relative eigenvalue floor below which a covariance direction counts as empty.
const RANK_TOL: f64 = 1e-10;

fn strided(rec: &Recording, stride: usize) -> Array2<f64> {
    if stride <= 1 {
        rec.data().to_owned()
    } else {
        rec.data().slice(ndarray::s![.., ..;stride]).to_owned()
    }
}

/// Number of channel-covariance eigenvalues above `RANK_TOL` times the largest,
/// on every `fit_stride`-th sample. Re-referencing removes one dimension per
/// constraint, so this bounds the usable component count.
pub fn effective_rank(rec: &Recording, fit_stride: usize) -> usize {
    let x = strided(rec, fit_stride);
    if x.ncols() < 2 {
        return 0;
    }
    let mean = x.mean_axis(Axis(1)).expect("non-empty");
    let xc = centered(&x, &mean);
    let cov = xc.dot(&xc.t()) / x.ncols() as f64;
    let (values, _) = sorted_eigen(to_na(&cov));
    let top = values[0];
    if !(top > 0.0) {
        return 0;
    }
    values.iter().filter(|&&v| v > RANK_TOL * top).count()
}

/// Fits `k` independent components with default options.
pub fn fit_ica(rec: &Recording, k: usize, seed: u64) -> Result<IcaModel> {
    fit_ica_with(rec, k, seed, &IcaOptions::default())
}

pub fn fit_ica_with(rec: &Recording, k: usize, seed: u64, opts: &IcaOptions) -> Result<IcaModel> {
    let channels = rec.n_channels();
    if k == 0 || k > channels {
        return Err(Error::invalid(format!(
            "component count must lie in 1..={channels}, got {k}"
        )));
    }
    let fit_data = strided(rec, opts.fit_stride);
    let n = fit_data.ncols();
    if n < 2 * k {
        return Err(Error::RankDeficient(format!(
            "{n} samples cannot support {k} components"
        )));
    }

    let mean = fit_data.mean_axis(Axis(1)).expect("non-empty");
    let xc = centered(&fit_data, &mean);
    let cov = xc.dot(&xc.t()) / n as f64;
    let (values, vectors) = sorted_eigen(to_na(&cov));
    let top = values[0];
    if !(top > 0.0) || values[k - 1] <= RANK_TOL * top {
        return Err(Error::RankDeficient(format!(
            "eigenvalue {} of the channel covariance is {:.3e} (largest {:.3e})",
            k,
            values[k - 1],
            top
        )));
    }
    // Whitening K = D^(-1/2) Eᵀ and its inverse E D^(1/2), restricted to the top k.
    let basis = from_na(&vectors.columns(0, k).into_owned()); // channels × k
    let mut whitening = basis.t().to_owned();
    let mut dewhitening = basis.clone();
    for i in 0..k {
        let s = values[i].sqrt();
        whitening.row_mut(i).mapv_inplace(|v| v / s);
        dewhitening.column_mut(i).mapv_inplace(|v| v * s);
    }
    let z = whitening.dot(&xc);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Array2::from_shape_fn((k, k), |_| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);

    let inv_n = 1.0 / n as f64;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut g = w.dot(&z);
        let mut g_prime_mean = vec![0.0; k];
        for (mut row, gp) in g.axis_iter_mut(Axis(0)).zip(g_prime_mean.iter_mut()) {
            let mut acc = 0.0;
            row.mapv_inplace(|v| {
                let t = v.tanh();
                acc += 1.0 - t * t;
                t
            });
            *gp = acc * inv_n;
        }
        let mut next = g.dot(&z.t()) * inv_n;
        for (i, gp) in g_prime_mean.iter().enumerate() {
            let scaled = &w.row(i) * *gp;
            let mut row = next.row_mut(i);
            row -= &scaled;
        }
        let next = symmetric_decorrelation(&next);
        change = next
            .dot(&w.t())
            .diag()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < opts.tol {
            break;
        }
    }
    let converged = change < opts.tol;
    if !converged && opts.accept_unconverged {
        log::warn!("FastICA stopped after {iterations} iterations, last change {change:.3e}");
    } else if !converged {
        return Err(Error::NonConvergence {
            iterations,
            last_change: change,
        });
    }

    let mut unmixing = w.dot(&whitening);
    let mut mixing = dewhitening.dot(&w.t());
    canonicalize(&mut unmixing, &mut mixing);
    Ok(IcaModel {
        mean,
        unmixing,
        mixing,
        iterations,
        converged,
        scores: Vec::new(),
    })
}

/// Orders components by descending mixing-column energy and makes each column's largest entry positive.
fn canonicalize(unmixing: &mut Array2<f64>, mixing: &mut Array2<f64>) {
    let k = unmixing.nrows();
    let energy: Vec<f64> = mixing.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let un = unmixing.select(Axis(0), &order);
    let mx = mixing.select(Axis(1), &order);
    *unmixing = un;
    *mixing = mx;
    for i in 0..k {
        let col = mixing.column(i);
        let peak = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if peak < 0.0 {
            mixing.column_mut(i).mapv_inplace(|v| -v);
            unmixing.row_mut(i).mapv_inplace(|v| -v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed(seed: u64) -> (Recording, Array2<f64>) {
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sources = Array2::from_shape_fn((2, n), |(c, i)| {
            let t = i as f64 / 100.0;
            if c == 0 {
                (2.0 * std::f64::consts::PI * 1.3 * t).sin()
            } else {
                ((2.0 * std::f64::consts::PI * 0.7 * t).sin()).signum()
            }
        });
        let a = Array2::from_shape_fn((4, 2), |_| StandardNormal.sample(&mut rng));
        let x = a.dot(&sources);
        (Recording::with_default_names(x, 100.0).unwrap(), sources)
    }

    #[test]
    fn unmixing_inverts_mixing_on_subspace() {
        let (rec, _) = mixed(1);
        let model = fit_ica(&rec, 2, 3).unwrap();
        let eye = model.unmixing.dot(&model.mixing);
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - target).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_model() {
        let (rec, _) = mixed(2);
        let a = fit_ica(&rec, 2, 11).unwrap();
        let b = fit_ica(&rec, 2, 11).unwrap();
        assert_eq!(a.unmixing, b.unmixing);
    }

    #[test]
    fn rank_deficient_data_errors() {
        let (rec, _) = mixed(3);
        // Four channels spanned by two sources: a third component does not exist.
        let err = fit_ica(&rec, 3, 0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
    }

    #[test]
    fn iteration_cap_reports_count() {
        let (rec, _) = mixed(4);
        let opts = IcaOptions {
            tol: 0.0,
            max_iter: 3,
            ..IcaOptions::default()
        };
        match fit_ica_with(&rec, 2, 0, &opts).unwrap_err() {
            Error::NonConvergence { iterations, .. } => assert_eq!(iterations, 3),
            other => panic!("unexpected {other}"),
        }
        let model = fit_ica_with(
            &rec,
            2,
            0,
            &IcaOptions {
                accept_unconverged: true,
                ..opts
            },
        )
        .unwrap();
        assert!(!model.converged);
        assert_eq!(model.iterations, 3);
    }

    #[test]
    fn invalid_component_count() {
        let (rec, _) = mixed(5);
        assert!(fit_ica(&rec, 0, 0).is_err());
        assert!(fit_ica(&rec, 5, 0).is_err());
    }
}
