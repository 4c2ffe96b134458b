//! Monte-Carlo divergences between Gaussian mixture models, full and
//! pattern-weighted, plus the energy distance between two samples.
//!
//! Pattern-weighted versions draw `(X, M)` jointly: `X` from one model, `M`
//! from the mechanism's pattern probabilities at `X`, and compare the two
//! models' densities of the observed block `X^(M)`.
//!
//! Draws are split into fixed blocks of [`BLOCK`] with their own random
//! streams; blocks run in parallel and are merged in order, so results do
//! not depend on the number of threads. Within a block, points and masks
//! come from separate streams, so a full-data estimator and a masked one
//! seeded alike see the same points.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{CompleteDataset, Mask};
use crate::gaussian::{log_sum_exp, GaussParams, KernelError, MaskedFactor, SharedMixture};
use crate::mdm::{MdmError, MdmSpec};
use crate::rng::{self, SimRng};

pub const BLOCK: usize = 4096;

/// Largest tolerated share of non-finite summands.
pub const MAX_NONFINITE_SHARE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Mdm(#[from] MdmError),
    #[error("{count} of {n} summands were not finite")]
    NonFinite { count: usize, n: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("empty sample")]
    Empty,
    #[error("n_mc must be positive")]
    NoDraws,
}

/// A density on `R^d` with closed-form masked marginals.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    SingleGauss(SharedMixture),
    GaussMixtureShared(SharedMixture),
    /// Equal-weight average of mixtures, e.g. one per posterior draw.
    PosteriorAverage(Vec<SharedMixture>),
}

impl DensityModel {
    pub fn gaussian(params: GaussParams) -> Self {
        DensityModel::SingleGauss(SharedMixture::single(params))
    }

    pub fn parts(&self) -> &[SharedMixture] {
        match self {
            DensityModel::SingleGauss(m) | DensityModel::GaussMixtureShared(m) => std::slice::from_ref(m),
            DensityModel::PosteriorAverage(v) => v,
        }
    }

    pub fn dim(&self) -> usize {
        self.parts()[0].dim()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let parts = self.parts();
        let t = if parts.len() == 1 { 0 } else { rng.random_range(0..parts.len()) };
        parts[t].sample(rng)
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator { model: self, factors: vec![HashMap::new(); self.parts().len()] }
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64, KernelError> {
        self.evaluator().logpdf(x)
    }

    pub fn marginal_logpdf(&self, x_obs: &[f64], mask: Mask) -> Result<f64, KernelError> {
        self.evaluator().marginal_logpdf(x_obs, mask)
    }
}

/// Evaluates a [`DensityModel`], caching one factor per part and pattern.
#[derive(Debug)]
pub struct Evaluator<'a> {
    model: &'a DensityModel,
    factors: Vec<HashMap<Mask, MaskedFactor>>,
}

impl Evaluator<'_> {
    pub fn marginal_logpdf(&mut self, x_obs: &[f64], mask: Mask) -> Result<f64, KernelError> {
        if x_obs.len() != mask.n_observed() {
            return Err(KernelError::Dimension { expected: mask.n_observed(), found: x_obs.len() });
        }
        let parts = self.model.parts();
        let mut terms = Vec::with_capacity(parts.len());
        for (m, cache) in parts.iter().zip(&mut self.factors) {
            if !cache.contains_key(&mask) {
                cache.insert(mask, MaskedFactor::new(m.cov(), mask)?);
            }
            terms.push(m.marginal_logpdf_with(&cache[&mask], x_obs));
        }
        if terms.len() == 1 {
            return Ok(terms[0]);
        }
        Ok(log_sum_exp(terms.into_iter()) - (parts.len() as f64).ln())
    }

    pub fn logpdf(&mut self, x: &[f64]) -> Result<f64, KernelError> {
        self.marginal_logpdf(x, Mask::all_observed(self.model.dim()))
    }
}

/// A Monte-Carlo average with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Finite summands used.
    pub n_mc: usize,
    /// Summands dropped for being non-finite.
    pub nonfinite: usize,
    /// Whether the reported value was clamped into its valid range.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    n: usize,
    sum: f64,
    sumsq: f64,
    nonfinite: usize,
}

impl Accum {
    fn push(&mut self, v: f64) {
        if v.is_finite() {
            self.n += 1;
            self.sum += v;
            self.sumsq += v * v;
        } else {
            self.nonfinite += 1;
        }
    }

    fn merge(&mut self, o: Accum) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
        self.nonfinite += o.nonfinite;
    }

    fn finish(self, total: usize) -> Result<McEstimate, DivergenceError> {
        if self.nonfinite as f64 > MAX_NONFINITE_SHARE * total as f64 || self.n == 0 {
            return Err(DivergenceError::NonFinite { count: self.nonfinite, n: total });
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 { ((self.sumsq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Ok(McEstimate {
            value: mean,
            std_error: (var / n).sqrt(),
            n_mc: self.n,
            nonfinite: self.nonfinite,
            clamped: false,
        })
    }
}

/// Runs `n_mc` summands in blocks. `summand` gets a point stream and a mask
/// stream for the block.
fn run_mc<R, S, I, F>(n_mc: usize, rng: &mut R, init: I, summand: F) -> Result<McEstimate, DivergenceError>
where
    R: Rng + ?Sized,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &mut SimRng, &mut SimRng) -> Result<f64, DivergenceError> + Sync,
{
    if n_mc == 0 {
        return Err(DivergenceError::NoDraws);
    }
    let base: u64 = rng.random();
    let blocks = n_mc.div_ceil(BLOCK);
    let parts: Vec<Accum> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut state = init();
            let mut points = rng::stream(base, 2 * b as u64);
            let mut masks = rng::stream(base, 2 * b as u64 + 1);
            let len = BLOCK.min(n_mc - b * BLOCK);
            let mut acc = Accum::default();
            for _ in 0..len {
                acc.push(summand(&mut state, &mut points, &mut masks)?);
            }
            Ok(acc)
        })
        .collect::<Result<_, DivergenceError>>()?;
    let mut total = Accum::default();
    for p in parts {
        total.merge(p);
    }
    total.finish(n_mc)
}

fn check_dims(a: &DensityModel, b: &DensityModel) -> Result<(), DivergenceError> {
    if a.dim() != b.dim() {
        return Err(DivergenceError::Dimension(a.dim(), b.dim()));
    }
    Ok(())
}

fn check_mdm(m: &DensityModel, mdm: &MdmSpec) -> Result<(), DivergenceError> {
    mdm.validate()?;
    if mdm.dim() != m.dim() {
        return Err(DivergenceError::Dimension(m.dim(), mdm.dim()));
    }
    Ok(())
}

/// `log p^(M)(X^(M)) − log q^(M)(X^(M))` with `X ~ p`, `M ~ mdm(X)`. An
/// all-missing pattern contributes 0.
fn masked_log_ratio_mc<R, G>(
    p: &DensityModel,
    q: &DensityModel,
    mdm: &MdmSpec,
    n_mc: usize,
    rng: &mut R,
    post: G,
) -> Result<McEstimate, DivergenceError>
where
    R: Rng + ?Sized,
    G: Fn(f64) -> f64 + Sync,
{
    check_dims(p, q)?;
    check_mdm(p, mdm)?;
    run_mc(
        n_mc,
        rng,
        || (p.evaluator(), q.evaluator()),
        |(ep, eq), points, masks| {
            let x = p.sample(points);
            let mask = mdm.draw_pattern(&x, masks.random())?;
            if mask.is_empty_pattern() {
                return Ok(post(0.0));
            }
            let obs: Vec<f64> = mask.observed_indices().iter().map(|&j| x[j]).collect();
            Ok(post(ep.marginal_logpdf(&obs, mask)? - eq.marginal_logpdf(&obs, mask)?))
        },
    )
}

/// Pattern-weighted KL: mean masked log-ratio over the true masked joint.
pub fn kl_tilde_mc<R: Rng + ?Sized>(
    p_true: &DensityModel,
    p_alt: &DensityModel,
    mdm: &MdmSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, DivergenceError> {
    masked_log_ratio_mc(p_true, p_alt, mdm, n_mc, rng, |l| l)
}

/// Second moment of the masked log-ratio.
pub fn v_tilde_mc<R: Rng + ?Sized>(
    p_true: &DensityModel,
    p_alt: &DensityModel,
    mdm: &MdmSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, DivergenceError> {
    masked_log_ratio_mc(p_true, p_alt, mdm, n_mc, rng, |l| l * l)
}

pub fn kl_mc<R: Rng + ?Sized>(
    p_true: &DensityModel,
    p_alt: &DensityModel,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, DivergenceError> {
    check_dims(p_true, p_alt)?;
    run_mc(
        n_mc,
        rng,
        || (p_true.evaluator(), p_alt.evaluator()),
        |(ep, eq), points, _| {
            let x = p_true.sample(points);
            Ok(ep.logpdf(&x)? - eq.logpdf(&x)?)
        },
    )
}

/// `2 − 2A` from an affinity estimate, with `A` clamped to `[0, 1]`.
fn from_affinity(a: McEstimate) -> McEstimate {
    let clamped = !(0.0..=1.0).contains(&a.value);
    McEstimate { value: 2.0 - 2.0 * a.value.clamp(0.0, 1.0), std_error: 2.0 * a.std_error, clamped, ..a }
}

/// Squared Hellinger distance `2 − 2 E_{X~q} √(p(X)/q(X))`.
pub fn hellinger_mc<R: Rng + ?Sized>(
    p: &DensityModel,
    q: &DensityModel,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, DivergenceError> {
    check_dims(p, q)?;
    let a = run_mc(
        n_mc,
        rng,
        || (p.evaluator(), q.evaluator()),
        |(ep, eq), points, _| {
            let x = q.sample(points);
            Ok((0.5 * (ep.logpdf(&x)? - eq.logpdf(&x)?)).exp())
        },
    )?;
    Ok(from_affinity(a))
}

/// Pattern-weighted squared Hellinger distance
/// `2 − 2 E √(p^(M)(X^(M)) / q^(M)(X^(M)))` with `X ~ q`, `M ~ mdm(X)`.
/// Valid when the mechanism is MAR.
pub fn hellinger_tilde_mc<R: Rng + ?Sized>(
    p: &DensityModel,
    q: &DensityModel,
    mdm: &MdmSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate, DivergenceError> {
    let a = masked_log_ratio_mc(q, p, mdm, n_mc, rng, |l| (-0.5 * l).exp())?;
    Ok(from_affinity(a))
}

/// How within-sample mean distances are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyEstimator {
    /// All ordered pairs including `i = j`. Nonnegative, and exactly 0 for
    /// identical samples.
    #[default]
    VStatistic,
    /// Pairs with `i ≠ j` only; unbiased for the within terms.
    UWithin,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sum of `‖a_i − b_j‖` over all pairs, accumulated row by row in order.
fn pair_sum(a: &CompleteDataset, b: &CompleteDataset) -> f64 {
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.row(i);
            b.rows().map(|y| dist(x, y)).sum::<f64>()
        })
        .collect();
    rows.iter().sum()
}

/// `2 E‖A − B‖ − E‖A − A'‖ − E‖B − B'‖` with Euclidean norms.
pub fn energy_distance(
    a: &CompleteDataset,
    b: &CompleteDataset,
    estimator: EnergyEstimator,
) -> Result<f64, DivergenceError> {
    if a.is_empty() || b.is_empty() {
        return Err(DivergenceError::Empty);
    }
    if a.dim() != b.dim() {
        return Err(DivergenceError::Dimension(a.dim(), b.dim()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let cross = pair_sum(a, b) / (na * nb);
    let within = |s: &CompleteDataset, n: f64| match estimator {
        EnergyEstimator::VStatistic => pair_sum(s, s) / (n * n),
        EnergyEstimator::UWithin if n > 1.0 => pair_sum(s, s) / (n * (n - 1.0)),
        EnergyEstimator::UWithin => 0.0,
    };
    Ok(2.0 * cross - within(a, na) - within(b, nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::CovMatrix;
    use crate::rng::seeded;
    use nalgebra::DMatrix;

    fn gauss(mean: Vec<f64>, cov: CovMatrix) -> DensityModel {
        DensityModel::gaussian(GaussParams::new(mean, cov).unwrap())
    }

    fn g1(mu: f64, var: f64) -> DensityModel {
        gauss(vec![mu], CovMatrix::diagonal(&[var]).unwrap())
    }

    fn random_gauss3(seed: u64) -> DensityModel {
        let mut r = seeded(seed);
        let a = DMatrix::from_fn(3, 3, |_, _| r.random_range(-1.0..1.0));
        let cov = CovMatrix::new(&a * a.transpose() + DMatrix::identity(3, 3) * 0.5).unwrap();
        gauss((0..3).map(|_| r.random_range(-1.0..1.0)).collect(), cov)
    }

    fn within(e: &McEstimate, target: f64, k: f64) -> bool {
        (e.value - target).abs() <= k * e.std_error
    }

    #[test]
    fn identical_models_give_exact_zero() {
        let p = random_gauss3(1);
        let mdm = MdmSpec::step_mar3d(0.05).unwrap();
        for e in [
            kl_tilde_mc(&p, &p, &mdm, 5000, &mut seeded(1)).unwrap(),
            v_tilde_mc(&p, &p, &mdm, 5000, &mut seeded(1)).unwrap(),
            kl_mc(&p, &p, 5000, &mut seeded(1)).unwrap(),
        ] {
            assert_eq!((e.value, e.std_error), (0.0, 0.0));
        }
        let h = hellinger_mc(&p, &p, 5000, &mut seeded(2)).unwrap();
        assert!(h.value.abs() < 1e-12);
        let ht = hellinger_tilde_mc(&p, &p, &mdm, 5000, &mut seeded(2)).unwrap();
        assert!(ht.value.abs() < 1e-12);
    }

    #[test]
    fn fully_observed_mechanism_reduces_to_full_data() {
        let (p, q) = (random_gauss3(3), random_gauss3(4));
        let full = MdmSpec::fully_observed(3);
        let kt = kl_tilde_mc(&p, &q, &full, 10_000, &mut seeded(5)).unwrap();
        let k = kl_mc(&p, &q, 10_000, &mut seeded(5)).unwrap();
        assert_eq!(kt, k);
        let vt = v_tilde_mc(&p, &q, &full, 10_000, &mut seeded(5)).unwrap();
        let second = run_mc(
            10_000,
            &mut seeded(5),
            || (p.evaluator(), q.evaluator()),
            |(a, b), pts, _| {
                let x = p.sample(pts);
                Ok((a.logpdf(&x)? - b.logpdf(&x)?).powi(2))
            },
        )
        .unwrap();
        assert_eq!(vt, second);
        let ht = hellinger_tilde_mc(&p, &q, &full, 10_000, &mut seeded(6)).unwrap();
        let h = hellinger_mc(&p, &q, 10_000, &mut seeded(6)).unwrap();
        assert_eq!(ht, h);
    }

    #[test]
    fn kl_matches_one_dimensional_closed_form() {
        let (m1, s1, m2, s2): (f64, f64, f64, f64) = (0.3, 1.2, -0.4, 0.8);
        let closed = (s2 / s1).ln() + (s1 * s1 + (m1 - m2).powi(2)) / (2.0 * s2 * s2) - 0.5;
        let e = kl_mc(&g1(m1, s1 * s1), &g1(m2, s2 * s2), 100_000, &mut seeded(7)).unwrap();
        assert!(within(&e, closed, 3.0), "{} vs {closed} (se {})", e.value, e.std_error);
        let back = kl_mc(&g1(m2, s2 * s2), &g1(m1, s1 * s1), 100_000, &mut seeded(8)).unwrap();
        let se = (e.std_error.powi(2) + back.std_error.powi(2)).sqrt();
        assert!((e.value - back.value).abs() > 5.0 * se);
    }

    #[test]
    fn hellinger_matches_one_dimensional_closed_form_and_is_symmetric() {
        let (m1, m2, var): (f64, f64, f64) = (0.0, 1.3, 0.9);
        let closed = 2.0 * (1.0 - (-(m1 - m2) * (m1 - m2) / (8.0 * var)).exp());
        let a = hellinger_mc(&g1(m1, var), &g1(m2, var), 100_000, &mut seeded(9)).unwrap();
        assert!(within(&a, closed, 3.0), "{} vs {closed}", a.value);
        let b = hellinger_mc(&g1(m2, var), &g1(m1, var), 100_000, &mut seeded(10)).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() <= 3.0 * se);
        assert!(!a.clamped);
    }

    #[test]
    fn sandwiches_hold_on_random_pairs() {
        let mdm = MdmSpec::step_mar3d(0.05).unwrap();
        for s in 0..4 {
            let (p, q) = (random_gauss3(100 + s), random_gauss3(200 + s));
            let kt = kl_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(s)).unwrap();
            let k = kl_mc(&p, &q, 20_000, &mut seeded(s)).unwrap();
            let vt = v_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(s)).unwrap();
            assert!(kt.value >= -3.0 * kt.std_error);
            assert!(kt.value <= k.value + 3.0 * (kt.std_error.powi(2) + k.std_error.powi(2)).sqrt());
            assert!(vt.value >= 0.0);
            assert!(vt.value >= kt.value * kt.value - 3.0 * (vt.std_error + 2.0 * kt.value.abs() * kt.std_error));
            let h = hellinger_mc(&p, &q, 20_000, &mut seeded(s)).unwrap();
            let ht = hellinger_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(s)).unwrap();
            let se = (h.std_error.powi(2) + ht.std_error.powi(2)).sqrt();
            assert!(0.05 * h.value <= ht.value + 3.0 * se);
            assert!(ht.value <= h.value + 3.0 * se);
        }
    }

    #[test]
    fn std_error_scales_with_draws() {
        let (p, q) = (random_gauss3(11), random_gauss3(12));
        let a = kl_mc(&p, &q, 40_000, &mut seeded(1)).unwrap();
        let b = kl_mc(&p, &q, 80_000, &mut seeded(2)).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let (p, q) = (random_gauss3(13), random_gauss3(14));
        let mdm = MdmSpec::step_mar3d(0.05).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| kl_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(3)));
        let b = four.install(|| kl_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(3)));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn posterior_average_density() {
        let a = SharedMixture::single(GaussParams::new(vec![0.0], CovMatrix::identity(1)).unwrap());
        let b = SharedMixture::single(GaussParams::new(vec![2.0], CovMatrix::identity(1)).unwrap());
        let avg = DensityModel::PosteriorAverage(vec![a.clone(), b.clone()]);
        let x = [0.7];
        let expect = (0.5 * (a.logpdf(&x).exp() + b.logpdf(&x).exp())).ln();
        assert!((avg.logpdf(&x).unwrap() - expect).abs() < 1e-14);
        let m = SharedMixture::new(vec![0.5, 0.5], vec![vec![0.0], vec![2.0]], CovMatrix::identity(1)).unwrap();
        assert!((DensityModel::GaussMixtureShared(m).logpdf(&x).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn energy_distance_cases() {
        let zero = CompleteDataset::from_rows(1, &[vec![0.0]]).unwrap();
        let one = CompleteDataset::from_rows(1, &[vec![1.0]]).unwrap();
        assert_eq!(energy_distance(&zero, &one, EnergyEstimator::VStatistic).unwrap(), 2.0);

        let mut r = seeded(1);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
        let a = CompleteDataset::from_rows(3, &rows).unwrap();
        assert_eq!(energy_distance(&a, &a, EnergyEstimator::VStatistic).unwrap(), 0.0);
        let mut rev = rows.clone();
        rev.reverse();
        let b = CompleteDataset::from_rows(3, &rev).unwrap();
        let c = CompleteDataset::from_rows(3, &rows[..150]).unwrap();
        let e1 = energy_distance(&a, &c, EnergyEstimator::VStatistic).unwrap();
        let e2 = energy_distance(&b, &c, EnergyEstimator::VStatistic).unwrap();
        assert!((e1 - e2).abs() <= 1e-12 * e1.abs().max(1.0));
        assert!(energy_distance(&a, &a, EnergyEstimator::UWithin).unwrap() < 0.0);
        let two = CompleteDataset::from_rows(2, &[vec![0.0, 0.0]]).unwrap();
        assert!(energy_distance(&a, &two, EnergyEstimator::VStatistic).is_err());
    }

    #[test]
    fn energy_distance_orders_shifted_samples() {
        let p = gauss(vec![0.0; 3], CovMatrix::identity(3));
        let q = gauss(vec![1.0; 3], CovMatrix::identity(3));
        let draw = |m: &DensityModel, seed| {
            let mut r = seeded(seed);
            let rows: Vec<Vec<f64>> = (0..2000).map(|_| m.sample(&mut r)).collect();
            CompleteDataset::from_rows(3, &rows).unwrap()
        };
        let (a, b, c) = (draw(&p, 1), draw(&p, 2), draw(&q, 3));
        let same = energy_distance(&a, &b, EnergyEstimator::VStatistic).unwrap();
        let shifted = energy_distance(&a, &c, EnergyEstimator::VStatistic).unwrap();
        assert!(same < shifted);
        assert!(same >= 0.0);
    }

    #[test]
    fn zero_draws_rejected() {
        let p = g1(0.0, 1.0);
        assert!(matches!(kl_mc(&p, &p, 0, &mut seeded(1)), Err(DivergenceError::NoDraws)));
        let q = random_gauss3(1);
        assert!(kl_mc(&p, &q, 10, &mut seeded(1)).is_err());
    }
}
