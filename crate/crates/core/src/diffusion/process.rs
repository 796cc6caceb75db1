use super::NoiseSchedule;
use crate::error::Result;
use crate::media::FloatImage;
use crate::nn::Scalar;

/// How to recover `x0` from a noisy sample and a noise estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum X0Mode {
    /// `(x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`, the algebraic inverse
    /// of the forward sample.
    #[default]
    ExactInversion,
    /// `(x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t)`, the one-step
    /// posterior-mean form.
    PaperEq7,
}

impl std::str::FromStr for X0Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_inversion" | "exact-inversion" => Ok(Self::ExactInversion),
            "eq7" | "paper_eq7" | "paper-eq7" => Ok(Self::PaperEq7),
            other => Err(crate::Error::InvalidArgument(format!("unknown x0 mode {other}"))),
        }
    }
}

pub(crate) fn q_sample_slice<T: Scalar>(sched: &NoiseSchedule, x0: &[T], t: usize, eps: &[T]) -> Vec<T> {
    let a = sched.alpha_bar(t).sqrt();
    let b = (1.0 - sched.alpha_bar(t)).sqrt();
    x0.iter()
        .zip(eps)
        .map(|(&x, &e)| T::lit(a * x.as_f64() + b * e.as_f64()))
        .collect()
}

pub(crate) fn predict_x0_slice<T: Scalar>(
    sched: &NoiseSchedule,
    x_t: &[T],
    t: usize,
    eps_hat: &[T],
    mode: X0Mode,
) -> Vec<T> {
    let (k_eps, k_out) = match mode {
        X0Mode::ExactInversion => (
            (1.0 - sched.alpha_bar(t)).sqrt(),
            1.0 / sched.alpha_bar(t).sqrt(),
        ),
        X0Mode::PaperEq7 => (
            sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt(),
            1.0 / sched.alpha(t).sqrt(),
        ),
    };
    x_t.iter()
        .zip(eps_hat)
        .map(|(&x, &e)| T::lit((x.as_f64() - k_eps * e.as_f64()) * k_out))
        .collect()
}

/// Forward noising in closed form:
/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(x0: &FloatImage, t: usize, eps: &FloatImage, sched: &NoiseSchedule) -> Result<FloatImage> {
    sched.check_t(t)?;
    x0.ensure_same_shape(eps)?;
    Ok(x0.with_data(q_sample_slice(sched, x0.data(), t, eps.data())))
}

/// Mean and variance of `q(x_{t-1} | x_t, x0)`.
pub fn posterior(
    x0: &FloatImage,
    x_t: &FloatImage,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<(FloatImage, f64)> {
    sched.check_t(t)?;
    x0.ensure_same_shape(x_t)?;
    let (c0, ct) = sched.posterior_mean_coefs(t);
    let mean = x0
        .data()
        .iter()
        .zip(x_t.data())
        .map(|(&a, &b)| c0 * a + ct * b)
        .collect();
    Ok((x0.with_data(mean), sched.posterior_variance(t)))
}

pub fn predict_x0(
    x_t: &FloatImage,
    t: usize,
    eps_hat: &FloatImage,
    sched: &NoiseSchedule,
    mode: X0Mode,
) -> Result<FloatImage> {
    sched.check_t(t)?;
    x_t.ensure_same_shape(eps_hat)?;
    Ok(x_t.with_data(predict_x0_slice(sched, x_t.data(), t, eps_hat.data(), mode)))
}
