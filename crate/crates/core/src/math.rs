//! Scalar math routed through `libm` so the crate builds without `std`.

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
