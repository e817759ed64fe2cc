//! Float helpers routed through `libm` so results do not depend on the platform libm.

#[inline]
pub fn tanh(x: f32) -> f32 {
    libm::tanhf(x)
}

#[inline]
pub fn exp(x: f32) -> f32 {
    libm::expf(x)
}

#[inline]
pub fn sqrt(x: f32) -> f32 {
    libm::sqrtf(x)
}

#[inline]
pub fn sqrt64(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln64(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log2_64(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn sin64(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos64(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn pow(x: f32, y: f32) -> f32 {
    libm::powf(x, y)
}

#[inline]
pub fn floor64(x: f64) -> f64 {
    libm::floor(x)
}
