//! Heading arithmetic on the circle. Headings are degrees clockwise from
//! geographic north, normalized to (-180, 180].

/// Normalize an angle in degrees to (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

/// Smallest signed difference `a - b` in degrees, in (-180, 180].
pub fn diff_deg(a: f64, b: f64) -> f64 {
    wrap_deg(a - b)
}

/// Bearing from `(x0, y0)` to `(x1, y1)` in a north/east frame.
pub fn bearing_deg(x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    wrap_deg((y1 - y0).atan2(x1 - x0).to_degrees())
}
