//! Phase conventions: wrapped phases live in (-180, 180] degrees and are
//! unwrapped along increasing frequency (or capacitance) only.

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(x: f64) -> f64 {
    let y = x.rem_euclid(360.0);
    if y > 180.0 {
        y - 360.0
    } else {
        y
    }
}

/// Unwraps a sequence of wrapped phases so that consecutive samples never
/// jump by more than 180 degrees. Every output differs from its input by an
/// exact integer number of turns.
pub fn unwrap_deg(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut turns = 0i64;
    let mut prev: Option<f64> = None;
    for &w in wrapped {
        if let Some(p) = prev {
            let mut candidate = w + 360.0 * turns as f64;
            while candidate - p > 180.0 {
                turns -= 1;
                candidate = w + 360.0 * turns as f64;
            }
            while candidate - p <= -180.0 {
                turns += 1;
                candidate = w + 360.0 * turns as f64;
            }
            out.push(candidate);
            prev = Some(candidate);
        } else {
            out.push(w);
            prev = Some(w);
        }
    }
    out
}
