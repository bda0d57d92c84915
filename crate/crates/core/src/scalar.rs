//! Scalar abstraction for the numerical core.
//!
//! Networks, replay, tabular Q-values and the linear baseline are generic over
//! [`Real`], which is implemented for `f32` and `f64`. The crate defaults to
//! `f64` everywhere through the aliases in the crate root.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or computed constant.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Index of the largest element, ties broken by lowest index.
/// NaN entries never win.
pub fn argmax<T: Real>(xs: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            None if !x.is_nan() => best = Some((i, x)),
            Some((_, b)) if x > b => best = Some((i, x)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
        .or(if xs.is_empty() { None } else { Some(0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5f64, 0.5]), Some(0));
        assert_eq!(argmax(&[0.1f64, 0.9, 0.3]), Some(1));
        assert_eq!(argmax::<f32>(&[]), None);
        assert_eq!(argmax(&[f64::NAN, 1.0]), Some(1));
    }

    #[test]
    fn cast_roundtrips_small_values() {
        assert_eq!(<f32 as Real>::cast(0.5), 0.5f32);
        assert_eq!(<f64 as Real>::cast(-0.2), -0.2f64);
    }
}
