use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels, `(x, y)` at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        let b = Self { x, y, width, height };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.width, self.height].iter().all(|v| v.is_finite());
        if !finite || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::Degenerate(format!("invalid box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let h = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        w * h
    }

    /// Componentwise `self + (other - self) * t`.
    pub fn lerp(&self, other: &BoundingBox, t: f64) -> BoundingBox {
        BoundingBox {
            x: self.x + (other.x - self.x) * t,
            y: self.y + (other.y - self.y) * t,
            width: self.width + (other.width - self.width) * t,
            height: self.height + (other.height - self.height) * t,
        }
    }
}

/// `area(detected ∩ tracked) / area(tracked)`. Not symmetric.
pub fn overlap_ratio(detected: &BoundingBox, tracked: &BoundingBox) -> Result<f64> {
    if !(tracked.area() > 0.0) {
        return Err(Error::Degenerate(format!("tracked box has area {}", tracked.area())));
    }
    Ok(detected.intersection_area(tracked) / tracked.area())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(overlap_ratio(&b(0.0, 0.0, 10.0, 10.0), &b(0.0, 0.0, 10.0, 10.0)).unwrap(), 1.0);
        assert_eq!(overlap_ratio(&b(0.0, 0.0, 10.0, 10.0), &b(20.0, 0.0, 10.0, 10.0)).unwrap(), 0.0);
        assert_eq!(overlap_ratio(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 5.0, 10.0, 10.0)).unwrap(), 0.25);
    }

    #[test]
    fn asymmetric_and_containment() {
        let big = b(0.0, 0.0, 20.0, 20.0);
        let small = b(5.0, 5.0, 5.0, 5.0);
        assert_eq!(overlap_ratio(&big, &small).unwrap(), 1.0);
        assert_eq!(overlap_ratio(&small, &big).unwrap(), 25.0 / 400.0);
    }

    #[test]
    fn degenerate_tracked_box() {
        let zero = BoundingBox { x: 0.0, y: 0.0, width: 0.0, height: 5.0 };
        assert!(overlap_ratio(&b(0.0, 0.0, 1.0, 1.0), &zero).is_err());
        assert!(BoundingBox::new(0.0, 0.0, -1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn self_overlap_is_one(x in -100.0f64..100.0, y in -100.0f64..100.0, w in 0.1f64..50.0, h in 0.1f64..50.0) {
            let bx = b(x, y, w, h);
            prop_assert!((overlap_ratio(&bx, &bx).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_intersection(shift in 0.0f64..12.0, extra in 0.0f64..5.0) {
            // sliding the detection toward the tracked box never lowers the ratio
            let tracked = b(0.0, 0.0, 10.0, 10.0);
            let far = b(shift + extra, 0.0, 10.0, 10.0);
            let near = b(shift, 0.0, 10.0, 10.0);
            let (r_far, r_near) = (overlap_ratio(&far, &tracked).unwrap(), overlap_ratio(&near, &tracked).unwrap());
            prop_assert!(far.intersection_area(&tracked) <= near.intersection_area(&tracked));
            prop_assert!(r_far <= r_near);
            prop_assert!((0.0..=1.0).contains(&r_near));
        }
    }
}
