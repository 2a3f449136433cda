use serde::{Deserialize, Serialize};

/// Horizontal position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn inside_square(self, side: f64) -> bool {
        (0.0..=side).contains(&self.x) && (0.0..=side).contains(&self.y)
    }

    pub fn clamp_to_square(self, side: f64) -> Point {
        Point::new(self.x.clamp(0.0, side), self.y.clamp(0.0, side))
    }
}
