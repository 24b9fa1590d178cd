//! Half-court geometry in feet: x across the baseline in `[0, 50]`, y from the
//! baseline toward half court in `[0, 35]`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Domain, DomainGrid, Point};

pub const COURT_WIDTH: f64 = 50.0;
pub const COURT_DEPTH: f64 = 35.0;
pub const BASKET: Point = Point { x: 25.0, y: 4.75 };
pub const ARC_RADIUS: f64 = 23.75;
pub const CORNER_DISTANCE: f64 = 22.0;
pub const CORNER_LINE_EXTENT: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtGeometry {
    pub basket: Point,
    pub arc_radius: f64,
    pub corner_distance: f64,
    pub corner_line_extent: f64,
}

impl Default for CourtGeometry {
    fn default() -> Self {
        CourtGeometry {
            basket: BASKET,
            arc_radius: ARC_RADIUS,
            corner_distance: CORNER_DISTANCE,
            corner_line_extent: CORNER_LINE_EXTENT,
        }
    }
}

impl CourtGeometry {
    pub fn distance_to_basket(&self, s: Point) -> f64 {
        (s.x - self.basket.x).hypot(s.y - self.basket.y)
    }

    pub fn is_three(&self, s: Point) -> bool {
        if s.y <= self.corner_line_extent {
            (s.x - self.basket.x).abs() >= self.corner_distance
        } else {
            self.distance_to_basket(s) >= self.arc_radius
        }
    }

    /// Shot value at `s`: 2 or 3.
    pub fn points(&self, s: Point) -> f64 {
        if self.is_three(s) {
            3.0
        } else {
            2.0
        }
    }
}

pub fn court_domain() -> Domain {
    Domain {
        x_min: 0.0,
        x_max: COURT_WIDTH,
        y_min: 0.0,
        y_max: COURT_DEPTH,
    }
}

/// One-foot cells over the half court (50×35).
pub fn court_grid() -> Result<DomainGrid> {
    DomainGrid::new(court_domain(), 50, 35)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shot_values() {
        let g = CourtGeometry::default();
        assert_eq!(g.points(Point::new(25.0, 10.0)), 2.0);
        assert_eq!(g.points(Point::new(25.0, 30.0)), 3.0);
        assert_eq!(g.points(Point::new(1.0, 2.0)), 3.0);
        assert_eq!(g.points(Point::new(49.5, 13.0)), 3.0);
        assert_eq!(g.points(Point::new(5.0, 13.0)), 2.0);
        assert_eq!(g.points(Point::new(25.0, 4.75 + 23.7)), 2.0);
        assert!((g.distance_to_basket(Point::new(28.0, 8.75)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn grid_shape() {
        let g = court_grid().unwrap();
        assert_eq!(g.n_cells(), 1750);
        assert_eq!(g.cell_area(), 1.0);
    }
}
