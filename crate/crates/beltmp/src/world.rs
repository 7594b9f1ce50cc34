//! Geometric world model: polygonal obstacles, named rectangular regions,
//! point landmarks and the collision queries that define the free space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Robot pose (x, y, theta) with theta normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Normalize an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.xmin >= self.xmin
            && other.xmax <= self.xmax
            && other.ymin >= self.ymin
            && other.ymax <= self.ymax
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.xmin < other.xmax
            && other.xmin < self.xmax
            && self.ymin < other.ymax
            && other.ymin < self.ymax
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        )
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin).max(0.0) * (self.ymax - self.ymin).max(0.0)
    }

    /// Minimum Euclidean distance between two rectangles (0 if they overlap).
    pub fn distance_to_rect(&self, other: &Rect) -> f64 {
        let dx = (other.xmin - self.xmax).max(self.xmin - other.xmax).max(0.0);
        let dy = (other.ymin - self.ymax).max(self.ymin - other.ymax).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Convex polygon, vertices in counter-clockwise order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<(f64, f64)>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self, WorldError> {
        if vertices.len() < 3 {
            return Err(WorldError::DegeneratePolygon(vertices.len()));
        }
        let mut poly = ConvexPolygon { vertices };
        // Reorder to counter-clockwise if authored clockwise.
        if poly.signed_area() < 0.0 {
            poly.vertices.reverse();
        }
        if !poly.is_convex() {
            return Err(WorldError::NonConvexPolygon);
        }
        Ok(poly)
    }

    pub fn rect(r: &Rect) -> Self {
        ConvexPolygon {
            vertices: vec![
                (r.xmin, r.ymin),
                (r.xmax, r.ymin),
                (r.xmax, r.ymax),
                (r.xmin, r.ymax),
            ],
        }
    }

    fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut s = 0.0;
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            s += x0 * y1 - x1 * y0;
        }
        0.5 * s
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            let (x2, y2) = self.vertices[(i + 2) % n];
            let cross = (x1 - x0) * (y2 - y1) - (y1 - y0) * (x2 - x1);
            if cross < -1e-12 {
                return false;
            }
        }
        true
    }

    /// Point strictly inside or on the boundary.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
            if cross < 0.0 {
                return false;
            }
        }
        true
    }

    /// Euclidean distance from a point to the polygon (0 inside).
    pub fn distance_to_point(&self, x: f64, y: f64) -> f64 {
        if self.contains(x, y) {
            return 0.0;
        }
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            let dx = x1 - x0;
            let dy = y1 - y0;
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((x - x0) * dx + (y - y0) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let px = x0 + t * dx;
            let py = y0 + t * dy;
            best = best.min(((x - px).powi(2) + (y - py).powi(2)).sqrt());
        }
        best
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.vertices.len() as f64;
        let (mut cx, mut cy) = (0.0, 0.0);
        for &(x, y) in &self.vertices {
            cx += x;
            cy += y;
        }
        (cx / n, cy / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("obstacle polygon is not convex")]
    NonConvexPolygon,
    #[error("region `{0}` lies outside map bounds")]
    RegionOutOfBounds(String),
    #[error("regions `{0}` and `{1}` overlap")]
    RegionsOverlap(String, String),
    #[error("duplicate landmark id `{0}`")]
    DuplicateLandmark(String),
}

/// Pre-mapped environment: bounds, convex obstacles, named regions, landmarks.
/// Immutable after construction; safe to share across parallel searches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldMap {
    pub bounds: Rect,
    pub obstacles: Vec<ConvexPolygon>,
    pub regions: BTreeMap<String, Rect>,
    pub landmarks: Vec<Landmark>,
    /// Optional obstacle inflation radius in meters (0 = point robot).
    pub inflation: f64,
}

impl WorldMap {
    pub fn new(
        bounds: Rect,
        obstacles: Vec<ConvexPolygon>,
        regions: BTreeMap<String, Rect>,
        landmarks: Vec<Landmark>,
    ) -> Result<Self, WorldError> {
        let names: Vec<&String> = regions.keys().collect();
        for (name, r) in &regions {
            if !bounds.contains_rect(r) {
                return Err(WorldError::RegionOutOfBounds(name.clone()));
            }
        }
        for i in 0..names.len() {
            for j in (i + 1)..names.len() {
                if regions[names[i]].intersects(&regions[names[j]]) {
                    return Err(WorldError::RegionsOverlap(
                        names[i].clone(),
                        names[j].clone(),
                    ));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for lm in &landmarks {
            if !seen.insert(lm.id.clone()) {
                return Err(WorldError::DuplicateLandmark(lm.id.clone()));
            }
        }
        Ok(WorldMap {
            bounds,
            obstacles,
            regions,
            landmarks,
            inflation: 0.0,
        })
    }

    /// True iff (x, y) is inside bounds and outside every obstacle.
    /// Orientation is ignored (point robot).
    pub fn is_free(&self, pose: &Pose) -> bool {
        if !self.bounds.contains(pose.x, pose.y) {
            return false;
        }
        for obs in &self.obstacles {
            if self.inflation > 0.0 {
                if obs.distance_to_point(pose.x, pose.y) <= self.inflation {
                    return false;
                }
            } else if obs.contains(pose.x, pose.y) {
                return false;
            }
        }
        true
    }

    /// True iff every interpolated point at spacing <= step along a->b is free.
    pub fn segment_free(&self, a: &Pose, b: &Pose, step: f64) -> bool {
        assert!(step > 0.0, "step must be positive");
        let dist = a.distance_to(b);
        let n = (dist / step).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let p = Pose::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), 0.0);
            if !self.is_free(&p) {
                return false;
            }
        }
        true
    }

    /// Region containing (x, y), if any. Regions are pairwise disjoint by
    /// construction so the answer is unique.
    pub fn region_of(&self, pose: &Pose) -> Option<&str> {
        self.regions
            .iter()
            .find(|(_, r)| r.contains(pose.x, pose.y))
            .map(|(name, _)| name.as_str())
    }

    /// Free area estimate: bounds area minus obstacle areas (obstacles are
    /// assumed non-overlapping and inside bounds).
    pub fn free_area(&self) -> f64 {
        let obs: f64 = self.obstacles.iter().map(|o| o.area()).sum();
        (self.bounds.area() - obs).max(0.0)
    }

    pub fn landmark(&self, id: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|lm| lm.id == id)
    }
}

/// Default spacing for segment collision checks, in meters.
pub const DEFAULT_COLLISION_STEP: f64 = 0.1;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> ConvexPolygon {
        ConvexPolygon::rect(&Rect::new(xmin, ymin, xmax, ymax))
    }

    fn test_map() -> WorldMap {
        let mut regions = BTreeMap::new();
        regions.insert("a".to_string(), Rect::new(1.0, 1.0, 3.0, 3.0));
        regions.insert("b".to_string(), Rect::new(7.0, 7.0, 9.0, 9.0));
        WorldMap::new(
            Rect::new(0.0, 0.0, 10.0, 10.0),
            vec![square(4.0, 4.0, 6.0, 6.0)],
            regions,
            vec![Landmark {
                id: "lm0".into(),
                x: 5.0,
                y: 9.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn obstacle_centroid_not_free() {
        let map = test_map();
        let (cx, cy) = map.obstacles[0].centroid();
        assert!(!map.is_free(&Pose::new(cx, cy, 0.0)));
    }

    #[test]
    fn out_of_bounds_not_free() {
        let map = test_map();
        assert!(!map.is_free(&Pose::new(-1.0, 5.0, 0.0)));
        assert!(!map.is_free(&Pose::new(5.0, 11.0, 0.0)));
    }

    // Independent point-in-polygon oracle: ray casting.
    fn ray_cast_inside(poly: &ConvexPolygon, x: f64, y: f64) -> bool {
        let n = poly.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = poly.vertices[i];
            let (xj, yj) = poly.vertices[j];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    #[test]
    fn is_free_matches_ray_cast_oracle() {
        let map = test_map();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-1.0..11.0);
            let y: f64 = rng.gen_range(-1.0..11.0);
            // Skip points within 1e-6 of obstacle edges so boundary
            // conventions cannot disagree.
            if map
                .obstacles
                .iter()
                .any(|o| o.distance_to_point(x, y) < 1e-6 && !o.contains(x, y))
            {
                continue;
            }
            let expected = map.bounds.contains(x, y)
                && !map.obstacles.iter().any(|o| ray_cast_inside(o, x, y));
            assert_eq!(map.is_free(&Pose::new(x, y, 0.0)), expected, "at ({x},{y})");
        }
    }

    #[test]
    fn zero_length_segment_free() {
        let map = test_map();
        let p = Pose::new(2.0, 2.0, 0.0);
        assert!(map.segment_free(&p, &p, 0.1));
    }

    #[test]
    fn segment_through_obstacle_blocked() {
        let map = test_map();
        assert!(!map.segment_free(
            &Pose::new(3.5, 3.5, 0.0),
            &Pose::new(6.5, 6.5, 0.0),
            0.1
        ));
    }

    #[test]
    fn segment_free_agrees_with_finer_resolution() {
        let map = test_map();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut disagreements = 0;
        for _ in 0..200 {
            let a = Pose::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0);
            let b = Pose::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0);
            let coarse = map.segment_free(&a, &b, 0.1);
            let fine = map.segment_free(&a, &b, 0.01);
            // Interpolation errs on the optimistic side: a finer check can
            // only discover new collisions (corner grazing below step size),
            // never clear a segment the coarse check blocked.
            if coarse != fine {
                assert!(coarse && !fine, "fine check cleared a blocked segment");
                disagreements += 1;
            }
        }
        assert!(disagreements <= 10, "too many sub-step misses: {disagreements}");
    }

    #[test]
    fn segment_free_symmetry() {
        let map = test_map();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let a = Pose::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0);
            let b = Pose::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0);
            assert_eq!(map.segment_free(&a, &b, 0.1), map.segment_free(&b, &a, 0.1));
        }
    }

    #[test]
    fn region_of_center_and_corridor() {
        let map = test_map();
        assert_eq!(map.region_of(&Pose::new(2.0, 2.0, 0.0)), Some("a"));
        assert_eq!(map.region_of(&Pose::new(5.0, 1.0, 0.0)), None);
    }

    #[test]
    fn overlapping_regions_rejected() {
        let mut regions = BTreeMap::new();
        regions.insert("a".to_string(), Rect::new(1.0, 1.0, 3.0, 3.0));
        regions.insert("b".to_string(), Rect::new(2.0, 2.0, 4.0, 4.0));
        let err = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![], regions, vec![]);
        assert!(matches!(err, Err(WorldError::RegionsOverlap(_, _))));
    }

    #[test]
    fn angle_normalization_range() {
        for k in -20..20 {
            let a = normalize_angle(k as f64 * 1.37);
            assert!(a > -std::f64::consts::PI && a <= std::f64::consts::PI);
        }
        assert_eq!(normalize_angle(std::f64::consts::PI), std::f64::consts::PI);
    }
}
