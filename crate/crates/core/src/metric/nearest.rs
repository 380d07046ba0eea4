//! Nearest-neighbour queries on sampled point clouds.

use rstar::primitives::GeomWithData;
use rstar::RTree;

use crate::geom::Vec3;

/// An R*-tree over sample positions. Coincident and coplanar points are fine.
pub struct NearestIndex {
    tree: RTree<GeomWithData<[f64; 3], usize>>,
}

impl NearestIndex {
    pub fn new(points: &[Vec3]) -> NearestIndex {
        let items = points
            .iter()
            .enumerate()
            .map(|(k, p)| GeomWithData::new([p.x, p.y, p.z], k))
            .collect();
        NearestIndex {
            tree: RTree::bulk_load(items),
        }
    }

    /// Index of the closest point. Panics on an empty index.
    pub fn nearest(&self, p: &Vec3) -> usize {
        self.tree
            .nearest_neighbor([p.x, p.y, p.z])
            .expect("nearest query on an empty index")
            .data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_grid_with_duplicates() {
        let mut pts = Vec::new();
        for i in 0..200 {
            for j in 0..200 {
                pts.push(Vec3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0));
            }
        }
        pts.extend(pts[..500].to_vec());
        let index = NearestIndex::new(&pts);
        let k = index.nearest(&Vec3::new(0.503, 1.198, 0.2));
        assert!((pts[k] - Vec3::new(0.5, 1.2, 0.0)).norm() < 1e-12);
    }
}
