use serde::Serialize;

use crate::fact_store::{Centroid, Region};

/// Mean Earth radius (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two centroids.
pub fn haversine_km(a: Centroid, b: Centroid) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub region_id: String,
    pub distance_km: f64,
    pub same_country: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborSet {
    pub focal: String,
    /// Ordered by region id.
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn within_country(&self) -> impl Iterator<Item = &Neighbor> {
        self.neighbors.iter().filter(|n| n.same_country)
    }

    pub fn cross_country(&self) -> impl Iterator<Item = &Neighbor> {
        self.neighbors.iter().filter(|n| !n.same_country)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Regions among `candidates` whose centroid lies within `radius_km` of the
/// focal centroid (boundary included). The focal region itself is skipped.
/// A radius of 0 yields no neighbours.
pub fn neighbors_within<'a>(
    focal: &Region,
    candidates: impl IntoIterator<Item = &'a Region>,
    radius_km: f64,
) -> NeighborSet {
    let country = focal.country();
    let mut neighbors: Vec<Neighbor> = if radius_km > 0.0 {
        candidates
            .into_iter()
            .filter(|r| r.region_id != focal.region_id)
            .filter_map(|r| {
                let distance_km = haversine_km(focal.centroid, r.centroid);
                (distance_km <= radius_km).then(|| Neighbor {
                    region_id: r.region_id.clone(),
                    distance_km,
                    same_country: r.country() == country,
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    neighbors.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    NeighborSet {
        focal: focal.region_id.clone(),
        neighbors,
    }
}
