//! Benchmark fixtures.

use std::sync::Arc;

use radwave::{make_profile, DataPair, GridSpec, Lattice, ProfileFamily, SourceField};

pub fn lattice(cells: usize) -> Arc<Lattice> {
    Arc::new(Lattice::new(GridSpec::new(50.0, 50.0, cells)).expect("valid grid"))
}

pub fn datum(lat: &Lattice) -> DataPair {
    make_profile(ProfileFamily::Algebraic, 1.0, 1e-2, lat).expect("scalable profile")
}

/// Smooth source concentrated near the light cone.
pub fn source(lat: &Arc<Lattice>) -> SourceField {
    SourceField::from_fn(lat, |r, t| {
        let f = (-(r - t).powi(2)).exp() / (1.0 + r + t).powi(3);
        let fr = f * (-2.0 * (r - t) - 3.0 / (1.0 + r + t));
        (f, fr)
    })
}
