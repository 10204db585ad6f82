//! Planar angles with one internal convention: counterclockwise from
//! east, radians, normalized to [0, 2*pi).
//!
//! Compass bearings (clockwise from north, degrees) are an I/O-boundary
//! format only. Every ingest converts through [`Angle::from_compass_deg`]
//! so trigonometry never mixes the two conventions.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// A direction in the horizontal plane, stored as math-convention
/// radians in [0, 2*pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    /// Builds from math-convention radians; any finite value is normalized.
    pub fn from_radians(rad: f64) -> Self {
        let mut r = rad.rem_euclid(TAU);
        // rem_euclid of a tiny negative rounds to TAU itself; keep [0, TAU).
        if r >= TAU {
            r = 0.0;
        }
        Self(r)
    }

    /// Builds from a compass bearing (degrees clockwise from north).
    pub fn from_compass_deg(bearing: f64) -> Self {
        Self::from_radians((90.0 - bearing).to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Converts back to a compass bearing in [0, 360).
    pub fn to_compass_deg(self) -> f64 {
        let mut b = (90.0 - self.0.to_degrees()).rem_euclid(360.0);
        if b >= 360.0 {
            b = 0.0;
        }
        b
    }

    /// Unit vector (east, north) for this direction.
    pub fn unit_vector(self) -> (f64, f64) {
        (self.0.cos(), self.0.sin())
    }

    /// The opposite direction.
    pub fn reversed(self) -> Self {
        Self::from_radians(self.0 + TAU / 2.0)
    }

    /// Signed smallest rotation from `other` to `self`, in (-pi, pi].
    pub fn signed_delta(self, other: Angle) -> f64 {
        let mut d = (self.0 - other.0).rem_euclid(TAU);
        if d > TAU / 2.0 {
            d -= TAU;
        }
        d
    }
}
