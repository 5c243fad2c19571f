//! Manufactured problems on the fractured and L-shaped domains: the exact
//! solution is a smooth oscillatory part plus the domain's corner/crack
//! singularity, so the forcing term only sees the smooth part.

use crate::config::Domain;
use crate::enrichment::{
    fracture_singularity, lshape_singularity_bottomright, lshape_singularity_topright,
    EnrichmentSpace, ScalarField,
};
use crate::geometry::Point2;
use crate::scalar::Real;
use std::sync::Arc;

pub struct Problem<T: Real> {
    pub name: &'static str,
    pub enrichment: EnrichmentSpace<T>,
    singular: Arc<dyn ScalarField<T>>,
}

impl<T: Real> Problem<T> {
    pub fn for_domain(domain: Domain) -> Self {
        let (name, enrichment) = match domain {
            Domain::Fracture => ("fracture", fracture_singularity::<T>()),
            Domain::LshapeTr => ("lshape-tr", lshape_singularity_topright::<T>()),
            Domain::LshapeBr => ("lshape-br", lshape_singularity_bottomright::<T>()),
        };
        let singular = enrichment.fields[0].clone();
        Self {
            name,
            enrichment,
            singular,
        }
    }

    /// u = sin(pi x) sin(pi y) + psi
    pub fn exact(&self, p: Point2<T>, hint: Option<Point2<T>>) -> T {
        let pi = T::pi();
        (pi * p.x).sin() * (pi * p.y).sin() + self.singular.value(p, hint)
    }

    pub fn exact_gradient(&self, p: Point2<T>, hint: Option<Point2<T>>) -> Point2<T> {
        let pi = T::pi();
        let g = self.singular.gradient(p, hint);
        Point2::new(
            pi * (pi * p.x).cos() * (pi * p.y).sin() + g.x,
            pi * (pi * p.x).sin() * (pi * p.y).cos() + g.y,
        )
    }

    /// f = -lap(u); the singular part is harmonic.
    pub fn forcing(&self, p: Point2<T>, _hint: Option<Point2<T>>) -> T {
        let pi = T::pi();
        T::of(2.0) * pi * pi * (pi * p.x).sin() * (pi * p.y).sin()
    }
}
