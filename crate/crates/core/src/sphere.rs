//! Points on the sphere S^{n-1}(sqrt(n)) and on the product of three
//! such spheres, plus the retraction used after every descent step.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A configuration w with ||w||_2 = sqrt(n).
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint<T> {
    n: usize,
    coords: Vec<T>,
}

impl<T: Scalar> SpherePoint<T> {
    /// Wraps coordinates that already satisfy the norm invariant.
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("sphere point needs n >= 1"));
        }
        let n = coords.len();
        let norm = norm2(&coords);
        let target = T::from_f(n as f64).sqrt();
        if (norm - target).abs() > T::NORM_TOL * target {
            return Err(Error::invalid(format!(
                "norm {norm} is not sqrt({n}) within tolerance"
            )));
        }
        Ok(SpherePoint { n, coords })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }

    /// Negated point; the landscape is symmetric through the origin.
    pub fn negated(&self) -> Self {
        SpherePoint {
            n: self.n,
            coords: self.coords.iter().map(|&c| -c).collect(),
        }
    }
}

/// One point on the product of three spheres of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpherePoint<T> {
    n: usize,
    factors: [SpherePoint<T>; 3],
}

impl<T: Scalar> ProductSpherePoint<T> {
    pub fn new(w1: SpherePoint<T>, w2: SpherePoint<T>, w3: SpherePoint<T>) -> Result<Self> {
        let n = w1.n();
        if w2.n() != n || w3.n() != n {
            return Err(Error::dims(format!(
                "product-sphere factors must share a dimension, got {}, {}, {}",
                n,
                w2.n(),
                w3.n()
            )));
        }
        Ok(ProductSpherePoint {
            n,
            factors: [w1, w2, w3],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor(&self, idx: usize) -> &SpherePoint<T> {
        &self.factors[idx]
    }

    pub fn factors(&self) -> &[SpherePoint<T>; 3] {
        &self.factors
    }
}

/// Rescales v to the sphere: sqrt(n) * v / ||v||.
pub fn retract_to_sphere<T: Scalar>(v: &[T]) -> Result<SpherePoint<T>> {
    if v.is_empty() {
        return Err(Error::invalid("cannot retract an empty vector"));
    }
    let norm = norm2(v);
    if norm == T::zero() || !norm.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "cannot retract vector with norm {norm}"
        )));
    }
    let scale = T::from_f(v.len() as f64).sqrt() / norm;
    Ok(SpherePoint {
        n: v.len(),
        coords: v.iter().map(|&c| c * scale).collect(),
    })
}

/// Uniform point on S^{n-1}(sqrt(n)): n i.i.d. Gaussians, retracted.
pub fn random_sphere_point<T: Scalar, R: RngCore>(n: usize, stream: &mut R) -> Result<SpherePoint<T>> {
    if n == 0 {
        return Err(Error::invalid("sphere dimension must be >= 1"));
    }
    loop {
        let v: Vec<T> = (0..n).map(|_| T::standard_normal(stream)).collect();
        // A zero draw has probability zero but would poison the retraction.
        match retract_to_sphere(&v) {
            Ok(p) => return Ok(p),
            Err(Error::DegenerateInput(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Removes the radial component: g - (<g, w>/n) w.
///
/// On S^{n-1}(sqrt(n)) the squared norm of w is n, so <g,w>/n is the
/// projection coefficient onto the radius.
pub fn project_tangential<T: Scalar>(g: &[T], w: &SpherePoint<T>) -> Vec<T> {
    let n = T::from_f(w.n() as f64);
    let radial = dot(g, w.coords()) / n;
    g.iter()
        .zip(w.coords())
        .map(|(&gi, &wi)| gi - radial * wi)
        .collect()
}

/// Dot product with four independent accumulators; the split breaks the
/// floating-point dependency chain that otherwise serializes the sum.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = T::zero();
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm2<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}
