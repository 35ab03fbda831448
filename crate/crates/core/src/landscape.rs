//! Coupling tensors and the cubic random field: energy and gradients for
//! the coupled, tri-partite, and P-decomposed landscapes.
//!
//! The energy of a configuration w on S^{n-1}(sqrt(n)) is
//! `H(w) = (1/n) * sum_{i,j,k} x_{ijk} w_i w_j w_k`, summed over all n^3
//! ordered triples (repeated indices included). With i.i.d. standard
//! normal couplings this field has mean zero and variance exactly n at
//! every point of the sphere.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::sphere::{dot, ProductSpherePoint, SpherePoint};

/// Landmark energies per spin in the large-n limit: the ground state is
/// bounded below by -e_zero * n and descent stalls in a narrow band
/// around -e_infinity * n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub e_zero: f64,
    pub e_infinity: f64,
}

pub const E_ZERO: f64 = 1.657;
pub const E_INFINITY: f64 = 1.633;

impl Default for TheoryConstants {
    fn default() -> Self {
        TheoryConstants {
            e_zero: E_ZERO,
            e_infinity: E_INFINITY,
        }
    }
}

/// One landscape realization: n^3 i.i.d. Gaussian(0, sigma^2) couplings.
///
/// Entry (i,j,k) lives at index `i*n^2 + j*n + k`. Entries are kept raw
/// (not symmetrized); the gradient carries all three slot contributions
/// instead, which is equivalent in law.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor<T> {
    n: usize,
    entries: Vec<T>,
    sigma: T,
    seed_tag: String,
}

impl<T: Scalar> CouplingTensor<T> {
    pub fn from_entries(
        n: usize,
        entries: Vec<T>,
        sigma: T,
        seed_tag: impl Into<String>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("tensor dimension must be >= 1"));
        }
        if entries.len() != n * n * n {
            return Err(Error::dims(format!(
                "expected {} entries for n={n}, got {}",
                n * n * n,
                entries.len()
            )));
        }
        Ok(CouplingTensor {
            n,
            entries,
            sigma,
            seed_tag: seed_tag.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Identifier of the RNG stream that produced this tensor.
    pub fn seed_tag(&self) -> &str {
        &self.seed_tag
    }

    pub fn entry(&self, i: usize, j: usize, k: usize) -> T {
        self.entries[(i * self.n + j) * self.n + k]
    }

    fn row(&self, i: usize, j: usize) -> &[T] {
        let start = (i * self.n + j) * self.n;
        &self.entries[start..start + self.n]
    }

    fn check_dim(&self, other_n: usize) -> Result<()> {
        if self.n != other_n {
            return Err(Error::dims(format!(
                "tensor has n={}, point has n={other_n}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Samples n^3 i.i.d. Gaussian(0, sigma^2) couplings from the stream.
pub fn sample_couplings<T: Scalar>(
    n: usize,
    sigma: T,
    stream: &mut Stream,
) -> Result<CouplingTensor<T>> {
    if n == 0 {
        return Err(Error::invalid("tensor dimension must be >= 1"));
    }
    if !(sigma > T::zero()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let tag = stream.tag().to_owned();
    let entries = (0..n * n * n)
        .map(|_| T::standard_normal(stream) * sigma)
        .collect();
    CouplingTensor::from_entries(n, entries, sigma, tag)
}

/// `H(w) = (1/n) * sum_{i,j,k} x_{ijk} w_i w_j w_k`.
pub fn hamiltonian<T: Scalar>(x: &CouplingTensor<T>, w: &SpherePoint<T>) -> Result<T> {
    x.check_dim(w.n())?;
    Ok(energy_ambient(x, w.coords()))
}

/// The cubic form evaluated at arbitrary ambient coordinates. The
/// polynomial extends off the sphere; finite-difference checks rely on
/// that extension.
pub fn energy_ambient<T: Scalar>(x: &CouplingTensor<T>, coords: &[T]) -> T {
    let n = x.n;
    debug_assert_eq!(coords.len(), n);
    let mut total = T::zero();
    for i in 0..n {
        let mut si = T::zero();
        for j in 0..n {
            si += coords[j] * dot(x.row(i, j), coords);
        }
        total += coords[i] * si;
    }
    total / T::from_f(n as f64)
}

/// Component l of the ambient gradient:
/// `(1/n) * sum_{j,k} (x_{ljk} + x_{jlk} + x_{jkl}) w_j w_k`.
pub fn euclidean_gradient<T: Scalar>(x: &CouplingTensor<T>, w: &SpherePoint<T>) -> Result<Vec<T>> {
    x.check_dim(w.n())?;
    Ok(gradient_ambient(x, w.coords()))
}

/// Ambient-coordinate variant of [`euclidean_gradient`].
pub fn gradient_ambient<T: Scalar>(x: &CouplingTensor<T>, coords: &[T]) -> Vec<T> {
    let n = x.n;
    debug_assert_eq!(coords.len(), n);
    let mut slot12 = vec![T::zero(); n];
    let mut slot3 = vec![T::zero(); n];
    for i in 0..n {
        let wi = coords[i];
        let mut acc_i = T::zero();
        for j in 0..n {
            let row = x.row(i, j);
            let s = dot(row, coords);
            acc_i += coords[j] * s;
            slot12[j] += wi * s;
            let c = wi * coords[j];
            for (g, &e) in slot3.iter_mut().zip(row) {
                *g += c * e;
            }
        }
        slot12[i] += acc_i;
    }
    let inv_n = T::one() / T::from_f(n as f64);
    slot12
        .iter()
        .zip(&slot3)
        .map(|(&a, &b)| (a + b) * inv_n)
        .collect()
}

/// Gradient with the radial component removed; vanishes at critical
/// points of H restricted to the sphere.
pub fn tangential_gradient<T: Scalar>(x: &CouplingTensor<T>, w: &SpherePoint<T>) -> Result<Vec<T>> {
    let g = euclidean_gradient(x, w)?;
    Ok(crate::sphere::project_tangential(&g, w))
}

/// `H~(w1,w2,w3) = (1/n) * sum_{i,j,k} x_{ijk} w1_i w2_j w3_k`.
pub fn tripartite_hamiltonian<T: Scalar>(
    x: &CouplingTensor<T>,
    p: &ProductSpherePoint<T>,
) -> Result<T> {
    x.check_dim(p.n())?;
    let (a, b, c) = (
        p.factor(0).coords(),
        p.factor(1).coords(),
        p.factor(2).coords(),
    );
    let n = x.n;
    let mut total = T::zero();
    for i in 0..n {
        let mut si = T::zero();
        for j in 0..n {
            si += b[j] * dot(x.row(i, j), c);
        }
        total += a[i] * si;
    }
    Ok(total / T::from_f(n as f64))
}

/// Per-factor gradients of the tri-partite energy.
pub fn tripartite_gradient<T: Scalar>(
    x: &CouplingTensor<T>,
    p: &ProductSpherePoint<T>,
) -> Result<[Vec<T>; 3]> {
    x.check_dim(p.n())?;
    let factors = [
        p.factor(0).coords().to_vec(),
        p.factor(1).coords().to_vec(),
        p.factor(2).coords().to_vec(),
    ];
    let n = x.n;
    let mut grads = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    tripartite_gradient_into(x, &factors, &mut grads);
    Ok(grads)
}

/// Writes the three factor gradients into `out` and returns the energy;
/// the allocation-free path used by the descent loop.
pub(crate) fn tripartite_gradient_into<T: Scalar>(
    x: &CouplingTensor<T>,
    factors: &[Vec<T>; 3],
    out: &mut [Vec<T>; 3],
) -> T {
    let n = x.n;
    let (a, b, c) = (&factors[0], &factors[1], &factors[2]);
    let [ga, gb, gc] = out;
    for g in [&mut *ga, &mut *gb, &mut *gc] {
        for v in g.iter_mut() {
            *v = T::zero();
        }
    }
    let mut total = T::zero();
    for i in 0..n {
        let ai = a[i];
        let mut acc_i = T::zero();
        for j in 0..n {
            let row = x.row(i, j);
            let s = dot(row, c);
            acc_i += b[j] * s;
            gb[j] += ai * s;
            let coeff = ai * b[j];
            for (g, &e) in gc.iter_mut().zip(row) {
                *g += coeff * e;
            }
        }
        ga[i] = acc_i;
        total += ai * acc_i;
    }
    let inv_n = T::one() / T::from_f(n as f64);
    for g in [ga, gb, gc] {
        for v in g.iter_mut() {
            *v *= inv_n;
        }
    }
    total * inv_n
}

/// A field written as a sum of P independent sub-fields, each with
/// couplings Gaussian(0, 1/P), so the sum is distributed like the
/// standard field.
#[derive(Debug, Clone)]
pub struct DecomposedField<T> {
    subfields: Vec<CouplingTensor<T>>,
}

impl<T: Scalar> DecomposedField<T> {
    pub fn p_count(&self) -> usize {
        self.subfields.len()
    }

    pub fn n(&self) -> usize {
        self.subfields[0].n()
    }

    pub fn subfield(&self, p: usize) -> &CouplingTensor<T> {
        &self.subfields[p]
    }

    pub fn subfields(&self) -> &[CouplingTensor<T>] {
        &self.subfields
    }

    /// Entrywise sum of the sub-tensors; the full landscape.
    pub fn summed_tensor(&self) -> CouplingTensor<T> {
        let n = self.n();
        let mut entries = self.subfields[0].entries().to_vec();
        for sub in &self.subfields[1..] {
            for (acc, &e) in entries.iter_mut().zip(sub.entries()) {
                *acc += e;
            }
        }
        CouplingTensor {
            n,
            entries,
            sigma: T::one(),
            seed_tag: format!("{}+sum", self.subfields[0].seed_tag()),
        }
    }
}

/// Samples P sub-fields with sigma = 1/sqrt(P) from a single stream.
pub fn decompose_field<T: Scalar>(
    n: usize,
    p_count: usize,
    stream: &mut Stream,
) -> Result<DecomposedField<T>> {
    if p_count == 0 {
        return Err(Error::invalid("p_count must be >= 1"));
    }
    let sigma = T::one() / T::from_f(p_count as f64).sqrt();
    let base_tag = stream.tag().to_owned();
    let mut subfields = Vec::with_capacity(p_count);
    for p in 0..p_count {
        let mut sub = sample_couplings(n, sigma, stream)?;
        sub.seed_tag = format!("{base_tag}#p{p}");
        subfields.push(sub);
    }
    Ok(DecomposedField { subfields })
}

/// Cached contraction for descent loops.
///
/// One pass over `sym[l,j,k] = x_{ljk} + x_{jlk} + x_{jkl}` yields the
/// full gradient, and the energy falls out of Euler's identity for a
/// cubic form: `H = <w, grad> / 3`. This halves the per-step cost of
/// the literal three-slot route; the two routes agree to 1e-10.
pub(crate) struct GradKernel<T> {
    n: usize,
    sym: Vec<T>,
}

impl<T: Scalar> GradKernel<T> {
    pub fn new(x: &CouplingTensor<T>) -> Self {
        let n = x.n;
        let e = &x.entries;
        let mut sym = vec![T::zero(); n * n * n];
        for l in 0..n {
            for j in 0..n {
                let out = &mut sym[(l * n + j) * n..(l * n + j) * n + n];
                let r1 = &e[(l * n + j) * n..(l * n + j) * n + n];
                let r2 = &e[(j * n + l) * n..(j * n + l) * n + n];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = r1[k] + r2[k] + e[(j * n + k) * n + l];
                }
            }
        }
        GradKernel { n, sym }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Writes the ambient gradient into `out` and returns the energy.
    pub fn gradient_into(&self, coords: &[T], out: &mut [T]) -> T {
        let n = self.n;
        let inv_n = T::one() / T::from_f(n as f64);
        let mut h = T::zero();
        for l in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                let row = &self.sym[(l * n + j) * n..(l * n + j) * n + n];
                acc += coords[j] * dot(row, coords);
            }
            let g = acc * inv_n;
            out[l] = g;
            h += coords[l] * g;
        }
        h / T::from_f(3.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::sphere::{random_sphere_point, retract_to_sphere};

    /// Independent brute-force oracle: walks every ordered triple.
    fn oracle_energy(x: &CouplingTensor<f64>, w: &[f64]) -> f64 {
        let n = x.n();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    sum += x.entries()[i * n * n + j * n + k] * w[i] * w[j] * w[k];
                }
            }
        }
        sum / n as f64
    }

    fn integer_tensor(n: usize) -> CouplingTensor<f64> {
        let entries = (1..=n * n * n).map(|v| v as f64).collect();
        CouplingTensor::from_entries(n, entries, 1.0, "manual").unwrap()
    }

    fn zero_tensor(n: usize) -> CouplingTensor<f64> {
        CouplingTensor::from_entries(n, vec![0.0; n * n * n], 1.0, "manual").unwrap()
    }

    #[test]
    fn sample_rejects_bad_arguments() {
        let mut s = derive_stream(0, "c", 0);
        assert!(sample_couplings::<f64>(0, 1.0, &mut s).is_err());
        assert!(sample_couplings::<f64>(3, 0.0, &mut s).is_err());
        assert!(sample_couplings::<f64>(3, -1.0, &mut s).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let a = sample_couplings::<f64>(2, 1.0, &mut derive_stream(3, "c", 7)).unwrap();
        let b = sample_couplings::<f64>(2, 1.0, &mut derive_stream(3, "c", 7)).unwrap();
        assert_eq!(a.entries().len(), 8);
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.seed_tag(), "3/c/7");
    }

    #[test]
    fn sampled_moments_match_the_law() {
        // n=30: 27000 entries; mean and variance within 3 standard errors.
        let x = sample_couplings::<f64>(30, 1.0, &mut derive_stream(5, "c", 0)).unwrap();
        let m = x.entries().len() as f64;
        let mean = x.entries().iter().sum::<f64>() / m;
        let var = x.entries().iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!(mean.abs() < 3.0 / m.sqrt());
        assert!((var - 1.0).abs() < 3.0 * (2.0 / (m - 1.0)).sqrt());
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let x = zero_tensor(4);
        let w = random_sphere_point(4, &mut derive_stream(0, "w", 0)).unwrap();
        assert_eq!(hamiltonian(&x, &w).unwrap(), 0.0);
    }

    #[test]
    fn n1_energy_is_c_w_cubed() {
        let c = 2.5;
        let x = CouplingTensor::from_entries(1, vec![c], 1.0, "manual").unwrap();
        let plus = SpherePoint::new(vec![1.0]).unwrap();
        let minus = SpherePoint::new(vec![-1.0]).unwrap();
        assert_eq!(hamiltonian(&x, &plus).unwrap(), c);
        assert_eq!(hamiltonian(&x, &minus).unwrap(), -c);
    }

    #[test]
    fn hand_case_matches_triple_loop_oracle() {
        let x = integer_tensor(2);
        let w = SpherePoint::new(vec![2.0f64.sqrt(), 0.0]).unwrap();
        let h = hamiltonian(&x, &w).unwrap();
        let expect = oracle_energy(&x, w.coords());
        assert!((h - expect).abs() < 1e-12);
        // Only the (0,0,0) term survives: (1/2) * 1 * sqrt(2)^3 = sqrt(2).
        assert!((h - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn energy_matches_oracle_on_random_instances() {
        for (idx, n) in [2usize, 5, 9].into_iter().enumerate() {
            let x = sample_couplings::<f64>(n, 1.0, &mut derive_stream(8, "c", idx as u64)).unwrap();
            let w = random_sphere_point(n, &mut derive_stream(8, "w", idx as u64)).unwrap();
            let h = hamiltonian(&x, &w).unwrap();
            let expect = oracle_energy(&x, w.coords());
            assert!((h - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn odd_symmetry_is_exact() {
        let x = sample_couplings::<f64>(7, 1.0, &mut derive_stream(4, "c", 0)).unwrap();
        let w = random_sphere_point(7, &mut derive_stream(4, "w", 0)).unwrap();
        let h = hamiltonian(&x, &w).unwrap();
        let h_neg = hamiltonian(&x, &w.negated()).unwrap();
        assert_eq!(h_neg, -h);
    }

    #[test]
    fn pointwise_field_variance_is_n() {
        // Fixed w, many coupling draws: Var(H) = n exactly in law.
        let n = 30;
        let draws = 1000;
        let w = random_sphere_point(n, &mut derive_stream(6, "w", 0)).unwrap();
        let mut values = Vec::with_capacity(draws);
        for t in 0..draws {
            let x = sample_couplings::<f64>(n, 1.0, &mut derive_stream(6, "c", t as u64)).unwrap();
            values.push(hamiltonian(&x, &w).unwrap());
        }
        let m = draws as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = n as f64 * (2.0 / (m - 1.0)).sqrt();
        assert!(
            (var - n as f64).abs() < 3.0 * se,
            "sample variance {var} vs expected {n}"
        );
        assert!(mean.abs() < 3.0 * (n as f64 / m).sqrt());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = zero_tensor(3);
        let w = random_sphere_point(4, &mut derive_stream(0, "w", 1)).unwrap();
        assert!(hamiltonian(&x, &w).is_err());
        assert!(euclidean_gradient(&x, &w).is_err());
    }

    #[test]
    fn n1_gradient_is_3c() {
        let c = -1.75;
        let x = CouplingTensor::from_entries(1, vec![c], 1.0, "manual").unwrap();
        let w = SpherePoint::new(vec![1.0]).unwrap();
        let g = euclidean_gradient(&x, &w).unwrap();
        assert_eq!(g, vec![3.0 * c]);
    }

    #[test]
    fn zero_field_gradient_is_zero() {
        let x = zero_tensor(5);
        let w = random_sphere_point(5, &mut derive_stream(0, "w", 2)).unwrap();
        assert!(euclidean_gradient(&x, &w).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let h = 1e-5;
        for (idx, n) in [2usize, 5, 20].into_iter().enumerate() {
            let x = sample_couplings::<f64>(n, 1.0, &mut derive_stream(10, "c", idx as u64)).unwrap();
            let w = random_sphere_point(n, &mut derive_stream(10, "w", idx as u64)).unwrap();
            let g = euclidean_gradient(&x, &w).unwrap();
            let mut coords = w.coords().to_vec();
            for l in 0..n {
                let orig = coords[l];
                coords[l] = orig + h;
                let up = energy_ambient(&x, &coords);
                coords[l] = orig - h;
                let down = energy_ambient(&x, &coords);
                coords[l] = orig;
                let fd = (up - down) / (2.0 * h);
                let rel = (g[l] - fd).abs() / g[l].abs().max(1e-8);
                assert!(rel < 1e-5, "n={n} l={l}: grad {} vs fd {fd}", g[l]);
            }
        }
    }

    #[test]
    fn tangential_gradient_is_orthogonal() {
        let x = sample_couplings::<f64>(12, 1.0, &mut derive_stream(11, "c", 0)).unwrap();
        let w = random_sphere_point(12, &mut derive_stream(11, "w", 0)).unwrap();
        let g = euclidean_gradient(&x, &w).unwrap();
        let t = tangential_gradient(&x, &w).unwrap();
        let gn = crate::sphere::norm2(&g);
        let wn = crate::sphere::norm2(w.coords());
        let ip: f64 = t.iter().zip(w.coords()).map(|(a, b)| a * b).sum();
        assert!(ip.abs() <= 1e-10 * gn * wn);
    }

    #[test]
    fn n1_tangent_space_is_trivial() {
        let x = CouplingTensor::from_entries(1, vec![4.0], 1.0, "manual").unwrap();
        for s in [1.0f64, -1.0] {
            let w = SpherePoint::new(vec![s]).unwrap();
            let t = tangential_gradient(&x, &w).unwrap();
            assert!(t[0].abs() < 1e-14);
        }
    }

    #[test]
    fn tripartite_zero_field() {
        let x = zero_tensor(3);
        let p = ProductSpherePoint::new(
            random_sphere_point(3, &mut derive_stream(0, "a", 0)).unwrap(),
            random_sphere_point(3, &mut derive_stream(0, "b", 0)).unwrap(),
            random_sphere_point(3, &mut derive_stream(0, "c", 0)).unwrap(),
        )
        .unwrap();
        assert_eq!(tripartite_hamiltonian(&x, &p).unwrap(), 0.0);
        let g = tripartite_gradient(&x, &p).unwrap();
        assert!(g.iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn tripartite_diagonal_restriction_reproduces_coupled() {
        let x = sample_couplings::<f64>(6, 1.0, &mut derive_stream(12, "c", 0)).unwrap();
        let w = random_sphere_point(6, &mut derive_stream(12, "w", 0)).unwrap();
        let p = ProductSpherePoint::new(w.clone(), w.clone(), w.clone()).unwrap();
        let coupled = hamiltonian(&x, &w).unwrap();
        let tri = tripartite_hamiltonian(&x, &p).unwrap();
        assert!((coupled - tri).abs() <= 1e-12 * coupled.abs().max(1.0));
    }

    #[test]
    fn tripartite_hand_case_matches_oracle() {
        let x = integer_tensor(2);
        let a = retract_to_sphere(&[1.0, 1.0]).unwrap();
        let b = retract_to_sphere(&[1.0, -1.0]).unwrap();
        let c = retract_to_sphere(&[2.0, 1.0]).unwrap();
        let p = ProductSpherePoint::new(a.clone(), b.clone(), c.clone()).unwrap();
        let n = 2;
        let mut expect = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    expect += x.entries()[i * n * n + j * n + k]
                        * a.coords()[i]
                        * b.coords()[j]
                        * c.coords()[k];
                }
            }
        }
        expect /= n as f64;
        let got = tripartite_hamiltonian(&x, &p).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn tripartite_n1_product_rule() {
        let x = CouplingTensor::from_entries(1, vec![3.0], 1.0, "manual").unwrap();
        let p = ProductSpherePoint::new(
            SpherePoint::new(vec![1.0]).unwrap(),
            SpherePoint::new(vec![-1.0]).unwrap(),
            SpherePoint::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        // H~ = 3*a*b*c; gradients (3bc, 3ac, 3ab).
        let g = tripartite_gradient(&x, &p).unwrap();
        assert_eq!(g[0], vec![-3.0]);
        assert_eq!(g[1], vec![3.0]);
        assert_eq!(g[2], vec![-3.0]);
    }

    #[test]
    fn tripartite_gradient_matches_finite_differences() {
        let h = 1e-5;
        let n = 5;
        let x = sample_couplings::<f64>(n, 1.0, &mut derive_stream(13, "c", 0)).unwrap();
        let factors: Vec<SpherePoint<f64>> = (0..3)
            .map(|f| random_sphere_point(n, &mut derive_stream(13, "w", f)).unwrap())
            .collect();
        let p = ProductSpherePoint::new(
            factors[0].clone(),
            factors[1].clone(),
            factors[2].clone(),
        )
        .unwrap();
        let grads = tripartite_gradient(&x, &p).unwrap();

        let eval = |coords: [&[f64]; 3]| -> f64 {
            let mut sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        sum += x.entries()[i * n * n + j * n + k]
                            * coords[0][i]
                            * coords[1][j]
                            * coords[2][k];
                    }
                }
            }
            sum / n as f64
        };

        for f in 0..3 {
            let mut perturbed = factors[f].coords().to_vec();
            for l in 0..n {
                let orig = perturbed[l];
                perturbed[l] = orig + h;
                let mut views: [&[f64]; 3] =
                    [factors[0].coords(), factors[1].coords(), factors[2].coords()];
                views[f] = &perturbed;
                let up = eval(views);
                perturbed[l] = orig - h;
                let mut views: [&[f64]; 3] =
                    [factors[0].coords(), factors[1].coords(), factors[2].coords()];
                views[f] = &perturbed;
                let down = eval(views);
                perturbed[l] = orig;
                let fd = (up - down) / (2.0 * h);
                let rel = (grads[f][l] - fd).abs() / grads[f][l].abs().max(1e-8);
                assert!(rel < 1e-5, "factor {f} component {l}");
            }
        }
    }

    #[test]
    fn decompose_rejects_zero_p() {
        assert!(decompose_field::<f64>(3, 0, &mut derive_stream(0, "d", 0)).is_err());
    }

    #[test]
    fn decompose_p1_reproduces_standard_sampling() {
        let field = decompose_field::<f64>(4, 1, &mut derive_stream(14, "c", 0)).unwrap();
        let standard = sample_couplings::<f64>(4, 1.0, &mut derive_stream(14, "c", 0)).unwrap();
        assert_eq!(field.subfield(0).entries(), standard.entries());
        assert_eq!(field.summed_tensor().entries(), standard.entries());
    }

    #[test]
    fn decomposed_sum_has_unit_variance() {
        // P=4, n=30: summed entries within 3 standard errors of variance 1,
        // and each sub-field within 3 SE of variance 1/4.
        let field = decompose_field::<f64>(30, 4, &mut derive_stream(15, "c", 0)).unwrap();
        let summed = field.summed_tensor();
        let m = summed.entries().len() as f64;
        let var = |e: &[f64]| {
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() as f64 - 1.0)
        };
        let se = (2.0 / (m - 1.0)).sqrt();
        assert!((var(summed.entries()) - 1.0).abs() < 3.0 * se);
        for p in 0..4 {
            let v = var(field.subfield(p).entries());
            assert!((v - 0.25).abs() < 3.0 * 0.25 * se);
        }
    }

    #[test]
    fn decomposition_energy_is_linear() {
        let field = decompose_field::<f64>(8, 5, &mut derive_stream(16, "c", 0)).unwrap();
        let summed = field.summed_tensor();
        for t in 0..3 {
            let w = random_sphere_point(8, &mut derive_stream(16, "w", t)).unwrap();
            let whole = hamiltonian(&summed, &w).unwrap();
            let parts: f64 = (0..5)
                .map(|p| hamiltonian(field.subfield(p), &w).unwrap())
                .sum();
            assert!((whole - parts).abs() <= 1e-10 * whole.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_agrees_with_literal_route() {
        for (idx, n) in [2usize, 5, 20].into_iter().enumerate() {
            let x = sample_couplings::<f64>(n, 1.0, &mut derive_stream(17, "c", idx as u64)).unwrap();
            let w = random_sphere_point(n, &mut derive_stream(17, "w", idx as u64)).unwrap();
            let kernel = GradKernel::new(&x);
            let mut g_fast = vec![0.0; n];
            let h_fast = kernel.gradient_into(w.coords(), &mut g_fast);
            let h = hamiltonian(&x, &w).unwrap();
            let g = euclidean_gradient(&x, &w).unwrap();
            assert!((h_fast - h).abs() <= 1e-10 * h.abs().max(1.0));
            for l in 0..n {
                assert!((g_fast[l] - g[l]).abs() <= 1e-10 * g[l].abs().max(1.0));
            }
        }
    }

    #[test]
    fn theory_constants_are_ordered() {
        let c = TheoryConstants::default();
        assert!(c.e_infinity < c.e_zero);
        assert_eq!(c.e_zero, 1.657);
        assert_eq!(c.e_infinity, 1.633);
    }
}
