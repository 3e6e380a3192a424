//! The truncated nonlinear vector field `B^m(ω) = π_m B(π_m ω)` with
//! mode coefficients
//!
//! `B_k(ω) = Σ_{h ∈ ℤ₀²} ω̂_h ω̂_{k-h} (k·h⊥)/h₂²`,  `h⊥ = (-h₂, h₁)`,
//!
//! where coefficients are extended to the signed lattice by the odd sign
//! rule and terms with `k-h` outside `ℤ₀²` are skipped. Three evaluation
//! paths are provided:
//!
//! * [`b_mode`] / [`b_truncated`]: the normative direct sum, O(m⁴) total;
//! * [`BFastPlan`]: the same value through two zero-padded convolutions
//!   computed with fast transforms, O(m² log m);
//! * [`InteractionTable`]: the direct sum with precomputed interaction
//!   coefficients, for repeated evaluation inside time stepping.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::spectral::{disk_modes, FieldError, ModeIndex, SpectralField};

#[derive(Debug, Error, PartialEq)]
pub enum NonlinearityError {
    #[error("mode ({k1}, {k2}) outside truncation disk |k| <= {m}")]
    ModeOutsideTruncation { k1: u32, k2: u32, m: u32 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Which evaluation path produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Fast,
}

/// The value `B^m(ω)` together with its provenance.
#[derive(Debug, Clone)]
pub struct NonlinearityResult {
    pub field: SpectralField,
    pub method: Method,
    pub cutoff: u32,
}

/// Enumerates the signed interactions contributing to `B_k` under
/// truncation at `m`: yields `(h, ℓ = k - h)` with both in `ℤ₀²` and
/// inside the disk.
fn signed_interactions(k: ModeIndex, m: u32) -> impl Iterator<Item = (i32, i32, i32, i32)> {
    let mi = m as i32;
    let msq = i64::from(m) * i64::from(m);
    let (k1, k2) = (k.k1() as i32, k.k2() as i32);
    (-mi..=mi).flat_map(move |h1| {
        (-mi..=mi).filter_map(move |h2| {
            if h1 == 0 || h2 == 0 {
                return None;
            }
            if i64::from(h1) * i64::from(h1) + i64::from(h2) * i64::from(h2) > msq {
                return None;
            }
            let (l1, l2) = (k1 - h1, k2 - h2);
            if l1 == 0 || l2 == 0 {
                return None;
            }
            if i64::from(l1) * i64::from(l1) + i64::from(l2) * i64::from(l2) > msq {
                return None;
            }
            Some((h1, h2, l1, l2))
        })
    })
}

/// Sign of the odd extension at `(a, b)`, both nonzero.
#[inline]
fn ext_sign(a: i32, b: i32) -> f64 {
    if (a > 0) == (b > 0) {
        1.0
    } else {
        -1.0
    }
}

/// One output coefficient of the truncated nonlinearity, by direct
/// summation over the signed lattice.
pub fn b_mode(field: &SpectralField, k: ModeIndex, m: u32) -> Result<f64, NonlinearityError> {
    if !k.in_disk(m) {
        return Err(NonlinearityError::ModeOutsideTruncation {
            k1: k.k1(),
            k2: k.k2(),
            m,
        });
    }
    let (k1, k2) = (f64::from(k.k1()), f64::from(k.k2()));
    let mut sum = 0.0;
    for (h1, h2, l1, l2) in signed_interactions(k, m) {
        let wh = ext_sign(h1, h2)
            * field.get(ModeIndex::new(h1.unsigned_abs(), h2.unsigned_abs()).unwrap());
        if wh == 0.0 {
            continue;
        }
        let wl = ext_sign(l1, l2)
            * field.get(ModeIndex::new(l1.unsigned_abs(), l2.unsigned_abs()).unwrap());
        let weight = (-k1 * f64::from(h2) + k2 * f64::from(h1)) / f64::from(h2 * h2);
        sum += wh * wl * weight;
    }
    Ok(sum)
}

/// `B^m(ω) = π_m B(π_m ω)` assembled from [`b_mode`].
pub fn b_truncated(field: &SpectralField, m: u32) -> Result<NonlinearityResult, NonlinearityError> {
    let projected = field.project(m)?;
    let mut out = SpectralField::zero(m)?;
    for k in disk_modes(m) {
        out.set(k, b_mode(&projected, k, m)?)?;
    }
    Ok(NonlinearityResult {
        field: out,
        method: Method::Direct,
        cutoff: m,
    })
}

/// `⟨ω, B^m(ω)⟩ = Σ_k ω̂_k B^m_k(ω)`; vanishes identically.
pub fn enstrophy_pairing(field: &SpectralField, m: u32) -> Result<f64, NonlinearityError> {
    let b = b_truncated(field, m)?;
    Ok(field.coupling(&b.field))
}

/// Smallest 5-smooth integer ≥ n (keeps transform sizes fast).
fn next_smooth(n: usize) -> usize {
    let mut c = n;
    loop {
        let mut r = c;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return c;
        }
        c += 1;
    }
}

struct Fft2 {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex<f64>>,
    column: Vec<Complex<f64>>,
}

impl Fft2 {
    fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            size,
            forward,
            inverse,
            scratch: vec![Complex::default(); scratch_len],
            column: vec![Complex::default(); size],
        }
    }

    fn transform(&mut self, data: &mut [Complex<f64>], inverse: bool) {
        let n = self.size;
        let fft = if inverse {
            self.inverse.clone()
        } else {
            self.forward.clone()
        };
        for row in data.chunks_exact_mut(n) {
            fft.process_with_scratch(row, &mut self.scratch);
        }
        for col in 0..n {
            for row in 0..n {
                self.column[row] = data[row * n + col];
            }
            fft.process_with_scratch(&mut self.column, &mut self.scratch);
            for row in 0..n {
                data[row * n + col] = self.column[row];
            }
        }
    }
}

/// Reusable fast-path evaluator of `B^m`.
///
/// Splits `k·h⊥ = -k₁h₂ + k₂h₁` so that `B_k = -k₁ C1_k + k₂ C2_k` with
/// `C1 = conv(ω̂_h/h₂, ω̂)` and `C2 = conv(h₁ ω̂_h/h₂², ω̂)` over the signed
/// lattice. Both convolutions are real, so they ride in the real and
/// imaginary parts of a single complex transform.
pub struct BFastPlan {
    m: u32,
    size: usize,
    fft: Fft2,
    base: Vec<Complex<f64>>,
    weighted: Vec<Complex<f64>>,
}

impl BFastPlan {
    pub fn new(m: u32) -> Self {
        // zero padding to at least 2(2m+1) per axis rules out circular
        // aliasing of the linear convolution
        let size = next_smooth(2 * (2 * m as usize + 1));
        Self {
            m,
            size,
            fft: Fft2::new(size),
            base: vec![Complex::default(); size * size],
            weighted: vec![Complex::default(); size * size],
        }
    }

    pub fn cutoff(&self) -> u32 {
        self.m
    }

    #[inline]
    fn grid_index(&self, a: i32, b: i32) -> usize {
        let n = self.size as i32;
        (a.rem_euclid(n) as usize) * self.size + b.rem_euclid(n) as usize
    }

    /// Evaluates `B^m(π_m ω)`.
    pub fn apply(&mut self, field: &SpectralField) -> Result<SpectralField, NonlinearityError> {
        let projected = field.project(self.m)?;
        let m = self.m as i32;
        let msq = i64::from(self.m) * i64::from(self.m);
        self.base.fill(Complex::default());
        self.weighted.fill(Complex::default());
        for h1 in -m..=m {
            for h2 in -m..=m {
                if h1 == 0 || h2 == 0 {
                    continue;
                }
                if i64::from(h1) * i64::from(h1) + i64::from(h2) * i64::from(h2) > msq {
                    continue;
                }
                let w = ext_sign(h1, h2)
                    * projected
                        .get(ModeIndex::new(h1.unsigned_abs(), h2.unsigned_abs()).unwrap());
                let idx = self.grid_index(h1, h2);
                self.base[idx] = Complex::new(w, 0.0);
                self.weighted[idx] = Complex::new(
                    w / f64::from(h2),
                    w * f64::from(h1) / f64::from(h2 * h2),
                );
            }
        }
        self.fft.transform(&mut self.base, false);
        self.fft.transform(&mut self.weighted, false);
        for (a, b) in self.weighted.iter_mut().zip(self.base.iter()) {
            *a *= *b;
        }
        self.fft.transform(&mut self.weighted, true);
        let scale = 1.0 / (self.size * self.size) as f64;
        let mut out = SpectralField::zero(self.m)?;
        for k in disk_modes(self.m) {
            let c = self.weighted[self.grid_index(k.k1() as i32, k.k2() as i32)] * scale;
            out.set(k, -f64::from(k.k1()) * c.re + f64::from(k.k2()) * c.im)?;
        }
        Ok(out)
    }
}

/// One-shot fast evaluation; prefer a reused [`BFastPlan`] in loops.
pub fn b_fast(field: &SpectralField, m: u32) -> Result<NonlinearityResult, NonlinearityError> {
    let field = BFastPlan::new(m).apply(field)?;
    Ok(NonlinearityResult {
        field,
        method: Method::Fast,
        cutoff: m,
    })
}

/// Direct evaluator with the interaction coefficients tabulated once.
///
/// Memory grows like O(m⁴); intended for small cutoffs, with the fast
/// plan taking over for large ones.
pub struct InteractionTable {
    m: u32,
    modes: Vec<ModeIndex>,
    offsets: Vec<usize>,
    terms: Vec<(u32, u32, f64)>,
}

impl InteractionTable {
    pub fn new(m: u32) -> Self {
        let modes = disk_modes(m);
        let mut offsets = Vec::with_capacity(modes.len() + 1);
        let mut terms = Vec::new();
        offsets.push(0);
        for &k in &modes {
            let (k1, k2) = (f64::from(k.k1()), f64::from(k.k2()));
            for (h1, h2, l1, l2) in signed_interactions(k, m) {
                let slot_h = (h1.unsigned_abs() - 1) * m + (h2.unsigned_abs() - 1);
                let slot_l = (l1.unsigned_abs() - 1) * m + (l2.unsigned_abs() - 1);
                let weight = ext_sign(h1, h2)
                    * ext_sign(l1, l2)
                    * (-k1 * f64::from(h2) + k2 * f64::from(h1))
                    / f64::from(h2 * h2);
                terms.push((slot_h, slot_l, weight));
            }
            offsets.push(terms.len());
        }
        Self {
            m,
            modes,
            offsets,
            terms,
        }
    }

    pub fn cutoff(&self) -> u32 {
        self.m
    }

    /// Writes `B^m(ω)` into `out`; both fields must have cutoff `m`.
    pub fn apply(&self, field: &SpectralField, out: &mut SpectralField) {
        assert_eq!(field.cutoff(), self.m);
        assert_eq!(out.cutoff(), self.m);
        let x = field.raw();
        let raw = out.raw_mut();
        raw.fill(0.0);
        for (i, &k) in self.modes.iter().enumerate() {
            let mut sum = 0.0;
            for &(a, b, w) in &self.terms[self.offsets[i]..self.offsets[i + 1]] {
                sum += w * x[a as usize] * x[b as usize];
            }
            raw[((k.k1() - 1) * self.m + (k.k2() - 1)) as usize] = sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample_mu;
    use crate::spectral::NormSpec;
    use approx::assert_abs_diff_eq;

    fn mode(k1: u32, k2: u32) -> ModeIndex {
        ModeIndex::new(k1, k2).unwrap()
    }

    /// Independent brute-force oracle: enumerates the full square
    /// `[-m, m]²` minus the axes with no shared helpers.
    fn b_mode_oracle(field: &SpectralField, k: ModeIndex, m: i32) -> f64 {
        let ext = |a: i32, b: i32| -> f64 {
            if a == 0 || b == 0 {
                return 0.0;
            }
            let sign = if (a > 0) == (b > 0) { 1.0 } else { -1.0 };
            sign * field.get(ModeIndex::new(a.unsigned_abs(), b.unsigned_abs()).unwrap())
        };
        let mut total = 0.0;
        for h1 in -m..=m {
            for h2 in -m..=m {
                if h1 == 0 || h2 == 0 || h1 * h1 + h2 * h2 > m * m {
                    continue;
                }
                let (l1, l2) = (k.k1() as i32 - h1, k.k2() as i32 - h2);
                if l1 == 0 || l2 == 0 || l1 * l1 + l2 * l2 > m * m {
                    continue;
                }
                let weight = (-(k.k1() as f64) * f64::from(h2)
                    + (k.k2() as f64) * f64::from(h1))
                    / f64::from(h2 * h2);
                total += ext(h1, h2) * ext(l1, l2) * weight;
            }
        }
        total
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let zero = SpectralField::zero(6).unwrap();
        for k in disk_modes(6) {
            assert_eq!(b_mode(&zero, k, 6).unwrap(), 0.0);
        }
        let fast = b_fast(&zero, 6).unwrap();
        assert_eq!(fast.field, zero);
    }

    #[test]
    fn single_eigenmode_self_interaction_vanishes() {
        let e11 = SpectralField::basis(4, mode(1, 1)).unwrap();
        for k in disk_modes(4) {
            assert_abs_diff_eq!(b_mode(&e11, k, 4).unwrap(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let f = SpectralField::from_coeffs(4, [(mode(1, 1), 1.0), (mode(2, 1), 1.0)]).unwrap();
        assert_abs_diff_eq!(
            b_mode(&f, mode(1, 2), 4).unwrap(),
            b_mode_oracle(&f, mode(1, 2), 4),
            epsilon = 1e-13
        );
        for seed in 0..10 {
            let g = sample_mu(5, seed).unwrap();
            for k in disk_modes(5) {
                assert_abs_diff_eq!(
                    b_mode(&g, k, 5).unwrap(),
                    b_mode_oracle(&g, k, 5),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn rejects_mode_outside_truncation() {
        let f = sample_mu(4, 0).unwrap();
        assert!(b_mode(&f, mode(4, 4), 4).is_err());
    }

    #[test]
    fn truncated_is_pure_and_m1_vanishes() {
        let f = sample_mu(6, 3).unwrap();
        let a = b_truncated(&f, 6).unwrap();
        let b = b_truncated(&f, 6).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(a.method, Method::Direct);

        // at m = 1 only mode (1,1) survives projection, so B^m = 0
        let g = sample_mu(4, 9).unwrap();
        let r = b_truncated(&g, 1).unwrap();
        assert_eq!(r.field, SpectralField::zero(1).unwrap());
    }

    #[test]
    fn enstrophy_pairing_vanishes() {
        let zero = SpectralField::zero(4).unwrap();
        assert_eq!(enstrophy_pairing(&zero, 4).unwrap(), 0.0);

        let two = SpectralField::from_coeffs(4, [(mode(1, 1), 1.0), (mode(2, 1), 1.0)]).unwrap();
        assert_abs_diff_eq!(enstrophy_pairing(&two, 4).unwrap(), 0.0, epsilon = 1e-13);

        let l2 = NormSpec::new(2.0, 0.0).unwrap();
        for seed in 0..100 {
            let f = sample_mu(16, seed).unwrap();
            let b = b_truncated(&f, 16).unwrap();
            let pairing = f.coupling(&b.field);
            let scale = f.fl_norm(l2).powi(2) * b.field.fl_norm(l2);
            assert!(
                pairing.abs() <= 1e-10 * scale,
                "seed {seed}: pairing {pairing}, scale {scale}"
            );
        }
    }

    #[test]
    fn fast_path_matches_direct() {
        for m in [8u32, 16, 32] {
            let mut plan = BFastPlan::new(m);
            for seed in 0..5 {
                let f = sample_mu(m, seed).unwrap();
                let direct = b_truncated(&f, m).unwrap().field;
                let fast = plan.apply(&f).unwrap();
                for k in disk_modes(m) {
                    assert!(
                        (direct.get(k) - fast.get(k)).abs() <= 1e-10,
                        "m {m} seed {seed} mode {k:?}: {} vs {}",
                        direct.get(k),
                        fast.get(k)
                    );
                }
            }
        }
    }

    #[test]
    fn interaction_table_matches_direct() {
        for m in [4u32, 8] {
            let table = InteractionTable::new(m);
            for seed in 20..25 {
                let f = sample_mu(m, seed).unwrap();
                let mut out = SpectralField::zero(m).unwrap();
                table.apply(&f, &mut out);
                let direct = b_truncated(&f, m).unwrap().field;
                for k in disk_modes(m) {
                    assert_abs_diff_eq!(out.get(k), direct.get(k), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn matches_physical_space_quadrature() {
        // pseudospectral oracle: evaluate v ∂_x ω + w ∂_z ω on a grid and
        // project back onto e_k by the rectangle rule (exact for
        // trigonometric polynomials of this degree). The sine-basis
        // normalization e_k = sin·sin/π makes the spectral kernel 4π times
        // the L² projection.
        let m = 4u32;
        let f = sample_mu(m, 17).unwrap();
        let n = 64usize;
        let step = std::f64::consts::TAU / n as f64;
        let pts: Vec<(f64, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| ((i as f64 + 0.5) * step, (j as f64 + 0.5) * step)))
            .collect();
        let vals = f.evaluate_physical(&pts);
        // termwise analytic derivatives of the omega series
        let modes = disk_modes(m);
        let inv_pi = 1.0 / std::f64::consts::PI;
        let nl: Vec<f64> = pts
            .iter()
            .zip(vals.iter())
            .map(|(&(x, z), v)| {
                let mut dx = 0.0;
                let mut dz = 0.0;
                for &k in &modes {
                    let c = f.get(k);
                    let (k1, k2) = (f64::from(k.k1()), f64::from(k.k2()));
                    dx += c * k1 * inv_pi * (k1 * x).cos() * (k2 * z).sin();
                    dz += c * k2 * inv_pi * (k1 * x).sin() * (k2 * z).cos();
                }
                v.v * dx + v.w * dz
            })
            .collect();
        for k in [mode(1, 1), mode(1, 2), mode(2, 1), mode(3, 2)] {
            let (k1, k2) = (f64::from(k.k1()), f64::from(k.k2()));
            let projection: f64 = pts
                .iter()
                .zip(nl.iter())
                .map(|(&(x, z), &q)| q * inv_pi * (k1 * x).sin() * (k2 * z).sin())
                .sum::<f64>()
                * step
                * step;
            let expected = 4.0 * std::f64::consts::PI * projection;
            assert_abs_diff_eq!(b_mode(&f, k, m).unwrap(), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn fast_large_beats_direct_small() {
        use std::time::Instant;
        let f64field = sample_mu(64, 1).unwrap();
        let start = Instant::now();
        let direct = b_truncated(&f64field, 64).unwrap();
        let direct_time = start.elapsed();

        let f128 = sample_mu(128, 1).unwrap();
        let mut plan = BFastPlan::new(128);
        let warm = plan.apply(&f128).unwrap();
        let start = Instant::now();
        let fast = plan.apply(&f128).unwrap();
        let fast_time = start.elapsed();
        assert_eq!(warm, fast);
        assert!(
            fast_time < direct_time,
            "fast m=128 {fast_time:?} vs direct m=64 {direct_time:?}"
        );
        // keep the optimizer honest
        assert!(direct.field.get(mode(1, 1)).is_finite());
    }
}
