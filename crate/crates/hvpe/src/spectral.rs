//! Sine-basis field algebra on the square `[0, 2π]²`.
//!
//! Fields are expanded over the orthonormal basis
//! `e_k(x, z) = sin(k1 x) sin(k2 z) / π` with `k = (k1, k2)`, `k1, k2 ≥ 1`.
//! A [`SpectralField`] stores the coefficients of all modes inside the disk
//! `|k| ≤ m`. Coefficients on the signed lattice (both components nonzero)
//! are recovered by the odd sign extension
//! `ω̂_h = sign(h1 h2) ω̂_(|h1|,|h2|)`.

use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("mode index components must be >= 1, got ({0}, {1})")]
    NonPositiveIndex(i64, i64),
    #[error("signed mode index components must be nonzero, got ({0}, {1})")]
    ZeroComponent(i32, i32),
    #[error("mode ({k1}, {k2}) outside cutoff disk |k| <= {cutoff}")]
    OutOfCutoff { k1: u32, k2: u32, cutoff: u32 },
    #[error("non-finite coefficient {value} at mode ({k1}, {k2})")]
    NonFinite { k1: u32, k2: u32, value: f64 },
    #[error("cutoff must be >= 1")]
    ZeroCutoff,
    #[error("norm order p must be >= 1, got {0}")]
    InvalidNormOrder(f64),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("snapshot i/o: {0}")]
    Io(String),
}

/// A mode of the sine basis: a point of `ℕ₀² = (ℕ∖{0})²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    k1: u32,
    k2: u32,
}

impl ModeIndex {
    pub fn new(k1: u32, k2: u32) -> Result<Self, FieldError> {
        if k1 == 0 || k2 == 0 {
            return Err(FieldError::NonPositiveIndex(i64::from(k1), i64::from(k2)));
        }
        Ok(Self { k1, k2 })
    }

    pub fn k1(self) -> u32 {
        self.k1
    }

    pub fn k2(self) -> u32 {
        self.k2
    }

    /// `|k|² = k1² + k2²`.
    pub fn norm_sq(self) -> u64 {
        u64::from(self.k1) * u64::from(self.k1) + u64::from(self.k2) * u64::from(self.k2)
    }

    /// Euclidean norm `|k|`.
    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn in_disk(self, m: u32) -> bool {
        self.norm_sq() <= u64::from(m) * u64::from(m)
    }
}

/// A point of the signed lattice `ℤ₀² = (ℤ∖{0})²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedModeIndex {
    h1: i32,
    h2: i32,
}

impl SignedModeIndex {
    pub fn new(h1: i32, h2: i32) -> Result<Self, FieldError> {
        if h1 == 0 || h2 == 0 {
            return Err(FieldError::ZeroComponent(h1, h2));
        }
        Ok(Self { h1, h2 })
    }

    pub fn h1(self) -> i32 {
        self.h1
    }

    pub fn h2(self) -> i32 {
        self.h2
    }

    pub fn norm_sq(self) -> u64 {
        let a = i64::from(self.h1);
        let b = i64::from(self.h2);
        (a * a + b * b) as u64
    }

    /// The componentwise absolute value, a point of `ℕ₀²`.
    pub fn abs(self) -> ModeIndex {
        ModeIndex {
            k1: self.h1.unsigned_abs(),
            k2: self.h2.unsigned_abs(),
        }
    }

    /// `sign(h1 h2)` as ±1.
    pub fn sign(self) -> f64 {
        if (self.h1 > 0) == (self.h2 > 0) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Norm specification for the Fourier-Lebesgue norm `‖·‖_{FL^{p,α}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    p: f64,
    alpha: f64,
}

impl NormSpec {
    /// `p = f64::INFINITY` selects the sup norm.
    pub fn new(p: f64, alpha: f64) -> Result<Self, FieldError> {
        if !(p >= 1.0) {
            return Err(FieldError::InvalidNormOrder(p));
        }
        Ok(Self { p, alpha })
    }

    pub fn p(self) -> f64 {
        self.p
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

/// All modes of `ℕ₀²` inside the disk `|k| ≤ m`, in k1-major order.
pub fn disk_modes(m: u32) -> Vec<ModeIndex> {
    let mut out = Vec::new();
    for k1 in 1..=m {
        for k2 in 1..=m {
            let k = ModeIndex { k1, k2 };
            if k.in_disk(m) {
                out.push(k);
            }
        }
    }
    out
}

/// Point values of a field and its reconstructed velocity components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalValues {
    pub omega: f64,
    pub v: f64,
    pub w: f64,
}

/// Real sine-basis coefficients up to a cutoff `m`: the state `ω`.
///
/// Storage is a dense `m × m` array; slots outside the disk `|k| ≤ m` are
/// kept at zero, and lookups outside the stored set return zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    cutoff: u32,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zero(cutoff: u32) -> Result<Self, FieldError> {
        if cutoff == 0 {
            return Err(FieldError::ZeroCutoff);
        }
        Ok(Self {
            cutoff,
            coeffs: vec![0.0; (cutoff * cutoff) as usize],
        })
    }

    /// Builds a validated field; unspecified modes are zero.
    pub fn from_coeffs<I>(cutoff: u32, coeffs: I) -> Result<Self, FieldError>
    where
        I: IntoIterator<Item = (ModeIndex, f64)>,
    {
        let mut field = Self::zero(cutoff)?;
        for (k, value) in coeffs {
            if !k.in_disk(cutoff) {
                return Err(FieldError::OutOfCutoff {
                    k1: k.k1,
                    k2: k.k2,
                    cutoff,
                });
            }
            if !value.is_finite() {
                return Err(FieldError::NonFinite {
                    k1: k.k1,
                    k2: k.k2,
                    value,
                });
            }
            let slot = field.slot(k);
            field.coeffs[slot] = value;
        }
        Ok(field)
    }

    /// The single basis function `e_k`.
    pub fn basis(cutoff: u32, k: ModeIndex) -> Result<Self, FieldError> {
        Self::from_coeffs(cutoff, [(k, 1.0)])
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    #[inline]
    fn slot(&self, k: ModeIndex) -> usize {
        ((k.k1 - 1) * self.cutoff + (k.k2 - 1)) as usize
    }

    /// Coefficient lookup; zero outside the stored disk.
    #[inline]
    pub fn get(&self, k: ModeIndex) -> f64 {
        if k.k1 > self.cutoff || k.k2 > self.cutoff || !k.in_disk(self.cutoff) {
            0.0
        } else {
            self.coeffs[self.slot(k)]
        }
    }

    /// Sets a coefficient inside the disk; out-of-disk writes are rejected.
    pub fn set(&mut self, k: ModeIndex, value: f64) -> Result<(), FieldError> {
        if k.k1 > self.cutoff || k.k2 > self.cutoff || !k.in_disk(self.cutoff) {
            return Err(FieldError::OutOfCutoff {
                k1: k.k1,
                k2: k.k2,
                cutoff: self.cutoff,
            });
        }
        let slot = self.slot(k);
        self.coeffs[slot] = value;
        Ok(())
    }

    /// Raw dense storage, k1-major; out-of-disk slots are zero.
    pub fn raw(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Odd sign extension to the signed lattice:
    /// `ω̂_h = sign(h1 h2) ω̂_(|h1|,|h2|)`.
    #[inline]
    pub fn extend_coefficient(&self, h: SignedModeIndex) -> f64 {
        h.sign() * self.get(h.abs())
    }

    /// The projection `π_{m'}`: modes with `|k| ≤ m'` kept, others dropped.
    /// The result has cutoff `min(m, m')`.
    pub fn project(&self, new_cutoff: u32) -> Result<Self, FieldError> {
        if new_cutoff == 0 {
            return Err(FieldError::ZeroCutoff);
        }
        let m = self.cutoff.min(new_cutoff);
        let mut out = Self::zero(m)?;
        for k in disk_modes(m) {
            let slot = out.slot(k);
            out.coeffs[slot] = self.get(k);
        }
        Ok(out)
    }

    /// `‖ω‖_{FL^{p,α}} = (Σ |k|^{αp} |ω̂_k|^p)^{1/p}`, sup over modes for p=∞.
    pub fn fl_norm(&self, spec: NormSpec) -> f64 {
        if spec.p.is_infinite() {
            let mut sup = 0.0f64;
            for k in disk_modes(self.cutoff) {
                let term = k.norm().powf(spec.alpha) * self.get(k).abs();
                sup = sup.max(term);
            }
            sup
        } else {
            let mut sum = 0.0;
            for k in disk_modes(self.cutoff) {
                sum += k.norm().powf(spec.alpha * spec.p) * self.get(k).abs().powf(spec.p);
            }
            sum.powf(1.0 / spec.p)
        }
    }

    /// The operator `A`: inverse of `-∂_z²` with Dirichlet conditions in z,
    /// i.e. coefficients divided by `k2²`.
    pub fn apply_a(&self) -> Self {
        let mut out = self.clone();
        for k in disk_modes(self.cutoff) {
            let slot = out.slot(k);
            out.coeffs[slot] = self.get(k) / f64::from(k.k2 * k.k2);
        }
        out
    }

    /// Diagonal action of `(-Δ)^s`: coefficients multiplied by `|k|^{2s}`.
    pub fn multiplier(&self, s: f64) -> Self {
        let mut out = self.clone();
        for k in disk_modes(self.cutoff) {
            let slot = out.slot(k);
            out.coeffs[slot] = self.get(k) * (k.norm_sq() as f64).powf(s);
        }
        out
    }

    /// Evaluates `ω` and the velocity `(v, w) = ∇⊥A(ω)` at physical points
    /// by direct series summation.
    ///
    /// `v = -∂_z A(ω)` and `w = ∂_x A(ω)`, differentiated termwise.
    pub fn evaluate_physical(&self, points: &[(f64, f64)]) -> Vec<PhysicalValues> {
        let inv_pi = 1.0 / std::f64::consts::PI;
        let modes = disk_modes(self.cutoff);
        points
            .iter()
            .map(|&(x, z)| {
                let mut omega = 0.0;
                let mut v = 0.0;
                let mut w = 0.0;
                for &k in &modes {
                    let c = self.get(k);
                    if c == 0.0 {
                        continue;
                    }
                    let k1 = f64::from(k.k1);
                    let k2 = f64::from(k.k2);
                    let (s1, c1) = (k1 * x).sin_cos();
                    let (s2, c2) = (k2 * z).sin_cos();
                    omega += c * inv_pi * s1 * s2;
                    v += -c / k2 * inv_pi * s1 * c2;
                    w += c * k1 / (k2 * k2) * inv_pi * c1 * s2;
                }
                PhysicalValues { omega, v, w }
            })
            .collect()
    }

    /// Coupling `⟨f, g⟩ = Σ_k f̂_k ĝ_k` over the common support.
    pub fn coupling(&self, other: &Self) -> f64 {
        let m = self.cutoff.min(other.cutoff);
        let mut sum = 0.0;
        for k in disk_modes(m) {
            sum += self.get(k) * other.get(k);
        }
        sum
    }

    /// Writes the plain-text snapshot: header `m=<int> count=<int>`, then
    /// `k1 k2 value` triples in k1-major order.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        let io_err = |e: std::io::Error| FieldError::Io(e.to_string());
        let nonzero: Vec<ModeIndex> = disk_modes(self.cutoff)
            .into_iter()
            .filter(|&k| self.get(k) != 0.0)
            .collect();
        writeln!(w, "m={} count={}", self.cutoff, nonzero.len()).map_err(io_err)?;
        for k in nonzero {
            writeln!(w, "{} {} {:.16e}", k.k1, k.k2, self.get(k)).map_err(io_err)?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`Self::write_snapshot`]; rejects
    /// malformed lines.
    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self, FieldError> {
        let bad = |msg: &str| FieldError::Snapshot(msg.to_string());
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .map_err(|e| FieldError::Io(e.to_string()))?;
        let mut m = None;
        let mut count = None;
        for part in header.split_whitespace() {
            if let Some(v) = part.strip_prefix("m=") {
                m = Some(v.parse::<u32>().map_err(|_| bad("invalid m"))?);
            } else if let Some(v) = part.strip_prefix("count=") {
                count = Some(v.parse::<usize>().map_err(|_| bad("invalid count"))?);
            } else {
                return Err(bad("unexpected header token"));
            }
        }
        let m = m.ok_or_else(|| bad("header missing m"))?;
        let count = count.ok_or_else(|| bad("header missing count"))?;
        let mut entries = Vec::with_capacity(count);
        for line in lines {
            let line = line.map_err(|e| FieldError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let k1: u32 = it
                .next()
                .ok_or_else(|| bad("missing k1"))?
                .parse()
                .map_err(|_| bad("invalid k1"))?;
            let k2: u32 = it
                .next()
                .ok_or_else(|| bad("missing k2"))?
                .parse()
                .map_err(|_| bad("invalid k2"))?;
            let value: f64 = it
                .next()
                .ok_or_else(|| bad("missing value"))?
                .parse()
                .map_err(|_| bad("invalid value"))?;
            if it.next().is_some() {
                return Err(bad("trailing tokens"));
            }
            entries.push((ModeIndex::new(k1, k2)?, value));
        }
        if entries.len() != count {
            return Err(bad("entry count does not match header"));
        }
        Self::from_coeffs(m, entries)
    }
}
