//! Quadratic Wiener-chaos calculus: the Ornstein-Uhlenbeck generator
//! `𝓛_θ`, its carré du champ `𝓔_θ`, the explicit Poisson solution `H_k^m`
//! with `𝓛_θ H_k^m = B_k^m`, and closed-form Gaussian expectations under
//! the invariant measure `μ`.
//!
//! Convention (fixed here, used everywhere): a [`QuadraticForm`] stores
//! unordered pair coefficients, and its value is
//!
//! `F(ω) = Σ_{a<b} 2 Q_{ab} ω̂_a ω̂_b + Σ_a Q_{aa} ω̂_a² + constant`,
//!
//! i.e. `F = ω̂ᵀ Q ω̂ + c` with `Q` symmetric. Off-diagonal coefficients
//! carry multiplicity two; diagonal ones are counted once. Partial
//! derivatives are then `∂_c F = Σ_b 2 Q_{cb} ω̂_b`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::spectral::{ModeIndex, SpectralField};

#[derive(Debug, Error, PartialEq)]
pub enum ChaosError {
    #[error("dissipation exponent theta must be > 0, got {0}")]
    InvalidTheta(f64),
    #[error("field cutoff {field} below form cutoff {form}")]
    CutoffMismatch { field: u32, form: u32 },
    #[error("mode ({k1}, {k2}) outside truncation disk |k| <= {m}")]
    ModeOutsideTruncation { k1: u32, k2: u32, m: u32 },
    #[error("increment requires n > m, got n = {n}, m = {m}")]
    BadIncrement { n: u32, m: u32 },
}

/// Parameters of the generator `𝓛_θ` (viscosity is normalized to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    theta: f64,
}

impl GeneratorParams {
    pub fn new(theta: f64) -> Result<Self, ChaosError> {
        if !(theta > 0.0) {
            return Err(ChaosError::InvalidTheta(theta));
        }
        Ok(Self { theta })
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    /// `|k|^{2θ}`: the dissipation rate of mode `k`.
    #[inline]
    pub fn rate(self, k: ModeIndex) -> f64 {
        (k.norm_sq() as f64).powf(self.theta)
    }
}

/// Normalized unordered pair key.
#[inline]
fn pair_key(a: ModeIndex, b: ModeIndex) -> (ModeIndex, ModeIndex) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A real quadratic cylinder functional of the mode coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    cutoff: u32,
    constant: f64,
    entries: BTreeMap<(ModeIndex, ModeIndex), f64>,
}

impl QuadraticForm {
    pub fn new(cutoff: u32) -> Self {
        Self {
            cutoff,
            constant: 0.0,
            entries: BTreeMap::new(),
        }
    }

    pub fn constant_form(cutoff: u32, constant: f64) -> Self {
        Self {
            cutoff,
            constant,
            entries: BTreeMap::new(),
        }
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn set_constant(&mut self, c: f64) {
        self.constant = c;
    }

    /// Pair coefficient `Q_{ab}` (zero if absent).
    pub fn coefficient(&self, a: ModeIndex, b: ModeIndex) -> f64 {
        self.entries.get(&pair_key(a, b)).copied().unwrap_or(0.0)
    }

    /// Adds to `Q_{ab}`; both modes must lie in the cutoff disk.
    pub fn add_coefficient(
        &mut self,
        a: ModeIndex,
        b: ModeIndex,
        dq: f64,
    ) -> Result<(), ChaosError> {
        for k in [a, b] {
            if !k.in_disk(self.cutoff) {
                return Err(ChaosError::ModeOutsideTruncation {
                    k1: k.k1(),
                    k2: k.k2(),
                    m: self.cutoff,
                });
            }
        }
        *self.entries.entry(pair_key(a, b)).or_insert(0.0) += dq;
        Ok(())
    }

    /// Adds `v · ω̂_a ω̂_b` to the value of the form (ordered-term
    /// bookkeeping: off-diagonal contributions are halved so that the
    /// multiplicity-two convention reproduces the summed value).
    fn add_value_term(&mut self, a: ModeIndex, b: ModeIndex, v: f64) -> Result<(), ChaosError> {
        let dq = if a == b { v } else { v / 2.0 };
        self.add_coefficient(a, b, dq)
    }

    pub fn entries(&self) -> impl Iterator<Item = (ModeIndex, ModeIndex, f64)> + '_ {
        self.entries.iter().map(|(&(a, b), &q)| (a, b, q))
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// Drops entries with exactly zero coefficient.
    pub fn prune(&mut self) {
        self.entries.retain(|_, q| *q != 0.0);
    }

    /// Formal difference of two forms over the larger cutoff.
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = Self::new(self.cutoff.max(other.cutoff));
        out.constant = self.constant - other.constant;
        for (a, b, q) in self.entries() {
            out.add_coefficient(a, b, q).expect("entry within cutoff");
        }
        for (a, b, q) in other.entries() {
            out.add_coefficient(a, b, -q).expect("entry within cutoff");
        }
        out.prune();
        out
    }

    /// Gradient components: for each mode `c`, the linear form
    /// `∂_c F = Σ_b α_b ω̂_b` with `α_b = 2 Q_{cb}`.
    fn gradient(&self) -> BTreeMap<ModeIndex, BTreeMap<ModeIndex, f64>> {
        let mut grad: BTreeMap<ModeIndex, BTreeMap<ModeIndex, f64>> = BTreeMap::new();
        for (a, b, q) in self.entries() {
            *grad.entry(a).or_default().entry(b).or_insert(0.0) += 2.0 * q;
            if a != b {
                *grad.entry(b).or_default().entry(a).or_insert(0.0) += 2.0 * q;
            }
        }
        grad
    }
}

/// Evaluates the form on a field; the field must resolve every mode the
/// form touches.
pub fn evaluate_form(qf: &QuadraticForm, field: &SpectralField) -> Result<f64, ChaosError> {
    if field.cutoff() < qf.cutoff() {
        return Err(ChaosError::CutoffMismatch {
            field: field.cutoff(),
            form: qf.cutoff(),
        });
    }
    let mut sum = qf.constant();
    for (a, b, q) in qf.entries() {
        let mult = if a == b { 1.0 } else { 2.0 };
        sum += mult * q * field.get(a) * field.get(b);
    }
    Ok(sum)
}

/// Applies the generator `𝓛_θ` to a quadratic form.
///
/// `ω̂_a ω̂_b` (a ≠ b) is an eigenfunction with eigenvalue
/// `-(|a|^{2θ} + |b|^{2θ})`; `ω̂_a²` maps to `-2|a|^{2θ} ω̂_a² + 2|a|^{2θ}`.
/// Constants are annihilated.
pub fn generator_apply(qf: &QuadraticForm, params: GeneratorParams) -> QuadraticForm {
    let mut out = QuadraticForm::new(qf.cutoff());
    let mut constant = 0.0;
    for (a, b, q) in qf.entries() {
        let rate = params.rate(a) + params.rate(b);
        out.add_coefficient(a, b, -rate * q)
            .expect("entry within cutoff");
        if a == b {
            constant += 2.0 * params.rate(a) * q;
        }
    }
    out.set_constant(constant);
    out
}

/// Carré du champ `𝓔_θ(F, G) = Σ_c |c|^{2θ} (∂_c F)(∂_c G)` as a quadratic
/// form.
pub fn carre_du_champ(
    f: &QuadraticForm,
    g: &QuadraticForm,
    params: GeneratorParams,
) -> QuadraticForm {
    let grad_f = f.gradient();
    let grad_g = g.gradient();
    let mut out = QuadraticForm::new(f.cutoff().max(g.cutoff()));
    for (c, df) in &grad_f {
        let Some(dg) = grad_g.get(c) else { continue };
        let rate = params.rate(*c);
        let mut support: Vec<ModeIndex> = df.keys().chain(dg.keys()).copied().collect();
        support.sort_unstable();
        support.dedup();
        // assemble the symmetric combination α_x β_y + α_y β_x per
        // unordered pair, so 𝓔(F, G) == 𝓔(G, F) bit for bit
        for (i, &x) in support.iter().enumerate() {
            let alpha_x = df.get(&x).copied().unwrap_or(0.0);
            let beta_x = dg.get(&x).copied().unwrap_or(0.0);
            for &y in &support[i..] {
                let alpha_y = df.get(&y).copied().unwrap_or(0.0);
                let beta_y = dg.get(&y).copied().unwrap_or(0.0);
                if x == y {
                    if alpha_x * beta_x != 0.0 {
                        // group the symmetric product first so swapping
                        // F and G cannot change the rounding
                        out.add_coefficient(x, x, rate * (alpha_x * beta_x))
                            .expect("entry within cutoff");
                    }
                } else {
                    let sym = alpha_x * beta_y + alpha_y * beta_x;
                    if sym != 0.0 {
                        out.add_coefficient(x, y, rate * sym / 2.0)
                            .expect("entry within cutoff");
                    }
                }
            }
        }
    }
    out
}

/// `𝔼_μ[F]`: under `μ` the coefficients are i.i.d. N(0, 1), so only the
/// diagonal and the constant survive.
pub fn mu_expectation(qf: &QuadraticForm) -> f64 {
    let trace: f64 = qf
        .entries()
        .filter(|(a, b, _)| a == b)
        .map(|(_, _, q)| q)
        .sum();
    trace + qf.constant()
}

/// `𝔼_μ[F G]` in closed form by Wick's theorem:
/// `c_F c_G + c_F tr G + c_G tr F + tr F tr G + 2⟨F, G⟩_Frob`.
pub fn mu_expectation_product(f: &QuadraticForm, g: &QuadraticForm) -> f64 {
    let trace = |qf: &QuadraticForm| -> f64 {
        qf.entries()
            .filter(|(a, b, _)| a == b)
            .map(|(_, _, q)| q)
            .sum()
    };
    let tr_f = trace(f);
    let tr_g = trace(g);
    let mut frob = 0.0;
    for (a, b, qf_ab) in f.entries() {
        let qg_ab = g.coefficient(a, b);
        let mult = if a == b { 1.0 } else { 2.0 };
        frob += mult * qf_ab * qg_ab;
    }
    f.constant() * g.constant()
        + f.constant() * tr_g
        + g.constant() * tr_f
        + tr_f * tr_g
        + 2.0 * frob
}

/// Signed interactions `(h, ℓ = k - h)` of the truncated convolution, both
/// in `ℤ₀²` with `|h|, |ℓ| ≤ m`.
fn signed_pairs(k: ModeIndex, m: u32) -> Vec<(i32, i32, i32, i32)> {
    let mi = m as i32;
    let msq = i64::from(m) * i64::from(m);
    let (k1, k2) = (k.k1() as i32, k.k2() as i32);
    let mut out = Vec::new();
    for h1 in -mi..=mi {
        for h2 in -mi..=mi {
            if h1 == 0 || h2 == 0 {
                continue;
            }
            if i64::from(h1) * i64::from(h1) + i64::from(h2) * i64::from(h2) > msq {
                continue;
            }
            let (l1, l2) = (k1 - h1, k2 - h2);
            if l1 == 0 || l2 == 0 {
                continue;
            }
            if i64::from(l1) * i64::from(l1) + i64::from(l2) * i64::from(l2) > msq {
                continue;
            }
            out.push((h1, h2, l1, l2));
        }
    }
    out
}

#[inline]
fn ext_sign(a: i32, b: i32) -> f64 {
    if (a > 0) == (b > 0) {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn abs_mode(a: i32, b: i32) -> ModeIndex {
    ModeIndex::new(a.unsigned_abs(), b.unsigned_abs()).expect("nonzero components")
}

/// The coefficient `B_k^m` as a quadratic form, with the odd sign
/// extension folded into the `ℕ₀²`-pair coefficients.
pub fn b_mode_as_form(k: ModeIndex, m: u32) -> Result<QuadraticForm, ChaosError> {
    if !k.in_disk(m) {
        return Err(ChaosError::ModeOutsideTruncation {
            k1: k.k1(),
            k2: k.k2(),
            m,
        });
    }
    let (k1, k2) = (f64::from(k.k1()), f64::from(k.k2()));
    let mut out = QuadraticForm::new(m);
    for (h1, h2, l1, l2) in signed_pairs(k, m) {
        let weight = (-k1 * f64::from(h2) + k2 * f64::from(h1)) / f64::from(h2 * h2);
        let v = ext_sign(h1, h2) * ext_sign(l1, l2) * weight;
        out.add_value_term(abs_mode(h1, h2), abs_mode(l1, l2), v)?;
    }
    out.prune();
    Ok(out)
}

/// The explicit Poisson solution `H_k^m` with `𝓛_θ H_k^m = B_k^m`:
///
/// `H_k^m(ω) = -χ_{|k|≤m} Σ_{h+ℓ=k} ω̂_h ω̂_ℓ (ℓ·h⊥) / (h₂² (|h|^{2θ} + |ℓ|^{2θ}))`.
///
/// The denominator is the (sign-invariant) generator eigenvalue of the
/// pair `ω̂_h ω̂_ℓ`, which is what makes the identity exact: the kernel
/// `(ℓ·h⊥)/h₂²` equals `(k·h⊥)/h₂²` since `h·h⊥ = 0`, and no diagonal
/// pair carries mass for `k ∈ ℕ₀²`.
pub fn h_poisson(k: ModeIndex, m: u32, params: GeneratorParams) -> QuadraticForm {
    let mut out = QuadraticForm::new(m);
    if !k.in_disk(m) {
        return out;
    }
    for (h1, h2, l1, l2) in signed_pairs(k, m) {
        let h = abs_mode(h1, h2);
        let l = abs_mode(l1, l2);
        // ℓ·h⊥ = -ℓ₁h₂ + ℓ₂h₁
        let kernel = (-f64::from(l1) * f64::from(h2) + f64::from(l2) * f64::from(h1))
            / f64::from(h2 * h2);
        let denom = params.rate(h) + params.rate(l);
        let v = -ext_sign(h1, h2) * ext_sign(l1, l2) * kernel / denom;
        out.add_value_term(h, l, v).expect("pair within disk");
    }
    out.prune();
    out
}

/// Max absolute coefficient mismatch between `𝓛_θ H_k^m` and `B_k^m`,
/// relative to the largest coefficient of `B_k^m`.
pub fn poisson_residual(
    k: ModeIndex,
    m: u32,
    params: GeneratorParams,
) -> Result<f64, ChaosError> {
    if !k.in_disk(m) {
        // both H_k^m and B_k^m are the zero form outside the disk
        return Ok(0.0);
    }
    let b = b_mode_as_form(k, m)?;
    let lh = generator_apply(&h_poisson(k, m, params), params);
    let diff = lh.sub(&b);
    let max_abs = |qf: &QuadraticForm| -> f64 {
        qf.entries()
            .map(|(_, _, q)| q.abs())
            .fold(qf.constant().abs(), f64::max)
    };
    let scale = max_abs(&b);
    let raw = max_abs(&diff);
    Ok(if scale > 0.0 { raw / scale } else { raw })
}

/// `𝔼_μ[𝓔_θ(H_k^m, H_k^m)]` in closed form:
/// `Σ_c |c|^{2θ} 𝔼[(∂_c H)²] = Σ_c |c|^{2θ} Σ_b (2 Q_{cb})²`.
fn expected_carre_of(qf: &QuadraticForm, params: GeneratorParams) -> f64 {
    let mut total = 0.0;
    for (a, b, q) in qf.entries() {
        let sq = 4.0 * q * q;
        if a == b {
            total += params.rate(a) * sq;
        } else {
            total += (params.rate(a) + params.rate(b)) * sq;
        }
    }
    total
}

/// `𝔼_μ[𝓔_θ(H_k^m)]`, evaluated exactly from the form coefficients.
pub fn expected_carre(
    k: ModeIndex,
    m: u32,
    params: GeneratorParams,
) -> Result<f64, ChaosError> {
    if !k.in_disk(m) {
        return Err(ChaosError::ModeOutsideTruncation {
            k1: k.k1(),
            k2: k.k2(),
            m,
        });
    }
    Ok(expected_carre_of(&h_poisson(k, m, params), params))
}

/// `𝔼_μ[𝓔_θ(H_k^n - H_k^m)]` for `n > m`, exactly.
pub fn expected_carre_increment(
    k: ModeIndex,
    n: u32,
    m: u32,
    params: GeneratorParams,
) -> Result<f64, ChaosError> {
    if n <= m {
        return Err(ChaosError::BadIncrement { n, m });
    }
    if !k.in_disk(m) {
        return Err(ChaosError::ModeOutsideTruncation {
            k1: k.k1(),
            k2: k.k2(),
            m,
        });
    }
    let diff = h_poisson(k, n, params).sub(&h_poisson(k, m, params));
    Ok(expected_carre_of(&diff, params))
}
