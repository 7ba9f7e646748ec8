//! Finite-box Jacobi operators and the random ensembles that generate them.
//!
//! A box `Λ_L = {1, …, L}` carries a diagonal potential `V(1..=L)` and
//! couplings `a(2..=L)`, where `a(n)` links site `n - 1` to site `n`. The
//! boundary couplings `a(1)` and `a(L + 1)` are dropped (Dirichlet
//! restriction). Vectors are stored 0-based: `diag[i]` is `V(i + 1)` and
//! `offdiag[i]` is `a(i + 2)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::CouplingLaw;
use crate::rng::DrawKey;

/// Symmetric tridiagonal matrix `H_ω(Λ_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
    offdiag_sq: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter(
                "operator needs at least one site".into(),
            ));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::InvalidParameter(format!(
                "{} diagonal entries need {} couplings, got {}",
                diag.len(),
                diag.len() - 1,
                offdiag.len()
            )));
        }
        if diag.iter().chain(&offdiag).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "operator entries must be finite".into(),
            ));
        }
        let offdiag_sq = offdiag.iter().map(|a| a * a).collect();
        Ok(Self {
            diag,
            offdiag,
            offdiag_sq,
        })
    }

    /// Discrete Laplacian `Δ` on `L` sites (zero diagonal, unit couplings).
    pub fn free_laplacian(size: usize) -> Self {
        Self::new(vec![0.0; size], vec![1.0; size.saturating_sub(1)]).expect("size >= 1")
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn offdiag_sq(&self) -> &[f64] {
        &self.offdiag_sq
    }

    /// Coupling `a(k)` between sites `k - 1` and `k` (1-based, `2 <= k <= L`).
    pub fn coupling(&self, k: usize) -> f64 {
        self.offdiag[k - 2]
    }

    /// Gershgorin enclosure of the spectrum, boundary couplings taken as zero.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.size();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 {
                self.offdiag[i - 1].abs()
            } else {
                0.0
            };
            let right = if i + 1 < n {
                self.offdiag[i].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// Upper bound on `‖H‖` from the Gershgorin disc.
    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Restriction to the 0-based site range `sites` (Dirichlet on both ends).
    pub fn restrict(&self, sites: Range<usize>) -> Result<Self> {
        if sites.start >= sites.end || sites.end > self.size() {
            return Err(Error::InvalidParameter(format!(
                "sub-box {sites:?} is empty or exceeds {} sites",
                self.size()
            )));
        }
        let off = self.offdiag[sites.start..sites.end - 1].to_vec();
        Self::new(self.diag[sites.clone()].to_vec(), off)
    }

    /// Same couplings, new diagonal.
    pub fn with_diag(&self, diag: Vec<f64>) -> Result<Self> {
        Self::new(diag, self.offdiag.clone())
    }

    /// Same diagonal, new couplings.
    pub fn with_offdiag(&self, offdiag: Vec<f64>) -> Result<Self> {
        Self::new(self.diag.clone(), offdiag)
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.size();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.offdiag[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.offdiag[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `‖H x − E x‖₂`.
    pub fn residual(&self, energy: f64, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.size()];
        self.apply(x, &mut y);
        y.iter()
            .zip(x)
            .map(|(hy, xi)| (hy - energy * xi).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.offdiag[i];
                m[i + 1][i] = self.offdiag[i];
            }
        }
        m
    }

    fn overwrite(&mut self, diag: impl Iterator<Item = f64>, offdiag: impl Iterator<Item = f64>) {
        self.diag.clear();
        self.diag.extend(diag);
        self.offdiag.clear();
        self.offdiag.extend(offdiag);
        self.offdiag_sq.clear();
        self.offdiag_sq.extend(self.offdiag.iter().map(|a| a * a));
    }
}

/// Single-site profile `d(n)` of an alloy-type potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SiteProfile {
    /// `d(first + i) = values[i]`, zero elsewhere.
    Finite { first: i64, values: Vec<f64> },
    /// `d(n) = amplitude · e^{−rate |n|}`.
    Exponential { amplitude: f64, rate: f64 },
}

impl SiteProfile {
    pub fn delta() -> Self {
        SiteProfile::Finite {
            first: 0,
            values: vec![1.0],
        }
    }

    pub fn value(&self, n: i64) -> f64 {
        match self {
            SiteProfile::Finite { first, values } => {
                let i = n - first;
                if i < 0 || i as usize >= values.len() {
                    0.0
                } else {
                    values[i as usize]
                }
            }
            SiteProfile::Exponential { amplitude, rate } => {
                amplitude * (-rate * n.abs() as f64).exp()
            }
        }
    }

    /// Support radius; `None` for infinitely supported profiles.
    pub fn radius(&self) -> Option<usize> {
        match self {
            SiteProfile::Finite { first, values } => {
                let nonzero: Vec<i64> = values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, _)| first + i as i64)
                    .collect();
                Some(
                    nonzero
                        .iter()
                        .map(|n| n.unsigned_abs() as usize)
                        .max()
                        .unwrap_or(0),
                )
            }
            SiteProfile::Exponential { .. } => None,
        }
    }

    /// `Σ_{|n| > range} |d(n)|`.
    pub fn tail_mass(&self, range: usize) -> f64 {
        match self {
            SiteProfile::Finite { .. } => {
                let r = self.radius().unwrap_or(0);
                (range as i64 + 1..=r as i64)
                    .map(|n| self.value(n).abs() + self.value(-n).abs())
                    .sum()
            }
            SiteProfile::Exponential { amplitude, rate } => {
                2.0 * amplitude.abs() * (-rate * (range as f64 + 1.0)).exp() / (1.0 - (-rate).exp())
            }
        }
    }

    /// Every non-zero `d(n)` has the same sign (hypothesis (H1)).
    pub fn single_signed(&self) -> bool {
        match self {
            SiteProfile::Finite { values, .. } => {
                values.iter().all(|&v| v >= 0.0) || values.iter().all(|&v| v <= 0.0)
            }
            SiteProfile::Exponential { .. } => true,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SiteProfile::Finite { values, .. } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "finite profile needs finite values".into(),
                    ));
                }
            }
            SiteProfile::Exponential { amplitude, rate } => {
                if !amplitude.is_finite() || !rate.is_finite() {
                    return Err(Error::InvalidParameter(
                        "exponential profile needs finite parameters".into(),
                    ));
                }
                if *rate <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "profile with rate {rate} does not decay"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Structure of the random operator family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// `V ≡ 0`, i.i.d. couplings `a(n)` drawn from the law.
    Hopping,
    /// `V(n) = ω_n`, unit couplings.
    Anderson,
    /// `V(m) = Σ_{|n| ≤ range} d(n) ω_{n+m}`, unit couplings.
    Alloy { profile: SiteProfile, range: usize },
    /// `−Δ + V` with `V(2i) = −V(2i+1) = ω_i`.
    DimerSign,
    /// `−Δ + ω_n`, read through the quantum-graph energy family.
    QGraph,
}

/// Energy-dependent rescaling `V_ω(E) = (V_ω − μ_E) / λ_E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpectralFamily {
    /// `λ_E = 1`, `μ_E = E`.
    Identity,
    /// Energy-independent `λ`, `μ`.
    Constant { lambda: f64, mu: f64 },
    /// `V_ω(E)(n) = cos √E − (sin √E / √E) ω_n`.
    QuantumGraph,
}

impl SpectralFamily {
    /// Coefficients `(scale, shift)` with `V_ω(E) = scale · V_ω + shift`.
    pub fn affine(&self, energy: f64) -> Result<(f64, f64)> {
        match *self {
            SpectralFamily::Identity => Ok((1.0, -energy)),
            SpectralFamily::Constant { lambda, mu } => {
                if lambda == 0.0 || !lambda.is_finite() {
                    return Err(Error::Domain {
                        energy,
                        reason: "λ_E = 0, so E is outside σ = {λ_E ≠ 0}".into(),
                    });
                }
                Ok((1.0 / lambda, -mu / lambda))
            }
            SpectralFamily::QuantumGraph => {
                if !(energy > 0.0) {
                    return Err(Error::Domain {
                        energy,
                        reason: "quantum-graph family requires E > 0".into(),
                    });
                }
                let k = energy.sqrt();
                Ok((-k.sin() / k, k.cos()))
            }
        }
    }

    /// `λ_E`; infinite where the affine scale vanishes.
    pub fn lambda(&self, energy: f64) -> Result<f64> {
        let (scale, _) = self.affine(energy)?;
        Ok(1.0 / scale)
    }

    /// `μ_E`.
    pub fn mu(&self, energy: f64) -> Result<f64> {
        let (scale, shift) = self.affine(energy)?;
        Ok(-shift / scale)
    }
}

/// Declarative description of a random operator family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub model: Model,
    pub law: CouplingLaw,
    pub family: SpectralFamily,
}

impl EnsembleSpec {
    pub fn hopping(law: CouplingLaw) -> Self {
        Self {
            model: Model::Hopping,
            law,
            family: SpectralFamily::Identity,
        }
    }

    /// The hopping model with couplings uniform on `[1, 2]`.
    pub fn standard_hopping() -> Self {
        Self::hopping(CouplingLaw::uniform(1.0, 2.0))
    }

    pub fn anderson(law: CouplingLaw) -> Self {
        Self {
            model: Model::Anderson,
            law,
            family: SpectralFamily::Identity,
        }
    }

    pub fn alloy(law: CouplingLaw, profile: SiteProfile, range: usize) -> Self {
        Self {
            model: Model::Alloy { profile, range },
            law,
            family: SpectralFamily::Identity,
        }
    }

    /// Sign-alternating dimer potential with `ω` uniform on `[0, 1]`.
    pub fn dimer_sign(law: CouplingLaw) -> Self {
        Self {
            model: Model::DimerSign,
            law,
            family: SpectralFamily::Identity,
        }
    }

    pub fn qgraph(law: CouplingLaw) -> Self {
        Self {
            model: Model::QGraph,
            law,
            family: SpectralFamily::QuantumGraph,
        }
    }

    pub fn with_family(mut self, family: SpectralFamily) -> Self {
        self.family = family;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        match &self.model {
            Model::Hopping => {
                let (lo, _) = self.law.support();
                if lo <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "hopping couplings must be bounded away from zero".into(),
                    ));
                }
            }
            Model::Alloy { profile, .. } => profile.validate()?,
            Model::QGraph => {
                if self.law.support().0 < 0.0 {
                    return Err(Error::InvalidParameter(
                        "vertex couplings must be non-negative".into(),
                    ));
                }
            }
            Model::Anderson | Model::DimerSign => {}
        }
        if let SpectralFamily::Constant { lambda, mu } = self.family {
            if !lambda.is_finite() || !mu.is_finite() {
                return Err(Error::InvalidParameter(
                    "spectral family parameters must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Range of `ω` indices a box of `size` sites reads.
    pub fn omega_indices(&self, size: usize) -> Range<i64> {
        let l = size as i64;
        match &self.model {
            Model::Hopping => 1..l + 2,
            Model::Anderson | Model::QGraph => 1..l + 1,
            Model::Alloy { range, .. } => {
                let s = *range as i64;
                1 - s..l + s + 1
            }
            Model::DimerSign => 0..l / 2 + 1,
        }
    }

    /// `ω` indices read by the restriction to 1-based sites `first..=last`
    /// of an infinite-volume draw.
    pub fn omega_support(&self, first: i64, last: i64) -> Range<i64> {
        match &self.model {
            // couplings a(first + 1) ..= a(last) are interior to the box
            Model::Hopping => first + 1..last + 1,
            Model::Anderson | Model::QGraph => first..last + 1,
            Model::Alloy { range, .. } => {
                let s = *range as i64;
                first - s..last + s + 1
            }
            Model::DimerSign => first.div_euclid(2)..last.div_euclid(2) + 1,
        }
    }

    /// Separation between boxes beyond which restrictions share no `ω`.
    pub fn iad_distance(&self) -> usize {
        match &self.model {
            Model::Hopping | Model::Anderson | Model::QGraph => 1,
            Model::Alloy { range, .. } => 2 * range + 1,
            Model::DimerSign => 2,
        }
    }

    /// Coupling constant used by models with deterministic couplings.
    fn fixed_coupling(&self) -> f64 {
        match self.model {
            Model::DimerSign | Model::QGraph => -1.0,
            _ => 1.0,
        }
    }

    /// Sample the `ω` needed for a box of `size` sites.
    pub fn draw(&self, size: usize, key: DrawKey) -> Result<EnsembleDraw> {
        self.validate()?;
        let mut omega = Vec::new();
        self.sample_omega_into(size, key, &mut omega);
        Ok(EnsembleDraw {
            omega,
            first_index: self.omega_indices(size).start,
            key,
        })
    }

    pub(crate) fn sample_omega_into(&self, size: usize, key: DrawKey, omega: &mut Vec<f64>) {
        let indices = self.omega_indices(size);
        let mut stream = key.stream();
        omega.clear();
        omega.extend((indices.start..indices.end).map(|_| self.law.quantile(stream.next_unit())));
    }

    /// Diagonal and coupling coefficients of the box operator from raw `ω`.
    pub(crate) fn assemble_into(&self, size: usize, omega: &[f64], out: &mut TridiagonalOperator) {
        let coupling = self.fixed_coupling();
        match &self.model {
            Model::Hopping => out.overwrite(
                std::iter::repeat(0.0).take(size),
                omega[1..size].iter().copied(),
            ),
            Model::Anderson | Model::QGraph => out.overwrite(
                omega[..size].iter().copied(),
                std::iter::repeat(coupling).take(size - 1),
            ),
            Model::Alloy { profile, range } => {
                let s = *range as i64;
                let weights: Vec<f64> = (-s..=s).map(|n| profile.value(n)).collect();
                // omega[0] holds ω_{1−S}; V(m) reads ω_{m−S} ..= ω_{m+S}
                let diag = (0..size).map(|i| {
                    weights
                        .iter()
                        .zip(&omega[i..i + weights.len()])
                        .map(|(d, w)| d * w)
                        .sum::<f64>()
                });
                out.overwrite(diag, std::iter::repeat(coupling).take(size - 1));
            }
            Model::DimerSign => {
                let diag = (1..=size).map(|n| {
                    let w = omega[n / 2];
                    if n % 2 == 0 {
                        w
                    } else {
                        -w
                    }
                });
                out.overwrite(diag, std::iter::repeat(coupling).take(size - 1));
            }
        }
    }

    /// `(site, ∂V(site)/∂ω_index)` for the base potential, 0-based sites.
    pub fn potential_sensitivity(&self, size: usize, index: i64) -> Vec<(usize, f64)> {
        match &self.model {
            Model::Hopping => Vec::new(),
            Model::Anderson | Model::QGraph => {
                if index >= 1 && index <= size as i64 {
                    vec![(index as usize - 1, 1.0)]
                } else {
                    Vec::new()
                }
            }
            Model::Alloy { profile, range } => {
                let s = *range as i64;
                (1..=size as i64)
                    .filter_map(|m| {
                        let n = index - m;
                        (n.abs() <= s && profile.value(n) != 0.0)
                            .then(|| (m as usize - 1, profile.value(n)))
                    })
                    .collect()
            }
            Model::DimerSign => [2 * index, 2 * index + 1]
                .into_iter()
                .filter(|&n| n >= 1 && n <= size as i64)
                .map(|n| (n as usize - 1, if n % 2 == 0 { 1.0 } else { -1.0 }))
                .collect(),
        }
    }
}

/// One realization of the random variables behind a box operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDraw {
    /// `omega[i]` is `ω_{first_index + i}`.
    pub omega: Vec<f64>,
    pub first_index: i64,
    pub key: DrawKey,
}

impl EnsembleDraw {
    /// Deterministic draw with every `ω` equal to `value`.
    pub fn constant(spec: &EnsembleSpec, size: usize, value: f64) -> Self {
        let idx = spec.omega_indices(size);
        Self {
            omega: vec![value; (idx.end - idx.start) as usize],
            first_index: idx.start,
            key: DrawKey::new(0, 0),
        }
    }

    pub fn omega_at(&self, index: i64) -> Option<f64> {
        let i = index - self.first_index;
        (i >= 0)
            .then(|| self.omega.get(i as usize).copied())
            .flatten()
    }
}

/// Build `H_ω(Λ_L)` with Dirichlet boundary conditions.
pub fn assemble(
    spec: &EnsembleSpec,
    size: usize,
    draw: &EnsembleDraw,
) -> Result<TridiagonalOperator> {
    spec.validate()?;
    if size == 0 {
        return Err(Error::InvalidParameter(
            "box size must be at least 1".into(),
        ));
    }
    let indices = spec.omega_indices(size);
    let expected = (indices.end - indices.start) as usize;
    if draw.omega.len() != expected || draw.first_index != indices.start {
        return Err(Error::DrawMismatch(format!(
            "box of {size} sites needs ω indices {indices:?} ({expected} values), draw has {} values from {}",
            draw.omega.len(),
            draw.first_index
        )));
    }
    if draw.omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::DrawMismatch("draw contains non-finite ω".into()));
    }
    let mut op = TridiagonalOperator {
        diag: Vec::with_capacity(size),
        offdiag: Vec::with_capacity(size),
        offdiag_sq: Vec::with_capacity(size),
    };
    spec.assemble_into(size, &draw.omega, &mut op);
    Ok(op)
}

/// Operator with diagonal `V_ω(E) = (V_ω − μ_E)/λ_E` and unchanged couplings.
pub fn energy_family_potential(
    spec: &EnsembleSpec,
    energy: f64,
    size: usize,
    draw: &EnsembleDraw,
) -> Result<TridiagonalOperator> {
    let base = assemble(spec, size, draw)?;
    rescale_to_family(&base, spec.family, energy)
}

/// Apply the family map to an already assembled base operator.
pub fn rescale_to_family(
    base: &TridiagonalOperator,
    family: SpectralFamily,
    energy: f64,
) -> Result<TridiagonalOperator> {
    let (scale, shift) = family.affine(energy)?;
    base.with_diag(base.diag().iter().map(|v| scale * v + shift).collect())
}

/// Replace an exponentially decaying alloy profile by its restriction to
/// `|n| <= S` with `S = ⌈c · ln L⌉`.
pub fn truncate_alloy(spec: &EnsembleSpec, size: usize, c: f64) -> Result<EnsembleSpec> {
    let Model::Alloy { profile, range } = &spec.model else {
        return Err(Error::InvalidParameter(
            "truncation applies to alloy ensembles only".into(),
        ));
    };
    profile.validate()?;
    if !(c > 0.0) || size < 2 {
        return Err(Error::InvalidParameter(
            "truncation needs c > 0 and L >= 2".into(),
        ));
    }
    let raw = c * (size as f64).ln();
    // absorb rounding in c·ln L so that an exact integer is not bumped up
    let s = (raw - 1e-9 * raw.abs().max(1.0)).ceil().max(0.0) as usize;
    let model = match profile {
        SiteProfile::Finite { .. } => {
            let r = profile.radius().unwrap_or(0);
            if s >= r.min(*range) {
                return Ok(spec.clone());
            }
            let values = (-(s as i64)..=s as i64).map(|n| profile.value(n)).collect();
            Model::Alloy {
                profile: SiteProfile::Finite {
                    first: -(s as i64),
                    values,
                },
                range: s,
            }
        }
        SiteProfile::Exponential { .. } => Model::Alloy {
            profile: profile.clone(),
            range: s,
        },
    };
    Ok(EnsembleSpec {
        model,
        law: spec.law.clone(),
        family: spec.family,
    })
}

/// Reusable buffers for hot Monte Carlo loops.
pub struct Realizer {
    omega: Vec<f64>,
    op: TridiagonalOperator,
}

impl Default for Realizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Realizer {
    pub fn new() -> Self {
        Self {
            omega: Vec::new(),
            op: TridiagonalOperator {
                diag: Vec::new(),
                offdiag: Vec::new(),
                offdiag_sq: Vec::new(),
            },
        }
    }

    /// Regenerate draw `key` and assemble its box operator in place.
    pub fn realize(
        &mut self,
        spec: &EnsembleSpec,
        size: usize,
        key: DrawKey,
    ) -> &TridiagonalOperator {
        spec.sample_omega_into(size, key, &mut self.omega);
        spec.assemble_into(size, &self.omega, &mut self.op);
        &self.op
    }

    /// Like [`Realizer::realize`], with the diagonal mapped through the
    /// spectral family at `energy`.
    pub fn realize_family(
        &mut self,
        spec: &EnsembleSpec,
        size: usize,
        key: DrawKey,
        energy: f64,
    ) -> Result<&TridiagonalOperator> {
        let (scale, shift) = spec.family.affine(energy)?;
        self.realize(spec, size, key);
        for v in self.op.diag.iter_mut() {
            *v = scale * *v + shift;
        }
        Ok(&self.op)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn operator(&self) -> &TridiagonalOperator {
        &self.op
    }
}
