//! Eigenspace perturbation of Reynolds stresses.
//!
//! Shape is perturbed by moving the anisotropy eigenvalues toward a limiting
//! state in barycentric coordinates, alignment by permuting the eigenvector
//! frame, and size by scaling the turbulent kinetic energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{
    anisotropy, barycentric, eig_sym3, from_barycentric, reconstruct, tke, BarycentricPoint,
    EigenDecomp, Mat3, SymTensor3, TensorError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpmError {
    #[error("perturbation magnitude delta_b = {0} is outside [0, 1]")]
    InvalidDelta(f64),
    #[error("amplitude factor must be positive and finite, got {0}")]
    InvalidAmplitude(f64),
    #[error("anisotropy eigenvalues {0:?} are not descending and realizable")]
    InvalidEigenvalues([f64; 3]),
    #[error("envelope requires at least one perturbation")]
    EmptySpecList,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, EpmError>;

/// Limiting state of turbulence used as a perturbation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitingState {
    #[serde(rename = "1c")]
    OneComponent,
    #[serde(rename = "2c")]
    TwoComponent,
    #[serde(rename = "3c")]
    ThreeComponent,
}

impl LimitingState {
    pub const ALL: [LimitingState; 3] = [
        LimitingState::OneComponent,
        LimitingState::TwoComponent,
        LimitingState::ThreeComponent,
    ];

    pub fn corner(self) -> BarycentricPoint {
        match self {
            LimitingState::OneComponent => BarycentricPoint::new(1.0, 0.0, 0.0),
            LimitingState::TwoComponent => BarycentricPoint::new(0.0, 1.0, 0.0),
            LimitingState::ThreeComponent => BarycentricPoint::new(0.0, 0.0, 1.0),
        }
    }

    /// Anisotropy eigenvalues of the corner.
    pub fn eigenvalues(self) -> [f64; 3] {
        match self {
            LimitingState::OneComponent => [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
            LimitingState::TwoComponent => [1.0 / 6.0, 1.0 / 6.0, -1.0 / 3.0],
            LimitingState::ThreeComponent => [0.0, 0.0, 0.0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LimitingState::OneComponent => "1c",
            LimitingState::TwoComponent => "2c",
            LimitingState::ThreeComponent => "3c",
        }
    }
}

impl std::str::FromStr for LimitingState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1c" => Ok(LimitingState::OneComponent),
            "2c" => Ok(LimitingState::TwoComponent),
            "3c" => Ok(LimitingState::ThreeComponent),
            other => Err(format!("unknown limiting state '{other}', expected 1c, 2c or 3c")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenvectorMode {
    #[default]
    Keep,
    SwapExtremes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub target: LimitingState,
    pub delta_b: f64,
    pub amplitude_factor: f64,
    pub eigenvector_mode: EigenvectorMode,
}

impl PerturbationSpec {
    /// Shape-only perturbation toward `target`.
    pub fn toward(target: LimitingState, delta_b: f64) -> Self {
        Self {
            target,
            delta_b,
            amplitude_factor: 1.0,
            eigenvector_mode: EigenvectorMode::Keep,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta_b)?;
        if !(self.amplitude_factor > 0.0 && self.amplitude_factor.is_finite()) {
            return Err(EpmError::InvalidAmplitude(self.amplitude_factor));
        }
        Ok(())
    }
}

/// The uncalibrated physics bound: every corner at full magnitude.
pub fn baseline_specs() -> Vec<PerturbationSpec> {
    LimitingState::ALL
        .iter()
        .map(|&t| PerturbationSpec::toward(t, 1.0))
        .collect()
}

fn check_delta(delta_b: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta_b) {
        Ok(())
    } else {
        Err(EpmError::InvalidDelta(delta_b))
    }
}

/// Moves ordered anisotropy eigenvalues a fraction `delta_b` of the way to
/// the target corner of the barycentric triangle.
pub fn perturb_eigenvalues(lambda: &[f64; 3], target: LimitingState, delta_b: f64) -> Result<[f64; 3]> {
    check_delta(delta_b)?;
    let p = barycentric(lambda);
    if !(p.c1 >= -1e-12 && p.c2 >= -1e-12 && p.c3 >= -1e-12) {
        return Err(EpmError::InvalidEigenvalues(*lambda));
    }
    if delta_b == 0.0 {
        return Ok(*lambda);
    }
    if delta_b == 1.0 {
        return Ok(target.eigenvalues());
    }
    let t = target.corner();
    let moved = BarycentricPoint::new(
        p.c1 + delta_b * (t.c1 - p.c1),
        p.c2 + delta_b * (t.c2 - p.c2),
        p.c3 + delta_b * (t.c3 - p.c3),
    );
    Ok(from_barycentric(&moved)?)
}

/// `SwapExtremes` maps the frame `(v1, v2, v3)` to `(v3, v2, -v1)`.
pub fn perturb_eigenvectors(v: &Mat3, mode: EigenvectorMode) -> Mat3 {
    match mode {
        EigenvectorMode::Keep => *v,
        EigenvectorMode::SwapExtremes => {
            let mut out = *v;
            for row in out.iter_mut() {
                let first = row[0];
                row[0] = row[2];
                row[2] = -first;
            }
            out
        }
    }
}

/// Perturbs `r` toward `target` by `delta_b` and rescales its TKE to `k_star`.
///
/// Unlike [`apply_perturbation`] this accepts `k_star = 0`.
pub(crate) fn perturb_to(
    r: &SymTensor3,
    target: LimitingState,
    delta_b: f64,
    k_star: f64,
    mode: EigenvectorMode,
) -> Result<SymTensor3> {
    check_delta(delta_b)?;
    let k = tke(r);
    let b = anisotropy(r)?;
    if delta_b == 0.0 && mode == EigenvectorMode::Keep {
        // pure amplitude change; anisotropy is untouched
        return Ok(r.scale(k_star / k));
    }
    let d = eig_sym3(&b.0)?;
    let perturbed = EigenDecomp {
        eigenvalues: perturb_eigenvalues(&d.eigenvalues, target, delta_b)?,
        eigenvectors: perturb_eigenvectors(&d.eigenvectors, mode),
    };
    Ok(reconstruct(k_star, &perturbed)?)
}

pub fn apply_perturbation(r: &SymTensor3, spec: &PerturbationSpec) -> Result<SymTensor3> {
    spec.validate()?;
    let k_star = spec.amplitude_factor * tke(r);
    perturb_to(r, spec.target, spec.delta_b, k_star, spec.eigenvector_mode)
}

/// Componentwise bounds over a family of stress tensors, together with the
/// range of their turbulent kinetic energies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: SymTensor3,
    pub upper: SymTensor3,
    pub member_count: usize,
    pub tke_lower: f64,
    pub tke_upper: f64,
}

impl Envelope {
    /// Panics on an empty member list.
    pub fn from_members(members: &[SymTensor3]) -> Self {
        let first = members.first().expect("envelope needs at least one member");
        let mut env = Envelope {
            lower: *first,
            upper: *first,
            member_count: 0,
            tke_lower: tke(first),
            tke_upper: tke(first),
        };
        for m in members {
            env.lower = env.lower.zip(m, f64::min);
            env.upper = env.upper.zip(m, f64::max);
            env.tke_lower = env.tke_lower.min(tke(m));
            env.tke_upper = env.tke_upper.max(tke(m));
            env.member_count += 1;
        }
        env
    }

    pub fn width(&self) -> SymTensor3 {
        self.upper.sub(&self.lower)
    }

    pub fn contains(&self, r: &SymTensor3, tol: f64) -> bool {
        let (lo, hi, x) = (self.lower.components(), self.upper.components(), r.components());
        (0..6).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol)
    }

    pub fn is_within(&self, outer: &Envelope, tol: f64) -> bool {
        outer.contains(&self.lower, tol) && outer.contains(&self.upper, tol)
    }
}

/// Baseline tensor followed by one perturbed member per spec.
pub fn envelope_members(r: &SymTensor3, specs: &[PerturbationSpec]) -> Result<Vec<SymTensor3>> {
    if specs.is_empty() {
        return Err(EpmError::EmptySpecList);
    }
    let mut members = Vec::with_capacity(specs.len() + 1);
    members.push(*r);
    for spec in specs {
        members.push(apply_perturbation(r, spec)?);
    }
    Ok(members)
}

pub fn envelope(r: &SymTensor3, specs: &[PerturbationSpec]) -> Result<Envelope> {
    Ok(Envelope::from_members(&envelope_members(r, specs)?))
}
