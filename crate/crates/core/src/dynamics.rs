//! Piecewise-constant unitary evolution of the three-spin density matrix.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{build_hamiltonian, eigensystem, Eigensystem, ExchangeConfig, LocalFields};
use crate::spin::{Mat8, Vec8, C64};

const STATE_TOL: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite 8×8 state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat8);

impl DensityMatrix {
    pub fn new(m: Mat8) -> Result<Self> {
        validate_state(&m)?;
        Ok(Self(m))
    }

    pub fn pure(v: &Vec8) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let u = v / C64::new(n, 0.0);
        Ok(Self(u * u.adjoint()))
    }

    /// Convex combination `Σ w_k |v_k⟩⟨v_k|`; weights must sum to one.
    pub fn mixture(parts: &[(f64, Vec8)]) -> Result<Self> {
        let mut m = Mat8::zeros();
        for (w, v) in parts {
            if *w < 0.0 {
                return Err(Error::InvalidState(format!("negative weight {w}")));
            }
            m += v * v.adjoint() * C64::new(*w, 0.0);
        }
        Self::new(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat8::identity() * C64::new(0.125, 0.0))
    }

    pub fn matrix(&self) -> &Mat8 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat8 {
        self.0
    }

    /// `Re tr(O ρ)`.
    pub fn expectation(&self, op: &Mat8) -> f64 {
        trace_product(op, &self.0)
    }

    /// `U ρ U†` (unitarity of `u` is the caller's responsibility).
    pub fn evolve(&self, u: &Mat8) -> Self {
        let m = u * self.0 * u.adjoint();
        Self((m + m.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        validate_state(&self.0)
    }
}

/// `Re tr(A B)` without forming the product.
pub fn trace_product(a: &Mat8, b: &Mat8) -> f64 {
    let mut acc = 0.0;
    for i in 0..8 {
        for k in 0..8 {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

fn validate_state(m: &Mat8) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    let asym = (m - m.adjoint()).norm();
    if asym > STATE_TOL {
        return Err(Error::InvalidState(format!("not Hermitian ({asym:.3e})")));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::InvalidState(format!("trace {tr}")));
    }
    let min_eig = eigensystem(m)?.values[0];
    if min_eig < -STATE_TOL {
        return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
    }
    Ok(())
}

/// One square pulse: constant exchange and local fields for `duration_us`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub config: ExchangeConfig,
    #[serde(default)]
    pub fields: LocalFields,
    pub duration_us: f64,
}

impl Segment {
    pub fn new(config: ExchangeConfig, duration_us: f64) -> Self {
        Self {
            config,
            fields: LocalFields::zero(),
            duration_us,
        }
    }

    pub fn from_ns(config: ExchangeConfig, duration_ns: f64) -> Self {
        Self::new(config, duration_ns * 1e-3)
    }

    pub fn hamiltonian(&self) -> Result<Mat8> {
        build_hamiltonian(&self.config, &self.fields)
    }

    pub fn unitary(&self) -> Result<Mat8> {
        if !(self.duration_us >= 0.0) || !self.duration_us.is_finite() {
            return Err(invalid("duration_us", format!("{} is not a valid duration", self.duration_us)));
        }
        if self.duration_us == 0.0 {
            self.config.validate()?;
            self.fields.validate()?;
            return Ok(Mat8::identity());
        }
        Ok(eigensystem(&self.hamiltonian()?)?.propagator(self.duration_us))
    }
}

/// Ordered, nonempty list of segments applied first to last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    segments: Vec<Segment>,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(invalid("segments", "pulse sequence must be nonempty"));
        }
        for s in &segments {
            if !(s.duration_us >= 0.0) || !s.duration_us.is_finite() {
                return Err(invalid("duration_us", format!("{} is not a valid duration", s.duration_us)));
            }
            s.config.validate()?;
            s.fields.validate()?;
        }
        Ok(Self { segments })
    }

    /// Single zero-length exchange-off segment.
    pub fn identity() -> Self {
        Self {
            segments: vec![Segment::new(ExchangeConfig::off(0.0), 0.0)],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration_us(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_us).sum()
    }

    pub fn then(mut self, other: &PulseSequence) -> Self {
        self.segments.extend_from_slice(&other.segments);
        self
    }

    pub fn push(&mut self, seg: Segment) {
        self.segments.push(seg);
    }

    /// Copy with `fields` added to every segment and every exchange
    /// coupling mapped through `exchange`.
    pub fn perturbed(&self, fields: &LocalFields, exchange: impl Fn(&ExchangeConfig) -> ExchangeConfig) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let mut b = s.fields;
                for (row, add) in b.b.iter_mut().zip(fields.b.iter()) {
                    for (v, a) in row.iter_mut().zip(add) {
                        *v += a;
                    }
                }
                Segment {
                    config: exchange(&s.config),
                    fields: b,
                    duration_us: s.duration_us,
                }
            })
            .collect();
        Self { segments }
    }

    /// Time-ordered product `U_n ⋯ U_1`.
    pub fn unitary(&self) -> Result<Mat8> {
        self.segments
            .iter()
            .try_fold(Mat8::identity(), |acc, s| Ok(s.unitary()? * acc))
    }
}

pub fn propagate(seq: &PulseSequence, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    rho0.validate()?;
    Ok(rho0.evolve(&seq.unitary()?))
}

/// Like [`propagate`] but returns the state after every segment.
pub fn propagate_with_snapshots(seq: &PulseSequence, rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    rho0.validate()?;
    let mut out = Vec::with_capacity(seq.segments().len());
    let mut rho = rho0.clone();
    for s in seq.segments() {
        rho = rho.evolve(&s.unitary()?);
        out.push(rho.clone());
    }
    Ok(out)
}

/// `Re tr(O ρ(t))` for `ρ(t) = e^{-i2πHt} ρ e^{i2πHt}` evaluated in the
/// eigenbasis of a constant `H`, so any number of times costs one
/// diagonalisation.
#[derive(Debug, Clone)]
pub struct DwellTrace {
    constant: f64,
    /// (frequency λ_n − λ_m, 2·A_mn·B_nm) for n < m.
    terms: Vec<(f64, C64)>,
}

impl DwellTrace {
    pub fn new(eig: &Eigensystem, rho: &Mat8, observable: &Mat8) -> Self {
        let v = &eig.vectors;
        let b = v.adjoint() * rho * v;
        let a = v.adjoint() * observable * v;
        let mut constant = 0.0;
        let mut terms = Vec::with_capacity(28);
        for n in 0..8 {
            constant += (a[(n, n)] * b[(n, n)]).re;
            for m in (n + 1)..8 {
                let w = eig.values[n] - eig.values[m];
                terms.push((w, a[(m, n)] * b[(n, m)] * 2.0));
            }
        }
        Self { constant, terms }
    }

    pub fn eval(&self, t_us: f64) -> f64 {
        let mut acc = self.constant;
        for (w, c) in &self.terms {
            let phase = -std::f64::consts::TAU * w * t_us;
            let (s, co) = phase.sin_cos();
            acc += c.re * co - c.im * s;
        }
        acc
    }

    /// Infinite-time average, counting pairs closer than `tol` MHz as
    /// degenerate.
    pub fn time_average(&self, tol: f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .filter(|(w, _)| w.abs() < tol)
                .map(|(_, c)| c.re)
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{shared_projector, CoupledBasis, ProjectorTag};

    fn zero_state() -> DensityMatrix {
        DensityMatrix::pure(&CoupledBasis::shared().column(0)).unwrap()
    }

    #[test]
    fn state_validation() {
        assert!(DensityMatrix::new(Mat8::identity()).is_err());
        let mut m = Mat8::zeros();
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        let mut m = Mat8::zeros();
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::new(*DensityMatrix::maximally_mixed().matrix()).is_ok());
    }

    #[test]
    fn zero_duration_is_identity() {
        let seq = PulseSequence::new(vec![Segment::new(ExchangeConfig::new(5.0, 1.0, 2.0, 0.3).unwrap(), 0.0)]).unwrap();
        let rho = zero_state();
        assert_eq!(propagate(&seq, &rho).unwrap().matrix(), rho.matrix());
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(PulseSequence::new(vec![]).is_err());
        let mut s = Segment::new(ExchangeConfig::off(0.0), -1.0);
        assert!(PulseSequence::new(vec![s]).is_err());
        s.duration_us = f64::NAN;
        assert!(PulseSequence::new(vec![s]).is_err());
    }

    #[test]
    fn invalid_initial_state_rejected() {
        let seq = PulseSequence::identity();
        let bad = DensityMatrix(Mat8::identity());
        assert!(propagate(&seq, &bad).is_err());
    }

    #[test]
    fn lpi_segment_leaves_qubit_states_unchanged() {
        let j = 20.0;
        let basis = CoupledBasis::shared();
        let v = (basis.column(0) + basis.column(3) * C64::new(0.3, -0.2) + basis.column(2) * C64::new(0.0, 0.7)).normalize();
        let rho = DensityMatrix::pure(&v).unwrap();
        for t in [0.013, 0.1, 0.5] {
            let seq = PulseSequence::new(vec![Segment::new(ExchangeConfig::equal(j, 0.0).unwrap(), t)]).unwrap();
            let out = propagate(&seq, &rho).unwrap();
            assert!((out.matrix() - rho.matrix()).norm() < 1e-9);
        }
    }

    #[test]
    fn exchange_oscillation_about_m_axis() {
        // J12 alone rotates about m̂ (m_z = -1/2): P0(θ) = (1 + 1/4 + 3/4 cos θ)/2.
        let j = 10.0;
        let cfg = ExchangeConfig::new(j, 0.0, 0.0, 0.0).unwrap();
        let p0 = shared_projector(ProjectorTag::Qubit0);
        for t in [0.0125, 0.05, 0.0333] {
            let out = propagate(&PulseSequence::new(vec![Segment::new(cfg, t)]).unwrap(), &zero_state()).unwrap();
            let theta = std::f64::consts::TAU * j * t;
            let want = (1.25 + 0.75 * theta.cos()) / 2.0;
            assert!((out.expectation(p0) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn dwell_trace_matches_direct_propagation() {
        let mut fields = LocalFields::zero();
        fields.b = [[0.3, -0.1, 0.2], [0.05, 0.4, -0.3], [-0.2, 0.1, 0.15]];
        let cfg = ExchangeConfig::new(2.0, 3.0, 1.0, 0.5).unwrap();
        let h = build_hamiltonian(&cfg, &fields).unwrap();
        let eig = eigensystem(&h).unwrap();
        let rho = zero_state();
        let obs = shared_projector(ProjectorTag::Leakage);
        let trace = DwellTrace::new(&eig, rho.matrix(), obs);
        for t in [0.0, 0.17, 1.3, 7.9] {
            let seq = PulseSequence::new(vec![Segment { config: cfg, fields, duration_us: t }]).unwrap();
            let direct = propagate(&seq, &rho).unwrap().expectation(obs);
            assert!((trace.eval(t) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn snapshots_end_at_final_state() {
        let seq = PulseSequence::new(vec![
            Segment::new(ExchangeConfig::new(3.0, 0.0, 0.0, 0.0).unwrap(), 0.02),
            Segment::new(ExchangeConfig::new(0.0, 4.0, 0.0, 1.0).unwrap(), 0.03),
        ])
        .unwrap();
        let snaps = propagate_with_snapshots(&seq, &zero_state()).unwrap();
        assert_eq!(snaps.len(), 2);
        let last = propagate(&seq, &zero_state()).unwrap();
        assert!((snaps[1].matrix() - last.matrix()).norm() < 1e-12);
    }
}
