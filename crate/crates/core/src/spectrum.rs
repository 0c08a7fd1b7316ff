//! Scrambled-output problem instances.
//!
//! An instance is a list of distinct output values `f_0 < f_1 < … < f_K`
//! with exact integer multiplicities summing to `2^n`, a constant offset
//! and the energy scale of the rank-one driver. The dynamics only ever see
//! the class ratios `η_j = m_j / 2^n`; the full diagonal is materialized
//! (as a seeded random permutation) only for the brute-force oracle.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest `n` for which [`scramble`] will materialize `2^n` entries.
pub const DEFAULT_ORACLE_CAP: u32 = 24;

/// Tolerance on `Σ η_j = 1`.
pub const ETA_SUM_TOL: f64 = 1e-12;

/// Raw, unvalidated instance description.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSpec {
    pub n: u32,
    pub values: Vec<f64>,
    pub multiplicities: Vec<BigUint>,
    pub offset: f64,
    pub driver_scale: f64,
}

impl SpectrumSpec {
    /// Convenience constructor for small instances with machine-sized counts.
    pub fn from_counts(n: u32, values: &[f64], multiplicities: &[u64]) -> Self {
        SpectrumSpec {
            n,
            values: values.to_vec(),
            multiplicities: multiplicities.iter().map(|&m| BigUint::from(m)).collect(),
            offset: 0.0,
            driver_scale: 1.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_driver_scale(mut self, driver_scale: f64) -> Self {
        self.driver_scale = driver_scale;
        self
    }

    pub fn validate(self) -> Result<ValidatedSpectrum> {
        validate_spectrum(self)
    }

    /// Parses the JSON spectrum file format.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpectrumFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }

    /// Serializes to the JSON spectrum file format (multiplicities as decimal strings).
    pub fn to_json_string(&self) -> String {
        let file = SpectrumFile::from(self);
        serde_json::to_string_pretty(&file).expect("spectrum file serializes")
    }
}

/// On-disk form. Multiplicities are decimal strings so that values beyond
/// 2^53 survive a round trip through JSON readers that parse numbers as doubles.
#[derive(Debug, Serialize, Deserialize)]
struct SpectrumFile {
    n: u32,
    values: Vec<f64>,
    multiplicities: Vec<String>,
    #[serde(default)]
    offset: f64,
    #[serde(default = "default_driver_scale")]
    driver_scale: f64,
}

fn default_driver_scale() -> f64 {
    1.0
}

impl From<&SpectrumSpec> for SpectrumFile {
    fn from(spec: &SpectrumSpec) -> Self {
        SpectrumFile {
            n: spec.n,
            values: spec.values.clone(),
            multiplicities: spec.multiplicities.iter().map(|m| m.to_string()).collect(),
            offset: spec.offset,
            driver_scale: spec.driver_scale,
        }
    }
}

impl TryFrom<SpectrumFile> for SpectrumSpec {
    type Error = Error;

    fn try_from(file: SpectrumFile) -> Result<Self> {
        let multiplicities = file
            .multiplicities
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<BigUint>()
                    .map_err(|_| Error::Parse(format!("multiplicity {s:?} is not a nonnegative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectrumSpec {
            n: file.n,
            values: file.values,
            multiplicities,
            offset: file.offset,
            driver_scale: file.driver_scale,
        })
    }
}

/// Class ratios `η_j = m_j / 2^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaVector {
    ratios: Vec<f64>,
}

impl EtaVector {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if let Some(bad) = ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(invalid("eta", format!("ratio {bad} outside (0, 1]")));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > ETA_SUM_TOL {
            return Err(invalid("eta", format!("ratios sum to {sum}")));
        }
        Ok(EtaVector { ratios })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// Unit coupling vector `v_j = √η_j`.
    pub fn coupling(&self) -> Vec<f64> {
        self.ratios.iter().map(|r| r.sqrt()).collect()
    }
}

/// A spectrum whose invariants have been checked. Immutable.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedSpectrum {
    spec: SpectrumSpec,
    eta: EtaVector,
}

impl ValidatedSpectrum {
    pub fn n(&self) -> u32 {
        self.spec.n
    }

    pub fn values(&self) -> &[f64] {
        &self.spec.values
    }

    pub fn multiplicities(&self) -> &[BigUint] {
        &self.spec.multiplicities
    }

    pub fn offset(&self) -> f64 {
        self.spec.offset
    }

    pub fn driver_scale(&self) -> f64 {
        self.spec.driver_scale
    }

    pub fn eta(&self) -> &EtaVector {
        &self.eta
    }

    /// Number of distinct classes, `K + 1`.
    pub fn num_classes(&self) -> usize {
        self.spec.values.len()
    }

    pub fn spec(&self) -> &SpectrumSpec {
        &self.spec
    }

    pub fn into_spec(self) -> SpectrumSpec {
        self.spec
    }

    pub fn with_offset(&self, offset: f64) -> Result<Self> {
        self.spec.clone().with_offset(offset).validate()
    }

    pub fn with_driver_scale(&self, driver_scale: f64) -> Result<Self> {
        self.spec.clone().with_driver_scale(driver_scale).validate()
    }

    /// The `1 − F` instance: values `1 − f` reordered ascending, multiplicities
    /// reversed, offset negated.
    pub fn complement(&self) -> Self {
        let spec = SpectrumSpec {
            n: self.spec.n,
            values: self.spec.values.iter().rev().map(|f| 1.0 - f).collect(),
            multiplicities: self.spec.multiplicities.iter().rev().cloned().collect(),
            offset: 0.0 - self.spec.offset,
            driver_scale: self.spec.driver_scale,
        };
        let eta = EtaVector {
            ratios: self.eta.ratios.iter().rev().copied().collect(),
        };
        ValidatedSpectrum { spec, eta }
    }
}

/// `2^n` as an exact integer.
pub fn hilbert_dimension(n: u32) -> BigUint {
    BigUint::one() << n as usize
}

pub fn validate_spectrum(spec: SpectrumSpec) -> Result<ValidatedSpectrum> {
    if spec.n == 0 {
        return Err(invalid("n", "bit count must be positive"));
    }
    if spec.values.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    if spec.values.len() != spec.multiplicities.len() {
        return Err(Error::LengthMismatch {
            values: spec.values.len(),
            multiplicities: spec.multiplicities.len(),
        });
    }
    if let Some(i) = spec.values.iter().position(|v| !v.is_finite()) {
        return Err(invalid("values", format!("value at index {i} is not finite")));
    }
    if let Some(i) = spec.values.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::NonMonotoneValues { index: i + 1 });
    }
    if let Some(index) = spec.multiplicities.iter().position(|m| m.is_zero()) {
        return Err(Error::ZeroMultiplicity { index });
    }
    let sum: BigUint = spec.multiplicities.iter().sum();
    let expected = hilbert_dimension(spec.n);
    if sum != expected {
        return Err(Error::MultiplicitySumMismatch {
            n: spec.n,
            sum: sum.to_string(),
            expected: expected.to_string(),
        });
    }
    if !spec.offset.is_finite() {
        return Err(invalid("offset", "must be finite"));
    }
    if !(spec.driver_scale > 0.0 && spec.driver_scale.is_finite()) {
        return Err(invalid("driver_scale", "must be positive and finite"));
    }
    let eta = eta_ratios_of(&spec)?;
    Ok(ValidatedSpectrum { spec, eta })
}

pub fn eta_ratios(spec: &ValidatedSpectrum) -> EtaVector {
    spec.eta.clone()
}

fn eta_ratios_of(spec: &SpectrumSpec) -> Result<EtaVector> {
    let ratios = spec
        .multiplicities
        .iter()
        .map(|m| ratio_to_pow2(m, spec.n))
        .collect();
    EtaVector::new(ratios)
}

/// Correctly rounded `m / 2^n` without materializing `2^n` as a float.
fn ratio_to_pow2(m: &BigUint, n: u32) -> f64 {
    let bits = m.bits();
    if bits <= 64 {
        let v = m.to_u64().expect("fits in 64 bits") as f64;
        return ldexp(v, -(n as i64));
    }
    let shift = bits - 64;
    let mut top = (m >> shift as usize).to_u64().expect("top 64 bits");
    // sticky bit so the u64 -> f64 conversion rounds as if all bits were present
    if !(m & ((BigUint::one() << shift as usize) - BigUint::one())).is_zero() {
        top |= 1;
    }
    ldexp(top as f64, shift as i64 - n as i64)
}

/// `x · 2^e`, stepping through normal intermediates so only the last
/// multiplication can round into the subnormal range.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    const STEP: i64 = 1000;
    while e > STEP {
        x *= 2f64.powi(STEP as i32);
        e -= STEP;
    }
    while e < -STEP {
        x *= 2f64.powi(-STEP as i32);
        e += STEP;
    }
    x * 2f64.powi(e as i32)
}

/// Deutsch-Josza oracle families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DjKind {
    Balanced,
    Constant0,
    Constant1,
}

impl std::str::FromStr for DjKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(DjKind::Balanced),
            "constant0" => Ok(DjKind::Constant0),
            "constant1" => Ok(DjKind::Constant1),
            other => Err(Error::Parse(format!("unknown DJ kind {other:?}"))),
        }
    }
}

pub fn dj_spectrum(n: u32, kind: DjKind) -> Result<ValidatedSpectrum> {
    if n == 0 {
        return Err(invalid("n", "bit count must be positive"));
    }
    let total = hilbert_dimension(n);
    let spec = match kind {
        DjKind::Balanced => {
            let half = &total >> 1usize;
            SpectrumSpec {
                n,
                values: vec![0.0, 1.0],
                multiplicities: vec![half.clone(), half],
                offset: 0.0,
                driver_scale: 1.0,
            }
        }
        DjKind::Constant0 | DjKind::Constant1 => SpectrumSpec {
            n,
            values: vec![if kind == DjKind::Constant0 { 0.0 } else { 1.0 }],
            multiplicities: vec![total],
            offset: 0.0,
            driver_scale: 1.0,
        },
    };
    spec.validate()
}

/// Binomial random energy model: `f_j = j`, `m_j = C(n, j)`, driver scale `n`.
pub fn rem_spectrum(n: u32) -> Result<ValidatedSpectrum> {
    if n == 0 {
        return Err(invalid("n", "bit count must be positive"));
    }
    let mut multiplicities = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    for k in 0..=n {
        multiplicities.push(c.clone());
        c = c * BigUint::from(n - k) / BigUint::from(k + 1);
    }
    SpectrumSpec {
        n,
        values: (0..=n).map(f64::from).collect(),
        multiplicities,
        offset: 0.0,
        driver_scale: f64::from(n),
    }
    .validate()
}

/// Grover search with `marked` solutions.
pub fn grover_spectrum(n: u32, marked: u64) -> Result<ValidatedSpectrum> {
    if n == 0 {
        return Err(invalid("n", "bit count must be positive"));
    }
    let total = hilbert_dimension(n);
    let m = BigUint::from(marked);
    if marked == 0 || m >= total {
        return Err(Error::MarkedCountOutOfRange { n, marked });
    }
    SpectrumSpec {
        n,
        values: vec![0.0, 1.0],
        multiplicities: vec![m.clone(), total - m],
        offset: 0.0,
        driver_scale: 1.0,
    }
    .validate()
}

/// A concrete problem diagonal: the offset-shifted values in scrambled order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScrambledDiagonal {
    spec: ValidatedSpectrum,
    entries: Vec<f64>,
    class_of: Vec<usize>,
}

impl ScrambledDiagonal {
    pub fn n(&self) -> u32 {
        self.spec.n()
    }

    pub fn spectrum(&self) -> &ValidatedSpectrum {
        &self.spec
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.spec.num_classes()];
        for &c in &self.class_of {
            counts[c] += 1;
        }
        counts
    }

    /// Same permutation, different offset.
    pub fn with_offset(&self, offset: f64) -> Result<Self> {
        let spec = self.spec.with_offset(offset)?;
        Ok(Self::from_classes(spec, self.class_of.clone()))
    }

    /// The diagonal of `1 − F` at the same positions.
    pub fn complement(&self) -> Self {
        let k = self.spec.num_classes() - 1;
        let class_of = self.class_of.iter().map(|&c| k - c).collect();
        Self::from_classes(self.spec.complement(), class_of)
    }

    fn from_classes(spec: ValidatedSpectrum, class_of: Vec<usize>) -> Self {
        let entries = class_of
            .iter()
            .map(|&c| spec.offset() + spec.values()[c])
            .collect();
        ScrambledDiagonal {
            spec,
            entries,
            class_of,
        }
    }
}

/// Seeded uniform random placement of the multiset of values on the diagonal.
pub fn scramble(spec: &ValidatedSpectrum, seed: u64) -> Result<ScrambledDiagonal> {
    scramble_with_cap(spec, seed, DEFAULT_ORACLE_CAP)
}

pub fn scramble_with_cap(spec: &ValidatedSpectrum, seed: u64, cap: u32) -> Result<ScrambledDiagonal> {
    if spec.n() > cap {
        return Err(Error::DimensionTooLarge { n: spec.n(), cap });
    }
    let mut class_of = Vec::with_capacity(1usize << spec.n());
    for (j, m) in spec.multiplicities().iter().enumerate() {
        let m = m.to_usize().expect("multiplicity below oracle cap");
        class_of.extend(std::iter::repeat_n(j, m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    class_of.shuffle(&mut rng);
    Ok(ScrambledDiagonal::from_classes(spec.clone(), class_of))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn smallest_balanced_case_is_valid() {
        assert!(SpectrumSpec::from_counts(1, &[0.0, 1.0], &[1, 1]).validate().is_ok());
    }

    #[test]
    fn sum_mismatch_is_rejected() {
        let err = SpectrumSpec::from_counts(2, &[0.0, 1.0], &[2, 3]).validate().unwrap_err();
        assert!(matches!(err, Error::MultiplicitySumMismatch { n: 2, .. }));
    }

    #[test]
    fn binomial_n2_is_valid() {
        assert!(SpectrumSpec::from_counts(2, &[0.0, 1.0, 2.0], &[1, 2, 1]).validate().is_ok());
    }

    #[test]
    fn other_validation_errors() {
        let e = SpectrumSpec::from_counts(2, &[], &[]).validate().unwrap_err();
        assert_eq!(e, Error::EmptySpectrum);
        let e = SpectrumSpec::from_counts(2, &[1.0, 0.0], &[2, 2]).validate().unwrap_err();
        assert_eq!(e, Error::NonMonotoneValues { index: 1 });
        let e = SpectrumSpec::from_counts(2, &[0.0, 0.0], &[2, 2]).validate().unwrap_err();
        assert_eq!(e, Error::NonMonotoneValues { index: 1 });
        let e = SpectrumSpec::from_counts(2, &[0.0, 1.0, 2.0], &[4, 0, 0]).validate().unwrap_err();
        assert_eq!(e, Error::ZeroMultiplicity { index: 1 });
        let e = SpectrumSpec::from_counts(2, &[0.0], &[2, 2]).validate().unwrap_err();
        assert!(matches!(e, Error::LengthMismatch { .. }));
        let e = SpectrumSpec::from_counts(1, &[0.0, 1.0], &[1, 1])
            .with_driver_scale(0.0)
            .validate()
            .unwrap_err();
        assert!(matches!(e, Error::InvalidParameter { name: "driver_scale", .. }));
    }

    #[test]
    fn eta_examples() {
        let dj = dj_spectrum(3, DjKind::Balanced).unwrap();
        assert_eq!(dj.eta().as_slice(), &[0.5, 0.5]);
        let c = dj_spectrum(3, DjKind::Constant0).unwrap();
        assert_eq!(c.eta().as_slice(), &[1.0]);
        let rem = rem_spectrum(2).unwrap();
        assert_eq!(rem.eta().as_slice(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn eta_sums_to_one_for_large_rem() {
        for n in [60u32, 200, 1024] {
            let rem = rem_spectrum(n).unwrap();
            let sum: f64 = rem.eta().as_slice().iter().sum();
            assert!((sum - 1.0).abs() < ETA_SUM_TOL, "n={n} sum={sum}");
            assert!(rem.eta().as_slice().iter().all(|&r| r > 0.0));
            assert_eq!(rem.multiplicities()[0], BigUint::one());
        }
        // η_0 = 2^-1024 lands in the subnormal range but stays exact
        let rem = rem_spectrum(1024).unwrap();
        assert_eq!(rem.eta().as_slice()[0], 2f64.powi(-1023) / 2.0);
    }

    #[test]
    fn ratio_rounding_matches_direct_division() {
        let m = BigUint::from(3u64) << 80usize;
        assert_eq!(ratio_to_pow2(&(m.clone() + BigUint::one()), 82), 0.75);
        assert_eq!(ratio_to_pow2(&m, 82), 0.75);
        let m = (BigUint::one() << 70usize) - BigUint::one();
        assert_eq!(ratio_to_pow2(&m, 70), 1.0);
    }

    #[test]
    fn family_constructors() {
        let dj = dj_spectrum(2, DjKind::Balanced).unwrap();
        assert_eq!(dj.values(), &[0.0, 1.0]);
        assert_eq!(dj.multiplicities(), big(&[2, 2]).as_slice());
        let c1 = dj_spectrum(2, DjKind::Constant1).unwrap();
        assert_eq!(c1.values(), &[1.0]);
        assert_eq!(c1.multiplicities(), big(&[4]).as_slice());
        let dj1 = dj_spectrum(1, DjKind::Balanced).unwrap();
        assert_eq!(dj1.multiplicities(), big(&[1, 1]).as_slice());

        let rem = rem_spectrum(2).unwrap();
        assert_eq!(rem.values(), &[0.0, 1.0, 2.0]);
        assert_eq!(rem.multiplicities(), big(&[1, 2, 1]).as_slice());
        assert_eq!(rem.driver_scale(), 2.0);
        assert_eq!(rem_spectrum(1).unwrap().multiplicities(), big(&[1, 1]).as_slice());

        assert_eq!(grover_spectrum(3, 1).unwrap().multiplicities(), big(&[1, 7]).as_slice());
        assert_eq!(grover_spectrum(3, 4).unwrap().multiplicities(), big(&[4, 4]).as_slice());
        assert_eq!(
            grover_spectrum(2, 4).unwrap_err(),
            Error::MarkedCountOutOfRange { n: 2, marked: 4 }
        );
        assert!(grover_spectrum(2, 0).is_err());
    }

    #[test]
    fn rem_row_matches_pascal_triangle() {
        // independent construction: Pascal's rule on machine integers
        let mut row = vec![1u64];
        for _ in 0..4 {
            let mut next = vec![1u64; row.len() + 1];
            for k in 1..row.len() {
                next[k] = row[k - 1] + row[k];
            }
            row = next;
        }
        assert_eq!(row, vec![1, 4, 6, 4, 1]);
        assert_eq!(rem_spectrum(4).unwrap().multiplicities(), big(&row).as_slice());
    }

    #[test]
    fn scramble_is_deterministic_and_counts_match() {
        let rem = rem_spectrum(6).unwrap().with_offset(2.5).unwrap();
        let a = scramble(&rem, 42).unwrap();
        let b = scramble(&rem, 42).unwrap();
        assert_eq!(a, b);
        let c = scramble(&rem, 43).unwrap();
        assert_ne!(a.entries(), c.entries());
        let counts = a.class_counts();
        let expected: Vec<u64> = rem.multiplicities().iter().map(|m| m.to_u64().unwrap()).collect();
        assert_eq!(counts, expected);
        for (e, &c) in a.entries().iter().zip(a.class_of()) {
            assert_eq!(*e, 2.5 + rem.values()[c]);
        }
    }

    #[test]
    fn scramble_rem_n2_entries_are_a_permutation() {
        let rem = rem_spectrum(2).unwrap().with_offset(-1.0).unwrap();
        for seed in 0..10 {
            let d = scramble(&rem, seed).unwrap();
            let mut e = d.entries().to_vec();
            e.sort_by(f64::total_cmp);
            assert_eq!(e, vec![-1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn scramble_constant_and_cap() {
        let c = dj_spectrum(4, DjKind::Constant0).unwrap().with_offset(0.75).unwrap();
        let d = scramble(&c, 9).unwrap();
        assert!(d.entries().iter().all(|&e| e == 0.75));
        let big = rem_spectrum(30).unwrap();
        assert_eq!(
            scramble(&big, 0).unwrap_err(),
            Error::DimensionTooLarge { n: 30, cap: DEFAULT_ORACLE_CAP }
        );
        assert!(scramble_with_cap(&rem_spectrum(5).unwrap(), 0, 4).is_err());
    }

    #[test]
    fn complement_swaps_classes_in_place() {
        let dj = dj_spectrum(3, DjKind::Balanced).unwrap();
        let d = scramble(&dj, 5).unwrap();
        let c = d.complement();
        for (a, b) in d.entries().iter().zip(c.entries()) {
            assert_eq!(*b, 1.0 - a);
        }
        assert_eq!(c.spectrum().values(), &[0.0, 1.0]);
        let c0 = scramble(&dj_spectrum(3, DjKind::Constant0).unwrap(), 1).unwrap();
        assert_eq!(c0.complement().spectrum().values(), &[1.0]);
        assert!(c0.complement().entries().iter().all(|&e| e == 1.0));
    }

    #[test]
    fn json_round_trip_preserves_exact_multiplicities() {
        let rem = rem_spectrum(80).unwrap().with_offset(3.25).unwrap();
        let text = rem.spec().to_json_string();
        assert!(text.contains("\"multiplicities\""));
        let back = SpectrumSpec::from_json_str(&text).unwrap();
        assert_eq!(&back, rem.spec());
        let bad = r#"{"n":2,"values":[0,1],"multiplicities":["2","x"]}"#;
        assert!(matches!(SpectrumSpec::from_json_str(bad), Err(Error::Parse(_))));
    }
}
