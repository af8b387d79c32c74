//! Half-precision radix-2 FFT with a Plancherel-identity checker.
//!
//! Every arithmetic result of the datapath is rounded to binary16. The
//! operands of a single add or multiply are binary16, so computing the
//! operation in f64 and rounding once gives the correctly rounded result.
//! The checker accumulates its inner products in f32.

mod campaign;

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use half::f16;
use rand::Rng;
use thiserror::Error;

use crate::stats::trial_rng;

pub use campaign::{
    fft_attack_campaign, reference_selftest, EngineAttack, FftAttackGenerator, FftEngine, SelftestVerdict,
};

#[derive(Debug, Error)]
pub enum FftError {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("overflow to infinity in stage {stage}")]
    Overflow { stage: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("{0}")]
    Domain(String),
    #[error("non-pair required: the reference slots hold an FFT pair")]
    NonPairRequired,
    #[error("reference file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HalfComplex {
    pub re: f16,
    pub im: f16,
}

fn h(v: f64) -> f16 {
    f16::from_f64(v)
}

impl HalfComplex {
    pub const ZERO: HalfComplex = HalfComplex {
        re: f16::ZERO,
        im: f16::ZERO,
    };

    /// Rounds both parts to the nearest half-precision value.
    pub fn from_f64(re: f64, im: f64) -> Self {
        HalfComplex { re: h(re), im: h(im) }
    }

    pub fn to_f64(self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn is_zero(self) -> bool {
        self.re == f16::ZERO && self.im == f16::ZERO
    }

    pub fn to_bits(self) -> (u16, u16) {
        (self.re.to_bits(), self.im.to_bits())
    }

    pub fn from_bits(re: u16, im: u16) -> Self {
        HalfComplex {
            re: f16::from_bits(re),
            im: f16::from_bits(im),
        }
    }
}

impl std::ops::Add for HalfComplex {
    type Output = HalfComplex;
    fn add(self, o: Self) -> Self {
        HalfComplex {
            re: h(self.re.to_f64() + o.re.to_f64()),
            im: h(self.im.to_f64() + o.im.to_f64()),
        }
    }
}

impl std::ops::Sub for HalfComplex {
    type Output = HalfComplex;
    fn sub(self, o: Self) -> Self {
        HalfComplex {
            re: h(self.re.to_f64() - o.re.to_f64()),
            im: h(self.im.to_f64() - o.im.to_f64()),
        }
    }
}

/// Four rounded products, then two rounded sums.
impl std::ops::Mul for HalfComplex {
    type Output = HalfComplex;
    fn mul(self, o: Self) -> Self {
        let (a, b) = self.to_f64();
        let (c, d) = o.to_f64();
        let p = |x: f64, y: f64| h(x * y).to_f64();
        HalfComplex {
            re: h(p(a, c) - p(b, d)),
            im: h(p(a, d) + p(b, c)),
        }
    }
}

impl fmt::Display for HalfComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{:+}i)", self.re, self.im.to_f32())
    }
}

fn check_len(n: usize) -> Result<usize, FftError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(FftError::NotPowerOfTwo(n));
    }
    Ok(n.trailing_zeros() as usize)
}

/// e^{-2πik/N} for k < N/2, rounded.
fn twiddles(n: usize) -> Vec<HalfComplex> {
    (0..n / 2)
        .map(|k| {
            let a = -2.0 * PI * k as f64 / n as f64;
            HalfComplex::from_f64(a.cos(), a.sin())
        })
        .collect()
}

/// Identifies one butterfly output: `stage` counts from 0 (pairs at
/// distance 1), `index` is the position written in that stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ButterflyTap {
    pub stage: usize,
    pub index: usize,
}

/// Decimation-in-time FFT. `tamper` may rewrite any butterfly output as it
/// is produced; with `strict` a non-finite value is an error, otherwise it
/// propagates.
pub(crate) fn fft_tampered(
    x: &[HalfComplex],
    strict: bool,
    mut tamper: impl FnMut(ButterflyTap, HalfComplex) -> HalfComplex,
) -> Result<Vec<HalfComplex>, FftError> {
    let n = x.len();
    let bits = check_len(n)?;
    let mut a: Vec<HalfComplex> = vec![HalfComplex::ZERO; n];
    for (i, &v) in x.iter().enumerate() {
        let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS as usize - bits) };
        a[j] = v;
    }
    let w = twiddles(n);
    for stage in 0..bits {
        let half = 1 << stage;
        let step = n / (2 * half);
        for start in (0..n).step_by(2 * half) {
            for k in 0..half {
                let (i, j) = (start + k, start + k + half);
                let t = a[j] * w[k * step];
                let hi = a[i] + t;
                let lo = a[i] - t;
                a[i] = tamper(ButterflyTap { stage, index: i }, hi);
                a[j] = tamper(ButterflyTap { stage, index: j }, lo);
                if strict && (!a[i].is_finite() || !a[j].is_finite()) {
                    return Err(FftError::Overflow { stage });
                }
            }
        }
    }
    Ok(a)
}

pub fn fft(x: &[HalfComplex]) -> Result<Vec<HalfComplex>, FftError> {
    fft_tampered(x, true, |_, v| v)
}

/// Textbook O(N²) DFT in f64, for references and test oracles.
pub fn dft_f64(x: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(sr, si), (i, &(re, im))| {
                let a = -2.0 * PI * ((i * k) % n) as f64 / n as f64;
                let (c, s) = (a.cos(), a.sin());
                (sr + re * c - im * s, si + re * s + im * c)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlancherelReference {
    pub y: Vec<HalfComplex>,
    pub big_y: Vec<HalfComplex>,
    pub programmed_at_startup: bool,
}

/// Uniform white noise on [-1, 1] in each part, rounded, never zero.
pub fn white_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<HalfComplex> {
    (0..n)
        .map(|_| loop {
            let v = HalfComplex::from_f64(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            if !v.is_zero() {
                break v;
            }
        })
        .collect()
}

fn exact_transform(y: &[HalfComplex]) -> Vec<HalfComplex> {
    let yf: Vec<(f64, f64)> = y.iter().map(|v| v.to_f64()).collect();
    dft_f64(&yf).into_iter().map(|(re, im)| HalfComplex::from_f64(re, im)).collect()
}

impl PlancherelReference {
    /// Seeded white-noise y with Y its exact transform rounded to half;
    /// draws with a zero entry on either side are redrawn.
    pub fn white_noise(n: usize, seed: u64) -> Result<Self, FftError> {
        check_len(n)?;
        for attempt in 0.. {
            let mut rng = trial_rng(seed, attempt);
            let y = white_noise(n, &mut rng);
            let big_y = exact_transform(&y);
            if big_y.iter().all(|v| !v.is_zero()) {
                return Ok(PlancherelReference {
                    y,
                    big_y,
                    programmed_at_startup: true,
                });
            }
        }
        unreachable!()
    }

    /// Chirp reference y_k = e^{-iπk²/N}/√N: ‖y‖ = 1 and every |Y_k| = 1,
    /// so neither side has zeros and both stay far from overflow.
    pub fn periodic(n: usize) -> Result<Self, FftError> {
        check_len(n)?;
        let s = (n as f64).sqrt();
        let y: Vec<HalfComplex> = (0..n)
            .map(|k| {
                let a = -PI * ((k * k) % (2 * n)) as f64 / n as f64;
                HalfComplex::from_f64(a.cos() / s, a.sin() / s)
            })
            .collect();
        let big_y = exact_transform(&y);
        Ok(PlancherelReference {
            y,
            big_y,
            programmed_at_startup: true,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Whether Y matches the datapath's own transform of y to within
    /// roundoff, i.e. the slots hold a genuine pair.
    pub fn is_fft_pair(&self) -> Result<bool, FftError> {
        let t = fft(&self.y)?;
        let scale = self.big_y.iter().map(|v| v.re.to_f64().abs().max(v.im.to_f64().abs())).fold(1.0, f64::max);
        let tol = scale * (self.len().trailing_zeros() as f64 + 1.0) * 2f64.powi(-8);
        Ok(t.iter().zip(&self.big_y).all(|(a, b)| {
            let (ar, ai) = a.to_f64();
            let (br, bi) = b.to_f64();
            (ar - br).abs() <= tol && (ai - bi).abs() <= tol
        }))
    }

    pub fn to_hex(&self) -> String {
        let mut s = format!("{}\n", self.len());
        for (a, b) in self.y.iter().zip(&self.big_y) {
            let (ar, ai) = a.to_bits();
            let (br, bi) = b.to_bits();
            s.push_str(&format!("{ar:04x} {ai:04x} {br:04x} {bi:04x}\n"));
        }
        s
    }

    pub fn from_hex(text: &str) -> Result<Self, FftError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(FftError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let n: usize = first.trim().parse().map_err(|_| FftError::Parse {
            line: 1,
            message: format!("bad length `{}`", first.trim()),
        })?;
        check_len(n)?;
        let (mut y, mut big_y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (i, line) in lines {
            let v: Vec<u16> = line
                .split_whitespace()
                .map(|t| u16::from_str_radix(t, 16))
                .collect::<Result<_, _>>()
                .map_err(|e| FftError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if v.len() != 4 {
                return Err(FftError::Parse {
                    line: i + 1,
                    message: format!("expected 4 fields, got {}", v.len()),
                });
            }
            y.push(HalfComplex::from_bits(v[0], v[1]));
            big_y.push(HalfComplex::from_bits(v[2], v[3]));
        }
        if y.len() != n {
            return Err(FftError::Length {
                expected: n,
                got: y.len(),
            });
        }
        Ok(PlancherelReference {
            y,
            big_y,
            programmed_at_startup: true,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FftError> {
        Ok(std::fs::write(path, self.to_hex())?)
    }

    pub fn load(path: &Path) -> Result<Self, FftError> {
        Self::from_hex(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckVerdict {
    pub residual: f64,
    pub threshold: f64,
    pub attack: bool,
}

/// Σ a_i conj(b_i) in f32.
fn inner(a: &[HalfComplex], b: &[HalfComplex]) -> (f32, f32) {
    a.iter().zip(b).fold((0.0f32, 0.0f32), |(sr, si), (p, q)| {
        let (pr, pi, qr, qi) = (p.re.to_f32(), p.im.to_f32(), q.re.to_f32(), q.im.to_f32());
        (sr + (pr * qr + pi * qi), si + (pi * qr - pr * qi))
    })
}

/// |⟨x, y⟩ − ⟨X, Y⟩ / N|, with the inner products accumulated in f32.
pub fn plancherel_residual(
    x: &[HalfComplex],
    observed: &[HalfComplex],
    y: &[HalfComplex],
    big_y: &[HalfComplex],
) -> Result<f64, FftError> {
    let n = x.len();
    for len in [observed.len(), y.len(), big_y.len()] {
        if len != n {
            return Err(FftError::Length { expected: n, got: len });
        }
    }
    let (lr, li) = inner(x, y);
    let (rr, ri) = inner(observed, big_y);
    let nf = n as f32;
    let (dr, di) = (lr - rr / nf, li - ri / nf);
    // a NaN or infinity reaching the checker is as bad as it gets
    let r = dr.hypot(di) as f64;
    Ok(if r.is_finite() { r } else { f64::INFINITY })
}

pub fn plancherel_check(
    x: &[HalfComplex],
    observed: &[HalfComplex],
    reference: &PlancherelReference,
    threshold: f64,
) -> Result<CheckVerdict, FftError> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(FftError::Domain(format!("threshold {threshold} is negative")));
    }
    let residual = plancherel_residual(x, observed, &reference.y, &reference.big_y)?;
    Ok(CheckVerdict {
        residual,
        threshold,
        attack: residual > threshold,
    })
}

/// Largest attack-free residual over the given inputs, times `margin`.
pub fn calibrate_on<'a>(
    reference: &PlancherelReference,
    inputs: impl IntoIterator<Item = &'a [HalfComplex]>,
    margin: f64,
) -> Result<f64, FftError> {
    if margin.is_nan() || margin < 1.0 {
        return Err(FftError::Domain(format!("margin {margin} is below 1")));
    }
    let mut worst = 0.0f64;
    for x in inputs {
        let out = fft(x)?;
        worst = worst.max(plancherel_residual(x, &out, &reference.y, &reference.big_y)?);
    }
    Ok(margin * worst)
}

/// Threshold for unit-scale white-noise inputs against the white-noise
/// reference drawn from `seed`.
pub fn calibrate_threshold(n: usize, trials: u64, margin: f64, seed: u64) -> Result<f64, FftError> {
    if trials < 100 {
        return Err(FftError::Domain(format!("need at least 100 calibration trials, got {trials}")));
    }
    let reference = PlancherelReference::white_noise(n, seed)?;
    let inputs: Vec<Vec<HalfComplex>> =
        (0..trials).map(|t| white_noise(n, &mut trial_rng(seed ^ CALIBRATION_STREAM, t))).collect();
    calibrate_on(&reference, inputs.iter().map(Vec::as_slice), margin)
}

/// Keeps calibration inputs apart from other streams of the same seed.
pub(crate) const CALIBRATION_STREAM: u64 = 0x6361_6c69_6272_6174;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> HalfComplex {
        HalfComplex::from_f64(re, im)
    }

    #[test]
    fn rounding_is_idempotent_and_ties_to_even() {
        // 1 + 2^-11 sits halfway between 1 and 1 + 2^-10
        assert_eq!(h(1.0 + 2f64.powi(-11)).to_f64(), 1.0);
        assert_eq!(h(1.0 + 3.0 * 2f64.powi(-11)).to_f64(), 1.0 + 2.0 * 2f64.powi(-10));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let v = c(rng.gen_range(-100.0..100.0), rng.gen_range(-1e-3..1e-3));
            assert_eq!(HalfComplex::from_f64(v.re.to_f64(), v.im.to_f64()), v);
        }
    }

    #[test]
    fn impulse_and_dc() {
        for n in [1, 2, 8, 128] {
            let mut x = vec![HalfComplex::ZERO; n];
            x[0] = c(1.0, 0.0);
            assert!(fft(&x).unwrap().iter().all(|v| *v == c(1.0, 0.0)));
        }
        let out = fft(&[c(1.0, 0.0); 4]).unwrap();
        assert_eq!(out, vec![c(4.0, 0.0), HalfComplex::ZERO, HalfComplex::ZERO, HalfComplex::ZERO]);
        assert!(matches!(fft(&[c(1.0, 0.0); 6]), Err(FftError::NotPowerOfTwo(6))));
        assert!(matches!(fft(&[]), Err(FftError::NotPowerOfTwo(0))));
    }

    #[test]
    fn overflow_is_reported() {
        let x = vec![c(60000.0, 0.0); 4];
        assert!(matches!(fft(&x), Err(FftError::Overflow { stage: 0 })));
    }

    #[test]
    fn matches_double_precision_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [8, 32, 128] {
            for _ in 0..50 {
                let x = white_noise(n, &mut rng);
                let got = fft(&x).unwrap();
                let want = dft_f64(&x.iter().map(|v| v.to_f64()).collect::<Vec<_>>());
                let scale = want.iter().map(|&(r, i)| r.hypot(i)).fold(0.0, f64::max);
                let stages = n.trailing_zeros() as f64;
                for (g, w) in got.iter().zip(&want) {
                    let (gr, gi) = g.to_f64();
                    // N = 8 within 2^-8 of the output scale; larger N gets
                    // one such budget per stage
                    let tol = 2f64.powi(-8) * scale * (stages / 3.0).max(1.0);
                    assert!((gr - w.0).abs() <= tol && (gi - w.1).abs() <= tol, "n={n}");
                }
            }
        }
    }

    #[test]
    fn tamper_hook_sees_every_output() {
        let mut seen = 0;
        fft_tampered(&[c(1.0, 0.0); 16], true, |_, v| {
            seen += 1;
            v
        })
        .unwrap();
        assert_eq!(seen, 16 * 4);
    }

    #[test]
    fn references() {
        let r = PlancherelReference::white_noise(128, 4).unwrap();
        assert!(r.y.iter().chain(&r.big_y).all(|v| !v.is_zero()));
        assert!(r.is_fft_pair().unwrap());
        assert_eq!(r, PlancherelReference::white_noise(128, 4).unwrap());
        let p = PlancherelReference::periodic(64).unwrap();
        let norm: f64 = p.y.iter().map(|v| v.to_f64()).map(|(a, b)| a * a + b * b).sum();
        assert!((norm - 1.0).abs() < 1e-2);
        for v in &p.big_y {
            let (a, b) = v.to_f64();
            assert!((a.hypot(b) - 1.0).abs() < 1e-2);
        }
        assert!(p.is_fft_pair().unwrap());
        let mut bad = r.clone();
        bad.big_y.rotate_left(1);
        assert!(!bad.is_fft_pair().unwrap());
    }

    #[test]
    fn hex_round_trip() {
        let r = PlancherelReference::white_noise(16, 2).unwrap();
        let text = r.to_hex();
        assert_eq!(text.lines().count(), 17);
        assert_eq!(PlancherelReference::from_hex(&text).unwrap(), r);
        assert!(matches!(PlancherelReference::from_hex("4\n0 0 0 0\n"), Err(FftError::Length { .. })));
        assert!(matches!(PlancherelReference::from_hex("2\n0 0 0\n0 0 0 0"), Err(FftError::Parse { line: 2, .. })));
        assert!(matches!(PlancherelReference::from_hex("3\n"), Err(FftError::NotPowerOfTwo(3))));
    }

    #[test]
    fn impulse_check_is_exact() {
        let mut d = vec![HalfComplex::ZERO; 8];
        d[0] = c(1.0, 0.0);
        let reference = PlancherelReference {
            y: d.clone(),
            big_y: fft(&d).unwrap(),
            programmed_at_startup: true,
        };
        let v = plancherel_check(&d, &fft(&d).unwrap(), &reference, 0.0).unwrap();
        assert_eq!(v.residual, 0.0);
        assert!(!v.attack);
        assert!(plancherel_check(&d, &d[..4], &reference, 0.0).is_err());
    }

    #[test]
    fn permuted_output_is_caught() {
        let reference = PlancherelReference::white_noise(32, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = white_noise(32, &mut rng);
        let mut out = fft(&x).unwrap();
        let honest = plancherel_residual(&x, &out, &reference.y, &reference.big_y).unwrap();
        out.swap(3, 17);
        let bad = plancherel_residual(&x, &out, &reference.y, &reference.big_y).unwrap();
        assert!(bad > 20.0 * honest.max(1e-3), "{honest} {bad}");
    }

    #[test]
    fn calibration() {
        assert!(calibrate_threshold(16, 99, 2.0, 1).is_err());
        assert!(calibrate_threshold(16, 100, 0.5, 1).is_err());
        let t1 = calibrate_threshold(16, 100, 1.0, 1).unwrap();
        let t2 = calibrate_threshold(16, 100, 2.0, 1).unwrap();
        assert!(t1 > 0.0);
        assert_eq!(t2, 2.0 * t1);
        // small integers with N = 2 twiddles go through exactly
        let reference = PlancherelReference {
            y: vec![c(1.0, 2.0), c(-3.0, 1.0)],
            big_y: fft(&[c(1.0, 2.0), c(-3.0, 1.0)]).unwrap(),
            programmed_at_startup: true,
        };
        let inputs: Vec<Vec<HalfComplex>> = (-3..=3)
            .flat_map(|a| (-3..=3).map(move |b| vec![c(a as f64, 1.0), c(b as f64, -2.0)]))
            .collect();
        assert_eq!(calibrate_on(&reference, inputs.iter().map(Vec::as_slice), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn residual_is_subadditive_up_to_roundoff() {
        let reference = PlancherelReference::white_noise(64, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = calibrate_threshold(64, 200, 1.0, 8).unwrap();
        for _ in 0..50 {
            let a = white_noise(64, &mut rng);
            let b = white_noise(64, &mut rng);
            let s: Vec<HalfComplex> = a.iter().zip(&b).map(|(p, q)| *p + *q).collect();
            let r = |x: &[HalfComplex]| plancherel_residual(x, &fft(x).unwrap(), &reference.y, &reference.big_y).unwrap();
            assert!(r(&s) <= r(&a) + r(&b) + 2.0 * t);
        }
    }
}
