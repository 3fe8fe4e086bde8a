//! Encoded apertures and the linear measurement model.
//!
//! Each snapshot activates a Bernoulli-random subset of the `n × n` spot
//! beams. Flattening the binary masks row-major and stacking them gives the
//! `M × N` sensing matrix `Φ` (`N = n²`, entry 1 = beam present), and one
//! snapshot's echo is the scene reflectivity summed under its active beams,
//! `y = Φ x`.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const MAX_MASK_RETRIES: usize = 64;

/// One snapshot's binary spot-beam mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedAperture {
    side: usize,
    mask: Vec<u8>,
    pub seed: u64,
    pub bernoulli_p: f64,
}

impl EncodedAperture {
    /// Wraps an explicit row-major mask; entries must be 0 or 1 with at least one 1.
    pub fn from_mask(side: usize, mask: Vec<u8>) -> Result<Self> {
        if side == 0 || mask.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                actual: mask.len(),
            });
        }
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::arg("aperture mask entries must be 0 or 1"));
        }
        if !mask.contains(&1) {
            return Err(Error::arg("aperture mask needs at least one active beam"));
        }
        Ok(Self {
            side,
            mask,
            seed: 0,
            bernoulli_p: 1.0,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn is_active(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.side + col] == 1
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1).count()
    }
}

/// Draws an `n × n` mask with every beam independently active with probability `p`.
/// An all-zero draw is rejected and redrawn from the same stream.
pub fn generate_encoded_aperture(n: usize, p: f64, seed: u64) -> Result<EncodedAperture> {
    if n == 0 {
        return Err(Error::arg("aperture side must be at least 1"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::arg(format!(
            "Bernoulli probability {p} outside (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_MASK_RETRIES {
        let mask: Vec<u8> = (0..n * n).map(|_| u8::from(rng.gen_bool(p))).collect();
        if mask.contains(&1) {
            return Ok(EncodedAperture {
                side: n,
                mask,
                seed,
                bernoulli_p: p,
            });
        }
    }
    Err(Error::Generation(format!(
        "all {MAX_MASK_RETRIES} draws of the {n}x{n} mask with p={p} were empty"
    )))
}

/// The `M × N` binary sensing matrix, one flattened aperture per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    side: usize,
    data: DMatrix<f64>,
    row_seeds: Vec<u64>,
}

impl SensingMatrix {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// Side `n` of the aperture grid, `cols() == n²`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row_seeds(&self) -> &[u64] {
        &self.row_seeds
    }

    /// Builds a matrix from explicit 0/1 entries; `cols` must be a perfect square.
    pub fn from_binary(data: DMatrix<f64>) -> Result<Self> {
        let side = (data.ncols() as f64).sqrt().round() as usize;
        if data.nrows() == 0 || side * side != data.ncols() || side == 0 {
            return Err(Error::arg(format!(
                "sensing matrix must be non-empty with a square column count, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::arg("sensing matrix entries must be 0 or 1"));
        }
        let rows = data.nrows();
        Ok(Self {
            side,
            data,
            row_seeds: vec![0; rows],
        })
    }

    /// The `N × N` identity pattern: aperture `i` lights beam `i` only.
    pub fn identity(side: usize) -> Self {
        let n = side * side;
        Self {
            side,
            data: DMatrix::identity(n, n),
            row_seeds: vec![0; n],
        }
    }

    /// The first `m` rows.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.rows() {
            return Err(Error::arg(format!(
                "cannot keep {m} of {} rows",
                self.rows()
            )));
        }
        Ok(Self {
            side: self.side,
            data: self.data.rows(0, m).into_owned(),
            row_seeds: self.row_seeds[..m].to_vec(),
        })
    }

    /// Un-flattens row `i` back into its aperture mask.
    pub fn row_mask(&self, i: usize) -> Result<EncodedAperture> {
        let mask = self.data.row(i).iter().map(|&v| v as u8).collect();
        let mut aperture = EncodedAperture::from_mask(self.side, mask)?;
        aperture.seed = self.row_seeds[i];
        Ok(aperture)
    }

    pub fn is_underdetermined(&self) -> bool {
        self.rows() < self.cols()
    }
}

/// Stacks the flattened apertures as the rows of `Φ`.
pub fn assemble_sensing_matrix(apertures: &[EncodedAperture]) -> Result<SensingMatrix> {
    let first = apertures
        .first()
        .ok_or_else(|| Error::arg("at least one aperture is required"))?;
    let side = first.side;
    if let Some(bad) = apertures.iter().find(|a| a.side != side) {
        return Err(Error::arg(format!(
            "mixed aperture sizes: {side}x{side} and {0}x{0}",
            bad.side
        )));
    }
    let n = side * side;
    let data = DMatrix::from_fn(apertures.len(), n, |i, j| f64::from(apertures[i].mask[j]));
    Ok(SensingMatrix {
        side,
        data,
        row_seeds: apertures.iter().map(|a| a.seed).collect(),
    })
}

/// Generates `m` apertures whose seeds come from `row_seed(i)` and assembles them.
pub fn random_sensing_matrix(
    side: usize,
    m: usize,
    p: f64,
    row_seed: impl Fn(usize) -> u64,
) -> Result<SensingMatrix> {
    let apertures = (0..m)
        .map(|i| generate_encoded_aperture(side, p, row_seed(i)))
        .collect::<Result<Vec<_>>>()?;
    assemble_sensing_matrix(&apertures)
}

/// `y = Φ x`.
pub fn forward_measure(phi: &SensingMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != phi.cols() {
        return Err(Error::DimensionMismatch {
            expected: phi.cols(),
            actual: x.len(),
        });
    }
    let x = DVector::from_column_slice(x);
    Ok((phi.data() * x).as_slice().to_vec())
}

/// Signal-to-noise setting of a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Noiseless,
    Db(f64),
}

impl Snr {
    pub fn db(&self) -> Option<f64> {
        match self {
            Snr::Noiseless => None,
            Snr::Db(db) => Some(*db),
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Noiseless => f.write_str("noiseless"),
            Snr::Db(db) => write!(f, "{db}"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Noiseless => serializer.serialize_str("noiseless"),
            Snr::Db(db) => serializer.serialize_f64(*db),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SnrVisitor;

        impl Visitor<'_> for SnrVisitor {
            type Value = Snr;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an SNR in dB or the string \"noiseless\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Snr, E> {
                if v.is_finite() {
                    Ok(Snr::Db(v))
                } else {
                    Err(E::custom("SNR must be finite"))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Snr, E> {
                Ok(Snr::Db(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Snr, E> {
                Ok(Snr::Db(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Snr, E> {
                if v == "noiseless" {
                    Ok(Snr::Noiseless)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(SnrVisitor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub y: Vec<f64>,
    pub snr: Snr,
    pub noise_seed: u64,
    /// Variance of the added noise; zero when noiseless.
    pub noise_variance: f64,
}

impl MeasurementSet {
    pub fn noiseless(y: Vec<f64>) -> Self {
        Self {
            y,
            snr: Snr::Noiseless,
            noise_seed: 0,
            noise_variance: 0.0,
        }
    }
}

/// Adds white Gaussian noise with variance `mean(y²) / 10^(snr_db/10)`.
pub fn add_awgn(y: &[f64], snr_db: f64, seed: u64) -> Result<MeasurementSet> {
    if !snr_db.is_finite() {
        return Err(Error::arg("SNR must be finite"));
    }
    if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("measurements must be non-empty and finite"));
    }
    let power = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    if power == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let noise_variance = power / 10f64.powf(snr_db / 10.0);
    let sigma = noise_variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = y
        .iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(MeasurementSet {
        y: noisy,
        snr: Snr::Db(snr_db),
        noise_seed: seed,
        noise_variance,
    })
}

/// Restricted-isometry proxies for a sensing matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    /// `None` when fewer than two nonzero columns exist.
    pub mutual_coherence: Option<f64>,
    pub max_row_inner_product: f64,
    pub is_underdetermined: bool,
    pub duplicate_row_count: usize,
    pub zero_column_count: usize,
}

fn column_coherence(data: &DMatrix<f64>) -> (Option<f64>, usize) {
    let gram = data.transpose() * data;
    let norms: Vec<f64> = (0..gram.ncols()).map(|j| gram[(j, j)].sqrt()).collect();
    let live: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] > 0.0).collect();
    let zero_columns = norms.len() - live.len();
    if live.len() < 2 {
        return (None, zero_columns);
    }
    let mut worst = 0.0f64;
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            worst = worst.max(gram[(i, j)].abs() / (norms[i] * norms[j]));
        }
    }
    (Some(worst.min(1.0)), zero_columns)
}

/// Largest normalized inner product between distinct nonzero columns of `Φ`.
/// All-zero columns are skipped.
pub fn mutual_coherence(phi: &SensingMatrix) -> Result<f64> {
    let (mu, zero) = column_coherence(phi.data());
    mu.ok_or_else(|| {
        Error::arg(format!(
            "mutual coherence needs two nonzero columns ({zero} of {} are zero)",
            phi.cols()
        ))
    })
}

pub fn rip_diagnostics(phi: &SensingMatrix) -> CoherenceReport {
    let data = phi.data();
    let (mutual_coherence, zero_column_count) = column_coherence(data);

    let row_gram = data * data.transpose();
    let mut max_row_inner_product = 0.0f64;
    for i in 0..row_gram.nrows() {
        for j in i + 1..row_gram.ncols() {
            let denom = (row_gram[(i, i)] * row_gram[(j, j)]).sqrt();
            if denom > 0.0 {
                max_row_inner_product = max_row_inner_product.max(row_gram[(i, j)].abs() / denom);
            }
        }
    }

    let mut seen = HashSet::new();
    let duplicate_row_count = (0..data.nrows())
        .filter(|&i| {
            let key: Vec<u64> = data.row(i).iter().map(|v| v.to_bits()).collect();
            !seen.insert(key)
        })
        .count();

    CoherenceReport {
        mutual_coherence,
        max_row_inner_product,
        is_underdetermined: phi.is_underdetermined(),
        duplicate_row_count,
        zero_column_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_product(phi: &SensingMatrix, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; phi.rows()];
        for (i, yi) in y.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                *yi += phi.data()[(i, j)] * xj;
            }
        }
        y
    }

    #[test]
    fn certain_activation_fills_mask() {
        let a = generate_encoded_aperture(3, 1.0, 5).unwrap();
        assert_eq!(a.mask(), &[1u8; 9]);
    }

    #[test]
    fn half_density_count_in_binomial_band() {
        // Binomial(1600, 0.5): mean 800, sd 20; the central 99.99% interval is ±3.89 sd ≈ ±78.
        for seed in 0..20 {
            let a = generate_encoded_aperture(40, 0.5, seed).unwrap();
            let count = a.active_count() as i64;
            assert!((count - 800).abs() <= 78, "seed {seed}: {count}");
        }
    }

    #[test]
    fn aperture_generation_is_deterministic() {
        let a = generate_encoded_aperture(12, 0.3, 99).unwrap();
        let b = generate_encoded_aperture(12, 0.3, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_encoded_aperture(12, 0.3, 100).unwrap();
        assert_ne!(a.mask(), c.mask());
    }

    #[test]
    fn bad_probability_rejected() {
        assert!(matches!(
            generate_encoded_aperture(4, 0.0, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(generate_encoded_aperture(4, 1.5, 1).is_err());
        assert!(generate_encoded_aperture(4, f64::NAN, 1).is_err());
        assert!(generate_encoded_aperture(0, 0.5, 1).is_err());
    }

    #[test]
    fn tiny_probability_exhausts_retries() {
        let err = generate_encoded_aperture(1, 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }

    #[test]
    fn assembled_dimensions_and_rows() {
        let phi = random_sensing_matrix(40, 100, 0.5, |i| i as u64).unwrap();
        assert_eq!((phi.rows(), phi.cols()), (100, 1600));
        for i in [0, 37, 99] {
            let expected = generate_encoded_aperture(40, 0.5, i as u64).unwrap();
            let row = phi.row_mask(i).unwrap();
            assert_eq!(row.mask(), expected.mask());
            assert_eq!(row.seed, expected.seed);
        }
    }

    #[test]
    fn all_ones_aperture_is_a_row_of_ones() {
        let phi =
            assemble_sensing_matrix(&[generate_encoded_aperture(4, 1.0, 0).unwrap()]).unwrap();
        assert_eq!(phi.rows(), 1);
        assert!(phi.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mixed_sizes_rejected() {
        let a = generate_encoded_aperture(3, 0.5, 1).unwrap();
        let b = generate_encoded_aperture(4, 0.5, 1).unwrap();
        assert!(assemble_sensing_matrix(&[a, b]).is_err());
        assert!(assemble_sensing_matrix(&[]).is_err());
    }

    #[test]
    fn coherence_extremes() {
        assert_eq!(mutual_coherence(&SensingMatrix::identity(3)).unwrap(), 0.0);
        let dup = SensingMatrix::from_binary(DMatrix::from_row_slice(
            2,
            4,
            &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0],
        ))
        .unwrap();
        assert!((mutual_coherence(&dup).unwrap() - 1.0).abs() < 1e-15);
        let one_col =
            SensingMatrix::from_binary(DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]))
                .unwrap();
        assert!(mutual_coherence(&one_col).is_err());
        assert_eq!(rip_diagnostics(&one_col).zero_column_count, 3);
    }

    #[test]
    fn coherence_matches_exhaustive_pairs() {
        let phi = SensingMatrix::from_binary(DMatrix::from_fn(6, 16, |i, j| {
            f64::from(((i * 7 + j * 13 + i * j) % 5 < 2) as u8)
        }))
        .unwrap();
        let d = phi.data();
        let mut expected = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                if i == j {
                    continue;
                }
                let ci = d.column(i);
                let cj = d.column(j);
                if ci.norm() == 0.0 || cj.norm() == 0.0 {
                    continue;
                }
                expected = expected.max(ci.dot(&cj).abs() / (ci.norm() * cj.norm()));
            }
        }
        assert!((mutual_coherence(&phi).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn diagnostics_flags() {
        let phi = random_sensing_matrix(40, 100, 0.5, |i| 1000 + i as u64).unwrap();
        let report = rip_diagnostics(&phi);
        assert!(report.is_underdetermined);
        assert_eq!(report.duplicate_row_count, 0);
        let mu = report.mutual_coherence.unwrap();
        assert!((0.0..=1.0).contains(&mu));

        let disjoint = rip_diagnostics(&SensingMatrix::identity(3));
        assert_eq!(disjoint.max_row_inner_product, 0.0);
        assert!(!disjoint.is_underdetermined);

        let a = generate_encoded_aperture(4, 0.5, 8).unwrap();
        let b = generate_encoded_aperture(4, 0.5, 9).unwrap();
        let phi = assemble_sensing_matrix(&[a.clone(), b, a]).unwrap();
        assert!(rip_diagnostics(&phi).duplicate_row_count >= 1);
    }

    #[test]
    fn forward_model_basics() {
        let ones = SensingMatrix::from_binary(DMatrix::from_element(1, 9, 1.0)).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        assert_eq!(forward_measure(&ones, &x).unwrap(), vec![18.0]);
        assert_eq!(forward_measure(&SensingMatrix::identity(3), &x).unwrap(), x);
        assert!(forward_measure(&ones, &x[..4]).is_err());
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let phi = random_sensing_matrix(3, 5, 0.5, |i| 77 + i as u64).unwrap();
        let x = [0.3, -1.2, 2.5, 0.0, 4.4, -0.7, 1.1, 0.9, -3.3];
        let y = forward_measure(&phi, &x).unwrap();
        for (a, b) in y.iter().zip(naive_product(&phi, &x)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn huge_snr_leaves_signal_intact() {
        let y = vec![1.0, -2.0, 3.5, 0.25];
        let m = add_awgn(&y, 200.0, 4).unwrap();
        for (a, b) in m.y.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-8 * b.abs());
        }
        assert_eq!(m.snr, Snr::Db(200.0));
        assert_eq!(m.noise_seed, 4);
    }

    #[test]
    fn zero_signal_has_no_snr() {
        assert!(matches!(
            add_awgn(&[0.0; 5], 5.0, 1),
            Err(Error::UndefinedSnr)
        ));
    }

    #[test]
    fn realized_snr_over_many_trials() {
        let y: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.37).sin() + 0.5).collect();
        let power = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let mut noise_power = 0.0;
        let trials = 10_000;
        for seed in 0..trials {
            let m = add_awgn(&y, 5.0, seed).unwrap();
            noise_power +=
                m.y.iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
        }
        noise_power /= (trials as usize * y.len()) as f64;
        let realized = 10.0 * (power / noise_power).log10();
        assert!((realized - 5.0).abs() < 0.1, "{realized}");
    }

    #[test]
    fn snr_serde_forms() {
        let parsed: Vec<Snr> = serde_json::from_str(r#"[5, -5.5, "noiseless"]"#).unwrap();
        assert_eq!(parsed, vec![Snr::Db(5.0), Snr::Db(-5.5), Snr::Noiseless]);
        assert_eq!(
            serde_json::to_string(&parsed).unwrap(),
            r#"[5.0,-5.5,"noiseless"]"#
        );
        assert!(serde_json::from_str::<Snr>(r#""loud""#).is_err());
    }
}
