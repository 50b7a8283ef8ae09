//! Linear measurement operators, rewards and the exact consistency projection.
//!
//! A measurement is `y = A x` for a full-row-rank `A` (m x d, m <= d) with a
//! guidance noise scale `sigma`. The reward of a state is
//! `r(x) = -||y - A x||^2 / (2 sigma^2)`, maximal (zero) exactly on the affine
//! consistency subspace `{x : A x = y}`. `project_to_consistent` is the
//! orthogonal projection onto that subspace,
//! `Pi x = x + A^T (A A^T)^{-1} (y - A x)`, which serves as ground truth for
//! the projection experiments.
//!
//! Problem sizes are tiny by construction (m <= d <= 20), so `A A^T` is
//! solved directly by Cholesky; there are no iterative solvers here.

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::rng::RngStream;

/// Operator kind tag.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum MeasurementKind {
    /// Rows are distinct standard basis vectors; the index list gives the
    /// observed coordinates (0-based).
    Inpainting(Vec<usize>),
    /// A single unit row `v^T` (m = 1).
    SingleVector(Vec<f64>),
    /// Any full-row-rank matrix.
    General,
}

/// Linear measurement `y = A x` with guidance noise scale `sigma`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Measurement {
    kind: MeasurementKind,
    /// Rows of `A`, each of length `d`.
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    sigma: f64,
}

impl Measurement {
    /// Inpainting measurement observing `indices` (0-based, distinct) of
    /// `source`; `y` is the exact read-out.
    pub fn inpainting(indices: &[usize], source: &[f64], sigma: f64) -> Result<Self> {
        let d = source.len();
        let mut seen = vec![false; d];
        for &i in indices {
            if i >= d {
                return Err(Error::IndexOutOfRange { index: i, d });
            }
            if seen[i] {
                return Err(Error::DuplicateIndices);
            }
            seen[i] = true;
        }
        if indices.is_empty() {
            return Err(Error::InvalidMeasurement("inpainting needs at least one index".into()));
        }
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| {
                let mut row = vec![0.0; d];
                row[i] = 1.0;
                row
            })
            .collect();
        let y: Vec<f64> = indices.iter().map(|&i| source[i]).collect();
        Self::build(MeasurementKind::Inpainting(indices.to_vec()), rows, y, sigma)
    }

    /// Single-vector measurement `y = <v, source>`; `v` must be unit within
    /// 1e-12.
    pub fn single_vector(v: &[f64], source: &[f64], sigma: f64) -> Result<Self> {
        if v.len() != source.len() {
            return Err(Error::DimensionMismatch { expected: source.len(), got: v.len() });
        }
        let norm = dot(v, v).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasurement(format!(
                "single-vector direction must be unit, got norm {norm}"
            )));
        }
        let y = vec![dot(v, source)];
        Self::build(MeasurementKind::SingleVector(v.to_vec()), vec![v.to_vec()], y, sigma)
    }

    /// Single-vector measurement with the observation given directly instead
    /// of read off a source state.
    pub fn single_vector_with_observation(v: &[f64], y: f64, sigma: f64) -> Result<Self> {
        let norm = dot(v, v).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasurement(format!(
                "single-vector direction must be unit, got norm {norm}"
            )));
        }
        Self::build(MeasurementKind::SingleVector(v.to_vec()), vec![v.to_vec()], vec![y], sigma)
    }

    /// General measurement from explicit rows; `y = A source`.
    pub fn general(rows: Vec<Vec<f64>>, source: &[f64], sigma: f64) -> Result<Self> {
        let y = rows.iter().map(|row| dot(row, source)).collect();
        Self::build(MeasurementKind::General, rows, y, sigma)
    }

    /// Add exact observation noise `N(0, noise^2 Id)` to `y`. Theorem-style
    /// experiments keep the observation exact; this path exists for
    /// exploratory runs only.
    pub fn with_observation_noise(mut self, noise: f64, rng: &mut RngStream) -> Self {
        for yi in &mut self.y {
            *yi += noise * crate::rng::standard_normal(rng);
        }
        self
    }

    fn build(
        kind: MeasurementKind,
        rows: Vec<Vec<f64>>,
        y: Vec<f64>,
        sigma: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidMeasurement(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidMeasurement("measurement needs at least one row".into()));
        }
        let d = rows[0].len();
        if m > d {
            return Err(Error::InvalidMeasurement(format!("m = {m} exceeds d = {d}")));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidMeasurement("ragged measurement rows".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("measurement"));
        }
        let meas = Measurement { kind, rows, y, sigma };
        // Full row rank check: Cholesky of A A^T must succeed with pivots
        // above 1e-10 relative to the matrix scale.
        meas.cholesky_gram(1e-10)?;
        Ok(meas)
    }

    pub fn kind(&self) -> &MeasurementKind {
        &self.kind
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn observation(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Number of measurements m.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    /// Observed coordinate indices for inpainting operators.
    pub fn inpainting_indices(&self) -> Option<&[usize]> {
        match &self.kind {
            MeasurementKind::Inpainting(idx) => Some(idx),
            _ => None,
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| dot(row, x)).collect()
    }

    /// `A^T w`.
    pub fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (row, &wi) in self.rows.iter().zip(w) {
            for (o, &r) in out.iter_mut().zip(row) {
                *o += wi * r;
            }
        }
        out
    }

    /// Lower Cholesky factor of `A A^T`; fails if a pivot drops below
    /// `tol` times the matrix scale (rank deficiency).
    #[allow(clippy::needless_range_loop)]
    fn cholesky_gram(&self, tol: f64) -> Result<Vec<Vec<f64>>> {
        let m = self.len();
        let mut g = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..=i {
                g[i][j] = dot(&self.rows[i], &self.rows[j]);
                g[j][i] = g[i][j];
            }
        }
        let scale = (0..m).map(|i| g[i][i]).fold(0.0f64, f64::max).max(1e-300);
        let mut l = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..=i {
                let mut s = g[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= tol * scale {
                        return Err(Error::RankDeficient);
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Ok(l)
    }

    /// Solve `A A^T w = b` via the Cholesky factor.
    fn solve_gram(&self, b: &[f64]) -> Result<Vec<f64>> {
        let l = self.cholesky_gram(1e-14)?;
        let m = b.len();
        let mut z = vec![0.0; m];
        for i in 0..m {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i][k] * z[k];
            }
            z[i] = s / l[i][i];
        }
        let mut w = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = z[i];
            for k in i + 1..m {
                s -= l[k][i] * w[k];
            }
            w[i] = s / l[i][i];
        }
        Ok(w)
    }
}

/// Residual `y - A x`, reconstruction loss `||residual||^2` and reward
/// `-loss / (2 sigma^2)`.
pub fn residual_and_reward(meas: &Measurement, x: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if x.len() != meas.dim() {
        return Err(Error::DimensionMismatch { expected: meas.dim(), got: x.len() });
    }
    let ax = meas.apply(x);
    let residual: Vec<f64> = meas.y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
    let loss = dot(&residual, &residual);
    let reward = -loss / (2.0 * meas.sigma * meas.sigma);
    Ok((residual, loss, reward))
}

/// Orthogonal projection onto the consistency subspace:
/// `Pi x = x + A^T (A A^T)^{-1} (y - A x)`. For inpainting this reduces to
/// overwriting the observed coordinates with `y`.
pub fn project_to_consistent(meas: &Measurement, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != meas.dim() {
        return Err(Error::DimensionMismatch { expected: meas.dim(), got: x.len() });
    }
    let ax = meas.apply(x);
    let b: Vec<f64> = meas.y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
    let w = meas.solve_gram(&b)?;
    let corr = meas.apply_transpose(&w);
    Ok(x.iter().zip(&corr).map(|(xi, ci)| xi + ci).collect())
}

/// Convenience constructor matching the experiment setups: build the operator
/// against a model (dimension check) and read the observation off `source`.
pub fn make_measurement(
    kind: &MeasurementKind,
    model: &ModelSpec,
    source: &[f64],
    noise: Option<f64>,
    rng: Option<&mut RngStream>,
) -> Result<Measurement> {
    model.check_state(source)?;
    let meas = match kind {
        MeasurementKind::Inpainting(indices) => Measurement::inpainting(indices, source, 1.0)?,
        MeasurementKind::SingleVector(v) => Measurement::single_vector(v, source, 1.0)?,
        MeasurementKind::General => {
            return Err(Error::InvalidMeasurement(
                "general operators are built from explicit rows via Measurement::general".into(),
            ))
        }
    };
    match (noise, rng) {
        (Some(n), Some(rng)) if n > 0.0 => Ok(meas.with_observation_noise(n, rng)),
        (Some(n), None) if n > 0.0 => Err(Error::InvalidMeasurement(
            "observation noise requires an RNG stream".into(),
        )),
        _ => Ok(meas),
    }
}

/// Inner product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Componentwise difference `a - b`.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn inpainting_reads_out_coordinates() {
        let meas = Measurement::inpainting(&[0], &[2.0, 3.0], 1.0).unwrap();
        assert_eq!(meas.rows(), &[vec![1.0, 0.0]]);
        assert_eq!(meas.observation(), &[2.0]);
    }

    #[test]
    fn single_vector_inner_product() {
        let meas = Measurement::single_vector(&[0.6, 0.8], &[5.0, 0.0], 1.0).unwrap();
        assert!((meas.observation()[0] - 3.0).abs() <= 1e-15);
    }

    #[test]
    fn observation_noise_has_chi_square_mean() {
        // E ||y_noisy - A source||^2 = m * noise^2 over repeated draws.
        let source = vec![1.0, -2.0, 0.5];
        let clean = Measurement::inpainting(&[0, 2], &source, 1.0).unwrap();
        let mut r = rng::stream(21);
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let noisy = clean.clone().with_observation_noise(0.05, &mut r);
            let diff = sub(noisy.observation(), clean.observation());
            total += dot(&diff, &diff);
        }
        let mean = total / n as f64;
        let expect = 2.0 * 0.0025;
        assert!((mean - expect).abs() <= 0.1 * expect, "mean {mean}");
    }

    #[test]
    fn reward_is_zero_on_consistent_states() {
        let meas = Measurement::inpainting(&[1], &[0.0, 4.0, 0.0], 0.3).unwrap();
        let (res, loss, reward) = residual_and_reward(&meas, &[9.0, 4.0, -1.0]).unwrap();
        assert_eq!(res, vec![0.0]);
        assert_eq!(loss, 0.0);
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn unit_residual_reward() {
        let meas = Measurement::inpainting(&[0], &[1.0, 0.0], 1.0).unwrap();
        let (_, loss, reward) = residual_and_reward(&meas, &[0.0, 7.0]).unwrap();
        assert!((loss - 1.0).abs() <= 1e-15);
        assert!((reward + 0.5).abs() <= 1e-15);
    }

    #[test]
    fn reward_matches_redundant_arithmetic() {
        // Recompute -||y - Ax||^2 / (2 sigma^2) through an independent
        // dot-product path.
        let mut r = rng::stream(22);
        for _ in 0..50 {
            let d = 5;
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..d).map(|_| r.random::<f64>() - 0.5).collect())
                .collect();
            let source: Vec<f64> = (0..d).map(|_| 2.0 * r.random::<f64>()).collect();
            let sigma = 0.2 + r.random::<f64>();
            let meas = Measurement::general(rows.clone(), &source, sigma).unwrap();
            let x: Vec<f64> = (0..d).map(|_| 2.0 * (r.random::<f64>() - 0.5)).collect();
            let (_, _, reward) = residual_and_reward(&meas, &x).unwrap();
            let mut loss = 0.0;
            for (row, yi) in rows.iter().zip(meas.observation()) {
                let ri = yi - row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                loss += ri * ri;
            }
            let expect = -loss / (2.0 * sigma * sigma);
            assert!((reward - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_fixes_consistent_points() {
        let meas = Measurement::inpainting(&[0], &[3.0, 0.0], 1.0).unwrap();
        let x = vec![3.0, 5.0];
        let px = project_to_consistent(&meas, &x).unwrap();
        for (a, b) in px.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn inpainting_projection_overwrites_measured_coordinates() {
        let meas = Measurement::inpainting(&[0], &[3.0, 0.0], 1.0).unwrap();
        let px = project_to_consistent(&meas, &[0.0, 5.0]).unwrap();
        assert_eq!(px, vec![3.0, 5.0]);
    }

    #[test]
    fn single_vector_projection_matches_normal_equations() {
        // v = (0.6, 0.8), y = 1, x = 0: least-squares solution is y * v.
        let meas = Measurement::single_vector_with_observation(&[0.6, 0.8], 1.0, 1.0).unwrap();
        let px = project_to_consistent(&meas, &[0.0, 0.0]).unwrap();
        assert!((px[0] - 0.6).abs() <= 1e-12);
        assert!((px[1] - 0.8).abs() <= 1e-12);
    }

    #[test]
    fn rank_deficient_rows_rejected() {
        let rows = vec![vec![1.0, 0.0, 1.0], vec![2.0, 0.0, 2.0]];
        assert!(matches!(
            Measurement::general(rows, &[0.0; 3], 1.0),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn duplicate_indices_rejected() {
        assert!(matches!(
            Measurement::inpainting(&[1, 1], &[0.0, 0.0, 0.0], 1.0),
            Err(Error::DuplicateIndices)
        ));
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        assert!(Measurement::inpainting(&[0], &[0.0, 0.0], 0.0).is_err());
        assert!(Measurement::inpainting(&[0], &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn non_unit_single_vector_rejected() {
        assert!(Measurement::single_vector(&[0.6, 0.9], &[0.0, 0.0], 1.0).is_err());
    }

    fn random_general(d: usize, m: usize, seed: u64) -> (Measurement, rng::RngStream) {
        let mut r = rng::stream(seed);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| r.random::<f64>() - 0.5).collect())
            .collect();
        let source: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
        (Measurement::general(rows, &source, 0.5).unwrap(), r)
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_orthogonal(seed in 0u64..500) {
            let (meas, mut r) = random_general(6, 3, seed);
            let x: Vec<f64> = (0..6).map(|_| 4.0 * (r.random::<f64>() - 0.5)).collect();
            let px = project_to_consistent(&meas, &x).unwrap();
            let ppx = project_to_consistent(&meas, &px).unwrap();
            for (a, b) in ppx.iter().zip(&px) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            // A Pi x = y
            let apx = meas.apply(&px);
            for (a, y) in apx.iter().zip(meas.observation()) {
                prop_assert!((a - y).abs() <= 1e-9);
            }
            // x - Pi x is orthogonal to the null space of A: probe with
            // u = z - Pi0 z where Pi0 projects onto the row space.
            let z: Vec<f64> = (0..6).map(|_| r.random::<f64>() - 0.5).collect();
            let az = meas.apply(&z);
            let w = meas.solve_gram(&az).unwrap();
            let row_part = meas.apply_transpose(&w);
            let u: Vec<f64> = z.iter().zip(&row_part).map(|(a, b)| a - b).collect();
            let gap = sub(&x, &px);
            prop_assert!(dot(&gap, &u).abs() <= 1e-9);
            // Reward maximality.
            let (_, _, reward_px) = residual_and_reward(&meas, &px).unwrap();
            let (_, _, reward_x) = residual_and_reward(&meas, &x).unwrap();
            prop_assert!(reward_px.abs() <= 1e-9);
            prop_assert!(reward_x <= 1e-12);
        }
    }
}
