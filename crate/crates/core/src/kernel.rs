//! Stationary covariance functions, the canonical metric they induce and the
//! smoothness descriptors `(g, c_k, alpha, delta_k)` consumed by the
//! variation schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness order of a Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

impl TryFrom<f64> for MaternNu {
    type Error = String;
    fn try_from(v: f64) -> std::result::Result<Self, String> {
        if v == 0.5 {
            Ok(MaternNu::Half)
        } else if v == 1.5 {
            Ok(MaternNu::ThreeHalves)
        } else if v == 2.5 {
            Ok(MaternNu::FiveHalves)
        } else {
            Err(format!("matern nu must be 0.5, 1.5 or 2.5, got {v}"))
        }
    }
}

impl Serialize for MaternNu {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for MaternNu {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        MaternNu::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// One term of a weighted kernel sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedComponent {
    pub weight: f64,
    pub kernel: KernelSpec,
}

/// A stationary covariance function.
///
/// `scale` is the prior variance `k(x, x)`; `length` divides the squared
/// (SE, rational quadratic) or plain (Matérn) distance. The white-noise
/// kernel is a synthetic diagonal covariance used by cost-scaling
/// experiments where posterior structure should stay trivial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    SquaredExponential {
        scale: f64,
        length: f64,
    },
    Matern {
        nu: MaternNu,
        scale: f64,
        length: f64,
    },
    RationalQuadratic {
        scale: f64,
        length: f64,
    },
    WhiteNoise {
        scale: f64,
    },
    WeightedSum {
        components: Vec<WeightedComponent>,
    },
}

/// Euclidean distance; panics on length mismatch (checked by callers).
pub fn euclidean(x1: &[f64], x2: &[f64]) -> f64 {
    debug_assert_eq!(x1.len(), x2.len());
    x1.iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

impl KernelSpec {
    pub fn se(scale: f64, length: f64) -> Self {
        KernelSpec::SquaredExponential { scale, length }
    }

    pub fn matern(nu: MaternNu, scale: f64, length: f64) -> Self {
        KernelSpec::Matern { nu, scale, length }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidKernel(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            KernelSpec::SquaredExponential { scale, length }
            | KernelSpec::Matern { scale, length, .. }
            | KernelSpec::RationalQuadratic { scale, length } => {
                positive(*scale, "scale")?;
                positive(*length, "length")
            }
            KernelSpec::WhiteNoise { scale } => positive(*scale, "scale"),
            KernelSpec::WeightedSum { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidKernel("empty kernel sum".into()));
                }
                for c in components {
                    positive(c.weight, "weight")?;
                    c.kernel.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Prior variance `k(x, x)`.
    pub fn total_scale(&self) -> f64 {
        match self {
            KernelSpec::SquaredExponential { scale, .. }
            | KernelSpec::Matern { scale, .. }
            | KernelSpec::RationalQuadratic { scale, .. }
            | KernelSpec::WhiteNoise { scale } => *scale,
            KernelSpec::WeightedSum { components } => components
                .iter()
                .map(|c| c.weight * c.kernel.total_scale())
                .sum(),
        }
    }

    /// Covariance at separation `r` (all families here are isotropic).
    pub fn value_at_distance(&self, r: f64) -> f64 {
        match self {
            KernelSpec::SquaredExponential { scale, length } => scale * (-r * r / length).exp(),
            KernelSpec::Matern { nu, scale, length } => {
                let s = r / length;
                match nu {
                    MaternNu::Half => scale * (-s).exp(),
                    MaternNu::ThreeHalves => {
                        let a = 3f64.sqrt() * s;
                        scale * (1.0 + a) * (-a).exp()
                    }
                    MaternNu::FiveHalves => {
                        let a = 5f64.sqrt() * s;
                        scale * (1.0 + a + a * a / 3.0) * (-a).exp()
                    }
                }
            }
            KernelSpec::RationalQuadratic { scale, length } => scale / (1.0 + r * r / length),
            KernelSpec::WhiteNoise { scale } => {
                if r == 0.0 {
                    *scale
                } else {
                    0.0
                }
            }
            KernelSpec::WeightedSum { components } => components
                .iter()
                .map(|c| c.weight * c.kernel.value_at_distance(r))
                .sum(),
        }
    }

    /// `k(x1, x2)`.
    pub fn covariance(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        if x1.len() != x2.len() {
            return Err(Error::DimensionMismatch {
                expected: x1.len(),
                got: x2.len(),
            });
        }
        Ok(self.value_at_distance(euclidean(x1, x2)))
    }

    /// The canonical metric `d_k(x1, x2) = sqrt(k11 + k22 - 2 k12)`,
    /// clamping radicands in `(-1e-12, 0)` to zero.
    pub fn canonical_metric(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let k11 = self.covariance(x1, x1)?;
        let k22 = self.covariance(x2, x2)?;
        let k12 = self.covariance(x1, x2)?;
        let sq = k11 + k22 - 2.0 * k12;
        if sq < -1e-12 {
            return Err(Error::NegativeVariance { value: sq });
        }
        Ok(sq.max(0.0).sqrt())
    }

    /// `d_k` at separation `r` for the isotropic families.
    pub fn canonical_metric_at_distance(&self, r: f64) -> f64 {
        let sq = 2.0 * (self.total_scale() - self.value_at_distance(r));
        sq.max(0.0).sqrt()
    }

    /// The same kernel with every variance multiplied by `w`.
    fn scaled(&self, w: f64) -> KernelSpec {
        match self.clone() {
            KernelSpec::SquaredExponential { scale, length } => KernelSpec::SquaredExponential {
                scale: w * scale,
                length,
            },
            KernelSpec::Matern { nu, scale, length } => KernelSpec::Matern {
                nu,
                scale: w * scale,
                length,
            },
            KernelSpec::RationalQuadratic { scale, length } => KernelSpec::RationalQuadratic {
                scale: w * scale,
                length,
            },
            KernelSpec::WhiteNoise { scale } => KernelSpec::WhiteNoise { scale: w * scale },
            KernelSpec::WeightedSum { components } => KernelSpec::WeightedSum {
                components: components
                    .into_iter()
                    .map(|c| WeightedComponent {
                        weight: w * c.weight,
                        kernel: c.kernel,
                    })
                    .collect(),
            },
        }
    }

    /// Hölder exponent used by the schedules: 1 for SE and rational
    /// quadratic, `min(nu, 1)` for Matérn, the component minimum for sums.
    /// The rational-quadratic value is a convention recorded in run
    /// metadata, not a closed-form result.
    pub fn alpha(&self) -> f64 {
        match self {
            KernelSpec::SquaredExponential { .. }
            | KernelSpec::RationalQuadratic { .. }
            | KernelSpec::WhiteNoise { .. } => 1.0,
            KernelSpec::Matern { nu, .. } => nu.value().min(1.0),
            KernelSpec::WeightedSum { components } => components
                .iter()
                .map(|c| c.kernel.alpha())
                .fold(1.0, f64::min),
        }
    }

    /// Fits the smoothness profile on a domain of the given diameter.
    pub fn smoothness_profile(&self, domain_diameter: f64) -> SmoothnessProfile {
        let alpha = self.alpha();
        let delta_k = domain_diameter;
        match self {
            KernelSpec::SquaredExponential { scale, length } => SmoothnessProfile {
                alpha,
                c_k: (2.0 * scale / length).sqrt(),
                delta_k,
                modulus: Modulus::SeClosedForm {
                    scale: *scale,
                    length: *length,
                },
            },
            KernelSpec::WeightedSum { components } => {
                // c_k is the sum of per-component fits at the common alpha;
                // the modulus envelope is fitted on the sum itself.
                let c_k = components
                    .iter()
                    .map(|c| fit_c_k(&c.kernel.scaled(c.weight), alpha, delta_k))
                    .sum();
                SmoothnessProfile {
                    alpha,
                    c_k,
                    delta_k,
                    modulus: fit_envelope(self, alpha, c_k, delta_k),
                }
            }
            _ => {
                let c_k = fit_c_k(self, alpha, delta_k);
                SmoothnessProfile {
                    alpha,
                    c_k,
                    delta_k,
                    modulus: fit_envelope(self, alpha, c_k, delta_k),
                }
            }
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // No commas: this string becomes a CSV field.
        match self {
            KernelSpec::SquaredExponential { scale, length } => {
                write!(f, "se({scale};{length})")
            }
            KernelSpec::Matern { nu, scale, length } => {
                write!(f, "matern{}2({scale};{length})", (nu.value() * 2.0) as u32)
            }
            KernelSpec::RationalQuadratic { scale, length } => {
                write!(f, "rq({scale};{length})")
            }
            KernelSpec::WhiteNoise { scale } => write!(f, "whitenoise({scale})"),
            KernelSpec::WeightedSum { components } => {
                write!(f, "sum(")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{}*{}", c.weight, c.kernel)?;
                }
                write!(f, ")")
            }
        }
    }
}

const FIT_GRID: usize = 10_000;
const FIT_SAFETY: f64 = 1.05;

fn log_grid(delta_k: f64) -> impl Iterator<Item = f64> {
    let r_min = delta_k * 1e-6;
    let step = (delta_k / r_min).ln() / (FIT_GRID - 1) as f64;
    (0..FIT_GRID).map(move |i| r_min * (step * i as f64).exp())
}

/// Grid maximum of `d_k(r) / r^alpha` over `(0, delta_k]` with a 5% margin.
fn fit_c_k(spec: &KernelSpec, alpha: f64, delta_k: f64) -> f64 {
    let max_ratio = log_grid(delta_k)
        .map(|r| spec.canonical_metric_at_distance(r) / r.powf(alpha))
        .fold(0.0_f64, f64::max);
    FIT_SAFETY * max_ratio
}

/// Monotone envelope of `d_k` tabulated on the fit grid.
fn fit_envelope(spec: &KernelSpec, alpha: f64, c_k: f64, delta_k: f64) -> Modulus {
    let mut radii = Vec::with_capacity(FIT_GRID);
    let mut values = Vec::with_capacity(FIT_GRID);
    let mut running = 0.0_f64;
    for r in log_grid(delta_k) {
        running = running.max(spec.canonical_metric_at_distance(r));
        radii.push(r);
        values.push(running);
    }
    Modulus::Envelope {
        radii,
        values,
        alpha,
        c_k,
    }
}

#[derive(Debug, Clone)]
enum Modulus {
    SeClosedForm { scale: f64, length: f64 },
    Envelope {
        radii: Vec<f64>,
        values: Vec<f64>,
        alpha: f64,
        c_k: f64,
    },
}

/// Smoothness descriptors of a kernel on a bounded domain: a modulus `g`
/// with `d_k(x, y) <= g(d(x, y))` and the Hölder bound
/// `g(r) <= c_k r^alpha` for `r <= delta_k`.
#[derive(Debug, Clone)]
pub struct SmoothnessProfile {
    pub alpha: f64,
    pub c_k: f64,
    pub delta_k: f64,
    modulus: Modulus,
}

impl SmoothnessProfile {
    /// The modulus bound at separation `r`.
    pub fn g(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match &self.modulus {
            Modulus::SeClosedForm { scale, length } => {
                // exp_m1 keeps precision at separations far below sqrt(eps)
                (2.0 * scale * -(-r * r / length).exp_m1()).sqrt()
            }
            Modulus::Envelope {
                radii,
                values,
                alpha,
                c_k,
            } => {
                // Ceiling lookup on the monotone envelope; beyond the grid the
                // envelope is constant (separations cannot exceed the diameter).
                let tab = match radii.binary_search_by(|v| v.partial_cmp(&r).unwrap()) {
                    Ok(i) => values[i],
                    Err(i) if i < values.len() => values[i],
                    Err(_) => *values.last().unwrap(),
                };
                tab.min(c_k * r.powf(*alpha))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn all_families() -> Vec<KernelSpec> {
        vec![
            KernelSpec::se(1.0, 1.0),
            KernelSpec::se(0.5, 2.0),
            KernelSpec::matern(MaternNu::Half, 1.0, 1.0),
            KernelSpec::matern(MaternNu::ThreeHalves, 1.0, 0.5),
            KernelSpec::matern(MaternNu::FiveHalves, 0.8, 1.5),
            KernelSpec::RationalQuadratic {
                scale: 1.0,
                length: 1.0,
            },
            KernelSpec::WeightedSum {
                components: vec![
                    WeightedComponent {
                        weight: 0.7,
                        kernel: KernelSpec::se(1.0, 1.0),
                    },
                    WeightedComponent {
                        weight: 0.3,
                        kernel: KernelSpec::matern(MaternNu::ThreeHalves, 1.0, 1.0),
                    },
                ],
            },
        ]
    }

    #[test]
    fn se_zero_lag_is_scale() {
        let k = KernelSpec::se(1.0, 1.0);
        assert_relative_eq!(k.covariance(&[0.3], &[0.3]).unwrap(), 1.0);
    }

    #[test]
    fn se_unit_separation() {
        let k = KernelSpec::se(1.0, 1.0);
        let v = k.covariance(&[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, (-1.0_f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.367879441, epsilon = 1e-8);
    }

    #[test]
    fn matern_half_zero_lag() {
        let k = KernelSpec::matern(MaternNu::Half, 1.0, 1.0);
        assert_relative_eq!(k.covariance(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = KernelSpec::se(1.0, 1.0);
        assert!(k.covariance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn metric_identity_of_indiscernibles() {
        for k in all_families() {
            assert_eq!(k.canonical_metric(&[0.4, 0.1], &[0.4, 0.1]).unwrap(), 0.0);
        }
    }

    #[test]
    fn metric_se_unit_separation() {
        let k = KernelSpec::se(1.0, 1.0);
        let d = k.canonical_metric(&[0.0], &[1.0]).unwrap();
        let expected = (2.0 * (1.0 - (-1.0_f64).exp())).sqrt();
        assert_relative_eq!(d, expected, epsilon = 1e-12);
        assert_relative_eq!(d, 1.1243848, epsilon = 1e-7);
    }

    #[test]
    fn sum_of_halves_matches_single_se() {
        let half = KernelSpec::se(0.5, 1.0);
        let sum = KernelSpec::WeightedSum {
            components: vec![
                WeightedComponent {
                    weight: 1.0,
                    kernel: half.clone(),
                },
                WeightedComponent {
                    weight: 1.0,
                    kernel: half,
                },
            ],
        };
        let single = KernelSpec::se(1.0, 1.0);
        let d_sum = sum.canonical_metric(&[0.0], &[1.0]).unwrap();
        let d_single = single.canonical_metric(&[0.0], &[1.0]).unwrap();
        assert_relative_eq!(d_sum, d_single, epsilon = 1e-12);
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen example digits
    fn se_profile_closed_form() {
        let p = KernelSpec::se(1.0, 1.0).smoothness_profile(1.0);
        assert_relative_eq!(p.alpha, 1.0);
        assert_relative_eq!(p.c_k, 2.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(p.c_k, 1.41421, epsilon = 1e-5);
        assert_relative_eq!(p.delta_k, 1.0);
    }

    #[test]
    fn matern_alphas() {
        assert_relative_eq!(
            KernelSpec::matern(MaternNu::Half, 1.0, 1.0).alpha(),
            0.5
        );
        assert_relative_eq!(
            KernelSpec::matern(MaternNu::FiveHalves, 1.0, 1.0).alpha(),
            1.0
        );
    }

    #[test]
    fn profile_modulus_bounds_the_metric() {
        // Assumption C1 for the fitted profile, sampled over random pairs.
        let mut rng = crate::rng::stream(11, crate::rng::Purpose::Net);
        for k in all_families() {
            let p = k.smoothness_profile(2.0_f64.sqrt());
            for _ in 0..1000 {
                let x1 = [rng.gen::<f64>(), rng.gen::<f64>()];
                let x2 = [rng.gen::<f64>(), rng.gen::<f64>()];
                let d = k.canonical_metric(&x1, &x2).unwrap();
                let g = p.g(euclidean(&x1, &x2));
                assert!(
                    d <= g + 1e-12,
                    "C1 violated for {k}: d_k={d}, g={g}"
                );
            }
        }
    }

    #[test]
    fn profile_holder_bound_and_monotone() {
        for k in all_families() {
            let p = k.smoothness_profile(1.0);
            let mut prev = 0.0;
            assert_eq!(p.g(0.0), 0.0);
            for i in 1..=300 {
                let r = p.delta_k * i as f64 / 300.0;
                let g = p.g(r);
                assert!(g + 1e-12 >= prev, "g not monotone for {k}");
                assert!(
                    g <= p.c_k * r.powf(p.alpha) + 1e-12,
                    "C2 violated for {k} at r={r}"
                );
                prev = g;
            }
        }
    }

    #[test]
    fn metric_triangle_inequality() {
        let mut rng = crate::rng::stream(13, crate::rng::Purpose::Net);
        for k in all_families() {
            for _ in 0..1000 {
                let pts: Vec<[f64; 2]> = (0..3)
                    .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
                    .collect();
                let dab = k.canonical_metric(&pts[0], &pts[1]).unwrap();
                let dbc = k.canonical_metric(&pts[1], &pts[2]).unwrap();
                let dac = k.canonical_metric(&pts[0], &pts[2]).unwrap();
                assert!(dac <= dab + dbc + 1e-10, "triangle violated for {k}");
            }
        }
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = crate::rng::stream(17, crate::rng::Purpose::Net);
        for k in all_families() {
            let pts: Vec<Vec<f64>> = (0..24)
                .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
                .collect();
            let gram = nalgebra::DMatrix::from_fn(pts.len(), pts.len(), |i, j| {
                k.covariance(&pts[i], &pts[j]).unwrap()
            });
            let trace = gram.trace();
            let eig = gram.symmetric_eigenvalues();
            for v in eig.iter() {
                assert!(*v >= -1e-8 * trace, "PSD violated for {k}: eig {v}");
            }
        }
    }

    #[test]
    fn kernel_spec_json_round_trip() {
        for k in all_families() {
            let s = serde_json::to_string(&k).unwrap();
            let back: KernelSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(k, back);
        }
        let json = r#"{"family":"matern","nu":1.5,"scale":1.0,"length":0.5}"#;
        let k: KernelSpec = serde_json::from_str(json).unwrap();
        assert_eq!(k, KernelSpec::matern(MaternNu::ThreeHalves, 1.0, 0.5));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::se(-1.0, 1.0).validate().is_err());
        assert!(KernelSpec::se(1.0, 0.0).validate().is_err());
        assert!(KernelSpec::WeightedSum { components: vec![] }
            .validate()
            .is_err());
        assert!(KernelSpec::WeightedSum {
            components: vec![WeightedComponent {
                weight: -0.5,
                kernel: KernelSpec::se(1.0, 1.0),
            }],
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric(
            x1 in prop::array::uniform2(-2.0..2.0f64),
            x2 in prop::array::uniform2(-2.0..2.0f64),
        ) {
            for k in all_families() {
                let a = k.covariance(&x1, &x2).unwrap();
                let b = k.covariance(&x2, &x1).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a.is_finite());
            }
        }

        #[test]
        fn stationarity_at_zero_lag(x in prop::array::uniform3(-5.0..5.0f64)) {
            for k in all_families() {
                let v = k.covariance(&x, &x).unwrap();
                prop_assert!((v - k.total_scale()).abs() < 1e-12);
            }
        }
    }
}
