//! Stratified groups in exponential coordinates of the first kind.
//!
//! A point is a flat coordinate vector grouped by stratum: the first
//! `dim V_1` entries belong to the first stratum, the next `dim V_2` to the
//! second, and so on. Dilation by `alpha` scales stratum `k` by `alpha^k`.
//!
//! Two presets have hand-written laws: the abelian group `R^d` and the
//! Heisenberg group `H^d` with layout `(x_1..x_d, y_1..y_d, t)` and law
//! `t'' = t + t' + (x.y' - y.x')/2`. Anything else is a user-supplied
//! polynomial law, validated for homogeneity at construction and fuzzed for
//! associativity by [`validate_law`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A point of a stratified group, coordinates grouped by stratum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(len: usize) -> Self {
        Point(vec![0.0; len])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Sup-norm distance between coordinate vectors.
    pub fn max_abs_diff(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Choice of homogeneous norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Euclidean norm; homogeneous only on a single stratum.
    Euclidean,
    /// Korányi gauge `((|x|^2+|y|^2)^2 + 16 t^2)^(1/4)` on `H^d`.
    Koranyi,
    /// Generic gauge `(sum_k |x_k|^(2L/k))^(1/(2L))` with `L = lcm(1..m)`.
    Gauge,
}

/// One monomial of a polynomial group law:
/// `out[out] += coef * prod x[i]^a * prod y[i]^b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawTerm {
    pub out: usize,
    pub coef: f64,
    #[serde(default)]
    pub x: Vec<(usize, u32)>,
    #[serde(default)]
    pub y: Vec<(usize, u32)>,
}

impl LawTerm {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = self.coef;
        for &(i, a) in &self.x {
            v *= x[i].powi(a as i32);
        }
        for &(i, b) in &self.y {
            v *= y[i].powi(b as i32);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupLaw {
    Abelian,
    Heisenberg { d: usize },
    Polynomial { terms: Vec<LawTerm> },
}

/// An immutable stratified group description.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSpec {
    strata_dims: Vec<usize>,
    law: GroupLaw,
    norm_kind: NormKind,
    weights: Vec<u32>,
    homogeneous_dim: usize,
}

impl GroupSpec {
    /// The abelian group `R^d` with the Euclidean norm.
    pub fn abelian(d: usize) -> Self {
        assert!(d > 0, "abelian dimension must be positive");
        Self::assemble(vec![d], GroupLaw::Abelian, NormKind::Euclidean)
    }

    /// The Heisenberg group `H^d`, strata `(2d, 1)`, Korányi norm.
    pub fn heisenberg(d: usize) -> Self {
        assert!(d > 0, "Heisenberg dimension must be positive");
        Self::assemble(vec![2 * d, 1], GroupLaw::Heisenberg { d }, NormKind::Koranyi)
    }

    /// A group given by a user-supplied polynomial law on the stated strata.
    ///
    /// Each term must involve both arguments (so that `0` is the identity)
    /// and be homogeneous of the weight of its output coordinate (so that
    /// dilations are automorphisms). Associativity is not decidable from the
    /// terms alone; run [`validate_law`] on the result.
    pub fn custom(strata_dims: Vec<usize>, terms: Vec<LawTerm>) -> Result<Self> {
        if strata_dims.is_empty() || strata_dims.contains(&0) {
            return Err(Error::Layout(format!(
                "strata dimensions must be positive, got {strata_dims:?}"
            )));
        }
        let spec = Self::assemble(
            strata_dims,
            GroupLaw::Polynomial { terms: Vec::new() },
            NormKind::Gauge,
        );
        let n = spec.dim();
        for (t, term) in terms.iter().enumerate() {
            if term.out >= n {
                return Err(Error::Layout(format!("term {t}: output index {} out of range", term.out)));
            }
            if term.x.is_empty() || term.y.is_empty() {
                return Err(Error::Domain(format!(
                    "term {t}: every term must involve both arguments"
                )));
            }
            let mut weight = 0u32;
            for &(i, a) in term.x.iter().chain(&term.y) {
                if i >= n {
                    return Err(Error::Layout(format!("term {t}: factor index {i} out of range")));
                }
                weight += spec.weights[i] * a;
            }
            if weight != spec.weights[term.out] {
                return Err(Error::Domain(format!(
                    "term {t}: degree {weight} does not match output weight {}",
                    spec.weights[term.out]
                )));
            }
        }
        Ok(GroupSpec {
            law: GroupLaw::Polynomial { terms },
            ..spec
        })
    }

    fn assemble(strata_dims: Vec<usize>, law: GroupLaw, norm_kind: NormKind) -> Self {
        let weights: Vec<u32> = strata_dims
            .iter()
            .enumerate()
            .flat_map(|(k, &d)| std::iter::repeat((k + 1) as u32).take(d))
            .collect();
        let homogeneous_dim = strata_dims.iter().enumerate().map(|(k, &d)| (k + 1) * d).sum();
        GroupSpec {
            strata_dims,
            law,
            norm_kind,
            weights,
            homogeneous_dim,
        }
    }

    /// Replace the homogeneous norm. Euclidean is only homogeneous on a
    /// single stratum and Korányi is only defined on Heisenberg groups.
    pub fn with_norm(mut self, kind: NormKind) -> Result<Self> {
        match kind {
            NormKind::Euclidean if self.strata_dims.len() != 1 => {
                return Err(Error::Domain(
                    "Euclidean norm is not homogeneous on a multi-step group".into(),
                ))
            }
            NormKind::Koranyi if !matches!(self.law, GroupLaw::Heisenberg { .. }) => {
                return Err(Error::Domain("Korányi norm requires a Heisenberg group".into()))
            }
            _ => {}
        }
        self.norm_kind = kind;
        Ok(self)
    }

    pub fn strata_dims(&self) -> &[usize] {
        &self.strata_dims
    }

    pub fn law(&self) -> &GroupLaw {
        &self.law
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Number of strata (the step).
    pub fn step(&self) -> usize {
        self.strata_dims.len()
    }

    /// Dilation weight of each coordinate.
    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    /// `Q = sum_k k * dim V_k`.
    pub fn homogeneous_dimension(&self) -> usize {
        self.homogeneous_dim
    }

    pub fn is_preset(&self) -> bool {
        !matches!(self.law, GroupLaw::Polynomial { .. })
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self.law, GroupLaw::Abelian)
    }

    pub fn identity(&self) -> Point {
        Point::zeros(self.dim())
    }

    fn check(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Layout(format!(
                "point has {} coordinates, group expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn multiply(&self, x: &Point, y: &Point) -> Result<Point> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.multiply_unchecked(&x.0, &y.0))
    }

    pub(crate) fn multiply_unchecked(&self, x: &[f64], y: &[f64]) -> Point {
        let mut out: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        match &self.law {
            GroupLaw::Abelian => {}
            GroupLaw::Heisenberg { d } => {
                let d = *d;
                let mut sym = 0.0;
                for i in 0..d {
                    sym += x[i] * y[d + i] - x[d + i] * y[i];
                }
                out[2 * d] += 0.5 * sym;
            }
            GroupLaw::Polynomial { terms } => {
                for term in terms {
                    out[term.out] += term.eval(x, y);
                }
            }
        }
        Point(out)
    }

    /// Inverse in exponential coordinates: coordinate negation. This holds
    /// for any law of the first kind; [`validate_law`] measures it.
    pub fn inverse(&self, x: &Point) -> Result<Point> {
        self.check(x)?;
        Ok(Point(x.0.iter().map(|c| -c).collect()))
    }

    pub fn dilate(&self, alpha: f64, x: &Point) -> Result<Point> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("dilation factor must be positive, got {alpha}")));
        }
        self.check(x)?;
        Ok(self.dilate_unchecked(alpha, &x.0))
    }

    pub(crate) fn dilate_unchecked(&self, alpha: f64, x: &[f64]) -> Point {
        Point(
            x.iter()
                .zip(&self.weights)
                .map(|(c, &w)| c * alpha.powi(w as i32))
                .collect(),
        )
    }

    /// Dilation by `2^k`; exact in binary floating point.
    pub fn dilate_pow2(&self, k: i32, x: &Point) -> Point {
        Point(
            x.0.iter()
                .zip(&self.weights)
                .map(|(c, &w)| c * 2f64.powi(k * w as i32))
                .collect(),
        )
    }

    /// Homogeneous norm of `x` under the configured [`NormKind`].
    ///
    /// Panics if `x` does not match the group layout.
    pub fn hom_norm(&self, x: &Point) -> f64 {
        assert_eq!(x.len(), self.dim(), "point layout does not match group");
        match self.norm_kind {
            NormKind::Euclidean => x.0.iter().map(|c| c * c).sum::<f64>().sqrt(),
            NormKind::Koranyi => {
                let GroupLaw::Heisenberg { d } = self.law else {
                    unreachable!("Korányi norm is only configured on Heisenberg groups")
                };
                let r2: f64 = x.0[..2 * d].iter().map(|c| c * c).sum();
                let t = x.0[2 * d];
                (r2 * r2 + 16.0 * t * t).sqrt().sqrt()
            }
            NormKind::Gauge => {
                let m = self.step() as u64;
                let l = (1..=m).fold(1u64, lcm) as f64;
                let mut acc = 0.0;
                let mut offset = 0;
                for (k, &dk) in self.strata_dims.iter().enumerate() {
                    let sq: f64 = x.0[offset..offset + dk].iter().map(|c| c * c).sum();
                    // |x_k|^(2L/k) = (|x_k|^2)^(L/k)
                    acc += sq.powf(l / (k + 1) as f64);
                    offset += dk;
                }
                acc.powf(1.0 / (2.0 * l))
            }
        }
    }

    /// Volume of the unit ball of the homogeneous norm.
    pub fn unit_ball_volume(&self) -> f64 {
        match (&self.law, self.norm_kind) {
            (GroupLaw::Abelian, NormKind::Euclidean) => euclidean_ball_volume(self.dim()),
            (GroupLaw::Heisenberg { d }, NormKind::Koranyi) => {
                // |B| = int_{|v|<=1} sqrt(1 - |v|^4) / 2 dv, radial in R^{2d};
                // r^2 = sin(phi) removes the endpoint singularity
                let n = 2 * d;
                let sphere = n as f64 * euclidean_ball_volume(n);
                let f = |phi: f64| phi.sin().powi(*d as i32 - 1) * phi.cos().powi(2) / 4.0;
                sphere * simpson(f, 0.0, std::f64::consts::FRAC_PI_2, 4096)
            }
            _ => monte_carlo_ball_volume(self, 200_000, 0x5eed),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

fn euclidean_ball_volume(n: usize) -> f64 {
    // V_n = pi^{n/2} / Gamma(n/2 + 1), via the recurrence V_n = 2 pi / n * V_{n-2}
    let mut v = if n % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if n % 2 == 0 { 2 } else { 3 };
    while k <= n {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn monte_carlo_ball_volume(g: &GroupSpec, samples: usize, seed: u64) -> f64 {
    // every coordinate of the unit ball is bounded by 1 for the gauge norm
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.dim();
    let mut inside = 0usize;
    let mut p = Point::zeros(n);
    for _ in 0..samples {
        for c in p.0.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        if g.hom_norm(&p) <= 1.0 {
            inside += 1;
        }
    }
    inside as f64 / samples as f64 * 2f64.powi(n as i32)
}

/// `p = 1 / (1/2 - s/Q)`, the Lebesgue exponent of the critical embedding.
pub fn critical_exponent(g: &GroupSpec, s: f64) -> Result<f64> {
    let q = g.homogeneous_dimension() as f64;
    if !(s > 0.0 && s < q / 2.0) {
        return Err(Error::Domain(format!("smoothness {s} outside (0, Q/2) with Q = {q}")));
    }
    Ok(1.0 / (0.5 - s / q))
}

/// Measured defects of a group law on random points.
#[derive(Clone, Debug, Serialize)]
pub struct LawValidation {
    pub trials: usize,
    pub max_associativity_error: f64,
    pub max_inverse_error: f64,
    pub max_dilation_error: f64,
}

impl LawValidation {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_associativity_error <= tol
            && self.max_inverse_error <= tol
            && self.max_dilation_error <= tol
    }
}

pub(crate) fn random_point(g: &GroupSpec, rng: &mut impl Rng, scale: f64) -> Point {
    Point((0..g.dim()).map(|_| rng.gen_range(-scale..scale)).collect())
}

/// Fuzz associativity, inversion by negation and the automorphism property of
/// dyadic dilations on `trials` random triples.
pub fn validate_law(g: &GroupSpec, trials: usize, seed: u64) -> LawValidation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LawValidation {
        trials,
        max_associativity_error: 0.0,
        max_inverse_error: 0.0,
        max_dilation_error: 0.0,
    };
    for _ in 0..trials {
        let x = random_point(g, &mut rng, 2.0);
        let y = random_point(g, &mut rng, 2.0);
        let z = random_point(g, &mut rng, 2.0);
        let xy = g.multiply_unchecked(&x.0, &y.0);
        let yz = g.multiply_unchecked(&y.0, &z.0);
        let left = g.multiply_unchecked(&xy.0, &z.0);
        let right = g.multiply_unchecked(&x.0, &yz.0);
        report.max_associativity_error = report.max_associativity_error.max(left.max_abs_diff(&right));

        let inv = Point(x.0.iter().map(|c| -c).collect());
        let e = g.multiply_unchecked(&x.0, &inv.0);
        let e2 = g.multiply_unchecked(&inv.0, &x.0);
        let inv_err = e.0.iter().chain(&e2.0).map(|c| c.abs()).fold(0.0, f64::max);
        report.max_inverse_error = report.max_inverse_error.max(inv_err);

        let alpha = 2f64.powi(rng.gen_range(-3..=3));
        let lhs = g.dilate_unchecked(alpha, &xy.0);
        let dx = g.dilate_unchecked(alpha, &x.0);
        let dy = g.dilate_unchecked(alpha, &y.0);
        let rhs = g.multiply_unchecked(&dx.0, &dy.0);
        report.max_dilation_error = report.max_dilation_error.max(lhs.max_abs_diff(&rhs));
    }
    report
}

/// Largest observed ratio `|x.y| / (|x| + |y|)` over random pairs; the
/// quasi-triangle constant of the configured norm is at least this value.
pub fn measure_quasi_triangle(g: &GroupSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        // mix scales so that both strata dominate in some samples
        let sx = 2f64.powi(rng.gen_range(-4..=4));
        let sy = 2f64.powi(rng.gen_range(-4..=4));
        let x = g.dilate_unchecked(sx, &random_point(g, &mut rng, 1.0).0);
        let y = g.dilate_unchecked(sy, &random_point(g, &mut rng, 1.0).0);
        let denom = g.hom_norm(&x) + g.hom_norm(&y);
        if denom > 0.0 {
            worst = worst.max(g.hom_norm(&g.multiply_unchecked(&x.0, &y.0)) / denom);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// JSON form: {"kind": "abelian"|"heisenberg", "d": n} or
// {"strata_dims": [...], "law": "custom", "coefficients": [...]}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PresetKind {
    Abelian,
    Heisenberg,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GroupSpecRepr {
    Preset {
        kind: PresetKind,
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormKind>,
    },
    Custom {
        strata_dims: Vec<usize>,
        law: String,
        coefficients: Vec<LawTerm>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormKind>,
    },
}

impl Serialize for GroupSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match &self.law {
            GroupLaw::Abelian => GroupSpecRepr::Preset {
                kind: PresetKind::Abelian,
                d: self.dim(),
                norm: (self.norm_kind != NormKind::Euclidean).then_some(self.norm_kind),
            },
            GroupLaw::Heisenberg { d } => GroupSpecRepr::Preset {
                kind: PresetKind::Heisenberg,
                d: *d,
                norm: (self.norm_kind != NormKind::Koranyi).then_some(self.norm_kind),
            },
            GroupLaw::Polynomial { terms } => GroupSpecRepr::Custom {
                strata_dims: self.strata_dims.clone(),
                law: "custom".into(),
                coefficients: terms.clone(),
                norm: (self.norm_kind != NormKind::Gauge).then_some(self.norm_kind),
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GroupSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = GroupSpecRepr::deserialize(deserializer)?;
        let (spec, norm) = match repr {
            GroupSpecRepr::Preset { kind, d, norm } => {
                if d == 0 {
                    return Err(D::Error::custom("group dimension must be positive"));
                }
                let spec = match kind {
                    PresetKind::Abelian => GroupSpec::abelian(d),
                    PresetKind::Heisenberg => GroupSpec::heisenberg(d),
                };
                (spec, norm)
            }
            GroupSpecRepr::Custom {
                strata_dims,
                law,
                coefficients,
                norm,
            } => {
                if law != "custom" {
                    return Err(D::Error::custom(format!("unknown law {law:?}")));
                }
                (GroupSpec::custom(strata_dims, coefficients).map_err(D::Error::custom)?, norm)
            }
        };
        match norm {
            Some(kind) => spec.with_norm(kind).map_err(D::Error::custom),
            None => Ok(spec),
        }
    }
}
