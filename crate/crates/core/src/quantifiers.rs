//! RIM linguistic quantifiers and the OWA operators they generate.
//!
//! A quantifier `Q: [0,1] -> [0,1]` with `Q(0) = 0`, `Q(1) = 1` and `Q`
//! nondecreasing yields, for a window of `n` values, the weight vector
//! `w_j = Q(j/n) - Q((j-1)/n)`. Weight `w_j` multiplies the `j`-th largest
//! aggregated value.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of uniform intervals used by [`quantifier_orness`].
const ORNESS_INTERVALS: usize = 10_000;

/// Tolerance on the unit-sum invariant of an OWA weight vector.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantifierKind {
    ThereExists,
    Average,
    Most,
    AtLeastHalf,
    AtMiddle,
    AtLeast,
}

impl QuantifierKind {
    pub const ALL: [QuantifierKind; 6] = [
        QuantifierKind::ThereExists,
        QuantifierKind::Average,
        QuantifierKind::Most,
        QuantifierKind::AtLeastHalf,
        QuantifierKind::AtMiddle,
        QuantifierKind::AtLeast,
    ];

    pub fn takes_alpha(self) -> bool {
        matches!(self, QuantifierKind::AtMiddle | QuantifierKind::AtLeast)
    }

    /// Lower-case token used on the command line and in report files.
    pub fn token(self) -> &'static str {
        match self {
            QuantifierKind::ThereExists => "max",
            QuantifierKind::Average => "average",
            QuantifierKind::Most => "most",
            QuantifierKind::AtLeastHalf => "atleasthalf",
            QuantifierKind::AtMiddle => "atmiddle",
            QuantifierKind::AtLeast => "atleast",
        }
    }
}

impl FromStr for QuantifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match normalized.as_str() {
            "max" | "thereexists" | "maximum" => Ok(QuantifierKind::ThereExists),
            "average" | "avg" | "mean" => Ok(QuantifierKind::Average),
            "most" => Ok(QuantifierKind::Most),
            "atleasthalf" => Ok(QuantifierKind::AtLeastHalf),
            "atmiddle" => Ok(QuantifierKind::AtMiddle),
            "atleast" => Ok(QuantifierKind::AtLeast),
            _ => Err(Error::invalid(
                "quantifier",
                format!(
                    "unknown quantifier `{s}` (expected one of max, average, most, atleasthalf, atmiddle, atleast)"
                ),
            )),
        }
    }
}

/// A linguistic RIM quantifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantifier {
    /// `Q(x) = 1` for any `x != 0`; the induced OWA operator is the maximum.
    ThereExists,
    /// `Q(x) = x`; the induced OWA operator is the arithmetic mean.
    Average,
    Most,
    AtLeastHalf,
    /// Keeps the values around the middle, discarding roughly an `alpha`
    /// share at both the top and the bottom. Valid for `0 < alpha < 0.5`.
    AtMiddle {
        alpha: f64,
    },
    /// Saturates once the top `alpha` share is reached. Valid for `0 < alpha <= 1`.
    AtLeast {
        alpha: f64,
    },
}

impl Quantifier {
    pub const DEFAULT_AT_MIDDLE_ALPHA: f64 = 0.2;
    pub const DEFAULT_AT_LEAST_ALPHA: f64 = 0.75;

    pub fn at_middle(alpha: f64) -> Result<Self> {
        let q = Quantifier::AtMiddle { alpha };
        q.validate()?;
        Ok(q)
    }

    pub fn at_least(alpha: f64) -> Result<Self> {
        let q = Quantifier::AtLeast { alpha };
        q.validate()?;
        Ok(q)
    }

    /// Builds a quantifier from its kind. `alpha` must be given exactly for
    /// the parametrized kinds.
    pub fn from_kind(kind: QuantifierKind, alpha: Option<f64>) -> Result<Self> {
        let q = match (kind, alpha) {
            (QuantifierKind::AtMiddle, Some(alpha)) => Quantifier::AtMiddle { alpha },
            (QuantifierKind::AtLeast, Some(alpha)) => Quantifier::AtLeast { alpha },
            (k, None) if k.takes_alpha() => {
                return Err(Error::invalid(
                    "alpha",
                    format!("quantifier `{}` requires an alpha value", k.token()),
                ))
            }
            (k, Some(_)) if !k.takes_alpha() => {
                return Err(Error::invalid(
                    "alpha",
                    format!("quantifier `{}` does not take an alpha value", k.token()),
                ))
            }
            (QuantifierKind::ThereExists, _) => Quantifier::ThereExists,
            (QuantifierKind::Average, _) => Quantifier::Average,
            (QuantifierKind::Most, _) => Quantifier::Most,
            (QuantifierKind::AtLeastHalf, _) => Quantifier::AtLeastHalf,
            _ => unreachable!(),
        };
        q.validate()?;
        Ok(q)
    }

    /// The six quantifiers compared in the pooling experiments, with the
    /// default `alpha` values.
    pub fn standard_set() -> [Quantifier; 6] {
        [
            Quantifier::ThereExists,
            Quantifier::Average,
            Quantifier::Most,
            Quantifier::AtMiddle {
                alpha: Self::DEFAULT_AT_MIDDLE_ALPHA,
            },
            Quantifier::AtLeastHalf,
            Quantifier::AtLeast {
                alpha: Self::DEFAULT_AT_LEAST_ALPHA,
            },
        ]
    }

    pub fn kind(&self) -> QuantifierKind {
        match self {
            Quantifier::ThereExists => QuantifierKind::ThereExists,
            Quantifier::Average => QuantifierKind::Average,
            Quantifier::Most => QuantifierKind::Most,
            Quantifier::AtLeastHalf => QuantifierKind::AtLeastHalf,
            Quantifier::AtMiddle { .. } => QuantifierKind::AtMiddle,
            Quantifier::AtLeast { .. } => QuantifierKind::AtLeast,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Quantifier::AtMiddle { alpha } | Quantifier::AtLeast { alpha } => Some(alpha),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Quantifier::AtMiddle { alpha } if !(alpha > 0.0 && alpha < 0.5) => Err(Error::invalid(
                "alpha",
                format!("AtMiddle requires 0 < alpha < 0.5, got {alpha}"),
            )),
            Quantifier::AtLeast { alpha } if !(alpha > 0.0 && alpha <= 1.0) => Err(Error::invalid(
                "alpha",
                format!("AtLeast requires 0 < alpha <= 1, got {alpha}"),
            )),
            _ => Ok(()),
        }
    }

    /// Membership function without argument checks. Callers guarantee
    /// `x` in `[0,1]` and a valid `alpha`.
    fn membership(&self, x: f64) -> f64 {
        let raw = match *self {
            Quantifier::ThereExists => {
                if x == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Quantifier::Average => x,
            Quantifier::Most => {
                if x <= 0.3 {
                    0.0
                } else if x <= 0.8 {
                    2.0 * (x - 0.3)
                } else {
                    1.0
                }
            }
            Quantifier::AtLeastHalf => {
                if x <= 0.5 {
                    2.0 * x
                } else {
                    1.0
                }
            }
            Quantifier::AtMiddle { alpha } => {
                if x <= alpha {
                    0.0
                } else if x <= 1.0 - alpha {
                    2.0 * (x - alpha)
                } else {
                    1.0
                }
            }
            Quantifier::AtLeast { alpha } => {
                if x <= alpha {
                    x / alpha
                } else {
                    1.0
                }
            }
        };
        raw.clamp(0.0, 1.0)
    }

    /// Points of `[0,1]` where the clamped membership function changes
    /// formula. Between consecutive points it is affine.
    fn breakpoints(&self) -> Vec<f64> {
        let mut points = match *self {
            Quantifier::ThereExists | Quantifier::Average => vec![],
            Quantifier::Most => vec![0.3, 0.8],
            Quantifier::AtLeastHalf => vec![0.5],
            Quantifier::AtMiddle { alpha } => vec![alpha, (alpha + 0.5).min(1.0 - alpha), 1.0 - alpha],
            Quantifier::AtLeast { alpha } => vec![alpha],
        };
        points.retain(|p| *p > 0.0 && *p < 1.0);
        points
    }

    /// Short token that [`FromStr`] accepts back, e.g. `most` or `atmiddle:0.2`.
    pub fn token(&self) -> String {
        match self.alpha() {
            Some(alpha) => format!("{}:{}", self.kind().token(), alpha),
            None => self.kind().token().to_string(),
        }
    }

    /// Pooling layer name in the notation of the layout tables, e.g.
    /// `MaxPool`, `AvgPool`, `OWAPoolMost`, `OWAPoolAtMiddle02`.
    pub fn pool_name(&self) -> String {
        let alpha_digits = |alpha: f64| format!("{alpha}").replace('.', "");
        match *self {
            Quantifier::ThereExists => "MaxPool".to_string(),
            Quantifier::Average => "AvgPool".to_string(),
            Quantifier::Most => "OWAPoolMost".to_string(),
            Quantifier::AtLeastHalf => "OWAPoolAtLeastHalf".to_string(),
            Quantifier::AtMiddle { alpha } => format!("OWAPoolAtMiddle{}", alpha_digits(alpha)),
            Quantifier::AtLeast { alpha } => format!("OWAPoolAtLeast{}", alpha_digits(alpha)),
        }
    }
}

impl fmt::Display for Quantifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Quantifier::ThereExists => write!(f, "ThereExists"),
            Quantifier::Average => write!(f, "Average"),
            Quantifier::Most => write!(f, "Most"),
            Quantifier::AtLeastHalf => write!(f, "AtLeastHalf"),
            Quantifier::AtMiddle { alpha } => write!(f, "AtMiddle(alpha={alpha})"),
            Quantifier::AtLeast { alpha } => write!(f, "AtLeast(alpha={alpha})"),
        }
    }
}

impl FromStr for Quantifier {
    type Err = Error;

    /// Accepts `name` or `name:alpha`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, alpha) = match s.split_once(':') {
            Some((name, alpha)) => {
                let alpha = alpha
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid("alpha", format!("`{alpha}` is not a number")))?;
                (name, Some(alpha))
            }
            None => (s, None),
        };
        Quantifier::from_kind(name.trim().parse()?, alpha)
    }
}

/// Evaluates `q` at `x`, clamped into `[0,1]`.
pub fn evaluate(q: &Quantifier, x: f64) -> Result<f64> {
    q.validate()?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid("x", format!("must lie in [0,1], got {x}")));
    }
    Ok(q.membership(x))
}

/// Ordered weight vector; `weights[j]` applies to the `(j+1)`-th largest value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwaWeights {
    weights: Vec<f64>,
}

impl OwaWeights {
    /// Wraps an explicit weight vector after checking the OWA invariants.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "must not be empty"));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::invalid("weights", format!("weight {w} outside [0,1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::invalid("weights", format!("weights sum to {sum}, not 1")));
        }
        Ok(OwaWeights { weights })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn andness(&self) -> f64 {
        1.0 - discrete_orness(self)
    }
}

/// Derives the OWA weights of cardinality `n` from `q`.
pub fn rim_weights(q: &Quantifier, n: usize) -> Result<OwaWeights> {
    q.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", "window cardinality must be at least 1"));
    }
    let nf = n as f64;
    let mut previous = q.membership(0.0);
    let weights = (1..=n)
        .map(|j| {
            let current = q.membership(j as f64 / nf);
            let w = current - previous;
            previous = current;
            w
        })
        .collect();
    Ok(OwaWeights { weights })
}

/// Indices of `values` ordered by descending value; equal values keep
/// their original relative order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// `sum_j w_j * b_j` with `b` the values sorted in descending order.
pub fn owa_aggregate(w: &OwaWeights, values: &[f64]) -> Result<f64> {
    if values.len() != w.n() {
        return Err(Error::invalid(
            "values",
            format!("expected {} values, got {}", w.n(), values.len()),
        ));
    }
    let order = descending_order(values);
    Ok(weighted_by_rank(w.as_slice(), values, &order))
}

/// Weighted sum over ranks. Zero weights are skipped so that a one-hot
/// weight vector returns the selected value bit-for-bit.
pub(crate) fn weighted_by_rank<I: Copy + Into<usize>>(weights: &[f64], values: &[f64], order: &[I]) -> f64 {
    let mut acc: Option<f64> = None;
    for (w, &idx) in weights.iter().zip(order) {
        if *w != 0.0 {
            let term = w * values[idx.into()];
            acc = Some(acc.map_or(term, |a| a + term));
        }
    }
    acc.unwrap_or(0.0)
}

/// `sum_j ((n-j)/(n-1)) w_j`; defined as 0.5 for a single weight.
///
/// Evaluated around the centre as `1/2 + sum_j (n-1-2j)(w_j - w_{n-1-j}) / (2(n-1))`
/// over the first half, so symmetric weights give exactly 0.5.
pub fn discrete_orness(w: &OwaWeights) -> f64 {
    let n = w.n();
    if n == 1 {
        return 0.5;
    }
    let w = w.as_slice();
    let skew: f64 = (0..n / 2).map(|j| (n - 1 - 2 * j) as f64 * (w[j] - w[n - 1 - j])).sum();
    0.5 + skew / (2 * (n - 1)) as f64
}

/// Continuous orness `∫_0^1 Q(x) dx` of the clamped quantifier.
///
/// The uniform grid is refined at the quantifier's breakpoints and each cell
/// is integrated with the midpoint rule, which is exact for the affine pieces
/// and never samples a jump.
pub fn quantifier_orness(q: &Quantifier) -> Result<f64> {
    q.validate()?;
    let h = 1.0 / ORNESS_INTERVALS as f64;
    let mut nodes: Vec<f64> = (0..=ORNESS_INTERVALS).map(|i| i as f64 * h).collect();
    nodes.extend(q.breakpoints());
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    Ok(nodes
        .windows(2)
        .map(|cell| {
            let (a, b) = (cell[0], cell[1]);
            (b - a) * q.membership(0.5 * (a + b))
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(evaluate(&Quantifier::Most, 0.25).unwrap(), 0.0);
        assert_eq!(evaluate(&Quantifier::Average, 0.7).unwrap(), 0.7);
        // raw branch value 2(0.75 - 0.2) = 1.1 is clamped
        let q = Quantifier::at_middle(0.2).unwrap();
        assert_eq!(evaluate(&q, 0.75).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_rejects_bad_arguments() {
        let err = evaluate(&Quantifier::Most, 1.5).unwrap_err();
        assert!(err.to_string().contains("`x`"), "{err}");
        let err = evaluate(&Quantifier::AtMiddle { alpha: 0.5 }, 0.1).unwrap_err();
        assert!(err.to_string().contains("`alpha`"), "{err}");
        assert!(Quantifier::at_least(0.0).is_err());
        assert!(Quantifier::at_least(1.0).is_ok());
        assert!(evaluate(&Quantifier::Most, f64::NAN).is_err());
    }

    #[test]
    fn endpoints_are_zero_and_one() {
        for q in Quantifier::standard_set() {
            assert_eq!(evaluate(&q, 0.0).unwrap(), 0.0, "{q}");
            assert_eq!(evaluate(&q, 1.0).unwrap(), 1.0, "{q}");
        }
    }

    #[test]
    fn rim_weight_examples() {
        let w = |q: Quantifier, n| rim_weights(&q, n).unwrap().as_slice().to_vec();
        assert_eq!(w(Quantifier::ThereExists, 3), vec![1.0, 0.0, 0.0]);
        assert_close(&w(Quantifier::Average, 5), &[0.2; 5], 1e-12);
        assert_close(&w(Quantifier::Most, 4), &[0.0, 0.4, 0.5, 0.1], 1e-12);
        assert_close(&w(Quantifier::AtLeastHalf, 2), &[1.0, 0.0], 1e-12);
        assert_close(
            &w(Quantifier::AtLeast { alpha: 0.75 }, 4),
            &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0],
            1e-12,
        );
        assert!(rim_weights(&Quantifier::Most, 0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let w = OwaWeights::new(vec![0.0, 0.4, 0.5, 0.1]).unwrap();
        assert!((owa_aggregate(&w, &[1.0, 2.0, 3.0, 4.0]).unwrap() - 2.3).abs() < 1e-12);
        let max = rim_weights(&Quantifier::ThereExists, 3).unwrap();
        assert_eq!(owa_aggregate(&max, &[5.0, -1.0, 2.0]).unwrap(), 5.0);
        let mean = rim_weights(&Quantifier::Average, 2).unwrap();
        assert_eq!(owa_aggregate(&mean, &[2.0, 4.0]).unwrap(), 3.0);
        assert!(owa_aggregate(&mean, &[1.0]).is_err());
    }

    #[test]
    fn stable_descending_order() {
        assert_eq!(descending_order(&[1.0, 3.0, 1.0, 3.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn orness_examples() {
        let w = OwaWeights::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(discrete_orness(&w), 1.0);
        let w = OwaWeights::new(vec![0.25; 4]).unwrap();
        assert_eq!(discrete_orness(&w), 0.5);
        for n in 2..=64 {
            let uniform = OwaWeights::new(vec![1.0 / n as f64; n]).unwrap();
            assert_eq!(discrete_orness(&uniform), 0.5, "n = {n}");
            let mut max = vec![0.0; n];
            max[0] = 1.0;
            assert_eq!(discrete_orness(&OwaWeights::new(max).unwrap()), 1.0, "n = {n}");
            let avg = rim_weights(&Quantifier::Average, n).unwrap();
            assert!((discrete_orness(&avg) - 0.5).abs() < 1e-15, "n = {n}");
        }
        let most = rim_weights(&Quantifier::Most, 4).unwrap();
        assert!((discrete_orness(&most) - 13.0 / 30.0).abs() < 1e-12);
        assert!((most.andness() - 17.0 / 30.0).abs() < 1e-12);
        let single = OwaWeights::new(vec![1.0]).unwrap();
        assert_eq!(discrete_orness(&single), 0.5);

        let orness = |q| quantifier_orness(&q).unwrap();
        assert!((orness(Quantifier::Most) - 0.45).abs() <= 1e-6);
        assert!((orness(Quantifier::AtLeastHalf) - 0.75).abs() <= 1e-6);
        assert!((orness(Quantifier::AtLeast { alpha: 0.75 }) - 0.625).abs() <= 1e-6);
        assert!((orness(Quantifier::ThereExists) - 1.0).abs() <= 1e-6);
        assert!((orness(Quantifier::Average) - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn at_middle_orness_follows_clamped_membership() {
        // 0 on [0,.2], 2(x-.2) on [.2,.7], 1 on [.7,1]: 0.25 + 0.3
        let q = Quantifier::at_middle(0.2).unwrap();
        assert!((quantifier_orness(&q).unwrap() - 0.55).abs() <= 1e-6);
        // with a jump at 1 - alpha: 0.5 * 0.4 * 0.8 + 0.3
        let q = Quantifier::at_middle(0.3).unwrap();
        assert!((quantifier_orness(&q).unwrap() - 0.46).abs() <= 1e-6);
    }

    #[test]
    fn parse_tokens() {
        assert_eq!("Most".parse::<Quantifier>().unwrap(), Quantifier::Most);
        assert_eq!("max".parse::<Quantifier>().unwrap(), Quantifier::ThereExists);
        assert_eq!(
            "atmiddle:0.2".parse::<Quantifier>().unwrap(),
            Quantifier::AtMiddle { alpha: 0.2 }
        );
        assert!("atmiddle".parse::<Quantifier>().is_err());
        assert!("most:0.3".parse::<Quantifier>().is_err());
        assert!("fewest".parse::<Quantifier>().is_err());
        for q in Quantifier::standard_set() {
            assert_eq!(q.token().parse::<Quantifier>().unwrap(), q);
        }
    }

    #[test]
    fn pool_names_follow_layout_table() {
        assert_eq!(Quantifier::ThereExists.pool_name(), "MaxPool");
        assert_eq!(Quantifier::Average.pool_name(), "AvgPool");
        assert_eq!(Quantifier::AtMiddle { alpha: 0.2 }.pool_name(), "OWAPoolAtMiddle02");
        assert_eq!(Quantifier::AtLeast { alpha: 0.75 }.pool_name(), "OWAPoolAtLeast075");
    }
}
