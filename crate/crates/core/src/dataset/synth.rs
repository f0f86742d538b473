//! Seeded synthetic generator shaped after the patent-quality indicator table:
//! twenty continuous/binary indicators plus a categorical technology field,
//! a rare binary outcome and an optional mean shift on positive rows.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::seeded;

use super::{Dataset, Feature, FeatureKind};

/// Marginal target for one generated column. For categorical columns only
/// `levels` is used.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFeature {
    pub name: String,
    pub kind: FeatureKind,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub levels: usize,
}

impl SynthFeature {
    pub fn continuous(name: &str, mean: f64, sd: f64, min: f64, max: f64) -> Self {
        SynthFeature {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            mean,
            sd,
            min,
            max,
            levels: 0,
        }
    }

    pub fn binary(name: &str, mean: f64) -> Self {
        SynthFeature {
            name: name.to_string(),
            kind: FeatureKind::Binary,
            mean,
            sd: (mean * (1.0 - mean)).sqrt(),
            min: 0.0,
            max: 1.0,
            levels: 0,
        }
    }

    pub fn categorical(name: &str, levels: usize) -> Self {
        SynthFeature {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            mean: 0.0,
            sd: 0.0,
            min: 0.0,
            max: 0.0,
            levels,
        }
    }
}

/// Latent score `Σ w·z_f + Σ w·z_a·z_b` over standardized features
/// `z = (x - mean) / sd`, using the target marginals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Signal {
    pub linear: Vec<(String, f64)>,
    pub interactions: Vec<(String, String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub positive_rate: f64,
    pub label: String,
    pub features: Vec<SynthFeature>,
    pub signal: Signal,
    /// Mean shift added to positive rows, in units of the feature's target sd.
    pub anomaly_shift: BTreeMap<String, f64>,
    pub seed: u64,
}

/// Patent indicator marginals: (name, mean, sd, min, max).
const INDICATORS: [(&str, f64, f64, f64, f64); 19] = [
    ("sim.past", 0.088, 0.185, 0.0, 1.0),
    ("sim.present", 0.153, 0.262, 0.0, 1.0),
    ("patent_scope", 1.854, 1.162, 1.0, 31.0),
    ("family_size", 4.251, 3.906, 1.0, 57.0),
    ("bwd_cits", 15.150, 25.640, 0.0, 4756.0),
    ("npl_cits", 3.328, 12.690, 0.0, 1592.0),
    ("claims_bwd", 1.673, 3.378, 0.0, 405.0),
    ("originality", 0.707, 0.248, 0.0, 1.0),
    ("radicalness", 0.382, 0.288, 0.0, 1.0),
    ("nb_applicants", 1.849, 1.705, 0.0, 77.0),
    ("nb_inventors", 2.666, 1.925, 0.0, 99.0),
    ("patent_scope.diff", 0.008, 1.091, -2.806, 29.130),
    ("bwd_cits.diff", 0.222, 24.560, -42.050, 4732.0),
    ("npl_cits.diff", 0.112, 12.100, -30.510, 1579.0),
    ("family_size.diff", 0.031, 3.536, -11.090, 50.090),
    ("originality.diff", -0.029, 0.242, -0.911, 0.431),
    ("radicalness.diff", -0.018, 0.277, -0.751, 0.808),
    ("sim.past.diff", -0.000, 0.180, -0.247, 0.990),
    ("sim.present.diff", 0.000, 0.260, -0.315, 0.942),
];

/// Shift (in sd units) applied to positives by [`SynthSpec::rare_anomaly`].
pub const RARE_ANOMALY_SHIFT: [(&str, f64); 5] = [
    ("family_size", 1.0),
    ("bwd_cits", 1.0),
    ("claims_bwd", 1.0),
    ("nb_inventors", 1.0),
    ("sim.present", 1.0),
];

/// Default autoencoder inputs: the twelve base indicators minus `many_field`.
pub const AUTOENCODER_FEATURES: [&str; 11] = [
    "sim.past",
    "sim.present",
    "patent_scope",
    "family_size",
    "bwd_cits",
    "npl_cits",
    "claims_bwd",
    "originality",
    "radicalness",
    "nb_applicants",
    "nb_inventors",
];

impl SynthSpec {
    /// Indicator marginals with no signal and no shift.
    pub fn indicators(n: usize, positive_rate: f64, label: &str, seed: u64) -> Self {
        let mut features: Vec<SynthFeature> = Vec::with_capacity(INDICATORS.len() + 2);
        for (i, &(name, mean, sd, min, max)) in INDICATORS.iter().enumerate() {
            features.push(SynthFeature::continuous(name, mean, sd, min, max));
            if i == 1 {
                features.push(SynthFeature::binary("many_field", 0.398));
            }
        }
        features.push(SynthFeature::categorical("tech_field", 6));
        SynthSpec {
            n,
            positive_rate,
            label: label.to_string(),
            features,
            signal: Signal::default(),
            anomaly_shift: BTreeMap::new(),
            seed,
        }
    }

    /// Top-1% style outcome (0.6% positives) with a weak linear signal and
    /// one interaction; no anomaly shift.
    pub fn rare_event(n: usize, seed: u64) -> Self {
        let mut spec = SynthSpec::indicators(n, 0.006, "breakthrough", seed);
        spec.signal = Signal {
            linear: vec![
                ("family_size".into(), 0.25),
                ("originality".into(), 0.2),
                ("sim.present".into(), 0.2),
            ],
            interactions: vec![("radicalness".into(), "bwd_cits".into(), 0.2)],
        };
        spec
    }

    /// [`SynthSpec::rare_event`] with positives shifted up by one sd on five
    /// base indicators: an anomaly benchmark for the autoencoder.
    pub fn rare_anomaly(n: usize, seed: u64) -> Self {
        let mut spec = SynthSpec::rare_event(n, seed);
        spec.anomaly_shift = RARE_ANOMALY_SHIFT.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        spec
    }

    /// Top-50% style outcome (17.5% positives) driven mainly by feature
    /// interactions, so tree ensembles can beat linear scores.
    pub fn breakthrough50(n: usize, seed: u64) -> Self {
        let mut spec = SynthSpec::indicators(n, 0.175, "breakthrough50", seed);
        spec.signal = Signal {
            linear: vec![
                ("family_size".into(), 0.3),
                ("originality".into(), 0.3),
            ],
            interactions: vec![
                ("sim.present".into(), "radicalness".into(), 1.5),
                ("originality.diff".into(), "radicalness.diff".into(), 1.5),
            ],
        };
        spec
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("synthetic n must be >= 1".into()));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "positive_rate {} outside (0, 1)",
                self.positive_rate
            )));
        }
        for f in &self.features {
            match f.kind {
                FeatureKind::Categorical if f.levels < 2 => {
                    return Err(Error::InvalidParameter(format!(
                        "categorical `{}` needs at least 2 levels",
                        f.name
                    )))
                }
                FeatureKind::Categorical => {}
                _ => {
                    if !(f.sd >= 0.0) || !(f.min <= f.max) || !f.mean.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "degenerate marginals for `{}` (sd {}, min {}, max {})",
                            f.name, f.sd, f.min, f.max
                        )));
                    }
                    if f.kind == FeatureKind::Binary && !(0.0..=1.0).contains(&f.mean) {
                        return Err(Error::InvalidParameter(format!(
                            "binary `{}` mean {} outside [0, 1]",
                            f.name, f.mean
                        )));
                    }
                }
            }
        }
        let names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        let check = |n: &str| -> Result<()> {
            match self.features.iter().find(|f| f.name == n) {
                None => Err(Error::UnknownFeature(n.to_string())),
                Some(f) if f.kind == FeatureKind::Categorical => Err(Error::InvalidParameter(
                    format!("categorical `{n}` cannot enter the signal or shift"),
                )),
                Some(_) => Ok(()),
            }
        };
        for (n, _) in &self.signal.linear {
            check(n)?;
        }
        for (a, b, _) in &self.signal.interactions {
            check(a)?;
            check(b)?;
        }
        for n in self.anomaly_shift.keys() {
            check(n)?;
        }
        if names.contains(&self.label.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "label `{}` collides with a feature name",
                self.label
            )));
        }
        Ok(())
    }
}

/// Draws `spec.n` rows.
///
/// Continuous features are normal draws clipped to `[min, max]`, binary
/// features Bernoulli(mean), categorical features uniform. The positive count
/// is Binomial(n, positive_rate); which rows become positive is a
/// without-replacement draw weighted by `exp(latent score)` (Gumbel top-k).
/// Positive rows then receive the anomaly shift and are re-clipped.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let k = spec.features.len();
    let n = spec.n;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut values = vec![0.0; n * k];
    for i in 0..n {
        for (j, f) in spec.features.iter().enumerate() {
            values[i * k + j] = match f.kind {
                FeatureKind::Continuous => {
                    let z: f64 = std_normal.sample(&mut rng);
                    (f.mean + f.sd * z).clamp(f.min, f.max)
                }
                FeatureKind::Binary => {
                    if rng.random::<f64>() < f.mean {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeatureKind::Categorical => rng.random_range(0..f.levels) as f64,
            };
        }
    }

    let index = |name: &str| spec.features.iter().position(|f| f.name == name).unwrap();
    let zscore = |i: usize, j: usize| {
        let f = &spec.features[j];
        if f.sd > 0.0 {
            (values[i * k + j] - f.mean) / f.sd
        } else {
            0.0
        }
    };
    let linear: Vec<(usize, f64)> = spec.signal.linear.iter().map(|(n, w)| (index(n), *w)).collect();
    let inter: Vec<(usize, usize, f64)> = spec
        .signal
        .interactions
        .iter()
        .map(|(a, b, w)| (index(a), index(b), *w))
        .collect();

    let positives = Binomial::new(n as u64, spec.positive_rate)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(&mut rng) as usize;

    let mut keys: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for &(j, w) in &linear {
                s += w * zscore(i, j);
            }
            for &(a, b, w) in &inter {
                s += w * zscore(i, a) * zscore(i, b);
            }
            let u: f64 = rng.random::<f64>();
            let gumbel = -(-(u.max(f64::MIN_POSITIVE)).ln()).ln();
            (s + gumbel, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut y = vec![0u8; n];
    for &(_, i) in keys.iter().take(positives) {
        y[i] = 1;
    }

    let shifts: Vec<(usize, f64)> = spec
        .anomaly_shift
        .iter()
        .filter(|(_, &s)| s != 0.0)
        .map(|(name, &s)| (index(name), s))
        .collect();
    for i in (0..n).filter(|&i| y[i] == 1) {
        for &(j, s) in &shifts {
            let f = &spec.features[j];
            let cell = &mut values[i * k + j];
            *cell = (*cell + s * f.sd).clamp(f.min, f.max);
            if f.kind == FeatureKind::Binary {
                *cell = cell.round();
            }
        }
    }

    let features = spec
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Categorical => Feature::categorical(
                f.name.clone(),
                (0..f.levels).map(|l| format!("t{l}")).collect(),
            ),
            kind => Feature {
                name: f.name.clone(),
                kind,
                levels: Vec::new(),
            },
        })
        .collect();
    let mut labels = BTreeMap::new();
    labels.insert(spec.label.clone(), y);
    Dataset::new(features, values, n, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let spec = SynthSpec::rare_event(2000, 11);
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 12;
        assert_ne!(synth_generate(&spec).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn marginals_respect_bounds() {
        let ds = synth_generate(&SynthSpec::indicators(5000, 0.2, "y", 3)).unwrap();
        for (j, f) in SynthSpec::indicators(1, 0.2, "y", 3).features.iter().enumerate() {
            let col = ds.column(j);
            if f.kind == FeatureKind::Categorical {
                assert!(col.iter().all(|&v| v < f.levels as f64));
            } else {
                assert!(col.iter().all(|&v| v >= f.min && v <= f.max), "{}", f.name);
            }
        }
        // unclipped-ish feature keeps its mean
        let j = ds.feature_index("patent_scope.diff").unwrap();
        let mean = ds.column(j).iter().sum::<f64>() / 5000.0;
        assert!((mean - 0.008).abs() < 0.1);
    }

    #[test]
    fn degenerate_marginals_rejected() {
        let mut spec = SynthSpec::indicators(10, 0.5, "y", 1);
        spec.features[0].sd = -1.0;
        assert!(matches!(synth_generate(&spec), Err(Error::InvalidParameter(_))));
        let mut spec = SynthSpec::indicators(10, 1.0, "y", 1);
        assert!(synth_generate(&spec).is_err());
        spec.positive_rate = 0.5;
        spec.signal.linear.push(("nope".into(), 1.0));
        assert!(matches!(synth_generate(&spec), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn shift_moves_positive_means() {
        let ds = synth_generate(&SynthSpec::rare_anomaly(50_000, 5)).unwrap();
        let y = ds.label("breakthrough").unwrap();
        let j = ds.feature_index("nb_inventors").unwrap();
        let (mut sp, mut np, mut sn, mut nn) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..ds.rows() {
            if y[i] == 1 {
                sp += ds.value(i, j);
                np += 1.0;
            } else {
                sn += ds.value(i, j);
                nn += 1.0;
            }
        }
        assert!(sp / np > sn / nn + 1.0);
    }
}
