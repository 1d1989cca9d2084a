//! Clinical ground-truth scores (mean arterial pressure, CART, simplified
//! MEWS), deterioration labels, and a synthetic vitals generator.

use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMatrix, TaskKind};
use crate::error::{Error, Result};

/// Vital-sign column names, in generated column order.
pub const VITAL_COLUMNS: [&str; 6] = ["sbp", "dbp", "heart_rate", "resp_rate", "temperature", "age"];
pub const LABEL_COLUMN: &str = "label";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSystem {
    Map,
    Cart,
    Mews,
}

impl ScoreSystem {
    /// Column name of the score in generated data.
    pub fn column(self) -> &'static str {
        match self {
            ScoreSystem::Map => "MAP",
            ScoreSystem::Cart => "CART",
            ScoreSystem::Mews => "MEWS",
        }
    }

    /// Score at or above which a patient is labelled as deteriorating.
    pub fn threshold(self) -> Option<f64> {
        match self {
            ScoreSystem::Map => None,
            ScoreSystem::Cart => Some(12.0),
            ScoreSystem::Mews => Some(3.0),
        }
    }

    pub fn score(self, v: &Vitals) -> f64 {
        match self {
            ScoreSystem::Map => map_score(v.sbp, v.dbp),
            ScoreSystem::Cart => f64::from(cart_score(v.resp_rate, v.heart_rate, v.dbp, v.age)),
            ScoreSystem::Mews => {
                f64::from(mews_score(v.sbp, v.heart_rate, v.resp_rate, v.temperature))
            }
        }
    }
}

impl FromStr for ScoreSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(ScoreSystem::Map),
            "cart" => Ok(ScoreSystem::Cart),
            "mews" => Ok(ScoreSystem::Mews),
            other => Err(Error::Config(format!(
                "unknown score system `{other}` (expected map, cart or mews)"
            ))),
        }
    }
}

impl std::fmt::Display for ScoreSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreSystem::Map => "map",
            ScoreSystem::Cart => "cart",
            ScoreSystem::Mews => "mews",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vitals {
    pub sbp: f64,
    pub dbp: f64,
    pub heart_rate: f64,
    pub resp_rate: f64,
    pub temperature: f64,
    pub age: f64,
}

pub fn map_score(sbp: f64, dbp: f64) -> f64 {
    (sbp + 2.0 * dbp) / 3.0
}

pub fn cart_resp_rate_points(rr: f64) -> u32 {
    if rr < 21.0 {
        0
    } else if rr < 24.0 {
        8
    } else if rr < 26.0 {
        12
    } else if rr < 29.0 {
        15
    } else {
        22
    }
}

pub fn cart_heart_rate_points(hr: f64) -> u32 {
    if hr < 110.0 {
        0
    } else if hr < 140.0 {
        4
    } else {
        13
    }
}

/// The printed 4-point band [40, 50) overlaps the 0-point band at [49, 50);
/// values from 49 up score 0.
pub fn cart_dbp_points(dbp: f64) -> u32 {
    if dbp <= 35.0 {
        13
    } else if dbp < 40.0 {
        6
    } else if dbp < 49.0 {
        4
    } else {
        0
    }
}

pub fn cart_age_points(age: f64) -> u32 {
    if age < 55.0 {
        0
    } else if age < 70.0 {
        4
    } else {
        9
    }
}

/// Cardiac arrest risk triage score, 0 to 57.
pub fn cart_score(resp_rate: f64, heart_rate: f64, dbp: f64, age: f64) -> u32 {
    cart_resp_rate_points(resp_rate)
        + cart_heart_rate_points(heart_rate)
        + cart_dbp_points(dbp)
        + cart_age_points(age)
}

pub fn mews_sbp_points(sbp: f64) -> u32 {
    if sbp < 71.0 {
        3
    } else if sbp < 81.0 {
        2
    } else if sbp < 101.0 {
        1
    } else if sbp < 200.0 {
        0
    } else {
        2
    }
}

pub fn mews_heart_rate_points(hr: f64) -> u32 {
    if hr < 41.0 {
        2
    } else if hr < 51.0 {
        1
    } else if hr < 101.0 {
        0
    } else if hr < 111.0 {
        1
    } else if hr < 130.0 {
        2
    } else {
        3
    }
}

pub fn mews_resp_rate_points(rr: f64) -> u32 {
    if rr < 9.0 {
        2
    } else if rr < 15.0 {
        0
    } else if rr < 21.0 {
        1
    } else if rr < 30.0 {
        2
    } else {
        3
    }
}

pub fn mews_temperature_points(temp: f64) -> u32 {
    if temp < 35.0 {
        2
    } else if temp < 38.5 {
        0
    } else {
        2
    }
}

/// Simplified modified early warning score without the consciousness
/// component, 0 to 11.
pub fn mews_score(sbp: f64, heart_rate: f64, resp_rate: f64, temperature: f64) -> u32 {
    mews_sbp_points(sbp)
        + mews_heart_rate_points(heart_rate)
        + mews_resp_rate_points(resp_rate)
        + mews_temperature_points(temperature)
}

/// 1 when the score reaches the system's deterioration threshold.
pub fn deterioration_label(score: f64, system: ScoreSystem) -> Result<u8> {
    let threshold = system.threshold().ok_or_else(|| {
        Error::Config(format!("{system} has no deterioration threshold"))
    })?;
    Ok(u8::from(score >= threshold))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub system: ScoreSystem,
    pub rows: usize,
    pub distractors: usize,
    /// Positive share for labelled systems; ignored for MAP.
    pub prevalence: Option<f64>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(system: ScoreSystem, rows: usize, seed: u64) -> Self {
        Self {
            system,
            rows,
            distractors: 5,
            prevalence: match system {
                ScoreSystem::Map => None,
                ScoreSystem::Cart => Some(0.09),
                ScoreSystem::Mews => Some(0.11),
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 100 {
            return Err(Error::Config("at least 100 rows are required".into()));
        }
        if self.system != ScoreSystem::Map {
            match self.prevalence {
                Some(p) if p > 0.0 && p < 0.5 => {}
                Some(p) => {
                    return Err(Error::Config(format!("prevalence must lie in (0, 0.5), got {p}")))
                }
                None => return Err(Error::Config("prevalence is required for labelled scores".into())),
            }
        }
        Ok(())
    }
}

/// Generated rows: vitals and distractors, the score, and (for labelled
/// systems) the deterioration label.
#[derive(Clone, Debug, PartialEq)]
pub struct ClinicalData {
    pub system: ScoreSystem,
    pub feature_names: Vec<String>,
    pub features: FeatureMatrix,
    pub score: Vec<f64>,
    pub label: Option<Vec<f64>>,
}

impl ClinicalData {
    pub fn prevalence(&self) -> Option<f64> {
        let label = self.label.as_ref()?;
        Some(label.iter().sum::<f64>() / label.len() as f64)
    }

    /// The score as a regression target.
    pub fn regression(&self) -> Result<Dataset> {
        Dataset::new(
            self.features.clone(),
            self.score.clone(),
            self.feature_names.clone(),
            TaskKind::Regression,
        )
    }

    /// The deterioration label as a classification target.
    pub fn classification(&self) -> Result<Dataset> {
        let label = self.label.clone().ok_or_else(|| {
            Error::Config(format!("{} data has no label", self.system))
        })?;
        Dataset::new(
            self.features.clone(),
            label,
            self.feature_names.clone(),
            TaskKind::Classification,
        )
    }

    pub fn header(&self) -> Vec<String> {
        let mut header = self.feature_names.clone();
        header.push(self.system.column().to_string());
        if self.label.is_some() {
            header.push(LABEL_COLUMN.to_string());
        }
        header
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.header())?;
        for r in 0..self.features.n_rows() {
            let mut record: Vec<String> = (0..self.features.n_features())
                .map(|j| self.features.column(j)[r].to_string())
                .collect();
            record.push(self.score[r].to_string());
            if let Some(label) = &self.label {
                record.push(label[r].to_string());
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn truncated<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("valid normal parameters");
    loop {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
}

/// One plausible patient: vitals rounded to whole units (temperature to 0.1 C).
pub fn sample_vitals<R: Rng + ?Sized>(rng: &mut R) -> Vitals {
    let sbp = truncated(rng, 125.0, 20.0, 60.0, 220.0).round();
    let dbp = loop {
        let d = truncated(rng, 75.0, 12.0, 30.0, 130.0).round();
        if d < sbp {
            break d;
        }
    };
    Vitals {
        sbp,
        dbp,
        heart_rate: truncated(rng, 85.0, 18.0, 30.0, 180.0).round(),
        resp_rate: truncated(rng, 17.0, 4.0, 6.0, 40.0).round(),
        temperature: (truncated(rng, 36.9, 0.6, 33.0, 41.0) * 10.0).round() / 10.0,
        age: rng.random_range(18.0f64..=100.0).round(),
    }
}

/// Draws patients until the positive and negative quotas implied by the
/// prevalence are met (labelled systems) or `rows` patients exist (MAP).
pub fn generate_dataset(spec: &GeneratorSpec) -> Result<ClinicalData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.rows;
    let quota = spec
        .system
        .threshold()
        .map(|_| (spec.prevalence.unwrap_or(0.0) * n as f64).round() as usize);
    let budget = 1000 * n;
    let width = VITAL_COLUMNS.len() + spec.distractors;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); width];
    let mut score = Vec::with_capacity(n);
    let mut label = Vec::with_capacity(n);
    let mut positives = 0;
    let mut draws = 0;
    while score.len() < n {
        draws += 1;
        if draws > budget {
            return Err(Error::PrevalenceUnreachable {
                target: spec.prevalence.unwrap_or(0.0),
            });
        }
        let v = sample_vitals(&mut rng);
        let noise: Vec<f64> = (0..spec.distractors).map(|_| rng.random::<f64>()).collect();
        let s = spec.system.score(&v);
        if let Some(quota) = quota {
            let positive = deterioration_label(s, spec.system)? == 1;
            let negatives = score.len() - positives;
            if (positive && positives >= quota) || (!positive && negatives >= n - quota) {
                continue;
            }
            positives += usize::from(positive);
            label.push(f64::from(u8::from(positive)));
        }
        let row = [v.sbp, v.dbp, v.heart_rate, v.resp_rate, v.temperature, v.age];
        for (col, value) in columns.iter_mut().zip(row.into_iter().chain(noise)) {
            col.push(value);
        }
        score.push(s);
    }
    let mut feature_names: Vec<String> = VITAL_COLUMNS.iter().map(|s| s.to_string()).collect();
    feature_names.extend((1..=spec.distractors).map(|k| format!("noise_{k}")));
    Ok(ClinicalData {
        system: spec.system,
        feature_names,
        features: FeatureMatrix::from_columns(columns)?,
        score,
        label: quota.map(|_| label),
    })
}
