use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::data::{CaseRecord, CaseType, Circuit, Dataset, EntityLabel, JudgeProfile, Outcome};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AssignmentMode {
    #[default]
    Random,
    /// Affected judges receive case types with odds scaled by `exp(strength * pref)`,
    /// `pref ~ N(0, 1)` per judge and type.
    Biased { strength: f64, fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasPlan {
    #[default]
    None,
    /// A random `fraction` of judges gets bias `±magnitude`, signs alternating.
    Planted { fraction: f64, magnitude: f64 },
    /// One log-odds shift per judge.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CourtConfig {
    pub n_judges: usize,
    /// Total cases, split evenly across judges.
    pub n_cases: usize,
    pub start_year: i32,
    pub end_year: i32,
    pub min_career_years: f64,
    pub max_career_years: f64,
    pub case_type_rates: [f64; 6],
    /// Per (circuit, decade) rates are drawn as Dirichlet(concentration * rates); `None` keeps them fixed.
    pub context_concentration: Option<f64>,
    pub entity_rates: [f64; 4],
    pub entity_missing: f64,
    pub assignment_mode: AssignmentMode,
    pub bias: BiasPlan,
    /// Multiplier of a judge's bias for each case type.
    pub bias_direction: [f64; 6],
    pub base_win_rate: f64,
    pub type_effects: [f64; 6],
    pub circuit_effect_sd: f64,
    /// Log-odds change per 50 years, centered on the middle of the period.
    pub drift_per_50_years: f64,
    pub k_true: usize,
    pub pool_size: usize,
    pub zipf_exponent: f64,
    pub citations_per_case: usize,
    pub dirichlet_alpha: f64,
    /// Ideology mass moved to the marker pool of a planted judge.
    pub ideology_bias_strength: f64,
    pub promotion_rate: f64,
    pub seed: u64,
}

impl Default for CourtConfig {
    fn default() -> Self {
        CourtConfig {
            n_judges: 100,
            n_cases: 20_000,
            start_year: 1960,
            end_year: 2010,
            min_career_years: 10.0,
            max_career_years: 30.0,
            case_type_rates: [0.25, 0.2, 0.2, 0.15, 0.1, 0.1],
            context_concentration: Some(200.0),
            entity_rates: [0.2, 0.35, 0.35, 0.1],
            entity_missing: 0.1,
            assignment_mode: AssignmentMode::Random,
            bias: BiasPlan::None,
            bias_direction: [1.0; 6],
            base_win_rate: 0.25,
            type_effects: [0.0; 6],
            circuit_effect_sd: 0.0,
            drift_per_50_years: 0.0,
            k_true: 5,
            pool_size: 200,
            zipf_exponent: 1.1,
            citations_per_case: 8,
            dirichlet_alpha: 0.5,
            ideology_bias_strength: 0.5,
            promotion_rate: 0.1,
            seed: 0,
        }
    }
}

/// Every latent parameter of a simulated court. Pipeline stages never see this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub judge_bias: BTreeMap<String, f64>,
    pub ideology: BTreeMap<String, Vec<f64>>,
    /// Case-type preferences of judges under biased assignment.
    pub type_preference: BTreeMap<String, [f64; 6]>,
    pub circuit_offsets: BTreeMap<String, f64>,
    pub config: CourtConfig,
}

impl GroundTruth {
    pub fn planted(&self) -> Vec<&str> {
        self.judge_bias
            .iter()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j.as_str())
            .collect()
    }

    pub fn is_planted(&self, judge: &str) -> bool {
        self.judge_bias.get(judge).is_some_and(|b| *b != 0.0)
    }

    pub fn assignment_biased(&self, judge: &str) -> bool {
        self.type_preference.contains_key(judge)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<GroundTruth> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_rates(name: &str, rates: &[f64]) -> Result<()> {
    let s: f64 = rates.iter().sum();
    if rates.iter().any(|r| !(*r >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} must be non-negative and sum to 1")));
    }
    Ok(())
}

impl CourtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_win_rate > 0.0 && self.base_win_rate < 1.0) {
            return Err(Error::invalid("base_win_rate must lie in (0, 1)"));
        }
        check_rates("case_type_rates", &self.case_type_rates)?;
        check_rates("entity_rates", &self.entity_rates)?;
        if !(0.0..=1.0).contains(&self.entity_missing) || !(0.0..=1.0).contains(&self.promotion_rate) {
            return Err(Error::invalid("entity_missing and promotion_rate must lie in [0, 1]"));
        }
        if self.n_judges == 0 || self.n_cases < self.n_judges {
            return Err(Error::invalid("need at least one judge and one case per judge"));
        }
        if self.end_year <= self.start_year
            || !(self.min_career_years > 0.0 && self.min_career_years <= self.max_career_years)
            || self.min_career_years > (self.end_year - self.start_year) as f64
        {
            return Err(Error::invalid("inconsistent period or career lengths"));
        }
        if self.k_true < 2 || self.pool_size == 0 || !(self.dirichlet_alpha > 0.0) || !(self.zipf_exponent > 0.0) {
            return Err(Error::invalid("citation pools need k_true >= 2, pool_size >= 1, positive alpha and exponent"));
        }
        if !(0.0..=1.0).contains(&self.ideology_bias_strength) {
            return Err(Error::invalid("ideology_bias_strength must lie in [0, 1]"));
        }
        match self.assignment_mode {
            AssignmentMode::Biased { strength, fraction } if !(strength >= 0.0) || !(0.0..=1.0).contains(&fraction) => {
                return Err(Error::invalid("biased assignment needs strength >= 0 and fraction in [0, 1]"));
            }
            _ => {}
        }
        match &self.bias {
            BiasPlan::Planted { fraction, .. } if !(0.0..=1.0).contains(fraction) => {
                return Err(Error::invalid("planted fraction must lie in [0, 1]"));
            }
            BiasPlan::Explicit { values } if values.len() != self.n_judges => {
                return Err(Error::invalid("explicit bias needs one value per judge"));
            }
            _ => {}
        }
        if let Some(c) = self.context_concentration {
            if !(c > 0.0) {
                return Err(Error::invalid("context_concentration must be positive"));
            }
        }
        Ok(())
    }
}

fn dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|a| if *a > 0.0 { Gamma::new(*a, 1.0).unwrap().sample(rng) } else { 0.0 })
        .collect();
    let s: f64 = draws.iter().sum();
    if s > 0.0 {
        draws.iter().map(|d| d / s).collect()
    } else {
        let n = alpha.len() as f64;
        vec![1.0 / n; alpha.len()]
    }
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

const GLOBAL_STREAM: u64 = u64::MAX;

pub fn simulate_court(config: &CourtConfig) -> Result<Simulation> {
    config.validate()?;
    let mut g = par::stream_rng(config.seed, GLOBAL_STREAM);
    let n = config.n_judges;
    let circuits: Vec<Circuit> = Circuit::ALL.to_vec();

    let circuit_offsets: Vec<f64> = if config.circuit_effect_sd > 0.0 {
        let d = Normal::new(0.0, config.circuit_effect_sd).unwrap();
        circuits.iter().map(|_| d.sample(&mut g)).collect()
    } else {
        vec![0.0; circuits.len()]
    };

    let decades: Vec<i32> = ((config.start_year / 10) * 10..=config.end_year).step_by(10).collect();
    let mut context_rates: BTreeMap<(usize, i32), Vec<f64>> = BTreeMap::new();
    for ci in 0..circuits.len() {
        for &d in &decades {
            let r = match config.context_concentration {
                Some(c) => {
                    let a: Vec<f64> = config.case_type_rates.iter().map(|r| c * r).collect();
                    dirichlet(&mut g, &a)
                }
                None => config.case_type_rates.to_vec(),
            };
            context_rates.insert((ci, d), r);
        }
    }

    let bias: Vec<f64> = match &config.bias {
        BiasPlan::None => vec![0.0; n],
        BiasPlan::Explicit { values } => values.clone(),
        BiasPlan::Planted { fraction, magnitude } => {
            let k = (fraction * n as f64).round() as usize;
            let mut picked = index::sample(&mut g, n, k).into_vec();
            picked.sort_unstable();
            let mut b = vec![0.0; n];
            for (i, j) in picked.into_iter().enumerate() {
                b[j] = if i % 2 == 0 { *magnitude } else { -*magnitude };
            }
            b
        }
    };
    let assignment_biased: Vec<bool> = match config.assignment_mode {
        AssignmentMode::Random => vec![false; n],
        AssignmentMode::Biased { fraction, .. } => {
            let k = (fraction * n as f64).round() as usize;
            let mut v = vec![false; n];
            for j in index::sample(&mut g, n, k) {
                v[j] = true;
            }
            v
        }
    };
    let strength = match config.assignment_mode {
        AssignmentMode::Biased { strength, .. } => strength,
        AssignmentMode::Random => 0.0,
    };

    let base = logit(config.base_win_rate);
    let mid_year = (config.start_year + config.end_year) as f64 / 2.0;
    let zipf = Zipf::new(config.pool_size as f64, config.zipf_exponent)
        .map_err(|e| Error::invalid(format!("zipf: {e}")))?;
    let per_judge = config.n_cases / n;
    let extra = config.n_cases % n;
    let period_end = NaiveDate::from_ymd_opt(config.end_year, 12, 31).unwrap();

    struct JudgeOut {
        profile: JudgeProfile,
        cases: Vec<CaseRecord>,
        ideology: Vec<f64>,
        preference: Option<[f64; 6]>,
    }

    let judges: Vec<JudgeOut> = par::map_range(n, |j| {
        let mut rng = par::stream_rng(config.seed, j as u64);
        let judge_id = format!("j{j:04}");
        let ci = j % circuits.len();
        let circuit = circuits[ci];

        let span = config.end_year as f64 - config.start_year as f64 - config.min_career_years;
        let start = config.start_year as f64 + rng.random::<f64>() * span.max(0.0);
        let length = config.min_career_years
            + rng.random::<f64>() * (config.max_career_years - config.min_career_years);
        let appointment = NaiveDate::from_ymd_opt(config.start_year, 1, 1).unwrap()
            + Duration::days(((start - config.start_year as f64) * 365.25) as i64);
        let career_end = (appointment + Duration::days((length * 365.25) as i64)).min(period_end);
        let career_days = (career_end - appointment).num_days().max(2);
        let promotion_date = (rng.random::<f64>() < config.promotion_rate)
            .then(|| appointment + Duration::days(rng.random_range(1..career_days)));
        let profile = JudgeProfile {
            judge_id: judge_id.clone(),
            gender_male: rng.random::<f64>() < 0.7,
            party_republican: rng.random::<f64>() < 0.5,
            appointment_date: appointment,
            promotion_date,
        };

        let mut ideology = dirichlet(&mut rng, &vec![config.dirichlet_alpha; config.k_true]);
        if bias[j] != 0.0 {
            let marker = if bias[j] > 0.0 { 0 } else { 1 };
            let rho = config.ideology_bias_strength;
            for (p, v) in ideology.iter_mut().enumerate() {
                *v = (1.0 - rho) * *v + if p == marker { rho } else { 0.0 };
            }
        }
        let preference = assignment_biased[j].then(|| {
            let mut p = [0.0; 6];
            let d = Normal::new(0.0, 1.0).unwrap();
            for v in &mut p {
                *v = d.sample(&mut rng);
            }
            p
        });

        let count = per_judge + usize::from(j < extra);
        let mut cases = Vec::with_capacity(count);
        for i in 0..count {
            let date = appointment + Duration::days(rng.random_range(1..=career_days));
            let decade = (chrono::Datelike::year(&date) / 10) * 10;
            let mut weights = context_rates[&(ci, decade)].clone();
            if let Some(p) = &preference {
                for (w, pref) in weights.iter_mut().zip(p) {
                    *w *= (strength * pref).exp();
                }
            }
            let t = categorical(&mut rng, &weights);
            let year = chrono::Datelike::year(&date) as f64;
            let eta = base
                + config.type_effects[t]
                + circuit_offsets[ci]
                + config.drift_per_50_years * (year - mid_year) / 50.0
                + bias[j] * config.bias_direction[t];
            let p = 1.0 / (1.0 + (-eta).exp());
            let won = rng.random::<f64>() < p;
            let entity_label = if rng.random::<f64>() < config.entity_missing {
                None
            } else {
                Some(EntityLabel::ALL[categorical(&mut rng, &config.entity_rates)])
            };
            let citations = (0..config.citations_per_case)
                .map(|_| {
                    let pool = categorical(&mut rng, &ideology);
                    let idx = zipf.sample(&mut rng) as usize;
                    format!("P{pool}-{idx:04}")
                })
                .collect();
            cases.push(CaseRecord {
                case_id: format!("c{j:04}-{i:05}"),
                judge_id: judge_id.clone(),
                decision_date: date,
                circuit,
                case_type: CaseType::ALL[t],
                outcome: if won { Outcome::WON } else { Outcome::LOST },
                entity_label,
                citations,
            });
        }
        JudgeOut {
            profile,
            cases,
            ideology,
            preference,
        }
    });

    let mut truth = GroundTruth {
        judge_bias: BTreeMap::new(),
        ideology: BTreeMap::new(),
        type_preference: BTreeMap::new(),
        circuit_offsets: circuits
            .iter()
            .zip(&circuit_offsets)
            .map(|(c, o)| (c.as_str().to_string(), *o))
            .collect(),
        config: config.clone(),
    };
    let mut all_cases = Vec::with_capacity(config.n_cases);
    let mut profiles = Vec::with_capacity(n);
    for (j, out) in judges.into_iter().enumerate() {
        let id = out.profile.judge_id.clone();
        truth.judge_bias.insert(id.clone(), bias[j]);
        truth.ideology.insert(id.clone(), out.ideology);
        if let Some(p) = out.preference {
            truth.type_preference.insert(id, p);
        }
        profiles.push(out.profile);
        all_cases.extend(out.cases);
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("source".to_string(), "simulated".to_string());
    provenance.insert("seed".to_string(), config.seed.to_string());
    let dataset = Dataset::new(all_cases, profiles, provenance)?;
    Ok(Simulation { dataset, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CourtConfig {
        CourtConfig {
            n_judges: 20,
            n_cases: 4000,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = simulate_court(&small()).unwrap();
        let b = simulate_court(&small()).unwrap();
        assert_eq!(a.dataset.cases(), b.dataset.cases());
        assert_eq!(a.dataset.judges(), b.dataset.judges());
        assert_eq!(a.truth, b.truth);
        let c = simulate_court(&CourtConfig { seed: 12, ..small() }).unwrap();
        assert_ne!(a.dataset.cases(), c.dataset.cases());
    }

    #[test]
    fn null_court_matches_base_rate() {
        let sim = simulate_court(&CourtConfig {
            n_judges: 50,
            n_cases: 40_000,
            ..small()
        })
        .unwrap();
        let wins = sim.dataset.cases().iter().filter(|c| c.won()).count() as f64;
        let n = sim.dataset.len() as f64;
        let se = (0.25 * 0.75 / n).sqrt();
        assert!((wins / n - 0.25).abs() < 3.0 * se, "{}", wins / n);
        assert!(sim.truth.planted().is_empty());
    }

    #[test]
    fn planted_judges_win_more() {
        let sim = simulate_court(&CourtConfig {
            n_judges: 40,
            n_cases: 40_000,
            bias: BiasPlan::Planted { fraction: 0.1, magnitude: 1.5 },
            ..small()
        })
        .unwrap();
        let planted = sim.truth.planted();
        assert_eq!(planted.len(), 4);
        let expected = 1.0 / (1.0 + (-(logit(0.25) + 1.5f64)).exp());
        assert!((expected - 0.60).abs() < 0.01);
        for j in planted {
            let cases: Vec<_> = sim.dataset.cases_of(j).collect();
            let rate = cases.iter().filter(|c| c.won()).count() as f64 / cases.len() as f64;
            if sim.truth.judge_bias[j] > 0.0 {
                assert!(rate > 0.5, "{j}: {rate}");
            } else {
                assert!(rate < 0.2, "{j}: {rate}");
            }
        }
    }

    #[test]
    fn cases_fall_inside_careers() {
        let sim = simulate_court(&small()).unwrap();
        for c in sim.dataset.cases() {
            let j = sim.dataset.judge(&c.judge_id).unwrap();
            assert!(c.decision_date > j.appointment_date);
            assert!(c.decision_date.format("%Y").to_string().parse::<i32>().unwrap() <= 2010);
            assert_eq!(c.citations.len(), 8);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(simulate_court(&CourtConfig { base_win_rate: 1.0, ..small() }).is_err());
        let mut bad = small();
        bad.case_type_rates[0] = 0.9;
        assert!(simulate_court(&bad).is_err());
    }
}
