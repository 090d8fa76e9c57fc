//! Synthetic ICU cohorts with a known risk process and configurable drift.
//!
//! Each stay carries a latent severity drawn from a standard normal. Every latent
//! measurement group follows `baseline + scale * (loading * severity + ar1)` in
//! canonical units, and is observed through record-system items that report it in
//! their own unit. At `switch_year` the whole item vocabulary is replaced (when
//! `full_switch` is set), which is the abrupt shift the evaluation is built around.

mod emit;
mod vocab;

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::represent::{AggregationGroup, AggregationMap, Concept, MiniOntology};
use crate::rng::substream;
use crate::{Error, Result};

pub use emit::{emit_dataset, AGG_MAP_FILE, EVENTS_FILE, ITEMS_FILE, ONTOLOGY_FILE, STAYS_FILE};

pub const GENDERS: &[&str] = &["F", "M"];
pub const ETHNICITIES: &[&str] = &["WHITE", "BLACK", "HISPANIC", "ASIAN", "OTHER"];
pub const INSURANCES: &[&str] = &["Medicare", "Private", "Medicaid", "Government", "Self Pay"];

const STREAM_GROUPS: u64 = 1;
const STREAM_ITEMS: u64 = 2;
const STREAM_META: u64 = 3;
const STREAM_STAY: u64 = 4;

/// Change of a group's per-hour observation probability from `year` onward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyShift {
    pub group: usize,
    pub year: i32,
    pub probability: f64,
}

/// Additive offset (canonical units) applied to a group from `year` onward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueShift {
    pub group: usize,
    pub year: i32,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftScenario {
    pub n_stays_per_year: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub switch_year: i32,
    /// Replace the whole vocabulary at `switch_year`. When false every item is
    /// valid in both eras.
    pub full_switch: bool,
    pub n_groups: usize,
    pub items_per_group_pre: usize,
    pub items_per_group_post: usize,
    /// Additional post-switch items, assigned round-robin over groups.
    pub extra_items_post: usize,
    pub frequency_shift: Vec<FrequencyShift>,
    pub value_shift: Vec<ValueShift>,
    /// Mean per-(group, hour) non-observation probability.
    pub missing_rate: f64,
    pub mortality_rate: f64,
    pub long_los_rate: f64,
    /// Logistic slope of mortality in severity.
    pub mortality_slope: f64,
    /// Logistic slope of long length-of-stay in severity.
    pub los_slope: f64,
    /// Upper end of the per-group severity loading magnitude, in units of the
    /// group's AR(1) noise scale. Magnitudes are uniform on `[0.2, 1] * max_loading`.
    pub max_loading: f64,
    /// Hours of events recorded per stay (capped by the stay length).
    pub record_hours: f64,
    pub readmission_rate: f64,
    /// Ethnicity mixture weights in `ETHNICITIES` order for the first year.
    pub ethnicity_mix: Vec<f64>,
    /// Probability mass moved per year from the first ethnicity to the others.
    pub ethnicity_drift: f64,
    pub seed: u64,
}

impl Default for DriftScenario {
    fn default() -> Self {
        Self {
            n_stays_per_year: 333,
            first_year: 2001,
            last_year: 2012,
            switch_year: 2008,
            full_switch: true,
            n_groups: 68,
            items_per_group_pre: 1,
            items_per_group_post: 1,
            extra_items_post: 45,
            frequency_shift: vec![FrequencyShift {
                group: 4,
                year: 2004,
                probability: 0.6,
            }],
            value_shift: vec![ValueShift {
                group: 15,
                year: 2010,
                offset: 5.0,
            }],
            missing_rate: 0.78,
            mortality_rate: 0.074,
            long_los_rate: 0.471,
            mortality_slope: 3.0,
            los_slope: 1.2,
            max_loading: 1.0,
            record_hours: 48.0,
            readmission_rate: 0.03,
            ethnicity_mix: vec![0.70, 0.10, 0.05, 0.05, 0.10],
            ethnicity_drift: 0.005,
            seed: 20_200_402,
        }
    }
}

impl DriftScenario {
    pub fn years(&self) -> impl Iterator<Item = i32> + Clone {
        self.first_year..=self.last_year
    }

    pub fn n_years(&self) -> usize {
        (self.last_year - self.first_year + 1).max(0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.first_year > self.last_year {
            return bad(format!(
                "year range {}..={} is empty",
                self.first_year, self.last_year
            ));
        }
        if !(self.switch_year > self.first_year && self.switch_year <= self.last_year) {
            return bad(format!(
                "switch_year {} must lie strictly inside the year range {}..={}",
                self.switch_year, self.first_year, self.last_year
            ));
        }
        if self.n_groups == 0 {
            return bad("n_groups must be positive".into());
        }
        if self.items_per_group_pre == 0 || self.items_per_group_post == 0 {
            return bad("every group needs at least one item per era".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} outside [0, 1)", self.missing_rate));
        }
        for (name, rate) in [
            ("mortality_rate", self.mortality_rate),
            ("long_los_rate", self.long_los_rate),
        ] {
            if !(rate > 0.0 && rate < 1.0) {
                return bad(format!("{name} {rate} outside (0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.readmission_rate) {
            return bad(format!("readmission_rate {} outside [0, 1]", self.readmission_rate));
        }
        if !(self.max_loading >= 0.0 && self.max_loading.is_finite()) {
            return bad(format!("max_loading {} must be finite and non-negative", self.max_loading));
        }
        if self.record_hours <= 0.0 {
            return bad("record_hours must be positive".into());
        }
        if self.ethnicity_mix.len() != ETHNICITIES.len()
            || self.ethnicity_mix.iter().any(|w| *w < 0.0 || !w.is_finite())
            || self.ethnicity_mix.iter().sum::<f64>() <= 0.0
        {
            return bad(format!(
                "ethnicity_mix needs {} non-negative weights with positive sum",
                ETHNICITIES.len()
            ));
        }
        for s in &self.frequency_shift {
            if s.group >= self.n_groups || !(0.0..=1.0).contains(&s.probability) {
                return bad(format!("frequency_shift entry {s:?} out of range"));
            }
        }
        for s in &self.value_shift {
            if s.group >= self.n_groups || !s.offset.is_finite() {
                return bad(format!("value_shift entry {s:?} out of range"));
            }
        }
        Ok(())
    }
}

/// Whether an item is recorded before the switch, after it, or in both eras.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Era {
    Pre,
    Post,
    Both,
}

impl Era {
    pub fn valid_in(self, year: i32, switch_year: i32) -> bool {
        match self {
            Era::Both => true,
            Era::Pre => year < switch_year,
            Era::Post => year >= switch_year,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub item_id: u32,
    pub description: String,
    pub recorded_unit: String,
    pub to_canonical_factor: f64,
    pub era: Era,
    /// Latent group; ground truth only, never read by the representations.
    #[serde(skip)]
    pub group_id: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartEvent {
    pub stay_id: u32,
    pub item_id: u32,
    pub hour_offset: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StayMeta {
    pub stay_id: u32,
    pub patient_id: u32,
    pub admit_year: i32,
    pub age: f64,
    pub gender: String,
    pub ethnicity: String,
    pub insurance: String,
    pub icu_mortality: bool,
    pub los_days: f64,
}

impl StayMeta {
    pub fn long_los(&self) -> bool {
        self.los_days > 3.0
    }
}

/// Ground-truth latent state of one stay.
#[derive(Clone, Debug)]
pub struct LatentPatient {
    pub severity: f64,
    /// `[group][hour]` latent value in canonical units.
    pub group_trajectories: Vec<Vec<f64>>,
    pub gender: String,
    pub ethnicity: String,
    pub insurance: String,
    pub age: f64,
}

/// Everything `generate` produces.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub events: Vec<ChartEvent>,
    pub stays: Vec<StayMeta>,
    pub items: Vec<ItemSpec>,
    pub agg_map: AggregationMap,
    pub ontology: MiniOntology,
}

#[derive(Clone, Debug)]
struct GroupParams {
    name: String,
    unit: String,
    baseline: f64,
    scale: f64,
    loading: f64,
    obs_prob: f64,
}

const AR_PHI: f64 = 0.7;
const MEASUREMENT_NOISE: f64 = 0.2;
const REPEAT_PROB: f64 = 0.15;
const UNIT_FACTORS: &[f64] = &[1.0, 1.0, 1.0, 0.1, 10.0, 0.001, 2.0];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Expected prevalence of `sigmoid(intercept + slope * s)` for `s ~ N(0, 1)`.
fn expected_prevalence(intercept: f64, slope: f64) -> f64 {
    const N: usize = 4000;
    const LIM: f64 = 9.0;
    let h = 2.0 * LIM / N as f64;
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    (0..=N)
        .map(|i| {
            let s = -LIM + i as f64 * h;
            let w = if i == 0 || i == N { 0.5 } else { 1.0 };
            w * sigmoid(intercept + slope * s) * (-0.5 * s * s).exp() / norm
        })
        .sum::<f64>()
        * h
}

/// Intercept hitting `target` prevalence, found by bisection.
pub fn calibrate_intercept(target: f64, slope: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_prevalence(mid, slope) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn group_params(scenario: &DriftScenario) -> Vec<GroupParams> {
    let mut rng = substream(scenario.seed, &[STREAM_GROUPS]);
    let observed = 1.0 - scenario.missing_rate;
    (0..scenario.n_groups)
        .map(|g| {
            let (name, unit) = match vocab::ANALYTES.get(g) {
                Some(a) => (a.name.to_string(), a.unit.to_string()),
                None => (format!("analyte {g}"), "units".to_string()),
            };
            let baseline = rng.random_range(10.0..200.0);
            let scale = baseline * rng.random_range(0.05..0.25);
            let magnitude = scenario.max_loading * rng.random_range(0.2..1.0);
            let loading = if rng.random_bool(0.5) { magnitude } else { -magnitude };
            let obs_prob = (observed * rng.random_range(0.25..1.75)).clamp(0.01, 0.95);
            GroupParams {
                name,
                unit,
                baseline,
                scale,
                loading,
                obs_prob,
            }
        })
        .collect()
}

fn build_items(scenario: &DriftScenario, groups: &[GroupParams]) -> Vec<ItemSpec> {
    let mut rng = substream(scenario.seed, &[STREAM_ITEMS]);
    let n = scenario.n_groups;
    let mut items = Vec::new();
    let (pre_era, post_era) = if scenario.full_switch {
        (Era::Pre, Era::Post)
    } else {
        (Era::Both, Era::Both)
    };
    let mut next_pre = 1u32;
    for (g, params) in groups.iter().enumerate() {
        for k in 0..scenario.items_per_group_pre {
            let factor = UNIT_FACTORS[rng.random_range(0..UNIT_FACTORS.len())];
            let description = if k == 0 {
                title_case(&params.name)
            } else {
                format!("{} {}", title_case(&params.name), k + 1)
            };
            items.push(ItemSpec {
                item_id: next_pre,
                description,
                recorded_unit: recorded_unit(&params.unit, factor),
                to_canonical_factor: factor,
                era: pre_era,
                group_id: Some(g),
            });
            next_pre += 1;
        }
    }
    let mut post_counts = vec![scenario.items_per_group_post; n];
    for k in 0..scenario.extra_items_post {
        post_counts[k % n] += 1;
    }
    let mut next_post = 220_001u32.max(next_pre + 1);
    for (g, params) in groups.iter().enumerate() {
        let abbrev = vocab::ANALYTES.get(g).and_then(|a| a.abbrev);
        for k in 0..post_counts[g] {
            let factor = UNIT_FACTORS[rng.random_range(0..UNIT_FACTORS.len())];
            let base = match abbrev {
                Some(ab) if k == 0 && rng.random_bool(0.5) => ab.to_uppercase(),
                _ => title_case(&params.name),
            };
            let description = match k {
                0 => format!("{base} ({})", params.unit),
                1 => format!("{base} (Serum)"),
                _ => format!("{base} Alternate {k}"),
            };
            items.push(ItemSpec {
                item_id: next_post,
                description,
                recorded_unit: recorded_unit(&params.unit, factor),
                to_canonical_factor: factor,
                era: post_era,
                group_id: Some(g),
            });
            next_post += 1;
        }
    }
    items
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn recorded_unit(canonical: &str, factor: f64) -> String {
    if factor == 1.0 {
        canonical.to_string()
    } else {
        format!("{canonical} x{factor}")
    }
}

fn build_agg_map(groups: &[GroupParams], items: &[ItemSpec]) -> AggregationMap {
    let mut out: Vec<AggregationGroup> = groups
        .iter()
        .enumerate()
        .map(|(g, p)| AggregationGroup {
            group_id: g as u32,
            group_name: p.name.clone(),
            members: Vec::new(),
        })
        .collect();
    for item in items {
        if let Some(g) = item.group_id {
            out[g].members.push((item.item_id, item.to_canonical_factor));
        }
    }
    AggregationMap { groups: out }
}

fn build_ontology(groups: &[GroupParams]) -> MiniOntology {
    let mut concepts = Vec::new();
    let mut seen = BTreeSet::new();
    for (g, p) in groups.iter().enumerate() {
        let mut synonyms = Vec::new();
        if seen.insert(p.name.clone()) {
            synonyms.push(p.name.clone());
        }
        if let Some(a) = vocab::ANALYTES.get(g) {
            if let (Some(ab), true) = (a.abbrev, a.abbrev_in_ontology) {
                if seen.insert(ab.to_string()) {
                    synonyms.push(ab.to_string());
                }
            }
        }
        if !synonyms.is_empty() {
            concepts.push(Concept {
                concept_id: format!("C{:05}", g + 1),
                synonyms: synonyms
                    .into_iter()
                    .map(|s| s.split(' ').map(str::to_string).collect())
                    .collect(),
            });
        }
    }
    for (k, generic) in vocab::GENERIC_CONCEPTS.iter().enumerate() {
        if seen.insert(generic.to_string()) {
            concepts.push(Concept {
                concept_id: format!("C9{:04}", k + 1),
                synonyms: vec![generic.split(' ').map(str::to_string).collect()],
            });
        }
    }
    MiniOntology { concepts }
}

/// Per-stay metadata fixed before event generation: year, patient identity and
/// the demographics that readmissions inherit.
#[derive(Clone, Debug)]
struct StaySkeleton {
    stay_id: u32,
    patient_id: u32,
    year: i32,
    age: f64,
    gender: usize,
    ethnicity: usize,
    insurance: usize,
}

fn ethnicity_weights(scenario: &DriftScenario, year: i32) -> Vec<f64> {
    let mut w = scenario.ethnicity_mix.clone();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let moved = (scenario.ethnicity_drift * (year - scenario.first_year) as f64).min(w[0]);
    let others: f64 = w[1..].iter().sum();
    if moved > 0.0 && others > 0.0 {
        w[0] -= moved;
        for x in &mut w[1..] {
            *x += moved * *x / others;
        }
    }
    w
}

fn pick(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn skeletons(scenario: &DriftScenario) -> Vec<StaySkeleton> {
    let mut rng = substream(scenario.seed, &[STREAM_META]);
    let age_dist = Normal::new(62.0, 17.0).expect("valid normal");
    let mut out: Vec<StaySkeleton> = Vec::with_capacity(scenario.n_years() * scenario.n_stays_per_year);
    let mut next_patient = 1u32;
    for year in scenario.years() {
        let eth_w = ethnicity_weights(scenario, year);
        let prior = out.len();
        for _ in 0..scenario.n_stays_per_year {
            let stay_id = 200_001 + out.len() as u32;
            if prior > 0 && rng.random_bool(scenario.readmission_rate) {
                let src = out[rng.random_range(0..prior)].clone();
                out.push(StaySkeleton {
                    stay_id,
                    year,
                    age: src.age + (year - src.year) as f64,
                    ..src
                });
                continue;
            }
            let age: f64 = age_dist.sample(&mut rng);
            out.push(StaySkeleton {
                stay_id,
                patient_id: next_patient,
                year,
                age: age.clamp(1.0, 99.0),
                gender: pick(&mut rng, &[0.45, 0.55]),
                ethnicity: pick(&mut rng, &eth_w),
                insurance: pick(&mut rng, &[0.5, 0.3, 0.1, 0.05, 0.05]),
            });
            next_patient += 1;
        }
    }
    out
}

struct Generator<'a> {
    scenario: &'a DriftScenario,
    groups: Vec<GroupParams>,
    /// Item indices per group, split by the era the item is valid in.
    items: Vec<ItemSpec>,
    group_items: Vec<Vec<usize>>,
    mortality_intercept: f64,
    los_intercept: f64,
}

impl<'a> Generator<'a> {
    fn new(scenario: &'a DriftScenario) -> Self {
        let groups = group_params(scenario);
        let items = build_items(scenario, &groups);
        let mut group_items = vec![Vec::new(); scenario.n_groups];
        for (i, item) in items.iter().enumerate() {
            if let Some(g) = item.group_id {
                group_items[g].push(i);
            }
        }
        Self {
            scenario,
            groups,
            items,
            group_items,
            mortality_intercept: calibrate_intercept(
                scenario.mortality_rate,
                scenario.mortality_slope,
            ),
            los_intercept: calibrate_intercept(scenario.long_los_rate, scenario.los_slope),
        }
    }

    fn obs_prob(&self, group: usize, year: i32) -> f64 {
        self.scenario
            .frequency_shift
            .iter()
            .filter(|s| s.group == group && year >= s.year)
            .max_by_key(|s| s.year)
            .map_or(self.groups[group].obs_prob, |s| s.probability)
    }

    fn value_offset(&self, group: usize, year: i32) -> f64 {
        self.scenario
            .value_shift
            .iter()
            .filter(|s| s.group == group && year >= s.year)
            .map(|s| s.offset)
            .sum()
    }

    fn stay(&self, index: usize, sk: &StaySkeleton) -> (LatentPatient, StayMeta, Vec<ChartEvent>) {
        let sc = self.scenario;
        let mut rng = substream(sc.seed, &[STREAM_STAY, index as u64]);
        let severity: f64 = StandardNormal.sample(&mut rng);
        let died = rng.random_bool(sigmoid(self.mortality_intercept + sc.mortality_slope * severity));
        let long = rng.random_bool(sigmoid(self.los_intercept + sc.los_slope * severity));
        let los_days: f64 = if long {
            3.0 + 1e-6 + Exp::new(1.0 / 2.5).expect("valid rate").sample(&mut rng)
        } else {
            rng.random_range(1.5..3.0)
        };
        let los_hours = los_days * 24.0;
        let horizon = los_hours.min(sc.record_hours);
        let n_hours = horizon.ceil() as usize;

        let stationary = (1.0 - AR_PHI * AR_PHI).sqrt();
        let trajectories: Vec<Vec<f64>> = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, p)| {
                let mut ar: f64 = StandardNormal.sample(&mut rng);
                let offset = self.value_offset(g, sk.year);
                (0..n_hours)
                    .map(|h| {
                        if h > 0 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            ar = AR_PHI * ar + stationary * z;
                        }
                        p.baseline + offset + p.scale * (p.loading * severity + ar)
                    })
                    .collect()
            })
            .collect();

        let mut events = Vec::new();
        for (g, traj) in trajectories.iter().enumerate() {
            let valid: Vec<usize> = self.group_items[g]
                .iter()
                .copied()
                .filter(|&i| self.items[i].era.valid_in(sk.year, sc.switch_year))
                .collect();
            let p_obs = self.obs_prob(g, sk.year);
            for (h, latent) in traj.iter().enumerate() {
                if valid.is_empty() || !rng.random_bool(p_obs) {
                    continue;
                }
                let repeats = if rng.random_bool(REPEAT_PROB) { 2 } else { 1 };
                for _ in 0..repeats {
                    let item = &self.items[valid[rng.random_range(0..valid.len())]];
                    let t = h as f64 + rng.random_range(0.0..1.0);
                    if t >= horizon {
                        continue;
                    }
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let canonical = latent + MEASUREMENT_NOISE * self.groups[g].scale * noise;
                    events.push(ChartEvent {
                        stay_id: sk.stay_id,
                        item_id: item.item_id,
                        hour_offset: t,
                        value: canonical / item.to_canonical_factor,
                    });
                }
            }
        }
        events.sort_by(|a, b| {
            a.hour_offset
                .total_cmp(&b.hour_offset)
                .then(a.item_id.cmp(&b.item_id))
        });

        let meta = StayMeta {
            stay_id: sk.stay_id,
            patient_id: sk.patient_id,
            admit_year: sk.year,
            age: sk.age,
            gender: GENDERS[sk.gender].to_string(),
            ethnicity: ETHNICITIES[sk.ethnicity].to_string(),
            insurance: INSURANCES[sk.insurance].to_string(),
            icu_mortality: died,
            los_days,
        };
        let latent = LatentPatient {
            severity,
            group_trajectories: trajectories,
            gender: meta.gender.clone(),
            ethnicity: meta.ethnicity.clone(),
            insurance: meta.insurance.clone(),
            age: sk.age,
        };
        (latent, meta, events)
    }
}

/// Latent state and labels of every stay, without materializing events.
pub fn sample_latents(scenario: &DriftScenario) -> Result<Vec<(LatentPatient, StayMeta)>> {
    scenario.validate()?;
    let gen = Generator::new(scenario);
    Ok(skeletons(scenario)
        .iter()
        .enumerate()
        .map(|(i, sk)| {
            let (latent, meta, _) = gen.stay(i, sk);
            (latent, meta)
        })
        .collect())
}

/// Generates a full synthetic dataset. Output depends only on `scenario`
/// (including its seed).
pub fn generate(scenario: &DriftScenario) -> Result<GeneratedDataset> {
    scenario.validate()?;
    let gen = Generator::new(scenario);
    let sks = skeletons(scenario);

    let per_stay: Vec<(StayMeta, Vec<ChartEvent>)> = {
        let run = |(i, sk): (usize, &StaySkeleton)| {
            let (_, meta, events) = gen.stay(i, sk);
            (meta, events)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            sks.par_iter().enumerate().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            sks.iter().enumerate().map(run).collect()
        }
    };

    let mut stays = Vec::with_capacity(per_stay.len());
    let mut events = Vec::new();
    for (meta, ev) in per_stay {
        stays.push(meta);
        events.extend(ev);
    }
    let agg_map = build_agg_map(&gen.groups, &gen.items);
    let ontology = build_ontology(&gen.groups);
    Ok(GeneratedDataset {
        events,
        stays,
        items: gen.items,
        agg_map,
        ontology,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    fn small() -> DriftScenario {
        DriftScenario {
            n_stays_per_year: 20,
            n_groups: 12,
            extra_items_post: 4,
            value_shift: vec![ValueShift {
                group: 5,
                year: 2010,
                offset: 5.0,
            }],
            ..DriftScenario::default()
        }
    }

    #[test]
    fn rejects_switch_outside_range() {
        let sc = DriftScenario {
            switch_year: 2001,
            ..small()
        };
        let err = generate(&sc).unwrap_err().to_string();
        assert!(err.contains("switch_year"), "{err}");
        let sc = DriftScenario {
            switch_year: 2013,
            ..small()
        };
        assert!(generate(&sc).is_err());
    }

    #[test]
    fn vocabularies_are_disjoint_and_grouped() {
        let ds = generate(&small()).unwrap();
        let pre: HashSet<u32> = ds.items.iter().filter(|i| i.era == Era::Pre).map(|i| i.item_id).collect();
        let post: HashSet<u32> = ds.items.iter().filter(|i| i.era == Era::Post).map(|i| i.item_id).collect();
        assert!(pre.is_disjoint(&post));
        assert_eq!(pre.len(), 12);
        assert_eq!(post.len(), 16);
        let mut membership: HashMap<u32, usize> = HashMap::new();
        for g in &ds.agg_map.groups {
            for (id, _) in &g.members {
                *membership.entry(*id).or_default() += 1;
            }
        }
        assert_eq!(membership.len(), ds.items.len());
        assert!(membership.values().all(|&c| c == 1));
    }

    #[test]
    fn default_vocabulary_has_181_items_in_68_groups() {
        let sc = DriftScenario::default();
        let groups = group_params(&sc);
        let items = build_items(&sc, &groups);
        assert_eq!(groups.len(), 68);
        assert_eq!(items.len(), 181);
    }

    #[test]
    fn era_consistency_holds_for_every_event() {
        let ds = generate(&small()).unwrap();
        let era: HashMap<u32, Era> = ds.items.iter().map(|i| (i.item_id, i.era)).collect();
        let year: HashMap<u32, i32> = ds.stays.iter().map(|s| (s.stay_id, s.admit_year)).collect();
        for e in &ds.events {
            assert!(era[&e.item_id].valid_in(year[&e.stay_id], 2008));
            assert!(e.hour_offset.is_finite() && e.hour_offset >= 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&DriftScenario { seed: 1, ..small() }).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn stays_are_long_enough_for_the_label_gap() {
        let ds = generate(&small()).unwrap();
        assert!(ds.stays.iter().all(|s| s.los_days >= 1.5 && s.age > 0.0));
        assert_eq!(ds.stays.len(), 12 * 20);
    }

    #[test]
    fn calibration_hits_target_prevalence() {
        for (target, slope) in [(0.074, 3.0), (0.471, 1.2), (0.3, 0.0)] {
            let a = calibrate_intercept(target, slope);
            assert!((expected_prevalence(a, slope) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn ethnicity_drift_moves_mass_gradually() {
        let sc = DriftScenario::default();
        let w0 = ethnicity_weights(&sc, 2001);
        let w1 = ethnicity_weights(&sc, 2012);
        assert!((w0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w1[0] < w0[0]);
    }
}
