//! Frozen evaluation scenarios.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::reference::segment_schedule;
use crate::envs::{LoadProcess, LoadProcessConfig};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

pub const TEST_CASE_FORMAT: &str = "secrl-testcase";
pub const TEST_CASE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestCaseKind {
    GridLoadProfile,
    MotorReferenceProfile,
    GridSteadystate,
    MotorSteadystate,
}

impl TestCaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestCaseKind::GridLoadProfile => "grid-load-profile",
            TestCaseKind::MotorReferenceProfile => "motor-reference-profile",
            TestCaseKind::GridSteadystate => "grid-steadystate",
            TestCaseKind::MotorSteadystate => "motor-steadystate",
        }
    }

    pub fn is_grid(self) -> bool {
        matches!(self, TestCaseKind::GridLoadProfile | TestCaseKind::GridSteadystate)
    }

    pub fn is_stepwise(self) -> bool {
        !matches!(self, TestCaseKind::GridLoadProfile)
    }
}

impl std::str::FromStr for TestCaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            TestCaseKind::GridLoadProfile,
            TestCaseKind::MotorReferenceProfile,
            TestCaseKind::GridSteadystate,
            TestCaseKind::MotorSteadystate,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown test case kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Load resistance per step (ohm).
    Load(Vec<f64>),
    /// dq current reference per step (A).
    Reference(Vec<[f64; 2]>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Load(v) => v.len(),
            Payload::Reference(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub kind: TestCaseKind,
    pub seed: u64,
    pub steps: usize,
    /// Segment length of stepwise cases.
    pub segment: Option<usize>,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct TestCaseFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    case: TestCase,
}

impl TestCase {
    pub fn validate(&self) -> Result<()> {
        if self.payload.len() != self.steps {
            return Err(Error::config(format!(
                "test case {} has {} payload entries for {} steps",
                self.id,
                self.payload.len(),
                self.steps
            )));
        }
        match (self.kind.is_grid(), &self.payload) {
            (true, Payload::Load(_)) | (false, Payload::Reference(_)) => {}
            _ => return Err(Error::config(format!("test case {} payload does not match its kind", self.id))),
        }
        if self.kind.is_stepwise() {
            match self.segment {
                Some(s) if s > 0 && self.steps % s == 0 => {}
                _ => {
                    return Err(Error::config(format!(
                        "test case {} needs a segment length dividing its duration",
                        self.id
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.segment.map_or(1, |s| self.steps / s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TestCaseFile {
            format: TEST_CASE_FORMAT.into(),
            version: TEST_CASE_VERSION,
            case: self.clone(),
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: TestCaseFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if file.format != TEST_CASE_FORMAT || file.version != TEST_CASE_VERSION {
            return Err(Error::config(format!(
                "{} is not a version {TEST_CASE_VERSION} test case file",
                path.display()
            )));
        }
        file.case.validate()?;
        Ok(file.case)
    }
}

/// Runs the stochastic load process for `steps` steps.
pub fn gen_grid_testcase(load: &LoadProcessConfig, seed: u64, steps: usize) -> Result<TestCase> {
    if steps == 0 {
        return Err(Error::config("test case needs at least one step"));
    }
    let mut rng = seeds::rng(seed, Stream::TestCase);
    let mut process = LoadProcess::new(load.clone(), &mut rng)?;
    let profile: Vec<f64> = (0..steps).map(|_| process.step(&mut rng)).collect();
    Ok(TestCase {
        id: format!("grid-load-profile-{seed}"),
        kind: TestCaseKind::GridLoadProfile,
        seed,
        steps,
        segment: None,
        payload: Payload::Load(profile),
    })
}

/// One point per stratum `[(i)/n, (i+1)/n)` in random order.
fn stratified(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect();
    v.shuffle(rng);
    v
}

/// Stratified load values in `[r_min, r_max]`, one per segment.
pub fn gen_grid_steadystate(load: &LoadProcessConfig, seed: u64, segments: usize, segment: usize) -> Result<TestCase> {
    if segments == 0 || segment == 0 {
        return Err(Error::config("steady-state case needs segments of positive length"));
    }
    let mut rng = seeds::rng(seed, Stream::TestCase);
    let levels: Vec<f64> = stratified(&mut rng, segments)
        .into_iter()
        .map(|u| load.r_min + (load.r_max - load.r_min) * u)
        .collect();
    let profile: Vec<f64> = levels.iter().flat_map(|&r| std::iter::repeat_n(r, segment)).collect();
    Ok(TestCase {
        id: format!("grid-steadystate-{seed}"),
        kind: TestCaseKind::GridSteadystate,
        seed,
        steps: segments * segment,
        segment: Some(segment),
        payload: Payload::Load(profile),
    })
}

/// Stratified references over the disc of `radius`: the squared radius and
/// the angle are each drawn from their own Latin-hypercube strata.
pub fn gen_motor_steadystate(radius: f64, seed: u64, segments: usize, segment: usize) -> Result<TestCase> {
    if segments == 0 || segment == 0 {
        return Err(Error::config("steady-state case needs segments of positive length"));
    }
    if !(radius > 0.0) {
        return Err(Error::config("reference radius must be > 0"));
    }
    let mut rng = seeds::rng(seed, Stream::TestCase);
    let s = stratified(&mut rng, segments);
    let t = stratified(&mut rng, segments);
    let points: Vec<[f64; 2]> = s
        .iter()
        .zip(&t)
        .map(|(s, t)| {
            let r = radius * s.sqrt();
            let phi = 2.0 * std::f64::consts::PI * t;
            [r * phi.cos(), r * phi.sin()]
        })
        .collect();
    let schedule: Vec<[f64; 2]> = points.iter().flat_map(|&p| std::iter::repeat_n(p, segment)).collect();
    Ok(TestCase {
        id: format!("motor-steadystate-{seed}"),
        kind: TestCaseKind::MotorSteadystate,
        seed,
        steps: segments * segment,
        segment: Some(segment),
        payload: Payload::Reference(schedule),
    })
}

/// Uniform random references held for `segment` steps each.
pub fn gen_motor_reference_profile(radius: f64, seed: u64, steps: usize, segment: usize) -> Result<TestCase> {
    if steps == 0 || segment == 0 || steps % segment != 0 {
        return Err(Error::config("reference profile length must be a positive multiple of the segment"));
    }
    let mut rng = seeds::rng(seed, Stream::TestCase);
    let schedule = segment_schedule(&mut rng, steps, segment, radius)?;
    Ok(TestCase {
        id: format!("motor-reference-profile-{seed}"),
        kind: TestCaseKind::MotorReferenceProfile,
        seed,
        steps,
        segment: Some(segment),
        payload: Payload::Reference(schedule),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_profile_in_bounds_and_reproducible() {
        let cfg = LoadProcessConfig::default();
        let a = gen_grid_testcase(&cfg, 4, 20_000).unwrap();
        let b = gen_grid_testcase(&cfg, 4, 20_000).unwrap();
        assert_eq!(a, b);
        let Payload::Load(v) = &a.payload else { panic!() };
        assert!(v.iter().all(|r| (14.0..=200.0).contains(r)));
        assert!(a.validate().is_ok());
    }

    #[test]
    fn grid_steadystate_has_one_level_per_stratum() {
        let tc = gen_grid_steadystate(&LoadProcessConfig::default(), 1, 20, 500).unwrap();
        assert_eq!(tc.steps, 10_000);
        assert_eq!(tc.segments(), 20);
        let Payload::Load(v) = &tc.payload else { panic!() };
        let mut levels: Vec<f64> = v.chunks(500).map(|c| c[0]).collect();
        assert!(v.chunks(500).all(|c| c.iter().all(|x| *x == c[0])));
        levels.sort_by(f64::total_cmp);
        for (i, r) in levels.iter().enumerate() {
            let lo = 14.0 + 186.0 * i as f64 / 20.0;
            assert!((lo..=lo + 9.3).contains(r), "{r}");
        }
    }

    #[test]
    fn motor_steadystate_inside_disc() {
        let tc = gen_motor_steadystate(18.0, 2, 20, 500).unwrap();
        let Payload::Reference(v) = &tc.payload else { panic!() };
        assert_eq!(v.len(), 10_000);
        assert!(v.iter().all(|p| p[0].hypot(p[1]) <= 18.0));
        assert!(tc.validate().is_ok());
    }

    #[test]
    fn payload_mismatch_rejected() {
        let mut tc = gen_motor_steadystate(18.0, 2, 2, 5).unwrap();
        tc.steps = 11;
        assert!(tc.validate().is_err());
    }
}
