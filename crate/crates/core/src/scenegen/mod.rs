//! Procedural two-view snippet-feature generator.
//!
//! Mirrors a three-step scene pipeline at the feature level: sample a scene
//! configuration (event class, timing, weather, time of day), place it at one
//! of a fixed table of locations, then synthesize the snippet features seen
//! from each of the location's two cameras. Source-domain features pass
//! through a known invertible affine shift, which is what makes the domain
//! gap measurable.

mod generate;
mod shift;

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use generate::{
    generate_dataset, generate_incidents, generate_video, GeneratedDataset, IncidentMeta, SOURCE_DIR,
    SHIFT_FILE, TARGET_DIR,
};
pub use shift::{oracle_align, OracleAligner, ShiftSpec};

use crate::error::{Error, Result};
use crate::rng;
use crate::store::{Domain, EventClass, FrameRange, TimeOfDay, Weather};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCount {
    pub class: EventClass,
    pub train: usize,
    pub test: usize,
}

impl ClassCount {
    pub const fn new(class: EventClass, train: usize, test: usize) -> Self {
        ClassCount { class, train, test }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftParams {
    pub rho: f64,
    pub translation: f64,
    /// Bound on each Givens angle, in radians.
    pub max_angle: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        ShiftParams {
            rho: 1.5,
            translation: 1.0,
            max_angle: std::f64::consts::PI,
        }
    }
}

/// Everything needed to regenerate a dataset bit for bit.
///
/// Video counts are per class and split. Each scene is filmed from two
/// views, so an odd count is rounded up to the next whole scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSpec {
    pub seed: u64,
    pub dim: usize,
    pub frame_count: u32,
    pub fps: u32,
    pub snippet_len: usize,
    pub abnormal_window: FrameRange,
    pub locations: u32,
    pub source: Vec<ClassCount>,
    pub target: Vec<ClassCount>,
    /// Standard deviation of the calm-activity prototype entries.
    pub prototype_scale: f64,
    /// Standard deviation of each event prototype's offset from calm.
    pub event_contrast: f64,
    /// Fraction of the event offset variance shared by both motifs.
    pub event_shared: f64,
    /// Position of the post-event (fleeing) prototype between calm (0) and
    /// the event (1).
    pub aftermath_mix: f64,
    /// Standard deviation of the fleeing offset added after every event.
    pub aftermath_scale: f64,
    pub location_scale: f64,
    pub view_scale: f64,
    /// Weather and time-of-day offsets; `None` means 5% of `prototype_scale`.
    pub condition_scale: Option<f64>,
    pub noise_sigma: f64,
    pub shift: ShiftParams,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        GenerationSpec {
            seed: 0,
            dim: 32,
            frame_count: 384,
            fps: 30,
            snippet_len: 16,
            abnormal_window: FrameRange::new(192, 288),
            locations: crate::store::LOCATION_COUNT,
            source: vec![
                ClassCount::new(EventClass::Normal, 226, 36),
                ClassCount::new(EventClass::Stabbing, 106, 18),
                ClassCount::new(EventClass::Shooting, 128, 18),
            ],
            target: vec![
                ClassCount::new(EventClass::Fighting, 45, 5),
                ClassCount::new(EventClass::Shooting, 27, 23),
                ClassCount::new(EventClass::Normal, 72, 28),
            ],
            prototype_scale: 1.0,
            event_contrast: 1.0,
            event_shared: 0.5,
            aftermath_mix: 0.5,
            aftermath_scale: 0.3,
            location_scale: 0.3,
            view_scale: 0.15,
            condition_scale: None,
            noise_sigma: 2.0,
            shift: ShiftParams::default(),
        }
    }
}

impl GenerationSpec {
    pub fn condition_scale(&self) -> f64 {
        self.condition_scale.unwrap_or(0.05 * self.prototype_scale)
    }

    pub fn counts(&self, domain: Domain) -> &[ClassCount] {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.snippet_len == 0 || self.fps == 0 {
            return Err(Error::validation("dim, snippet_len and fps must be positive"));
        }
        if (self.frame_count as usize) < self.snippet_len {
            return Err(Error::validation("frame_count shorter than one snippet"));
        }
        self.abnormal_window.validate(self.frame_count)?;
        if self.locations == 0 || self.locations > crate::store::LOCATION_COUNT {
            return Err(Error::validation(format!(
                "locations must be in [1, {}]",
                crate::store::LOCATION_COUNT
            )));
        }
        for domain in [Domain::Source, Domain::Target] {
            let mut seen = Vec::new();
            for c in self.counts(domain) {
                if !c.class.allowed_in(domain) {
                    return Err(Error::validation(format!(
                        "class {} cannot be generated for the {domain:?} domain",
                        c.class
                    )));
                }
                if seen.contains(&c.class) {
                    return Err(Error::validation(format!("class {} listed twice", c.class)));
                }
                seen.push(c.class);
            }
        }
        let scales = [
            self.prototype_scale,
            self.event_contrast,
            self.aftermath_scale,
            self.location_scale,
            self.view_scale,
            self.condition_scale(),
            self.noise_sigma,
            self.shift.translation,
            self.shift.max_angle,
        ];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::validation("scales must be finite and non-negative"));
        }
        if !(self.shift.rho.is_finite() && self.shift.rho > 0.0) {
            return Err(Error::validation("shift rho must be positive"));
        }
        if !(0.0..=1.0).contains(&self.aftermath_mix) {
            return Err(Error::validation("aftermath_mix must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.event_shared) {
            return Err(Error::validation("event_shared must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Step 1: the scene configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub class: EventClass,
    pub abnormal_window: FrameRange,
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
    pub frame_count: u32,
    pub fps: u32,
}

impl SceneConfig {
    /// The anomaly window, or `None` for normal scenes.
    pub fn effective_window(&self) -> Option<FrameRange> {
        self.class.is_abnormal().then_some(self.abnormal_window)
    }
}

pub fn sample_config<R: Rng>(
    spec: &GenerationSpec,
    domain: Domain,
    class: EventClass,
    rng: &mut R,
) -> Result<SceneConfig> {
    if !class.allowed_in(domain) {
        return Err(Error::validation(format!(
            "class {class} is not part of the {domain:?} vocabulary"
        )));
    }
    let weather = Weather::ALL[rng.random_range(0..Weather::ALL.len())];
    let time_of_day = TimeOfDay::ALL[rng.random_range(0..TimeOfDay::ALL.len())];
    Ok(SceneConfig {
        class,
        abnormal_window: spec.abnormal_window,
        weather,
        time_of_day,
        frame_count: spec.frame_count,
        fps: spec.fps,
    })
}

/// Step 2: a location and its fixed feature signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationAssignment {
    pub location_id: u32,
    pub roi_offset: Array1<f64>,
    pub view_offsets: [Array1<f64>; 2],
}

/// Which event a snippet depicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Motif {
    Shooting,
    /// Stabbing (source) and fighting (target) share one motif.
    CloseCombat,
}

impl Motif {
    pub fn of(class: EventClass) -> Option<Motif> {
        match class {
            EventClass::Normal => None,
            EventClass::Shooting => Some(Motif::Shooting),
            EventClass::Stabbing | EventClass::Fighting => Some(Motif::CloseCombat),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnippetState {
    Calm,
    Event,
    /// After the event window (fleeing); labelled normal.
    Aftermath,
}

/// Per-dataset random draws shared by every video: prototypes, condition
/// offsets, the location table and the domain shift.
#[derive(Debug, Clone)]
pub struct SceneWorld {
    pub dim: usize,
    pub calm: Array1<f64>,
    pub events: BTreeMap<Motif, Array1<f64>>,
    pub aftermath_mix: f64,
    pub fleeing: Array1<f64>,
    pub weather_offsets: BTreeMap<Weather, Array1<f64>>,
    pub time_offsets: BTreeMap<TimeOfDay, Array1<f64>>,
    pub locations: Vec<LocationAssignment>,
    pub shift: ShiftSpec,
}

fn normal_vec<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

impl SceneWorld {
    pub fn new(spec: &GenerationSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let mut r = rng::stream(spec.seed, &["world", "prototypes"]);
        let calm = normal_vec(d, spec.prototype_scale, &mut r);
        let shared = normal_vec(d, spec.event_contrast * spec.event_shared.sqrt(), &mut r);
        let own = spec.event_contrast * (1.0 - spec.event_shared).sqrt();
        let events = [Motif::Shooting, Motif::CloseCombat]
            .into_iter()
            .map(|m| (m, &calm + &shared + &normal_vec(d, own, &mut r)))
            .collect();
        let fleeing = normal_vec(d, spec.aftermath_scale, &mut r);

        let mut r = rng::stream(spec.seed, &["world", "conditions"]);
        let cs = spec.condition_scale();
        let weather_offsets = Weather::ALL.into_iter().map(|w| (w, normal_vec(d, cs, &mut r))).collect();
        let time_offsets = TimeOfDay::ALL.into_iter().map(|t| (t, normal_vec(d, cs, &mut r))).collect();

        let mut r = rng::stream(spec.seed, &["world", "locations"]);
        let locations: Vec<LocationAssignment> = (0..spec.locations)
            .map(|id| LocationAssignment {
                location_id: id,
                roi_offset: normal_vec(d, spec.location_scale, &mut r),
                view_offsets: [
                    normal_vec(d, spec.view_scale, &mut r),
                    normal_vec(d, spec.view_scale, &mut r),
                ],
            })
            .collect();
        if spec.location_scale > 0.0 {
            for (i, a) in locations.iter().enumerate() {
                if locations[..i].iter().any(|b| b.roi_offset == a.roi_offset) {
                    return Err(Error::Internal(format!("location {i} duplicates an earlier signature")));
                }
            }
        }

        let mut r = rng::stream(spec.seed, &["world", "shift"]);
        let shift = ShiftSpec::random(d, &spec.shift, spec.noise_sigma, &mut r);

        Ok(SceneWorld {
            dim: d,
            calm,
            events,
            aftermath_mix: spec.aftermath_mix,
            fleeing,
            weather_offsets,
            time_offsets,
            locations,
            shift,
        })
    }

    /// Noiseless, unshifted prototype for a class in a given state.
    pub fn prototype(&self, class: EventClass, state: SnippetState) -> Array1<f64> {
        match (Motif::of(class), state) {
            (None, _) | (_, SnippetState::Calm) => self.calm.clone(),
            (Some(m), SnippetState::Event) => self.events[&m].clone(),
            (Some(m), SnippetState::Aftermath) => {
                &self.calm * (1.0 - self.aftermath_mix) + &self.events[&m] * self.aftermath_mix + &self.fleeing
            }
        }
    }

    pub fn condition_offset(&self, weather: Weather, time: TimeOfDay) -> Array1<f64> {
        &self.weather_offsets[&weather] + &self.time_offsets[&time]
    }
}

pub fn assign_location<R: Rng>(world: &SceneWorld, rng: &mut R) -> LocationAssignment {
    let idx = rng.random_range(0..world.locations.len());
    world.locations[idx].clone()
}
