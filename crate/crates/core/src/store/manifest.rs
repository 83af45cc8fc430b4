use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const LOCATION_COUNT: u32 = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventClass {
    Normal,
    Shooting,
    Stabbing,
    Fighting,
}

impl EventClass {
    pub const ALL: [EventClass; 4] = [
        EventClass::Normal,
        EventClass::Shooting,
        EventClass::Stabbing,
        EventClass::Fighting,
    ];

    pub fn is_abnormal(self) -> bool {
        self != EventClass::Normal
    }

    /// Whether the class belongs to the vocabulary of `domain`.
    pub fn allowed_in(self, domain: Domain) -> bool {
        match self {
            EventClass::Stabbing => domain == Domain::Source,
            EventClass::Fighting => domain == Domain::Target,
            EventClass::Normal | EventClass::Shooting => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventClass::Normal => "normal",
            EventClass::Shooting => "shooting",
            EventClass::Stabbing => "stabbing",
            EventClass::Fighting => "fighting",
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EventClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown event class '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Weather {
    Clear,
    Cloudy,
    Rain,
    Fog,
    Snow,
}

impl Weather {
    pub const ALL: [Weather; 5] = [
        Weather::Clear,
        Weather::Cloudy,
        Weather::Rain,
        Weather::Fog,
        Weather::Snow,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TimeOfDay {
    Dawn,
    Day,
    Dusk,
    Night,
}

impl TimeOfDay {
    pub const ALL: [TimeOfDay; 4] = [
        TimeOfDay::Dawn,
        TimeOfDay::Day,
        TimeOfDay::Dusk,
        TimeOfDay::Night,
    ];
}

/// Inclusive frame interval `[start, end]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct FrameRange {
    pub start: u32,
    pub end: u32,
}

impl FrameRange {
    pub fn new(start: u32, end: u32) -> Self {
        FrameRange { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn validate(&self, frame_count: u32) -> Result<()> {
        if self.start > self.end || self.end >= frame_count {
            return Err(Error::validation(format!(
                "frame range [{}, {}] outside [0, {frame_count})",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

impl From<[u32; 2]> for FrameRange {
    fn from(v: [u32; 2]) -> Self {
        FrameRange::new(v[0], v[1])
    }
}

impl From<FrameRange> for [u32; 2] {
    fn from(r: FrameRange) -> Self {
        [r.start, r.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub id: String,
    pub domain: Domain,
    pub class: EventClass,
    pub view: u8,
    pub incident_id: String,
    pub location_id: u32,
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
    pub frame_count: u32,
    pub fps: u32,
    pub abnormal_ranges: Vec<FrameRange>,
    pub split: Split,
    pub feature_path: PathBuf,
}

impl VideoRecord {
    pub fn is_abnormal(&self) -> bool {
        self.class.is_abnormal()
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::validation(format!("record {}: {msg}", self.id));
        if self.view > 1 {
            return Err(ctx(format!("view must be 0 or 1, got {}", self.view)));
        }
        if self.location_id >= LOCATION_COUNT {
            return Err(ctx(format!(
                "location_id {} outside [0, {LOCATION_COUNT})",
                self.location_id
            )));
        }
        if self.frame_count == 0 || self.fps == 0 {
            return Err(ctx("frame_count and fps must be positive".into()));
        }
        if self.class.is_abnormal() == self.abnormal_ranges.is_empty() {
            return Err(ctx(format!(
                "class {} inconsistent with {} abnormal ranges",
                self.class,
                self.abnormal_ranges.len()
            )));
        }
        if !self.class.allowed_in(self.domain) {
            return Err(ctx(format!(
                "class {} is not in the {:?} vocabulary",
                self.class, self.domain
            )));
        }
        for range in &self.abnormal_ranges {
            range
                .validate(self.frame_count)
                .map_err(|e| ctx(e.to_string()))?;
        }
        Ok(())
    }
}

/// Dataset index: metadata for every video plus the shared feature geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub dim: usize,
    pub snippet_len: usize,
    pub records: Vec<VideoRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl Manifest {
    pub fn new(dim: usize, snippet_len: usize, records: Vec<VideoRecord>) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            dim,
            snippet_len,
            records,
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::validation(format!(
                "manifest version {} unsupported",
                self.version
            )));
        }
        if self.dim == 0 || self.snippet_len == 0 {
            return Err(Error::validation("manifest dim and snippet_len must be positive"));
        }
        let mut ids = HashSet::new();
        let mut incidents: BTreeMap<&str, Vec<&VideoRecord>> = BTreeMap::new();
        for r in &self.records {
            r.validate()?;
            if (r.frame_count as usize) < self.snippet_len {
                return Err(Error::validation(format!(
                    "record {}: {} frames is shorter than one snippet",
                    r.id, r.frame_count
                )));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::validation(format!("duplicate record id {}", r.id)));
            }
            incidents.entry(&r.incident_id).or_default().push(r);
        }
        for (incident, views) in incidents {
            let [a, b] = views.as_slice() else {
                return Err(Error::validation(format!(
                    "incident {incident} has {} records, expected 2",
                    views.len()
                )));
            };
            let same_scene = a.domain == b.domain
                && a.class == b.class
                && a.location_id == b.location_id
                && a.weather == b.weather
                && a.time_of_day == b.time_of_day
                && a.frame_count == b.frame_count
                && a.fps == b.fps
                && a.abnormal_ranges == b.abnormal_ranges
                && a.split == b.split;
            if !same_scene || a.view == b.view || a.feature_path == b.feature_path {
                return Err(Error::validation(format!(
                    "incident {incident}: views must differ only in view and feature_path"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = &VideoRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn valid_pair_passes() {
        let m = Manifest::new(8, 16, pair("v1", EventClass::Shooting, Split::Train).to_vec());
        m.validate().unwrap();
    }

    #[test]
    fn normal_with_ranges_is_rejected() {
        let mut recs = pair("v1", EventClass::Normal, Split::Train);
        for r in &mut recs {
            r.abnormal_ranges = vec![FrameRange::new(0, 10)];
        }
        assert!(Manifest::new(8, 16, recs.to_vec()).validate().is_err());
    }

    #[test]
    fn out_of_bounds_range_is_rejected() {
        let mut recs = pair("v1", EventClass::Shooting, Split::Train);
        for r in &mut recs {
            r.abnormal_ranges = vec![FrameRange::new(300, 384)];
        }
        assert!(Manifest::new(8, 16, recs.to_vec()).validate().is_err());
    }

    #[test]
    fn class_vocabulary_is_enforced() {
        let mut recs = pair("v1", EventClass::Stabbing, Split::Train);
        for r in &mut recs {
            r.domain = Domain::Target;
        }
        let err = Manifest::new(8, 16, recs.to_vec()).validate().unwrap_err();
        assert!(err.to_string().contains("vocabulary"), "{err}");
    }

    #[test]
    fn incidents_need_exactly_two_views() {
        let recs = vec![record("v1a", EventClass::Normal, 0, Split::Train)];
        assert!(Manifest::new(8, 16, recs).validate().is_err());

        let mut recs = pair("v1", EventClass::Normal, Split::Train);
        recs[1].location_id = 4;
        assert!(Manifest::new(8, 16, recs.to_vec()).validate().is_err());
    }

    #[test]
    fn json_uses_inclusive_pairs() {
        let m = Manifest::new(8, 16, pair("v1", EventClass::Shooting, Split::Test).to_vec());
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"abnormal_ranges\":[[192,288]]"), "{text}");
        assert!(text.contains("\"class\":\"SHOOTING\""));
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let m = Manifest::new(8, 16, vec![]);
        let mut v = serde_json::to_value(&m).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<Manifest>(v).is_err());
    }
}
