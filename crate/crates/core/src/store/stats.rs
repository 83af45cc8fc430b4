use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::labels::frame_labels;
use super::manifest::{EventClass, Manifest, Split, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitStats {
    pub videos: usize,
    pub total_frames: u64,
    pub abnormal_frames: u64,
    pub normal_frames: u64,
    pub abnormal_minutes: f64,
    pub normal_minutes: f64,
    pub abnormal_frames_by_class: BTreeMap<EventClass, u64>,
}

impl SplitStats {
    fn add(&mut self, r: &VideoRecord) {
        let abnormal = abnormal_frame_count(r);
        let total = u64::from(r.frame_count);
        let per_minute = f64::from(r.fps) * 60.0;
        self.videos += 1;
        self.total_frames += total;
        self.abnormal_frames += abnormal;
        self.normal_frames += total - abnormal;
        self.abnormal_minutes += abnormal as f64 / per_minute;
        self.normal_minutes += (total - abnormal) as f64 / per_minute;
        if r.class.is_abnormal() {
            *self.abnormal_frames_by_class.entry(r.class).or_default() += abnormal;
        }
    }
}

/// Frame and duration counts per split and overall.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub test: SplitStats,
    pub total: SplitStats,
}

/// Number of frames covered by the union of a record's abnormal ranges.
pub fn abnormal_frame_count(r: &VideoRecord) -> u64 {
    match r.abnormal_ranges.as_slice() {
        [] => 0,
        [one] => u64::from(one.len()),
        _ => frame_labels(&r.abnormal_ranges, r.frame_count as usize)
            .iter()
            .map(|&l| u64::from(l))
            .sum(),
    }
}

pub fn dataset_stats(manifest: &Manifest) -> Result<DatasetStats> {
    manifest.validate()?;
    let mut stats = DatasetStats::default();
    for r in &manifest.records {
        match r.split {
            Split::Train => stats.train.add(r),
            Split::Test => stats.test.add(r),
        }
        stats.total.add(r);
    }
    Ok(stats)
}

impl DatasetStats {
    pub fn rows(&self) -> [(&'static str, &SplitStats); 3] {
        [("train", &self.train), ("test", &self.test), ("total", &self.total)]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Internal(format!("csv: {e}"));
        w.write_record([
            "split",
            "videos",
            "total_frames",
            "abnormal_frames",
            "normal_frames",
            "abnormal_minutes",
            "normal_minutes",
        ])
        .map_err(csv_err)?;
        for (name, s) in self.rows() {
            w.write_record([
                name.to_string(),
                s.videos.to_string(),
                s.total_frames.to_string(),
                s.abnormal_frames.to_string(),
                s.normal_frames.to_string(),
                format!("{:.2}", s.abnormal_minutes),
                format!("{:.2}", s.normal_minutes),
            ])
            .map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::Internal(format!("csv flush: {e}")))?;
        Ok(())
    }
}
