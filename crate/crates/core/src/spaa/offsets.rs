use serde::{Deserialize, Serialize};

use crate::route::RouteMap;
use crate::sim::{DriveLog, EndReason, InterventionKind};

use super::StretchParams;

/// A set-speed offset over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSpeedEntry {
    pub start: f64,
    pub end: f64,
    /// m/s
    pub offset: f64,
    /// The offset was set right after a zone start and covers the whole zone.
    pub whole_segment: bool,
}

/// Non-overlapping offset spans, sorted by start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SetSpeedOffsetMap {
    entries: Vec<SetSpeedEntry>,
}

impl SetSpeedOffsetMap {
    /// Builds a map, later entries overriding earlier ones where they overlap.
    pub fn from_entries(entries: Vec<SetSpeedEntry>) -> Self {
        let mut map = Self::default();
        for e in entries {
            map.insert(e);
        }
        map
    }

    pub fn entries(&self) -> &[SetSpeedEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Inserts `entry`, trimming or splitting whatever it overlaps.
    pub fn insert(&mut self, entry: SetSpeedEntry) {
        if !(entry.start < entry.end) {
            return;
        }
        let mut kept = Vec::with_capacity(self.entries.len() + 2);
        for e in self.entries.drain(..) {
            if e.end <= entry.start || e.start >= entry.end {
                kept.push(e);
                continue;
            }
            if e.start < entry.start {
                kept.push(SetSpeedEntry { end: entry.start, whole_segment: false, ..e });
            }
            if e.end > entry.end {
                kept.push(SetSpeedEntry { start: entry.end, whole_segment: false, ..e });
            }
        }
        kept.push(entry);
        kept.sort_by(|a, b| a.start.total_cmp(&b.start));
        self.entries = kept;
    }

    /// This map with every entry of `newer` inserted on top.
    pub fn overlaid(&self, newer: &SetSpeedOffsetMap) -> SetSpeedOffsetMap {
        let mut out = self.clone();
        for e in &newer.entries {
            out.insert(*e);
        }
        out
    }

    /// Offset in effect at `d`, zero outside every span.
    pub fn offset_at(&self, d: f64) -> f64 {
        self.entries
            .iter()
            .find(|e| e.start <= d && d < e.end)
            .map_or(0.0, |e| e.offset)
    }
}

/// Turns the lap's set-speed interventions into offset spans on top of `current`.
///
/// A change made within `t_set` seconds of entering a zone covers the whole
/// zone; otherwise it runs from where it was made to the zone end (or to
/// where the lever was returned to zero).
pub fn adopt_set_speed(
    log: &DriveLog,
    map: &RouteMap,
    current: &SetSpeedOffsetMap,
    p: &StretchParams,
) -> SetSpeedOffsetMap {
    let mut out = current.clone();
    let mut records: Vec<_> = log.records(InterventionKind::SetSpeed).collect();
    records.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));

    for (k, rec) in records.iter().enumerate() {
        if rec.offset == 0.0 {
            continue;
        }
        let zone = map.zone_index_clamped(rec.d_start());
        let zone_start = map.zones()[zone].start;
        let zone_end = map.zone_end(zone);
        let entered_at = log
            .states
            .iter()
            .find(|s| s.d >= zone_start)
            .map_or(0.0, |s| s.t);
        let whole_segment = rec.t_start - entered_at <= p.t_set;
        let start = if whole_segment { zone_start } else { rec.d_start() };

        let replaced_by_next = records
            .get(k + 1)
            .is_some_and(|next| next.t_start == rec.t_end);
        let end = if rec.ended_by == EndReason::LeverChange && !replaced_by_next {
            rec.d_end().min(zone_end)
        } else {
            zone_end
        };
        out.insert(SetSpeedEntry { start, end, offset: rec.offset, whole_segment });
    }
    out
}
