//! Detection, ground-truth, tracklet and event-log files.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::assoc::{BoundingBox, Detection, Event, Tracklet};
use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

const DETECTION_HEADER: [&str; 6] = ["frame", "x", "y", "width", "height", "confidence"];

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse(format!("line {line}: missing column {i}")))?;
    raw.trim().parse().map_err(|_| Error::Parse(format!("line {line}: cannot parse `{raw}`")))
}

/// Parses `frame,x,y,width,height,confidence[,appearance_ref]`. The optional
/// last column indexes into `appearances`; an empty cell means no vector.
pub fn parse_detections(text: &str, appearances: Option<&EmbeddingSet>) -> Result<Vec<Detection>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 6
        || names[..6] != DETECTION_HEADER
        || (names.len() == 7 && names[6] != "appearance_ref")
        || names.len() > 7
    {
        return Err(Error::MalformedHeader(format!("detection header `{}`", names.join(","))));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let bbox = BoundingBox::new(
            field(&rec, 1, line)?,
            field(&rec, 2, line)?,
            field(&rec, 3, line)?,
            field(&rec, 4, line)?,
        )?;
        let confidence: f64 = field(&rec, 5, line)?;
        if !confidence.is_finite() {
            return Err(Error::Parse(format!("line {line}: non-finite confidence")));
        }
        let appearance = match rec.get(6).map(str::trim).filter(|s| !s.is_empty()) {
            None => None,
            Some(_) => {
                let idx: usize = field(&rec, 6, line)?;
                let set = appearances.ok_or_else(|| {
                    Error::Config(format!("line {line}: appearance_ref given but no appearance file"))
                })?;
                let e = set.get(idx).ok_or_else(|| {
                    Error::Parse(format!("line {line}: appearance_ref {idx} out of range ({})", set.len()))
                })?;
                Some(e.values.clone())
            }
        };
        out.push(Detection { bbox, frame: field(&rec, 0, line)?, confidence, appearance, row });
    }
    Ok(out)
}

pub fn load_detections(path: &Path, appearances: Option<&EmbeddingSet>) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, appearances)
}

/// Writes detections; `appearance_refs[i]` fills the optional last column.
pub fn detections_csv(detections: &[Detection], appearance_refs: Option<&[Option<usize>]>) -> String {
    let mut s = DETECTION_HEADER.join(",");
    if appearance_refs.is_some() {
        s.push_str(",appearance_ref");
    }
    s.push('\n');
    for (i, d) in detections.iter().enumerate() {
        let b = &d.bbox;
        s.push_str(&format!("{},{},{},{},{},{}", d.frame, b.x, b.y, b.width, b.height, d.confidence));
        if let Some(refs) = appearance_refs {
            s.push(',');
            if let Some(r) = refs[i] {
                s.push_str(&r.to_string());
            }
        }
        s.push('\n');
    }
    s
}

/// Ground truth: `row,subject_id`, one line per detection row.
pub fn truth_csv(truth: &[String]) -> String {
    let mut s = String::from("row,subject_id\n");
    for (i, t) in truth.iter().enumerate() {
        s.push_str(&format!("{i},{t}\n"));
    }
    s
}

pub fn parse_truth(text: &str) -> Result<HashMap<usize, String>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["row", "subject_id"] {
        return Err(Error::MalformedHeader(format!("truth header `{}`", header.join(","))));
    }
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.insert(field(&rec, 0, i + 2)?, rec[1].trim().to_string());
    }
    Ok(out)
}

pub fn load_truth(path: &Path) -> Result<HashMap<usize, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth(&text)
}

/// `tracklet_id,frame,x,y,width,height,state`; the id column carries the
/// linked identity so relinked fragments share one label.
pub fn tracklets_csv(tracklets: &[Tracklet]) -> String {
    let mut s = String::from("tracklet_id,frame,x,y,width,height,state\n");
    for t in tracklets {
        for (f, b) in &t.boxes {
            s.push_str(&format!("{},{f},{},{},{},{},{}\n", t.identity, b.x, b.y, b.width, b.height, t.state.as_str()));
        }
    }
    s
}

pub fn event_log(events: &[Event]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}
