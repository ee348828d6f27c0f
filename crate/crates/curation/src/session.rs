use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tlr_core::geometry::{CameraModel, Vec3};
use tlr_core::mapping::{
    link_groups, CandidateFile, CandidateStatus, MapLight, PriorMap, TLCandidate, TLGroup,
};
use tlr_core::replay::LogFrame;

use crate::error::CurationError;

pub const JOURNAL_VERSION: u32 = 1;

/// Frame timestamps given by clients must match a log frame this closely.
const FRAME_T_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

/// A state change recorded in the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Decide {
        id: String,
        decision: Decision,
        group: Option<String>,
        #[serde(default)]
        relevant_for: BTreeSet<String>,
    },
    /// The position is stored so replay does not need the source log.
    Manual {
        id: String,
        t: f64,
        point_index: usize,
        position: [f64; 3],
    },
    Save {
        force: bool,
        dropped: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Unix time, seconds.
    pub at: f64,
    pub actor: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JournalHeader {
    curation_log: u32,
    route_id: String,
    candidates: usize,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub candidates: PathBuf,
    /// Output prior map; the journal and lock file live next to it.
    pub map: PathBuf,
    pub link_radius: f64,
    pub actor: String,
}

impl SessionConfig {
    pub fn journal_path(&self) -> PathBuf {
        sibling(&self.map, "journal.jsonl")
    }

    pub fn lock_path(&self) -> PathBuf {
        sibling(&self.map, "lock")
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// Exclusive right to edit one map; released on drop.
#[derive(Debug)]
pub struct EditLock {
    path: PathBuf,
}

impl EditLock {
    pub fn acquire(path: &Path) -> Result<Self, CurationError> {
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self {
                    path: path.to_path_buf(),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CurationError::SessionLocked(path.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for EditLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaveOutcome {
    pub map: PriorMap,
    pub path: Option<PathBuf>,
    /// Pending candidates left out of the map.
    pub dropped: usize,
}

#[derive(Debug, Clone)]
struct State {
    candidates: Vec<TLCandidate>,
    manual: usize,
}

fn manual_id(n: usize) -> String {
    format!("m{n:04}")
}

fn validate_group(g: &str) -> Result<(), CurationError> {
    let bad = |m: &str| Err(CurationError::InvalidGroup(format!("{g:?}: {m}")));
    if g.is_empty() || g.len() > 64 {
        return bad("must be 1 to 64 characters");
    }
    if !g
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        return bad("only ASCII letters, digits, '-', '_' and '.' are allowed");
    }
    // auto-linked groups are named g-<lowest member>
    if g.starts_with("g-") {
        return bad("the g- prefix is reserved for automatically linked groups");
    }
    Ok(())
}

impl State {
    fn find_mut(&mut self, id: &str) -> Result<&mut TLCandidate, CurationError> {
        self.candidates
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| CurationError::UnknownCandidate(id.to_string()))
    }

    /// Validates fully before mutating, so a failed action leaves no trace.
    fn apply(&mut self, action: &Action) -> Result<(), CurationError> {
        match action {
            Action::Decide {
                id,
                decision,
                group,
                relevant_for,
            } => {
                if let Some(g) = group {
                    validate_group(g)?;
                }
                let c = self.find_mut(id)?;
                match decision {
                    Decision::Accept => {
                        c.status = CandidateStatus::Accepted;
                        c.group_id = group.clone();
                    }
                    Decision::Reject => {
                        c.status = CandidateStatus::Rejected;
                        c.group_id = None;
                    }
                }
                c.relevant_for = relevant_for.clone();
            }
            Action::Manual {
                id, t, position, ..
            } => {
                let expected = manual_id(self.manual + 1);
                if *id != expected {
                    return Err(CurationError::BadRequest(format!(
                        "manual candidate id {id}, expected {expected}"
                    )));
                }
                self.manual += 1;
                self.candidates.push(TLCandidate {
                    id: id.clone(),
                    centroid: Vec3::from(*position),
                    support: 1,
                    source_frame_range: (*t, *t),
                    status: CandidateStatus::Pending,
                    group_id: None,
                    relevant_for: BTreeSet::new(),
                });
            }
            Action::Save { .. } => {}
        }
        Ok(())
    }
}

struct Journal {
    file: File,
}

impl Journal {
    fn append(&mut self, event: &Event) -> Result<(), CurationError> {
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads a journal, dropping a torn final line left by a crash.
fn read_journal(
    path: &Path,
    route_id: &str,
    n_candidates: usize,
) -> Result<Vec<Event>, CurationError> {
    let text = std::fs::read_to_string(path)?;
    let mut events = Vec::new();
    let mut offset = 0usize;
    let pieces: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, piece) in pieces.iter().enumerate() {
        let line_no = i + 1;
        let line = piece.trim_end_matches(['\n', '\r']);
        let torn = !piece.ends_with('\n') && i + 1 == pieces.len();
        let bad = |message: String| CurationError::Journal {
            line: line_no,
            message,
        };
        if i == 0 {
            let h: JournalHeader = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            if h.curation_log != JOURNAL_VERSION {
                return Err(bad(format!(
                    "journal version {}, expected {JOURNAL_VERSION}",
                    h.curation_log
                )));
            }
            if h.route_id != route_id || h.candidates != n_candidates {
                return Err(bad(format!(
                    "journal belongs to route {} with {} candidates, not {route_id} with {n_candidates}",
                    h.route_id, h.candidates
                )));
            }
        } else if !line.trim().is_empty() {
            match serde_json::from_str::<Event>(line) {
                Ok(e) => events.push(e),
                Err(e) if torn => {
                    log::warn!("dropping torn final journal line {line_no}: {e}");
                    OpenOptions::new()
                        .write(true)
                        .open(path)?
                        .set_len(offset as u64)?;
                    break;
                }
                Err(e) => return Err(bad(e.to_string())),
            }
        }
        offset += piece.len();
    }
    if pieces.is_empty() {
        return Err(CurationError::Journal {
            line: 1,
            message: "empty journal".into(),
        });
    }
    Ok(events)
}

/// Candidate set under review plus the decisions made so far.
pub struct CurationSession {
    route_id: String,
    initial: usize,
    state: State,
    events: Vec<Event>,
    link_radius: f64,
    actor: String,
    frames: Vec<LogFrame>,
    camera: CameraModel,
    map_path: Option<PathBuf>,
    journal: Option<Journal>,
    _lock: Option<EditLock>,
}

impl CurationSession {
    /// A session without journal or output file.
    pub fn in_memory(file: CandidateFile, link_radius: f64) -> Self {
        Self {
            route_id: file.route_id,
            initial: file.candidates.len(),
            state: State {
                candidates: file.candidates,
                manual: 0,
            },
            events: Vec::new(),
            link_radius,
            actor: "curator".into(),
            frames: Vec::new(),
            camera: CameraModel::default_vehicle_camera(),
            map_path: None,
            journal: None,
            _lock: None,
        }
    }

    /// Rebuilds the state reached by applying `events` to `file`.
    pub fn replay(
        file: CandidateFile,
        events: &[Event],
        link_radius: f64,
    ) -> Result<Self, CurationError> {
        let mut s = Self::in_memory(file, link_radius);
        for (i, e) in events.iter().enumerate() {
            s.state
                .apply(&e.action)
                .map_err(|err| CurationError::Journal {
                    line: i + 2,
                    message: err.to_string(),
                })?;
            s.events.push(e.clone());
        }
        Ok(s)
    }

    /// Opens a persistent session: takes the edit lock, then replays the
    /// journal next to the map if one exists or starts a new one.
    pub fn open(cfg: &SessionConfig) -> Result<Self, CurationError> {
        let file = CandidateFile::load(&cfg.candidates)?;
        let lock = EditLock::acquire(&cfg.lock_path())?;
        let journal_path = cfg.journal_path();
        let mut s = if journal_path.exists() {
            let events = read_journal(&journal_path, &file.route_id, file.candidates.len())?;
            log::info!(
                "replaying {} journal events from {}",
                events.len(),
                journal_path.display()
            );
            Self::replay(file, &events, cfg.link_radius)?
        } else {
            let mut f = File::create(&journal_path)?;
            let header = JournalHeader {
                curation_log: JOURNAL_VERSION,
                route_id: file.route_id.clone(),
                candidates: file.candidates.len(),
            };
            writeln!(
                f,
                "{}",
                serde_json::to_string(&header).expect("header serializes")
            )?;
            f.sync_data()?;
            Self::in_memory(file, cfg.link_radius)
        };
        s.journal = Some(Journal {
            file: OpenOptions::new().append(true).open(&journal_path)?,
        });
        s.map_path = Some(cfg.map.clone());
        s.actor = cfg.actor.clone();
        s._lock = Some(lock);
        Ok(s)
    }

    /// Attaches the source log, enabling overlays and manual candidates.
    pub fn with_log(mut self, frames: Vec<LogFrame>, camera: CameraModel) -> Self {
        self.frames = frames;
        self.camera = camera;
        self
    }

    pub fn route_id(&self) -> &str {
        &self.route_id
    }

    pub fn has_log(&self) -> bool {
        !self.frames.is_empty()
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn initial_count(&self) -> usize {
        self.initial
    }

    /// Candidates ordered by the start of their source frames, then id.
    pub fn candidates(&self) -> Vec<&TLCandidate> {
        let mut v: Vec<&TLCandidate> = self.state.candidates.iter().collect();
        v.sort_by(|a, b| {
            a.source_frame_range
                .0
                .total_cmp(&b.source_frame_range.0)
                .then_with(|| a.id.cmp(&b.id))
        });
        v
    }

    pub fn candidate(&self, id: &str) -> Result<&TLCandidate, CurationError> {
        self.state
            .candidates
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CurationError::UnknownCandidate(id.to_string()))
    }

    pub fn pending(&self) -> usize {
        self.state
            .candidates
            .iter()
            .filter(|c| c.status == CandidateStatus::Pending)
            .count()
    }

    fn commit(&mut self, actor: Option<&str>, action: Action) -> Result<(), CurationError> {
        let mut next = self.state.clone();
        next.apply(&action)?;
        let event = Event {
            seq: self.events.len() as u64 + 1,
            at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
            actor: actor.unwrap_or(&self.actor).to_string(),
            action,
        };
        if let Some(j) = &mut self.journal {
            j.append(&event)?;
        }
        self.state = next;
        self.events.push(event);
        Ok(())
    }

    /// Accepts or rejects a candidate. Decided candidates may be revised.
    pub fn decide(
        &mut self,
        actor: Option<&str>,
        id: &str,
        decision: Decision,
        group: Option<String>,
        relevant_for: BTreeSet<String>,
    ) -> Result<&TLCandidate, CurationError> {
        self.commit(
            actor,
            Action::Decide {
                id: id.to_string(),
                decision,
                group,
                relevant_for,
            },
        )?;
        self.candidate(id)
    }

    /// Log frame with timestamp `t`.
    pub fn frame_at(&self, t: f64) -> Result<&LogFrame, CurationError> {
        let not_found = || CurationError::FrameNotFound(t.to_string());
        if !t.is_finite() {
            return Err(not_found());
        }
        let i = self.frames.partition_point(|f| f.t < t - FRAME_T_TOLERANCE);
        self.frames
            .get(i)
            .filter(|f| (f.t - t).abs() <= FRAME_T_TOLERANCE)
            .ok_or_else(not_found)
    }

    /// Frame best showing a candidate: the log frame closest to the end
    /// of its source range, when a log is attached.
    pub fn overlay_frame_t(&self, c: &TLCandidate) -> Option<f64> {
        let target = c.source_frame_range.1;
        let i = self.frames.partition_point(|f| f.t < target);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|k| self.frames.get(k))
            .min_by(|a, b| (a.t - target).abs().total_cmp(&(b.t - target).abs()))
            .map(|f| f.t)
    }

    /// Lifts LiDAR point `point_index` of frame `t` into the world as a new
    /// pending candidate with support 1. Picking the same point twice yields
    /// two candidates.
    pub fn manual_candidate(
        &mut self,
        actor: Option<&str>,
        t: f64,
        point_index: usize,
    ) -> Result<&TLCandidate, CurationError> {
        let frame = self.frame_at(t)?;
        let p = frame
            .lidar
            .get(point_index)
            .ok_or(CurationError::PointIndexOutOfRange {
                index: point_index,
                len: frame.lidar.len(),
            })?;
        let w = frame.pose.to_transform().transform_point(p);
        let id = manual_id(self.state.manual + 1);
        let t = frame.t;
        self.commit(
            actor,
            Action::Manual {
                id: id.clone(),
                t,
                point_index,
                position: [w.x, w.y, w.z],
            },
        )?;
        self.candidate(&id)
    }

    /// The map as it would be saved now. Accepted candidates become lights
    /// relevant for the session's route; lights without an explicit group
    /// are linked among themselves by distance.
    pub fn draft_map(&self) -> PriorMap {
        let mut lights = Vec::new();
        let mut explicit: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        let mut ungrouped = Vec::new();
        for c in self.candidates() {
            if c.status != CandidateStatus::Accepted {
                continue;
            }
            let mut l = c.to_light();
            l.relevant_for.insert(self.route_id.clone());
            match &c.group_id {
                Some(g) => explicit.entry(g).or_default().push(l.id.clone()),
                None => ungrouped.push(l.clone()),
            }
            lights.push(l);
        }
        let mut groups: Vec<TLGroup> = explicit
            .into_iter()
            .map(|(id, mut light_ids)| {
                light_ids.sort();
                TLGroup {
                    id: id.to_string(),
                    light_ids,
                }
            })
            .collect();
        groups.extend(link_groups(&ungrouped, self.link_radius));
        lights.sort_by(|a: &MapLight, b| a.id.cmp(&b.id));
        PriorMap::new(self.route_id.clone(), lights, groups)
            .expect("draft groups partition accepted lights")
    }

    /// Writes the draft map. Pending candidates block the save unless
    /// `force` is set, in which case they are left out.
    pub fn save(&mut self, actor: Option<&str>, force: bool) -> Result<SaveOutcome, CurationError> {
        let pending = self.pending();
        if pending > 0 && !force {
            return Err(CurationError::PendingRemain(pending));
        }
        if pending > 0 {
            log::warn!("saving without {pending} pending candidates");
        }
        let map = self.draft_map();
        if let Some(path) = &self.map_path {
            write_atomic(path, map.to_json().as_bytes())?;
        }
        self.commit(
            actor,
            Action::Save {
                force,
                dropped: pending,
            },
        )?;
        Ok(SaveOutcome {
            map,
            path: self.map_path.clone(),
            dropped: pending,
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = sibling(path, "tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
