use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Traffic-light recognition with prior maps: simulate logs, build and
/// curate maps, run the online recognizer and score the results.
///
/// Every flag can also be set through an environment variable named after
/// it with a TLR_ prefix (for example TLR_TAU); flags take precedence.
#[derive(Debug, Parser)]
#[command(name = "tlr", disable_version_flag = true)]
pub struct Cli {
    /// Print name, version and file format versions as JSON.
    #[arg(long)]
    pub version: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic log and its ground truth from a scenario.
    Simulate(SimulateArgs),
    /// Replay a log through the detector and cluster LiDAR hits into map candidates.
    BuildMap(BuildMapArgs),
    /// Serve the curation API for a candidate file.
    Curate(CurateArgs),
    /// Run the online recognizer over a log.
    Run(RunArgs),
    /// Score verdict streams (and optionally detections) against ground truth.
    Eval(EvalArgs),
    /// Re-target a prior map at another route.
    Transfer(TransferArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long, env = "TLR_SCENARIO")]
    pub scenario: PathBuf,
    /// Output log (JSONL).
    #[arg(long, env = "TLR_LOG")]
    pub log: PathBuf,
    /// Output truth bundle (map, RDDF and per-frame truth).
    #[arg(long, env = "TLR_TRUTH")]
    pub truth: PathBuf,
    /// Also write the camera and detector settings used.
    #[arg(long, env = "TLR_SENSORS_OUT")]
    pub sensors_out: Option<PathBuf>,
    /// Also write the true prior map on its own.
    #[arg(long, env = "TLR_TRUTH_MAP")]
    pub truth_map: Option<PathBuf>,
    /// Overrides the scenario's random seed.
    #[arg(long, env = "TLR_SEED")]
    pub seed: Option<u64>,
}

/// Camera and detector selection shared by build-map and run.
#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Camera and scripted-detector settings (JSON); defaults apply when absent.
    #[arg(long, env = "TLR_SENSORS")]
    pub sensors: Option<PathBuf>,
    /// Overrides the scripted detector's seed.
    #[arg(long, env = "TLR_SEED")]
    pub seed: Option<u64>,
    /// Use a remote model server (POST <url>/detect) instead of the scripted detector.
    #[arg(long, env = "TLR_DETECTOR_URL")]
    pub detector_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildMapArgs {
    /// Input log (JSONL).
    #[arg(long, env = "TLR_LOG")]
    pub log: PathBuf,
    /// Output candidate file.
    #[arg(long, env = "TLR_OUT")]
    pub out: PathBuf,
    /// Route id recorded in the outputs; defaults to the log file stem.
    #[arg(long, env = "TLR_ROUTE")]
    pub route: Option<String>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Confidence threshold for detections used as gates.
    #[arg(long, env = "TLR_TAU", default_value_t = 0.5)]
    pub tau: f64,
    /// DBSCAN neighborhood radius (m).
    #[arg(long, env = "TLR_EPS", default_value_t = 0.5)]
    pub eps: f64,
    /// DBSCAN core point threshold (neighbors including the point).
    #[arg(long, env = "TLR_MIN_PTS", default_value_t = 6)]
    pub min_pts: usize,
    /// Detection-free frames that trigger clustering.
    #[arg(long, env = "TLR_FLUSH_GAP", default_value_t = 8)]
    pub flush_gap: u32,
    /// Fraction of box width/height trimmed before gating.
    #[arg(long, env = "TLR_SHRINK", default_value_t = 0.1)]
    pub shrink: f64,
    /// Group linking distance (m) used with --auto-accept.
    #[arg(long, env = "TLR_LINK_RADIUS", default_value_t = 20.0)]
    pub link_radius: f64,
    /// Accept every candidate, link groups and write the prior map to --map.
    #[arg(long, env = "TLR_AUTO_ACCEPT", requires = "map")]
    pub auto_accept: bool,
    /// Prior map output for --auto-accept.
    #[arg(long, env = "TLR_MAP")]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Candidate file from build-map.
    #[arg(long, env = "TLR_CANDIDATES")]
    pub candidates: PathBuf,
    /// Prior map to write on save; the decision journal and lock file live next to it.
    #[arg(long, env = "TLR_MAP")]
    pub map: PathBuf,
    /// Source log, enabling overlays and manual candidates.
    #[arg(long, env = "TLR_LOG")]
    pub log: Option<PathBuf>,
    #[arg(long, env = "TLR_SENSORS")]
    pub sensors: Option<PathBuf>,
    /// Listen address (port 0 picks a free port).
    #[arg(long, env = "TLR_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Linking distance (m) for accepted lights without an explicit group.
    #[arg(long, env = "TLR_LINK_RADIUS", default_value_t = 20.0)]
    pub link_radius: f64,
    /// Name recorded with each decision unless the request sets X-Curator.
    #[arg(long, env = "TLR_ACTOR", default_value = "curator")]
    pub actor: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, env = "TLR_LOG")]
    pub log: PathBuf,
    #[arg(long, env = "TLR_MAP")]
    pub map: PathBuf,
    /// Output verdict stream (JSONL).
    #[arg(long, env = "TLR_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "TLR_TAU", default_value_t = 0.5)]
    pub tau: f64,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Distance (m) at which a group becomes active.
    #[arg(long, env = "TLR_ACTIVATION_RANGE", default_value_t = 100.0)]
    pub activation_range: f64,
    /// Radius (m) of the gating sphere around each light.
    #[arg(long, env = "TLR_GATE_RADIUS", default_value_t = 1.5)]
    pub gate_radius: f64,
    /// Also write raw detector output for every frame, for detection scoring.
    #[arg(long, env = "TLR_DETECTIONS_OUT")]
    pub detections_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Truth bundle from simulate.
    #[arg(long, env = "TLR_TRUTH")]
    pub truth: PathBuf,
    /// Verdict stream; repeat to compare runs.
    #[arg(long = "verdicts", required = true)]
    pub verdicts: Vec<PathBuf>,
    /// Label per --verdicts, in order; defaults to the file stem.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Raw detections from `run --detections-out`.
    #[arg(long, env = "TLR_DETECTIONS", requires = "log")]
    pub detections: Option<PathBuf>,
    /// Log holding the ground-truth boxes for --detections.
    #[arg(long, env = "TLR_LOG")]
    pub log: Option<PathBuf>,
    /// Thresholds at which detection precision and recall are reported.
    #[arg(
        long,
        env = "TLR_TAUS",
        value_delimiter = ',',
        default_value = "0.2,0.5"
    )]
    pub taus: Vec<f64>,
    #[arg(long, env = "TLR_IOU", default_value_t = 0.5)]
    pub iou: f64,
    /// JSON report.
    #[arg(long, env = "TLR_OUT")]
    pub out: PathBuf,
    /// Text tables; printed to stdout when absent.
    #[arg(long, env = "TLR_TEXT")]
    pub text: Option<PathBuf>,
    /// Per-frame timeline CSV.
    #[arg(long, env = "TLR_CSV")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long, env = "TLR_MAP")]
    pub map: PathBuf,
    /// Route the new map is for.
    #[arg(long, env = "TLR_TARGET")]
    pub target: String,
    #[arg(long, env = "TLR_OUT")]
    pub out: PathBuf,
    /// Route ids accepted as targets besides the map's own; repeatable.
    #[arg(long = "known-route")]
    pub known_routes: Vec<String>,
    /// RDDF files whose route ids are accepted as targets; repeatable.
    #[arg(long = "rddf")]
    pub rddfs: Vec<PathBuf>,
    /// Light to keep regardless of its relevance set; repeatable.
    #[arg(long = "keep")]
    pub keep: Vec<String>,
    /// Light to leave out; repeatable.
    #[arg(long = "drop")]
    pub drop: Vec<String>,
    #[arg(long, env = "TLR_LINK_RADIUS", default_value_t = 20.0)]
    pub link_radius: f64,
}
