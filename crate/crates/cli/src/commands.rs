use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use tlr_core::detection::{
    read_detections, size_pool, timeout_from_env, write_detections, Detector, FrameDetections,
    RemoteDetector, ScriptedDetector,
};
use tlr_core::evaluation::{align, timeline_csv, DetectionEval, EvalConfig, Report, RunReport};
use tlr_core::mapping::{
    auto_accept, build_candidates, transfer_annotations, CandidateFile, MappingConfig, PriorMap,
};
use tlr_core::recognition::{
    run_log, write_verdicts_file, FinalState, RecognizerConfig, VerdictRecord,
};
use tlr_core::replay::{generate, read_log, LogFrame, Rddf, Scenario, Sensors, TruthBundle};
use tlr_curation::{AppState, CurationSession, SessionConfig};

use crate::args::{
    BuildMapArgs, CurateArgs, DetectorArgs, EvalArgs, RunArgs, SimulateArgs, TransferArgs,
};
use crate::error::{
    from_curation, from_detection, from_mapping, from_run, CliError, CliResult, Context,
};

fn load_frames(path: &Path) -> CliResult<Vec<LogFrame>> {
    read_log(path).data(format!("reading log {}", path.display()))
}

fn load_sensors(path: Option<&Path>) -> CliResult<Sensors> {
    match path {
        Some(p) => Sensors::load(p).data(format!("reading sensors {}", p.display())),
        None => Ok(Sensors::default()),
    }
}

fn load_map(path: &Path) -> CliResult<PriorMap> {
    PriorMap::load(path).data(format!("reading map {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or("log".into(), |s| s.to_string_lossy().into_owned())
}

fn make_detector(
    args: &DetectorArgs,
    sensors: &Sensors,
    frames: &[LogFrame],
    log: &Path,
    tau: f64,
) -> CliResult<Box<dyn Detector>> {
    let cam = &sensors.camera;
    if let Some(url) = &args.detector_url {
        let root = log.parent().map(Path::to_path_buf).unwrap_or_default();
        let d = RemoteDetector::new(url, tau, cam.width, cam.height, timeout_from_env())
            .map_err(|e| from_detection("creating detector client", e))?
            .with_image_root(root);
        return Ok(Box::new(d));
    }
    let mut noise = sensors.detector.clone();
    if let Some(seed) = args.seed {
        noise.rng_seed = seed;
    }
    let d = ScriptedDetector::new(noise, cam.width, cam.height)
        .map_err(|e| CliError::usage(format!("detector settings: {e}")))?
        .with_size_pool(size_pool(frames));
    Ok(Box::new(d))
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let mut scenario =
        Scenario::load(&a.scenario).data(format!("loading scenario {}", a.scenario.display()))?;
    if let Some(seed) = a.seed {
        scenario.rng_seed = seed;
    }
    let g = generate(&scenario).data("generating")?;
    tlr_core::replay::write_log(&a.log, &g.frames).data(format!("writing {}", a.log.display()))?;
    g.truth
        .save(&a.truth)
        .data(format!("writing {}", a.truth.display()))?;
    if let Some(p) = &a.sensors_out {
        Sensors::of(&scenario)
            .save(p)
            .data(format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.truth_map {
        g.truth
            .map
            .save(p)
            .map_err(|e| from_mapping(format!("writing {}", p.display()), e))?;
    }
    println!(
        "simulated {} frames ({} lights in {} groups) for route {}",
        g.frames.len(),
        g.truth.map.lights.len(),
        g.truth.map.groups.len(),
        scenario.route_id
    );
    Ok(())
}

pub fn build_map(a: BuildMapArgs) -> CliResult<()> {
    let cfg = MappingConfig {
        flush_gap_frames: a.flush_gap,
        dbscan_eps: a.eps,
        dbscan_min_pts: a.min_pts,
        group_link_radius: a.link_radius,
        tight_bbox_shrink: a.shrink,
        tau: a.tau,
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let frames = load_frames(&a.log)?;
    let sensors = load_sensors(a.detector.sensors.as_deref())?;
    let det = make_detector(&a.detector, &sensors, &frames, &a.log, a.tau)?;
    let route = a.route.clone().unwrap_or_else(|| stem(&a.log));

    let cands = build_candidates(&frames, &det, &sensors.camera, &cfg)
        .map_err(|e| from_mapping("mapping", e))?;
    let file = CandidateFile::new(route.clone(), cands);
    file.save(&a.out)
        .map_err(|e| from_mapping(format!("writing {}", a.out.display()), e))?;
    println!(
        "wrote {} candidates to {}",
        file.candidates.len(),
        a.out.display()
    );

    if a.auto_accept {
        let path = a
            .map
            .as_ref()
            .expect("clap enforces --map with --auto-accept");
        let map = auto_accept(&file.candidates, &route, cfg.group_link_radius);
        map.save(path)
            .map_err(|e| from_mapping(format!("writing {}", path.display()), e))?;
        println!(
            "accepted {} lights in {} groups into {}",
            map.lights.len(),
            map.groups.len(),
            path.display()
        );
    }
    Ok(())
}

pub fn curate(a: CurateArgs) -> CliResult<()> {
    let cfg = SessionConfig {
        candidates: a.candidates.clone(),
        map: a.map.clone(),
        link_radius: a.link_radius,
        actor: a.actor.clone(),
    };
    let mut session = CurationSession::open(&cfg).map_err(|e| match e {
        tlr_curation::CurationError::SessionLocked(ref p) => CliError::new(
            crate::error::ExitKind::Service,
            format!("{e}; remove {} if no other session is running", p.display()),
        ),
        e => from_curation("opening session", e),
    })?;
    if let Some(log) = &a.log {
        let sensors = load_sensors(a.sensors.as_deref())?;
        session = session.with_log(load_frames(log)?, sensors.camera);
    }
    let rt = tokio::runtime::Runtime::new().service("starting runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .service(format!("binding {}", a.bind))?;
        let addr = listener.local_addr().service("reading bound address")?;
        println!("curation API listening on http://{addr}/api/v1");
        let _ = std::io::stdout().flush();
        tlr_curation::serve(listener, AppState::new(session))
            .await
            .service("serving")
    })
}

pub fn run(a: RunArgs) -> CliResult<()> {
    let cfg = RecognizerConfig {
        activation_range: a.activation_range,
        gate_radius: a.gate_radius,
        tau: a.tau,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let map = load_map(&a.map)?;
    let frames = load_frames(&a.log)?;
    let sensors = load_sensors(a.detector.sensors.as_deref())?;
    let det = make_detector(&a.detector, &sensors, &frames, &a.log, a.tau)?;

    let verdicts = run_log(&frames, &map, &det, &sensors.camera, &cfg)
        .map_err(|e| from_run("recognition", e))?;
    let records: Vec<VerdictRecord> = verdicts
        .iter()
        .map(|(t, v)| VerdictRecord::new(*t, v))
        .collect();
    write_verdicts_file(&a.out, &records).data(format!("writing {}", a.out.display()))?;
    let mut counts = BTreeMap::new();
    for r in &records {
        *counts.entry(r.state.as_str()).or_insert(0usize) += 1;
    }
    let summary: Vec<String> = FinalState::ALL
        .iter()
        .map(|s| format!("{}={}", s.as_str(), counts.get(s.as_str()).unwrap_or(&0)))
        .collect();
    println!(
        "wrote {} verdicts to {} ({})",
        records.len(),
        a.out.display(),
        summary.join(" ")
    );

    if let Some(path) = &a.detections_out {
        let mut out = Vec::with_capacity(frames.len());
        for f in &frames {
            let detections = det
                .detect(f)
                .map_err(|e| from_detection(format!("detecting at t={}", f.t), e))?;
            out.push(FrameDetections { t: f.t, detections });
        }
        let file = std::fs::File::create(path).data(format!("writing {}", path.display()))?;
        write_detections(BufWriter::new(file), &out).data(format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    EvalConfig {
        iou_threshold: a.iou,
        tau: 0.5,
    }
    .validate()
    .map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(bad) = a.taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::usage(format!(
            "--taus value {bad} is outside [0, 1]"
        )));
    }
    if !a.labels.is_empty() && a.labels.len() != a.verdicts.len() {
        return Err(CliError::usage(format!(
            "{} --label values for {} --verdicts files",
            a.labels.len(),
            a.verdicts.len()
        )));
    }
    let truth = TruthBundle::load(&a.truth).data(format!("reading truth {}", a.truth.display()))?;
    let log_id = truth.route_id.clone();

    let mut runs = Vec::new();
    let mut preds_by_run: Vec<(String, Vec<FinalState>)> = Vec::new();
    for (i, path) in a.verdicts.iter().enumerate() {
        let label = a.labels.get(i).cloned().unwrap_or_else(|| stem(path));
        let records = tlr_core::recognition::read_verdicts_file(path)
            .data(format!("reading {}", path.display()))?;
        let preds = align(&records, &truth.frames)
            .data(format!("aligning {} with the truth", path.display()))?;
        runs.push(RunReport::new(&log_id, &label, &preds, &truth.frames).data("scoring")?);
        preds_by_run.push((label, preds));
    }

    let mut detection = Vec::new();
    if let Some(dpath) = &a.detections {
        let log = a
            .log
            .as_ref()
            .expect("clap enforces --log with --detections");
        let frames = load_frames(log)?;
        let file = std::fs::File::open(dpath).data(format!("reading {}", dpath.display()))?;
        let dets =
            read_detections(BufReader::new(file)).data(format!("reading {}", dpath.display()))?;
        let by_t: BTreeMap<u64, &FrameDetections> =
            dets.iter().map(|d| (d.t.to_bits(), d)).collect();
        let mut ev = DetectionEval::new();
        for f in &frames {
            let d = by_t
                .get(&f.t.to_bits())
                .map_or(&[][..], |d| &d.detections[..]);
            ev.add_frame(d, &f.gt_detections, a.iou);
        }
        detection = a.taus.iter().map(|&tau| ev.scores(tau, a.iou)).collect();
    }

    let report = Report {
        log_id,
        runs,
        detection,
    };
    std::fs::write(&a.out, report.to_json() + "\n").data(format!("writing {}", a.out.display()))?;
    let text = report.to_text();
    match &a.text {
        Some(p) => std::fs::write(p, &text).data(format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.csv {
        let cols: Vec<(&str, &[FinalState])> = preds_by_run
            .iter()
            .map(|(l, p)| (l.as_str(), &p[..]))
            .collect();
        let csv = timeline_csv(&truth.frames, &cols).data("building timeline")?;
        std::fs::write(p, csv).data(format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn transfer(a: TransferArgs) -> CliResult<()> {
    let map = load_map(&a.map)?;
    let mut known: BTreeSet<String> = a.known_routes.iter().cloned().collect();
    known.insert(map.route_id.clone());
    for p in &a.rddfs {
        known.insert(
            Rddf::load(p)
                .data(format!("reading {}", p.display()))?
                .route_id,
        );
    }
    let mut overrides = BTreeMap::new();
    for id in &a.keep {
        overrides.insert(id.clone(), true);
    }
    for id in &a.drop {
        if overrides.insert(id.clone(), false).is_some() {
            return Err(CliError::usage(format!(
                "light {id} is both kept and dropped"
            )));
        }
    }
    for id in overrides.keys() {
        if map.light(id).is_none() {
            return Err(CliError::usage(format!("map has no light {id}")));
        }
    }
    let out = transfer_annotations(&map, &a.target, &overrides, &known, a.link_radius)
        .map_err(|e| from_mapping("transferring", e))?;
    out.save(&a.out)
        .map_err(|e| from_mapping(format!("writing {}", a.out.display()), e))?;
    println!(
        "wrote {} lights in {} groups for route {} to {}",
        out.lights.len(),
        out.groups.len(),
        out.route_id,
        a.out.display()
    );
    Ok(())
}
