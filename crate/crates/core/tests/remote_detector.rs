use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use base64::Engine;
use tlr_core::detection::{DetectionError, Detector, RemoteDetector, StateClass};
use tlr_core::geometry::Pose6D;
use tlr_core::recognition::FinalState;
use tlr_core::replay::LogFrame;

/// Serves one request with `status` and `body` after `delay`; sends the
/// request body back over the channel.
fn serve_once(
    status: u16,
    body: &'static str,
    delay: Duration,
) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0usize;
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut buf = vec![0; len];
        reader.read_exact(&mut buf).unwrap();
        let _ = tx.send(format!(
            "{}{}",
            request_line,
            String::from_utf8(buf).unwrap()
        ));
        thread::sleep(delay);
        let mut stream = stream;
        let _ = write!(
            stream,
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
    });
    (url, rx)
}

fn frame_with_image(dir: &std::path::Path) -> LogFrame {
    std::fs::write(dir.join("f0.png"), b"not really a png").unwrap();
    LogFrame {
        t: 1.5,
        pose: Pose6D::planar(0.0, 0.0, 0.0),
        lidar: vec![],
        gt_detections: vec![],
        gt_state: FinalState::None,
        image_ref: Some("f0.png".into()),
    }
}

#[test]
fn response_is_sanitized_and_sorted() {
    let body = r#"{"detections":[
        {"bbox":[10,10,20,40],"class":"red","confidence":0.4},
        {"bbox":[1270,900,1300,1000],"class":"green","confidence":0.9},
        {"bbox":[5,5,6,6],"class":"yellow","confidence":0.8},
        {"bbox":[5,5,6,6],"class":"red","confidence":1.7},
        {"bbox":[1400,10,1500,20],"class":"red","confidence":0.5},
        {"bbox":[30,30,30,50],"class":"red","confidence":0.5},
        {"bbox":[1,2,3],"class":"red","confidence":0.5},
        {"bbox":[100,100,110,130],"class":"green","confidence":0.6}
    ]}"#;
    let (url, rx) = serve_once(200, body, Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let det = RemoteDetector::new(&url, 0.3, 1280, 960, Duration::from_secs(5))
        .unwrap()
        .with_image_root(dir.path());
    let out = det.detect(&frame_with_image(dir.path())).unwrap();
    let confs: Vec<f64> = out.iter().map(|d| d.confidence).collect();
    assert_eq!(confs, [0.9, 0.6, 0.4]);
    assert_eq!(out[0].class, StateClass::Green);
    assert_eq!((out[0].bbox.x_max, out[0].bbox.y_max), (1280.0, 960.0));

    let req = rx.recv().unwrap();
    assert!(req.starts_with("POST /detect "), "{req}");
    let json: serde_json::Value = serde_json::from_str(&req[req.find('{').unwrap()..]).unwrap();
    assert_eq!(json["tau"], 0.3);
    let sent = base64::engine::general_purpose::STANDARD
        .decode(json["image_b64"].as_str().unwrap())
        .unwrap();
    assert_eq!(sent, b"not really a png");
}

#[test]
fn slow_server_is_unavailable() {
    let (url, _rx) = serve_once(200, r#"{"detections":[]}"#, Duration::from_millis(800));
    let dir = tempfile::tempdir().unwrap();
    let det = RemoteDetector::new(&url, 0.5, 1280, 960, Duration::from_millis(100))
        .unwrap()
        .with_image_root(dir.path());
    let err = det.detect(&frame_with_image(dir.path())).unwrap_err();
    assert!(
        matches!(err, DetectionError::DetectorUnavailable(_)),
        "{err}"
    );
}

#[test]
fn server_errors_and_garbage_are_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    for (status, body) in [(500, r#"{"error":"boom"}"#), (200, "not json")] {
        let (url, _rx) = serve_once(status, body, Duration::ZERO);
        let det = RemoteDetector::new(&url, 0.5, 1280, 960, Duration::from_secs(5))
            .unwrap()
            .with_image_root(dir.path());
        let err = det.detect(&frame_with_image(dir.path())).unwrap_err();
        assert!(
            matches!(err, DetectionError::DetectorUnavailable(_)),
            "{err}"
        );
    }
}

#[test]
fn refused_connection_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let dir = tempfile::tempdir().unwrap();
    let det = RemoteDetector::new(
        &format!("http://127.0.0.1:{port}"),
        0.5,
        1280,
        960,
        Duration::from_secs(1),
    )
    .unwrap()
    .with_image_root(dir.path());
    assert!(matches!(
        det.detect(&frame_with_image(dir.path())),
        Err(DetectionError::DetectorUnavailable(_))
    ));
}

#[test]
fn frames_without_images_are_rejected() {
    let det =
        RemoteDetector::new("http://127.0.0.1:9", 0.5, 1280, 960, Duration::from_secs(1)).unwrap();
    let mut f = frame_with_image(tempfile::tempdir().unwrap().path());
    f.image_ref = None;
    assert!(matches!(det.detect(&f), Err(DetectionError::MissingImage(t)) if t == 1.5));
    f.image_ref = Some("/nonexistent/x.png".into());
    assert!(matches!(det.detect(&f), Err(DetectionError::Image { .. })));
}
