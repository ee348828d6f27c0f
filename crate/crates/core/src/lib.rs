//! Traffic-light recognition with prior maps.
//!
//! Offline, replayed logs are turned into a map of traffic-light positions:
//! LiDAR points that fall inside detector boxes are accumulated, clustered
//! and curated. Online, mapped lights near the vehicle are projected into
//! the camera image and used to gate detections, yielding one of NONE, OFF,
//! RED or GREEN per frame.
//!
//! Frames: the world frame has z up; the vehicle frame is x forward, y
//! left, z up (LiDAR points are logged in it); the camera frame is z
//! forward, x right, y down.

pub mod detection;
pub mod evaluation;
pub mod geometry;
pub mod mapping;
pub mod recognition;
pub mod replay;
