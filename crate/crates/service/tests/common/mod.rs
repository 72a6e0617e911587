#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use transitgrid_core::scenario::parkcity;
use transitgrid_core::PolicyKind;
use transitgrid_service::{load_run, simulate, Run};

pub fn bundled_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/parkcity33.scenario")
}

pub fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

/// The bundled opportunistic run, written once and read back from disk.
pub fn bundled_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = scratch(&format!("bundled-opportunistic-{}", std::process::id()));
        let s = parkcity::load_bundled(bundled_path()).unwrap();
        simulate(s, PolicyKind::Opportunistic, &dir).unwrap();
        load_run(&dir).unwrap()
    })
}
