//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Run with `cargo test --test acceptance`.

mod attention;
mod beam;
mod cer;
mod determinism;
mod features;
mod gradients;
mod toy_pipeline;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub type Check = Result<String, String>;

/// Turns a boolean into a check result with the same detail either way.
pub fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("PASS  {name}: {detail} ({secs:.1} s)"),
        Err(detail) => println!("FAIL  {name}: {detail} ({secs:.1} s)"),
    }
    result.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run("gradient suite", gradients::check);
    ok &= run("attention correctness", attention::check);
    ok &= run("beam-search oracle", beam::check);
    let toy = toy_pipeline::ToyRun::new();
    ok &= run("end-to-end toy reproduction", || toy.end_to_end());
    ok &= run("lower-bound methodology", || toy.lower_bound());
    ok &= run("feature pipeline", features::check);
    ok &= run("CER metric", cer::check);
    ok &= run("determinism", determinism::check);
    if !ok {
        std::process::exit(1);
    }
}
