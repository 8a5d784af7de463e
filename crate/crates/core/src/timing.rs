//! CPU-time instrumentation of solver phases.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    ModelFit,
    AcqOpt,
}

thread_local! {
    static ACTIVE: Cell<Option<Phase>> = const { Cell::new(None) };
}

/// CPU time consumed by the calling thread, in seconds.
///
/// Runs execute one per worker thread, so the thread clock is the run's CPU
/// time even when several runs share the process.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer and the clock id is a constant.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

struct Guard;

impl Drop for Guard {
    fn drop(&mut self) {
        ACTIVE.with(|a| a.set(None));
    }
}

/// Runs `f` and returns its result with the CPU seconds it used.
///
/// # Panics
///
/// Panics if called while another phase is being timed on this thread.
pub fn time_phase<R>(phase: Phase, f: impl FnOnce() -> R) -> (R, f64) {
    ACTIVE.with(|a| {
        if let Some(outer) = a.get() {
            panic!("nested timing: {phase:?} started inside {outer:?}");
        }
        a.set(Some(phase));
    });
    let _guard = Guard;
    let start = thread_cpu_seconds();
    let out = f();
    let secs = (thread_cpu_seconds() - start).max(0.0);
    (out, secs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noop_is_cheap() {
        let ((), t) = time_phase(Phase::ModelFit, || ());
        assert!(t < 1e-2);
    }

    #[test]
    fn sequential_phases_are_disjoint() {
        let total0 = thread_cpu_seconds();
        let spin = || {
            let mut s = 0.0f64;
            for i in 0..2_000_000 {
                s += (i as f64).sqrt();
            }
            std::hint::black_box(s)
        };
        let (_, a) = time_phase(Phase::ModelFit, spin);
        let (_, b) = time_phase(Phase::AcqOpt, spin);
        let total = thread_cpu_seconds() - total0;
        assert!(a > 0.0 && b > 0.0);
        assert!(a + b <= total + 1e-6);
    }

    #[test]
    #[should_panic(expected = "nested timing")]
    fn nesting_panics() {
        time_phase(Phase::ModelFit, || time_phase(Phase::AcqOpt, || ()));
    }

    #[test]
    fn guard_resets_after_panic() {
        let r = std::panic::catch_unwind(|| time_phase(Phase::ModelFit, || panic!("boom")));
        assert!(r.is_err());
        let ((), _) = time_phase(Phase::AcqOpt, || ());
    }
}
