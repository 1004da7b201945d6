//! CPU time of the calling thread.
//!
//! Searches run on a single thread, so the thread clock measures the CPU
//! cost of one metric call without picking up unrelated work from other
//! threads in the process.

/// CPU seconds consumed so far by the current thread.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Runs `f` and returns its result with the thread CPU seconds it used.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = thread_cpu_seconds();
    let out = f();
    (out, (thread_cpu_seconds() - start).max(0.0))
}
