//! Sized worker pools. `workers == 0` means the rayon default.

use rayon::ThreadPoolBuilder;

pub fn install<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
