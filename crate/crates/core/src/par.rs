//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on the rayon
//! pool; without it every call runs sequentially. Work items are always
//! independent and results are collected in input order, so outputs do not
//! depend on the worker count.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub fn for_each_mut<T: Send, F: Fn(usize, &mut T) + Sync + Send>(items: &mut [T], f: F) {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    }

    pub fn map<T: Sync, R: Send, F: Fn(usize, &T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    pub fn map_range<R: Send, F: Fn(usize) -> R + Sync + Send>(n: usize, f: F) -> Vec<R> {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn for_each_mut<T, F: Fn(usize, &mut T)>(items: &mut [T], f: F) {
        items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    }

    pub fn map<T, R, F: Fn(usize, &T) -> R>(items: &[T], f: F) -> Vec<R> {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    pub fn map_range<R, F: Fn(usize) -> R>(n: usize, f: F) -> Vec<R> {
        (0..n).map(f).collect()
    }
}

impl Exec {
    pub fn for_each_mut<T: Send, F: Fn(usize, &mut T) + Sync + Send>(self, items: &mut [T], f: F) {
        match self {
            Exec::Sequential => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
            Exec::Parallel => imp::for_each_mut(items, f),
        }
    }

    pub fn map<T: Sync, R: Send, F: Fn(usize, &T) -> R + Sync + Send>(self, items: &[T], f: F) -> Vec<R> {
        match self {
            Exec::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            Exec::Parallel => imp::map(items, f),
        }
    }

    pub fn map_range<R: Send, F: Fn(usize) -> R + Sync + Send>(self, n: usize, f: F) -> Vec<R> {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => imp::map_range(n, f),
        }
    }
}

/// Caps the global worker pool. Returns an error message if the pool was
/// already initialized; a no-op without the `parallel` feature.
pub fn init_global_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Runs `f` on a dedicated pool with `threads` workers (sequentially without
/// the `parallel` feature).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
