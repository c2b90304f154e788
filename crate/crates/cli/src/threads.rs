use std::sync::atomic::{AtomicUsize, Ordering};

use koopman_pe_core::Parallelism;

/// Scoped worker threads pulling job indices from a shared counter. Results
/// come back in index order, so output never depends on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct Threads {
    n: usize,
}

impl Threads {
    pub fn new(n: usize) -> Self {
        Self { n: n.max(1) }
    }

    pub fn available() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn count(&self) -> usize {
        self.n
    }
}

impl Parallelism for Threads {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.n.min(n);
        if workers <= 1 {
            return (0..n).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= n {
                                break;
                            }
                            done.push((i, job(i)));
                        }
                        done
                    })
                })
                .collect();
            for h in handles {
                match h.join() {
                    Ok(done) => {
                        for (i, v) in done {
                            slots[i] = Some(v);
                        }
                    }
                    Err(panic) => std::panic::resume_unwind(panic),
                }
            }
        });
        slots.into_iter().map(|v| v.expect("every index is claimed once")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_index_order() {
        for threads in [1, 2, 7] {
            let out = Threads::new(threads).map(100, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
        assert!(Threads::new(4).map(0, |i| i).is_empty());
    }
}
