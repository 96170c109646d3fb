//! Worker-pool configuration shared by the assembly routines.

use rayon::prelude::*;

/// Execution knobs for assembly and evaluation.
///
/// `threads == Some(1)` runs everything on the calling thread. With
/// `deterministic` set, per-element contributions are computed in parallel
/// but scattered into the global vector in element order, so the result is
/// bitwise identical to the serial run for any thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub threads: Option<usize>,
    pub deterministic: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            threads: None,
            deterministic: true,
        }
    }
}

impl ExecOptions {
    pub fn serial() -> Self {
        Self {
            threads: Some(1),
            deterministic: true,
        }
    }

    pub fn is_serial(&self) -> bool {
        self.threads == Some(1)
    }

    /// Runs `op` inside a pool sized by `threads` (global pool when `None`).
    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        match self.threads {
            Some(n) if n > 1 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(op),
                Err(_) => op(),
            },
            _ => op(),
        }
    }
}

/// Scatter-adds per-element 4-vectors into a node vector of length `n_nodes`.
pub(crate) fn scatter_local(
    n_nodes: usize,
    elements: &[[usize; 4]],
    local: &[[f64; 4]],
    opts: ExecOptions,
) -> Vec<f64> {
    if opts.deterministic || opts.is_serial() {
        let mut b = vec![0.0; n_nodes];
        for (conn, vals) in elements.iter().zip(local) {
            for k in 0..4 {
                b[conn[k]] += vals[k];
            }
        }
        return b;
    }
    opts.install(|| {
        elements
            .par_iter()
            .zip(local.par_iter())
            .fold(
                || vec![0.0; n_nodes],
                |mut acc, (conn, vals)| {
                    for k in 0..4 {
                        acc[conn[k]] += vals[k];
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0; n_nodes],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    })
}

/// Maps `f` over `0..n` honouring the thread setting; output in index order.
pub(crate) fn map_indexed<T, F>(n: usize, opts: ExecOptions, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if opts.is_serial() {
        (0..n).map(f).collect()
    } else {
        opts.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
