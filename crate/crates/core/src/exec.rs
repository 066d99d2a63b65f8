//! Deterministic block-parallel execution.
//!
//! Work is split into fixed-size blocks whose boundaries do not depend on the
//! thread count; results are combined in block order. Output is therefore
//! bitwise identical for any `threads >= 1`.

/// Runs `f` over `[0, n)` split into blocks of `block` items, on up to
/// `threads` OS threads, returning per-block results in block order.
pub fn run_blocks<T, F>(n: usize, block: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    assert!(block > 0);
    let ranges: Vec<std::ops::Range<usize>> =
        (0..n.div_ceil(block)).map(|b| (b * block)..((b + 1) * block).min(n)).collect();
    if threads <= 1 || ranges.len() <= 1 {
        return ranges.into_iter().map(f).collect();
    }
    let mut out: Vec<Option<T>> = (0..ranges.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<T>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(ranges.len()) {
            scope.spawn(|| loop {
                let b = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if b >= ranges.len() {
                    break;
                }
                let value = f(ranges[b].clone());
                **slots[b].lock().unwrap() = Some(value);
            });
        }
    });
    out.into_iter().map(|v| v.expect("all blocks computed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_results_for_any_thread_count() {
        let f = |r: std::ops::Range<usize>| r.map(|i| (i as f64).sqrt()).sum::<f64>();
        let one = run_blocks(10_000, 128, 1, f);
        let four = run_blocks(10_000, 128, 4, f);
        assert_eq!(one.len(), four.len());
        for (a, b) in one.iter().zip(&four) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn covers_all_items_once() {
        let blocks = run_blocks(1000, 7, 3, |r| r.len());
        assert_eq!(blocks.iter().sum::<usize>(), 1000);
    }
}
