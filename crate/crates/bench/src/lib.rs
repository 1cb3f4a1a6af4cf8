//! Fixtures shared by the solver benchmarks.

use sideinfo_core::instance::{example1, example3_wz, EXAMPLE1_EPSILON};
use sideinfo_core::{Alphabet, ChannelInstance, CondKernel, WzSource};

/// Dense `n x n` channel whose rows favour the diagonal by different amounts.
pub fn skewed_kernel(n: usize) -> CondKernel {
    let x = Alphabet::new("X", n).expect("n > 0");
    let y = Alphabet::new("Y", n).expect("n > 0");
    let mut probs = Vec::with_capacity(n * n);
    for i in 0..n {
        let row: Vec<f64> =
            (0..n).map(|j| if i == j { 2.0 + 4.0 * i as f64 / n as f64 } else { 1.0 + 0.1 * j as f64 }).collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.iter().map(|w| w / total));
    }
    CondKernel::new(vec![x], vec![y], probs).expect("rows sum to one")
}

pub fn channel() -> ChannelInstance {
    example1(EXAMPLE1_EPSILON).expect("valid crossover")
}

/// Noisy binary description `w(v2|s2)`.
pub fn description(ch: &ChannelInstance) -> CondKernel {
    let v = Alphabet::new("V2", 2).expect("nonempty");
    CondKernel::from_fn(vec![ch.s2.clone()], vec![v], |g, o| if g[0] % 2 == o[0] { 0.85 } else { 0.15 })
        .expect("rows sum to one")
}

pub fn wz_source() -> WzSource {
    example3_wz()
}
