//! Exact McNemar test: a two-sided exact binomial sign test on the
//! discordant pairs.

/// p = min(1, 2 * sum_{k=max(b,c)}^{b+c} C(b+c, k) / 2^(b+c));
/// p = 1 when b + c = 0.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let m = b.max(c);
    // tail sum via the multiplicative recurrence
    // C(n,k-1) = C(n,k) * k / (n-k+1), walking down from k = n
    let mut term = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    let mut k = n;
    loop {
        tail += term;
        if k == m {
            break;
        }
        term = term * k as f64 / (n - k + 1) as f64;
        k -= 1;
    }
    (2.0 * tail).min(1.0)
}
