//! Binomial counts and lexicographic combination enumeration.

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Calls `f` with every `k`-subset of `[n]` in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Like [`for_each_combination`] restricted to subsets whose first element
/// is `first`.
pub fn for_each_combination_starting_at(n: usize, k: usize, first: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || first >= n || n - first < k {
        return;
    }
    let mut buf = Vec::with_capacity(k);
    for_each_combination(n - first - 1, k - 1, |rest| {
        buf.clear();
        buf.push(first);
        buf.extend(rest.iter().map(|&r| r + first + 1));
        f(&buf);
    });
}
