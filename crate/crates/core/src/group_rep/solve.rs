//! Enumeration of exponent tuples satisfying the relator equations.
//!
//! The equations leave `t_0`, `t_1`, `t_2` and `m_1..m_4` free; everything
//! else follows: `t_3 = -t_1`, `t_4 = -t_2`, `n_1 = m_1 - t_2`,
//! `n_2 = m_2 + t_1`, `n_3 = m_3 + t_2`, `n_4 = m_4 - t_1`.

use std::ops::RangeInclusive;

use super::rep::ExponentTuple;

/// Inclusive search range for every exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentRanges {
    pub t0: RangeInclusive<i64>,
    pub t: [RangeInclusive<i64>; 4],
    pub m: [RangeInclusive<i64>; 4],
    pub n: [RangeInclusive<i64>; 4],
}

impl ExponentRanges {
    /// The same range for all thirteen exponents.
    pub fn uniform(r: RangeInclusive<i64>) -> Self {
        Self {
            t0: r.clone(),
            t: std::array::from_fn(|_| r.clone()),
            m: std::array::from_fn(|_| r.clone()),
            n: std::array::from_fn(|_| r.clone()),
        }
    }

    pub fn contains(&self, e: &ExponentTuple) -> bool {
        self.t0.contains(&e.t0)
            && (0..4).all(|i| {
                self.t[i].contains(&e.t[i])
                    && self.m[i].contains(&e.m[i])
                    && self.n[i].contains(&e.n[i])
            })
    }
}

/// `(m, n)` pairs in range with `m - n = diff`.
fn pairs(m: &RangeInclusive<i64>, n: &RangeInclusive<i64>, diff: i64) -> Vec<(i64, i64)> {
    m.clone()
        .filter(|&mi| n.contains(&(mi - diff)))
        .map(|mi| (mi, mi - diff))
        .collect()
}

/// Lazily enumerates all consistent tuples inside `r`, ordered
/// lexicographically by `(t_1, t_2, t_0, m_1, m_2, m_3, m_4)`.
pub fn solve_exponents(r: &ExponentRanges) -> impl Iterator<Item = ExponentTuple> + '_ {
    let t1s = r.t[0].clone().filter(|t1| r.t[2].contains(&-t1));
    t1s.flat_map(move |t1| {
        let t2s = r.t[1].clone().filter(|t2| r.t[3].contains(&-t2));
        t2s.flat_map(move |t2| {
            let p = [
                pairs(&r.m[0], &r.n[0], t2),
                pairs(&r.m[1], &r.n[1], -t1),
                pairs(&r.m[2], &r.n[2], -t2),
                pairs(&r.m[3], &r.n[3], t1),
            ];
            let total: usize = p.iter().map(Vec::len).product();
            r.t0.clone().flat_map(move |t0| {
                let p = p.clone();
                (0..total).map(move |mut k| {
                    let mut m = [0; 4];
                    let mut n = [0; 4];
                    for i in (0..4).rev() {
                        let (mi, ni) = p[i][k % p[i].len()];
                        k /= p[i].len();
                        m[i] = mi;
                        n[i] = ni;
                    }
                    ExponentTuple {
                        t0,
                        t: [t1, t2, -t1, -t2],
                        m,
                        n,
                    }
                })
            })
        })
    })
}

/// Number of solutions without enumerating them.
pub fn count_solutions(r: &ExponentRanges) -> u64 {
    let mut total = 0u64;
    for t1 in r.t[0].clone().filter(|t1| r.t[2].contains(&-t1)) {
        for t2 in r.t[1].clone().filter(|t2| r.t[3].contains(&-t2)) {
            total += [
                pairs(&r.m[0], &r.n[0], t2),
                pairs(&r.m[1], &r.n[1], -t1),
                pairs(&r.m[2], &r.n[2], -t2),
                pairs(&r.m[3], &r.n[3], t1),
            ]
            .iter()
            .map(|p| p.len() as u64)
            .product::<u64>();
        }
    }
    total * r.t0.clone().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_range_gives_zero_tuple() {
        let all: Vec<_> = solve_exponents(&ExponentRanges::uniform(0..=0)).collect();
        assert_eq!(all, [ExponentTuple::default()]);
    }

    #[test]
    fn outputs_satisfy_equations() {
        let r = ExponentRanges::uniform(-2..=2);
        let mut n = 0;
        for e in solve_exponents(&r) {
            e.validate().unwrap();
            assert!(r.contains(&e));
            assert_eq!(e.t[0] + e.t[2], 0);
            assert_eq!(e.t[1] + e.t[3], 0);
            n += 1;
        }
        assert_eq!(n, count_solutions(&r));
        // 5 * (5^2 + 2(4^2 + 3^2))^2
        assert_eq!(n, 5 * 75 * 75);
    }

    #[test]
    fn full_count_formula() {
        let r = ExponentRanges::uniform(-6..=6);
        let per_t: u64 = (-6i64..=6).map(|s| (13 - s.unsigned_abs()).pow(2)).sum();
        assert_eq!(count_solutions(&r), 13 * per_t * per_t);
        assert_eq!(count_solutions(&r), 21_532_797);
    }

    #[test]
    fn reference_tuple_is_found() {
        let r = ExponentRanges::uniform(-1..=6);
        assert!(solve_exponents(&r).any(|e| e == ExponentTuple::reference()));
    }
}
