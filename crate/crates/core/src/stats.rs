//! Wilcoxon rank-sum tests, significance marks and the average performance
//! score (APS).

use std::fmt;
use std::io::Write;

use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::runner::ResultRow;

/// Both samples at or below this size use the exact permutation distribution.
pub const EXACT_LIMIT: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSum {
    /// Sum of the midranks of the first sample.
    pub statistic: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("rank-sum test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(invalid("rank-sum test got NaN"));
    }
    Ok(())
}

/// Doubled midranks of the pooled sample (integers), plus tie-group sizes.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end; doubled mean = start + 1 + end
        let r2 = (start + 1 + end) as u64;
        for &k in &order[start..end] {
            ranks[k] = r2;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

pub fn ranksum_test(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.len() <= EXACT_LIMIT && b.len() <= EXACT_LIMIT {
        ranksum_exact(a, b)
    } else {
        ranksum_approx(a, b)
    }
}

/// Exact two-sided p under the permutation distribution of the rank sum,
/// conditional on the observed ties: `min(1, 2·min(P(W ≤ w), P(W ≥ w)))`.
pub fn ranksum_exact(a: &[f64], b: &[f64]) -> Result<RankSum> {
    check(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = doubled_midranks(&pooled);
    let n1 = a.len();
    let w2: u64 = ranks[..n1].iter().sum();
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    // count[k][s]: subsets of size k with doubled rank sum s
    let mut count = vec![vec![0f64; width]; n1 + 1];
    count[0][0] = 1.0;
    for (seen, &r) in ranks.iter().enumerate() {
        let r = r as usize;
        for k in (1..=n1.min(seen + 1)).rev() {
            let (lower, upper) = count.split_at_mut(k);
            let (src, dst) = (&lower[k - 1], &mut upper[0]);
            for s in (r..width).rev() {
                dst[s] += src[s - r];
            }
        }
    }
    let dist = &count[n1];
    let total: f64 = dist.iter().sum();
    let w = w2 as usize;
    let lo: f64 = dist[..=w].iter().sum::<f64>() / total;
    let hi: f64 = dist[w..].iter().sum::<f64>() / total;
    Ok(RankSum {
        statistic: w2 as f64 / 2.0,
        p_two_sided: (2.0 * lo.min(hi)).min(1.0),
        exact: true,
    })
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn ranksum_approx(a: &[f64], b: &[f64]) -> Result<RankSum> {
    check(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let w = ranks[..a.len()].iter().sum::<u64>() as f64 / 2.0;
    let mean = n1 * (n + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = if n > 1.0 {
        n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    } else {
        0.0
    };
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(RankSum {
        statistic: w,
        p_two_sided: p,
        exact: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mark {
    /// First algorithm significantly lower error.
    Better,
    Worse,
    Similar,
}

impl Mark {
    pub fn symbol(self) -> &'static str {
        match self {
            Mark::Better => "+",
            Mark::Worse => "-",
            Mark::Similar => "≈",
        }
    }

    pub fn flip(self) -> Mark {
        match self {
            Mark::Better => Mark::Worse,
            Mark::Worse => Mark::Better,
            Mark::Similar => Mark::Similar,
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `≈` when `p ≥ alpha` (or the means coincide); otherwise the side with the
/// lower mean error is better.
pub fn significance_mark(p: f64, mean_a: f64, mean_b: f64, alpha: f64) -> Mark {
    if !(p < alpha) || mean_a == mean_b {
        Mark::Similar
    } else if mean_a < mean_b {
        Mark::Better
    } else {
        Mark::Worse
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mark of algorithm `a` against algorithm `b` on one function.
pub fn compare_samples(a: &[f64], b: &[f64], alpha: f64) -> Result<(f64, Mark)> {
    let p = ranksum_test(a, b)?.p_two_sided;
    Ok((p, significance_mark(p, mean(a), mean(b), alpha)))
}

/// Average performance score. `samples[k][i]` holds the final errors of
/// algorithm `i` on function `k`. Lower is better; each score lies in
/// `[0, m − 1]`.
pub fn aps_rank(samples: &[Vec<Vec<f64>>], alpha: f64) -> Result<Vec<f64>> {
    let m = samples
        .first()
        .map(Vec::len)
        .ok_or_else(|| invalid("APS needs at least one function"))?;
    let mut score = vec![0.0; m];
    for (k, row) in samples.iter().enumerate() {
        if row.len() != m || row.iter().any(Vec::is_empty) {
            return Err(invalid(format!("missing samples for function {k}")));
        }
        for i in 0..m {
            for j in (0..m).filter(|&j| j != i) {
                let (_, mark) = compare_samples(&row[j], &row[i], alpha)?;
                if mark == Mark::Better {
                    score[i] += 1.0;
                }
            }
        }
    }
    let q = samples.len() as f64;
    Ok(score.into_iter().map(|s| s / q).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Per-function statistics of every algorithm plus pairwise marks.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub functions: Vec<String>,
    pub algorithms: Vec<String>,
    /// `cells[function][algorithm]`
    pub cells: Vec<Vec<Cell>>,
    /// `marks[function][a][b]`: algorithm `a` against algorithm `b`.
    pub marks: Vec<Vec<Vec<Mark>>>,
    pub p_values: Vec<Vec<Vec<f64>>>,
    pub alpha: f64,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

impl ComparisonTable {
    /// Groups results by function and algorithm in order of first appearance.
    /// Every algorithm must have results on every function.
    pub fn from_results(rows: &[ResultRow], alpha: f64) -> Result<Self> {
        let functions = first_seen(rows.iter().map(|r| r.function_id.as_str()));
        let algorithms = first_seen(rows.iter().map(|r| r.algorithm_id.as_str()));
        let mut cells = Vec::with_capacity(functions.len());
        for f in &functions {
            let mut row = Vec::with_capacity(algorithms.len());
            for a in &algorithms {
                let samples: Vec<f64> = rows
                    .iter()
                    .filter(|r| &r.function_id == f && &r.algorithm_id == a)
                    .map(|r| r.best_error)
                    .collect();
                if samples.is_empty() {
                    return Err(invalid(format!("no results for {a} on {f}")));
                }
                row.push(Cell {
                    mean: mean(&samples),
                    std: std_dev(&samples),
                    samples,
                });
            }
            cells.push(row);
        }
        let m = algorithms.len();
        let mut marks = Vec::with_capacity(functions.len());
        let mut p_values = Vec::with_capacity(functions.len());
        for row in &cells {
            let mut mk = vec![vec![Mark::Similar; m]; m];
            let mut pv = vec![vec![1.0; m]; m];
            for a in 0..m {
                for b in a + 1..m {
                    let (p, mark) = compare_samples(&row[a].samples, &row[b].samples, alpha)?;
                    mk[a][b] = mark;
                    mk[b][a] = mark.flip();
                    pv[a][b] = p;
                    pv[b][a] = p;
                }
            }
            marks.push(mk);
            p_values.push(pv);
        }
        Ok(ComparisonTable {
            functions,
            algorithms,
            cells,
            marks,
            p_values,
            alpha,
        })
    }

    pub fn algorithm_index(&self, id: &str) -> Result<usize> {
        self.algorithms
            .iter()
            .position(|a| a == id)
            .ok_or_else(|| invalid(format!("algorithm `{id}` not in results")))
    }

    /// `(+, −, ≈)` counts of `reference` against each algorithm.
    pub fn tally(&self, reference: usize) -> Vec<(usize, usize, usize)> {
        (0..self.algorithms.len())
            .map(|j| {
                let mut t = (0, 0, 0);
                for mk in &self.marks {
                    match mk[reference][j] {
                        Mark::Better => t.0 += 1,
                        Mark::Worse => t.1 += 1,
                        Mark::Similar => t.2 += 1,
                    }
                }
                t
            })
            .collect()
    }

    pub fn aps(&self) -> Result<Vec<f64>> {
        let samples: Vec<Vec<Vec<f64>>> = self
            .cells
            .iter()
            .map(|row| row.iter().map(|c| c.samples.clone()).collect())
            .collect();
        aps_rank(&samples, self.alpha)
    }

    /// Columns: function_id, algorithm_id, mean, std, reference, p, mark.
    /// The mark reads as "reference against this algorithm"; the reference's
    /// own rows leave p and mark empty.
    pub fn write_csv<W: Write>(&self, out: W, reference: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "function_id",
            "algorithm_id",
            "mean",
            "std",
            "reference",
            "p",
            "mark",
        ])?;
        let ref_id = &self.algorithms[reference];
        for (k, f) in self.functions.iter().enumerate() {
            for (j, a) in self.algorithms.iter().enumerate() {
                let c = &self.cells[k][j];
                let (p, mark) = if j == reference {
                    (String::new(), String::new())
                } else {
                    (
                        self.p_values[k][reference][j].to_string(),
                        self.marks[k][reference][j].symbol().to_string(),
                    )
                };
                w.write_record([
                    f.clone(),
                    a.clone(),
                    c.mean.to_string(),
                    c.std.to_string(),
                    ref_id.clone(),
                    p,
                    mark,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text table: one row per function, `mean±std mark` per
    /// algorithm, then a `+/−/≈` tally row.
    pub fn render_text(&self, reference: usize) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["function".to_string()];
        header.extend(self.algorithms.iter().cloned());
        rows.push(header);
        for (k, f) in self.functions.iter().enumerate() {
            let mut row = vec![f.clone()];
            for j in 0..self.algorithms.len() {
                let c = &self.cells[k][j];
                let mark = if j == reference {
                    ""
                } else {
                    self.marks[k][reference][j].symbol()
                };
                row.push(
                    format!("{:.3e}±{:.3e} {mark}", c.mean, c.std)
                        .trim_end()
                        .to_string(),
                );
            }
            rows.push(row);
        }
        let mut tally = vec!["+/-/≈".to_string()];
        for (j, (b, w, s)) in self.tally(reference).into_iter().enumerate() {
            tally.push(if j == reference {
                "-".to_string()
            } else {
                format!("{b}/{w}/{s}")
            });
        }
        rows.push(tally);

        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut text = format!(
            "reference: {} (+ reference better, - worse, ≈ no significant difference at {})\n",
            self.algorithms[reference], self.alpha
        );
        for r in rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            text.push_str(line.join("  ").trim_end());
            text.push('\n');
        }
        text
    }

    /// Columns: algorithm_id, aps, rank (1 = best; ties share the lower rank).
    pub fn write_aps_csv<W: Write>(&self, out: W) -> Result<()> {
        let aps = self.aps()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm_id", "aps", "rank"])?;
        let mut order: Vec<usize> = (0..aps.len()).collect();
        order.sort_by(|&i, &j| aps[i].total_cmp(&aps[j]));
        for &i in &order {
            let rank = 1 + aps.iter().filter(|&&s| s < aps[i]).count();
            w.write_record([
                self.algorithms[i].clone(),
                aps[i].to_string(),
                rank.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_separated_triples() {
        let r = ranksum_exact(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.p_two_sided, 0.1);
        assert_eq!(r.statistic, 6.0);
    }

    #[test]
    fn identical_samples_give_one() {
        let a = [0.3, 0.1, 0.2, 0.2];
        assert_eq!(ranksum_exact(&a, &a).unwrap().p_two_sided, 1.0);
        assert_eq!(
            ranksum_exact(&[5.0; 4], &[5.0; 3]).unwrap().p_two_sided,
            1.0
        );
        assert_eq!(
            ranksum_approx(&[5.0; 4], &[5.0; 3]).unwrap().p_two_sided,
            1.0
        );
    }

    #[test]
    fn midranks_with_ties() {
        let (r, t) = doubled_midranks(&[2.0, 1.0, 2.0, 3.0]);
        assert_eq!(r, vec![5, 2, 5, 8]);
        assert_eq!(t, vec![1, 2, 1]);
    }

    #[test]
    fn dispatch_threshold() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = (0..11).map(|i| f64::from(i) + 0.5).collect();
        assert!(ranksum_test(&a, &a).unwrap().exact);
        assert!(!ranksum_test(&a, &b).unwrap().exact);
    }

    #[test]
    fn approx_matches_known_value() {
        // W = 6, mean 10.5, var 5.25: z = (4.5 − 0.5)/√5.25
        let r = ranksum_approx(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        let z: f64 = 4.0 / 5.25f64.sqrt();
        assert!((r.p_two_sided - erfc(z / 2f64.sqrt())).abs() < 1e-15);
        assert!((r.p_two_sided - 0.080856).abs() < 1e-5);
    }

    #[test]
    fn exact_and_approx_agree_at_the_threshold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let shift = rng.random_range(0.0..1.5);
            let a: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.random::<f64>() + shift).collect();
            let e = ranksum_exact(&a, &b).unwrap().p_two_sided;
            let n = ranksum_approx(&a, &b).unwrap().p_two_sided;
            assert!((e - n).abs() < 0.02, "exact {e} approx {n}");
        }
    }

    #[test]
    fn empty_or_nan_rejected() {
        assert!(ranksum_test(&[], &[1.0]).is_err());
        assert!(ranksum_test(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn marks() {
        assert_eq!(significance_mark(0.5, 1.0, 2.0, 0.05), Mark::Similar);
        assert_eq!(significance_mark(0.01, 1.0, 2.0, 0.05), Mark::Better);
        assert_eq!(significance_mark(0.01, 3.0, 2.0, 0.05), Mark::Worse);
        assert_eq!(significance_mark(0.05, 1.0, 2.0, 0.05), Mark::Similar);
    }

    #[test]
    fn aps_cases() {
        let s: Vec<f64> = (0..6).map(f64::from).collect();
        let same = vec![vec![s.clone(), s.clone(), s.clone()]; 2];
        assert_eq!(aps_rank(&same, 0.05).unwrap(), vec![0.0; 3]);

        let shift = |d: f64| s.iter().map(|v| v + d).collect::<Vec<f64>>();
        let chain = vec![vec![shift(0.0), shift(10.0), shift(20.0)]; 3];
        assert_eq!(aps_rank(&chain, 0.05).unwrap(), vec![0.0, 1.0, 2.0]);

        let missing = vec![vec![s.clone(), vec![]]];
        assert!(aps_rank(&missing, 0.05).is_err());
        let ragged = vec![vec![s.clone(), s.clone()], vec![s.clone()]];
        assert!(aps_rank(&ragged, 0.05).is_err());
    }

    fn rows(cells: &[(&str, &str, &[f64])]) -> Vec<ResultRow> {
        cells
            .iter()
            .flat_map(|(a, f, xs)| {
                xs.iter().map(move |&e| ResultRow {
                    algorithm_id: a.to_string(),
                    function_id: f.to_string(),
                    seed: 0,
                    best_error: e,
                    evals_used: 1,
                })
            })
            .collect()
    }

    #[test]
    fn table_marks_are_antisymmetric() {
        let lo = [1.0, 2.0, 3.0, 4.0, 5.0];
        let hi = [11.0, 12.0, 13.0, 14.0, 15.0];
        let data = rows(&[
            ("lde", "f1", &lo),
            ("base", "f1", &hi),
            ("lde", "f2", &hi),
            ("base", "f2", &lo),
            ("lde", "f3", &lo),
            ("base", "f3", &lo),
        ]);
        let t = ComparisonTable::from_results(&data, 0.05).unwrap();
        assert_eq!(t.functions, ["f1", "f2", "f3"]);
        assert_eq!(t.marks[0][0][1], Mark::Better);
        assert_eq!(t.marks[0][1][0], Mark::Worse);
        assert_eq!(t.marks[1][0][1], Mark::Worse);
        assert_eq!(t.marks[2][0][1], Mark::Similar);
        assert_eq!(t.tally(0)[1], (1, 1, 1));
        assert_eq!(t.aps().unwrap(), vec![1.0 / 3.0, 1.0 / 3.0]);

        let text = t.render_text(0);
        assert!(text.contains("1/1/1"));
        let mut buf = Vec::new();
        t.write_csv(&mut buf, 0).unwrap();
        let csv_text = String::from_utf8(buf).unwrap();
        assert_eq!(csv_text.lines().count(), 1 + 6);
        let mut aps_buf = Vec::new();
        t.write_aps_csv(&mut aps_buf).unwrap();
        assert!(String::from_utf8(aps_buf)
            .unwrap()
            .contains("lde,0.3333333333333333,1"));
    }

    #[test]
    fn table_requires_every_cell() {
        let data = rows(&[("a", "f1", &[1.0]), ("b", "f2", &[1.0])]);
        assert!(ComparisonTable::from_results(&data, 0.05).is_err());
    }

    #[test]
    fn descriptive_stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(std_dev(&[2.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
