//! Controller input features: normalized fitness, its histogram, and the
//! moving average of recent histograms.

use std::collections::VecDeque;

use crate::de::Population;

#[derive(Clone, Debug, PartialEq)]
pub struct StateInput {
    pub norm_fitness: Vec<f64>,
    pub hist: Vec<f64>,
    pub hist_avg: Vec<f64>,
}

impl StateInput {
    /// `[norm_fitness ‖ hist ‖ hist_avg]`, length `N + 2b`.
    pub fn as_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.norm_fitness.len() + 2 * self.hist.len());
        v.extend_from_slice(&self.norm_fitness);
        v.extend_from_slice(&self.hist);
        v.extend_from_slice(&self.hist_avg);
        v
    }
}

/// Window of the last `g` histograms.
#[derive(Clone, Debug)]
pub struct HistRing {
    window: usize,
    entries: VecDeque<Vec<f64>>,
}

impl HistRing {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "moving-average window must be positive");
        HistRing {
            window,
            entries: VecDeque::with_capacity(window),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Returns the mean of the stored histograms (zero when empty), then stores `h`.
    pub fn update_and_average(&mut self, h: &[f64]) -> Vec<f64> {
        let mut avg = vec![0.0; h.len()];
        if !self.entries.is_empty() {
            for e in &self.entries {
                for (a, v) in avg.iter_mut().zip(e) {
                    *a += v;
                }
            }
            let k = self.entries.len() as f64;
            avg.iter_mut().for_each(|a| *a /= k);
        }
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back(h.to_vec());
        avg
    }
}

/// Min–max normalization; a constant vector maps to zeros.
pub fn normalize_fitness(fitness: &[f64]) -> Vec<f64> {
    let (lo, hi) = fitness
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.0; fitness.len()];
    }
    fitness
        .iter()
        .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Frequencies over `bins` equal-width bins on `[0, 1]`, last bin right-inclusive.
pub fn histogram(norm: &[f64], bins: usize) -> Vec<f64> {
    assert!(bins > 0, "histogram needs at least one bin");
    let mut h = vec![0.0; bins];
    if norm.is_empty() {
        return h;
    }
    for &v in norm {
        let k = ((v * bins as f64).floor() as usize).min(bins - 1);
        h[k] += 1.0;
    }
    let total = norm.len() as f64;
    h.iter_mut().for_each(|c| *c /= total);
    h
}

pub fn assemble_state(pop: &Population, ring: &mut HistRing, bins: usize) -> StateInput {
    let norm_fitness = normalize_fitness(&pop.fitness);
    let hist = histogram(&norm_fitness, bins);
    let hist_avg = ring.update_and_average(&hist);
    StateInput {
        norm_fitness,
        hist,
        hist_avg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_fitness(&[0.0, 5.0, 10.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_fitness(&[3.0; 4]), vec![0.0; 4]);
        assert_eq!(normalize_fitness(&[2.0, 2.0, 4.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn histogram_examples() {
        let third = 1.0 / 3.0;
        assert!(close(
            &histogram(&[0.0, 0.5, 1.0], 5),
            &[third, 0.0, third, 0.0, third]
        ));
        assert_eq!(histogram(&[0.0; 7], 5), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(histogram(&[1.0], 4), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ring_starts_at_zero() {
        let mut ring = HistRing::new(3);
        assert_eq!(ring.update_and_average(&[0.2, 0.8]), vec![0.0, 0.0]);
        assert_eq!(ring.len(), 1);
    }

    #[test]
    fn ring_two_term_mean() {
        let mut ring = HistRing::new(2);
        ring.update_and_average(&[1.0, 0.0]);
        ring.update_and_average(&[0.0, 1.0]);
        assert_eq!(ring.update_and_average(&[0.3, 0.7]), vec![0.5, 0.5]);
    }

    #[test]
    fn ring_window_evicts_oldest() {
        let mut ring = HistRing::new(2);
        let (a, b, c) = ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5]);
        ring.update_and_average(&a);
        ring.update_and_average(&b);
        assert_eq!(ring.update_and_average(&c), vec![0.5, 0.5]);
        assert_eq!(ring.len(), 2);
        // a is gone: mean(b, c)
        assert_eq!(ring.update_and_average(&a), vec![0.25, 0.75]);
    }

    #[test]
    fn assembled_vector_layout() {
        let pop = Population::new(vec![vec![0.0]; 4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut ring = HistRing::new(5);
        let s = assemble_state(&pop, &mut ring, 5);
        assert_eq!(s.as_vector().len(), 4 + 10);
        assert_eq!(s.norm_fitness, vec![0.0; 4]);
        assert_eq!(s.hist, vec![1.0, 0.0, 0.0, 0.0, 0.0]);

        let mut r1 = HistRing::new(3);
        let mut r2 = HistRing::new(3);
        assert_eq!(
            assemble_state(&pop, &mut r1, 5),
            assemble_state(&pop, &mut r2, 5)
        );
    }
}
