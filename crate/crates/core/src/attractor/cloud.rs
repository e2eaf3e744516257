//! Finite point clouds in `ℝ^d` and the metric diagnostics on them.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

/// A finite set of points, stored sorted lexicographically without duplicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cloud {
    dim: usize,
    coords: Vec<f64>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl Cloud {
    /// Canonicalises `coords` (row-major, `dim` per point).
    pub fn new(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0, "ragged point buffer");
        let mut pts: Vec<&[f64]> = coords.chunks_exact(dim).collect();
        pts.sort_by(|a, b| lex(a, b));
        pts.dedup();
        let coords = pts.concat();
        Cloud { dim, coords }
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Self {
        Cloud::new(dim, points.iter().flat_map(|p| p.iter().copied()).collect())
    }

    pub fn singleton(point: &[f64]) -> Self {
        Cloud { dim: point.len(), coords: point.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for (ci, v) in c.iter_mut().zip(p) {
                *ci += v;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    pub fn diameter(&self) -> f64 {
        if self.dim == 1 {
            return if self.is_empty() { 0.0 } else { self.coords[self.coords.len() - 1] - self.coords[0] };
        }
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                d = d.max(dist(self.point(i), self.point(j)));
            }
        }
        d
    }

    /// Applies `f` pointwise and re-canonicalises.
    pub fn map<F: FnMut(&[f64], &mut [f64])>(&self, mut f: F) -> Cloud {
        let mut out = vec![0.0; self.coords.len()];
        for (src, dst) in self.coords.chunks_exact(self.dim).zip(out.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        Cloud::new(self.dim, out)
    }
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max_{a∈A} min_{b∈B} |a − b|`.
fn directed(a: &Cloud, b: &Cloud) -> f64 {
    let mut worst: f64 = 0.0;
    if a.dim == 1 {
        let bs = &b.coords;
        for &x in &a.coords {
            let i = bs.partition_point(|v| *v < x);
            let mut m = f64::INFINITY;
            if i < bs.len() {
                m = m.min((x - bs[i]).abs());
            }
            if i > 0 {
                m = m.min((x - bs[i - 1]).abs());
            }
            worst = worst.max(m);
        }
        return worst;
    }
    for p in a.points() {
        let m = b.points().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
        worst = worst.max(m);
    }
    worst
}

/// Hausdorff distance between non-empty clouds.
pub fn hausdorff_distance(a: &Cloud, b: &Cloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("Hausdorff distance of an empty cloud".into()));
    }
    if a.dim != b.dim {
        return Err(Error::Domain(format!("dimension mismatch {} vs {}", a.dim, b.dim)));
    }
    Ok(directed(a, b).max(directed(b, a)))
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters at radius `c` (points closer than or at `c` chain
/// together); returns the member indices of each cluster in order of first member.
pub fn clusters(cloud: &Cloud, c: f64) -> Vec<Vec<usize>> {
    let n = cloud.len();
    let mut parent: Vec<usize> = (0..n).collect();
    if cloud.dim == 1 {
        // sorted: only neighbours can link
        for i in 1..n {
            if cloud.coords[i] - cloud.coords[i - 1] <= c {
                let r = find(&mut parent, i - 1);
                parent[i] = r;
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                if dist(cloud.point(i), cloud.point(j)) <= c {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Centroids of the single-linkage clusters.
pub fn cluster_centroids(cloud: &Cloud, c: f64) -> Cloud {
    let d = cloud.dim;
    let mut coords = Vec::new();
    for g in clusters(cloud, c) {
        let mut m = vec![0.0; d];
        for &i in &g {
            for (mi, v) in m.iter_mut().zip(cloud.point(i)) {
                *mi += v;
            }
        }
        coords.extend(m.iter().map(|v| v / g.len() as f64));
    }
    Cloud::new(d, coords)
}

/// Minimum pairwise distance; `+∞` for a single point.
pub fn min_pairwise(cloud: &Cloud) -> f64 {
    let mut best = f64::INFINITY;
    if cloud.dim == 1 {
        for w in cloud.coords.windows(2) {
            best = best.min(w[1] - w[0]);
        }
        return best;
    }
    for i in 0..cloud.len() {
        for j in i + 1..cloud.len() {
            best = best.min(dist(cloud.point(i), cloud.point(j)));
        }
    }
    best
}

/// Number of open balls of radius `radius`, centred at cloud points, used by a
/// greedy cover.
///
/// In one dimension each ball is centred at the cloud point farthest to the
/// right that still covers the leftmost uncovered point, which makes the count
/// minimal. In higher dimensions the greedy count is an upper bound.
pub fn covering_number(cloud: &Cloud, radius: f64) -> usize {
    if cloud.is_empty() {
        return 0;
    }
    if radius <= 0.0 {
        return cloud.len();
    }
    if cloud.dim == 1 {
        let p = &cloud.coords;
        let n = p.len();
        let mut count = 0;
        let mut i = 0;
        while i < n {
            let x = p[i];
            let mut c = i;
            while c + 1 < n && p[c + 1] - x < radius {
                c += 1;
            }
            let centre = p[c];
            let mut j = c + 1;
            while j < n && p[j] - centre < radius {
                j += 1;
            }
            count += 1;
            i = j;
        }
        return count;
    }
    let n = cloud.len();
    let mut covered = vec![false; n];
    let mut count = 0;
    for i in 0..n {
        if covered[i] {
            continue;
        }
        count += 1;
        let c = cloud.point(i);
        for j in i..n {
            if !covered[j] && dist(c, cloud.point(j)) < radius {
                covered[j] = true;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix;

    fn c1(v: &[f64]) -> Cloud {
        Cloud::new(1, v.to_vec())
    }

    #[test]
    fn canonical_form() {
        let c = c1(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(c.len(), 3);
        assert_eq!(c.point(0), &[1.0]);
        let c = Cloud::new(2, vec![1.0, 5.0, 0.0, 9.0, 1.0, 2.0]);
        assert_eq!(c.point(0), &[0.0, 9.0]);
        assert_eq!(c.point(1), &[1.0, 2.0]);
    }

    #[test]
    fn hausdorff_examples() {
        let a = c1(&[0.0, 0.5]);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&c1(&[0.0]), &c1(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(hausdorff_distance(&c1(&[]), &a).is_err());
    }

    #[test]
    fn hausdorff_matches_double_loop() {
        let mut rng = SplitMix::new(5);
        for d in [1usize, 2] {
            let a: Vec<f64> = (0..50 * d).map(|_| rng.next_f64()).collect();
            let b: Vec<f64> = (0..50 * d).map(|_| rng.next_f64()).collect();
            let (ca, cb) = (Cloud::new(d, a.clone()), Cloud::new(d, b.clone()));
            let brute = |x: &[f64], y: &[f64]| {
                let mut w: f64 = 0.0;
                for p in x.chunks(d) {
                    let mut m = f64::INFINITY;
                    for q in y.chunks(d) {
                        m = m.min(dist(p, q));
                    }
                    w = w.max(m);
                }
                w
            };
            assert_eq!(hausdorff_distance(&ca, &cb).unwrap(), brute(&a, &b).max(brute(&b, &a)));
        }
    }

    #[test]
    fn covering_examples() {
        assert_eq!(covering_number(&c1(&[0.3]), 1e-9), 1);
        assert_eq!(covering_number(&c1(&[0.0, 1.0]), 0.4), 2);
        assert_eq!(covering_number(&c1(&[0.0, 1.0]), 1.5), 1);
        // open balls
        assert_eq!(covering_number(&c1(&[0.0, 1.0]), 1.0), 2);
    }

    /// Minimal number of cloud-centred open balls covering a sorted 1-d cloud,
    /// by dynamic programming over prefixes.
    fn exact_cover(p: &[f64], r: f64) -> usize {
        let n = p.len();
        let mut best = vec![usize::MAX; n + 1];
        best[0] = 0;
        for end in 1..=n {
            for c in 0..n {
                // smallest start covered by a ball at c
                let lo = (0..n).find(|&i| (p[i] - p[c]).abs() < r).unwrap();
                let hi = (0..n).rev().find(|&i| (p[i] - p[c]).abs() < r).unwrap() + 1;
                if lo < end && end <= hi && best[lo] != usize::MAX {
                    best[end] = best[end].min(best[lo] + 1);
                }
            }
        }
        best[n]
    }

    #[test]
    fn covering_matches_exact_interval_cover() {
        let mut rng = SplitMix::new(11);
        for trial in 0..20 {
            let v: Vec<f64> = (0..100).map(|_| rng.next_f64()).collect();
            let c = c1(&v);
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            for r in [0.05, 0.013, 0.2] {
                assert_eq!(covering_number(&c, r), exact_cover(&sorted, r), "trial {trial} r {r}");
            }
        }
    }

    #[test]
    fn clustering_merges_jitter() {
        let c = c1(&[2.0, 2.0 + 1e-9, -2.0, -2.0 - 3e-10]);
        let cc = cluster_centroids(&c, 1e-6);
        assert_eq!(cc.len(), 2);
        assert!((min_pairwise(&cc) - 4.0).abs() < 1e-8);
        assert_eq!(min_pairwise(&c1(&[1.0])), f64::INFINITY);
        let c2 = Cloud::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 5.0, 5.0]);
        assert_eq!(clusters(&c2, 0.6).len(), 2);
    }
}
