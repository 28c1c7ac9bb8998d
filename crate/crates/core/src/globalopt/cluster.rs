use serde::{Deserialize, Serialize};

use crate::domain::distance;

/// A group of near-optimal points merged by single linkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Lowest-valued member.
    pub representative: Vec<f64>,
    pub value: f64,
    pub basin_hit_count: usize,
}

/// Single-linkage clustering at radius `delta_cluster` of the points whose
/// value is within `eps_value` of the best. Clusters come back sorted
/// lexicographically by representative.
pub fn cluster_minimizers(points: &[(Vec<f64>, f64)], eps_value: f64, delta_cluster: f64) -> Vec<Cluster> {
    let best = points.iter().map(|p| p.1).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Vec::new();
    }
    let kept: Vec<&(Vec<f64>, f64)> = points.iter().filter(|p| p.1 <= best + eps_value).collect();
    let n = kept.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if distance(&kept[i].0, &kept[j].0) <= delta_cluster {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<(usize, Cluster)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let (t, v) = kept[i];
        match clusters.iter_mut().find(|(r, _)| *r == root) {
            Some((_, c)) => {
                c.basin_hit_count += 1;
                if *v < c.value || (*v == c.value && lex_less(t, &c.representative)) {
                    c.value = *v;
                    c.representative = t.clone();
                }
            }
            None => clusters.push((root, Cluster { representative: t.clone(), value: *v, basin_hit_count: 1 })),
        }
    }
    let mut out: Vec<Cluster> = clusters.into_iter().map(|(_, c)| c).collect();
    out.sort_by(|a, b| {
        a.representative
            .iter()
            .zip(&b.representative)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
}

/// Number of maximal runs of consecutive grid indices with `value <= min + eps`.
pub fn sublevel_components(values: &[f64], eps: f64) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return 0;
    }
    let mut count = 0;
    let mut inside = false;
    for &v in values {
        let now = v <= min + eps;
        if now && !inside {
            count += 1;
        }
        inside = now;
    }
    count
}

/// Start index of each run counted by [`sublevel_components`], paired with
/// the grid index of the run's lowest value.
pub fn sublevel_runs(values: &[f64], eps: f64) -> Vec<(usize, usize)> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut inside = false;
    for (i, &v) in values.iter().enumerate() {
        let now = v <= min + eps;
        if now {
            if !inside {
                runs.push((i, i));
            } else if let Some(last) = runs.last_mut() {
                if v < values[last.1] {
                    last.1 = i;
                }
            }
        }
        inside = now;
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(xs: &[f64]) -> Vec<(Vec<f64>, f64)> {
        xs.iter().map(|&x| (vec![x], 0.0)).collect()
    }

    #[test]
    fn two_separated_groups() {
        let c = cluster_minimizers(&pts(&[1.918, 1.9181, -1.1196]), 1e-6, 0.01);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].representative, vec![-1.1196]);
        assert_eq!(c[1].basin_hit_count, 2);
    }

    #[test]
    fn single_point_single_cluster() {
        assert_eq!(cluster_minimizers(&pts(&[3.0]), 1e-6, 0.01).len(), 1);
    }

    #[test]
    fn single_linkage_chains() {
        assert_eq!(cluster_minimizers(&pts(&[0.0, 0.009, 0.018]), 1e-6, 0.01).len(), 1);
    }

    #[test]
    fn points_above_band_are_dropped() {
        let p = vec![(vec![0.0], 1.0), (vec![5.0], 1.0 + 1e-3)];
        assert_eq!(cluster_minimizers(&p, 1e-6, 0.01).len(), 1);
        assert_eq!(cluster_minimizers(&p, 1e-2, 0.01).len(), 2);
        assert!(cluster_minimizers(&[(vec![0.0], f64::INFINITY)], 1e-6, 0.01).is_empty());
    }

    #[test]
    fn representative_is_lowest_member() {
        let p = vec![(vec![0.0], 1e-7), (vec![0.005], 0.0)];
        let c = cluster_minimizers(&p, 1e-6, 0.01);
        assert_eq!(c[0].representative, vec![0.005]);
        assert_eq!(c[0].value, 0.0);
    }

    #[test]
    fn sublevel_examples() {
        assert_eq!(sublevel_components(&[0.0, 1.0, 0.0, 1.0, 0.0], 0.5), 3);
        assert_eq!(sublevel_components(&[3.0, 2.0, 1.0, 2.0, 3.0], 0.5), 1);
        let q: Vec<f64> = (0..101).map(|i| ((i as f64) / 50.0 - 1.3).powi(2)).collect();
        assert_eq!(sublevel_components(&q, 1e-6), 1);
        assert_eq!(sublevel_runs(&[0.0, 1.0, 0.1, 0.0, 1.0], 0.5), vec![(0, 0), (2, 3)]);
    }

    proptest! {
        #[test]
        fn clusters_are_order_insensitive(mut xs in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
            let a = cluster_minimizers(&pts(&xs), 1e-6, 0.1);
            xs.reverse();
            let b = cluster_minimizers(&pts(&xs), 1e-6, 0.1);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.representative, &y.representative);
                prop_assert_eq!(x.basin_hit_count, y.basin_hit_count);
            }
            for i in 0..a.len() {
                for j in (i + 1)..a.len() {
                    prop_assert!(distance(&a[i].representative, &a[j].representative) > 0.1);
                }
            }
        }
    }
}
