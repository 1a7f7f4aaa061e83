//! Complete-linkage agglomerative clustering and the permutation-matched
//! accuracy used by the simulation benchmarks.

use ndarray::Array2;

/// Complete-linkage hierarchical clustering of the matrix rows under
/// Euclidean distance, cut at `n_clusters`. Returns one cluster id in
/// `0..n_clusters` per row.
///
/// The naive O(n^3) merge loop is plenty for the desk-scale inputs here;
/// ties merge the lexicographically smallest pair, keeping results
/// deterministic.
pub fn complete_linkage_cut(rows: &Array2<f64>, n_clusters: usize) -> Vec<usize> {
    let n = rows.nrows();
    assert!(n_clusters >= 1 && n_clusters <= n);

    // Condensed symmetric distance matrix between active clusters.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = rows
                .row(i)
                .iter()
                .zip(rows.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    // members[c] lists the original rows of active cluster c.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut active: Vec<usize> = (0..n).collect();

    while active.len() > n_clusters {
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let d = dist[a * n + b];
                if d < best_d {
                    best_d = d;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        // Complete linkage: distance to the merged cluster is the max of the
        // distances to its parts.
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let d = dist[a * n + c].max(dist[b * n + c]);
            dist[a * n + c] = d;
            dist[c * n + a] = d;
        }
        let absorbed = members[b].take().expect("b active");
        members[a].as_mut().expect("a active").extend(absorbed);
        active.retain(|&c| c != b);
    }

    let mut labels = vec![0usize; n];
    for (cluster_id, &c) in active.iter().enumerate() {
        for &row in members[c].as_ref().expect("active cluster") {
            labels[row] = cluster_id;
        }
    }
    labels
}

/// Generates all permutations of `0..k` (k! of them, brute force).
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..k).collect();
    fn heap(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            heap(items, k - 1, out);
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    heap(&mut items, k, &mut out);
    out
}

/// Fraction of rows whose cluster matches the true group under the best
/// cluster-to-group relabeling (all `n_groups!` bijections tried).
///
/// `true_groups` must contain labels in `0..n_groups`.
pub fn clustering_accuracy(rows: &Array2<f64>, true_groups: &[usize], n_groups: usize) -> f64 {
    assert_eq!(rows.nrows(), true_groups.len());
    assert!(rows.nrows() >= n_groups);
    assert!(true_groups.iter().all(|&g| g < n_groups));
    let labels = complete_linkage_cut(rows, n_groups);

    // Contingency table cluster x group.
    let mut table = vec![0usize; n_groups * n_groups];
    for (&c, &g) in labels.iter().zip(true_groups) {
        table[c * n_groups + g] += 1;
    }
    let mut best = 0usize;
    for perm in permutations(n_groups) {
        let hits: usize = (0..n_groups).map(|c| table[c * n_groups + perm[c]]).sum();
        best = best.max(hits);
    }
    best as f64 / rows.nrows() as f64
}
