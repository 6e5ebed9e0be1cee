//! Restarted K-means against brute force: on small instances the best of
//! ten restarts should find the global minimum within-cluster sum of
//! squares almost every time.

use gfra_core::clustering::{kmeans_cluster, make_shortlist};
use gfra_core::scene::{AreaSpec, Deployment, Point2, RngStream};
use rand::Rng;

/// Minimum WCSS over every labeling of the points into at most k clusters.
fn exhaustive_best_wcss(points: &[Point2<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut w = 0.0;
        for c in 0..k {
            let members: Vec<&Point2<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let nf = members.len() as f64;
            let cx = members.iter().map(|p| p.x).sum::<f64>() / nf;
            let cy = members.iter().map(|p| p.y).sum::<f64>() / nf;
            w += members
                .iter()
                .map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2))
                .sum::<f64>();
        }
        best = best.min(w);
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] == k {
                labels[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

#[test]
fn best_of_ten_restarts_finds_the_global_optimum_on_small_instances() {
    let area = AreaSpec::new(1000.0).unwrap();
    let mut rng = RngStream::root(77).child("instances");
    let instances = 1000;
    let mut hits = 0;
    for _ in 0..instances {
        let n = rng.gen_range(2..=10usize);
        let k = rng.gen_range(1..=3usize.min(n));
        let positions: Vec<Point2<f64>> = (0..n)
            .map(|_| Point2::new(rng.gen::<f64>() * 1000.0, rng.gen::<f64>() * 1000.0))
            .collect();
        let deployment = Deployment::from_positions(area, positions.clone(), 1).unwrap();
        let energies: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let shortlist = make_shortlist(&energies, n, &deployment).unwrap();
        let clusters = kmeans_cluster(&shortlist, k, 10, &mut rng).unwrap();

        let oracle = exhaustive_best_wcss(shortlist.coords(), k);
        assert!(
            clusters.wcss >= oracle - 1e-9 * oracle.max(1.0),
            "restarted K-means reported {} below the true optimum {}",
            clusters.wcss,
            oracle
        );
        if clusters.wcss <= oracle + 1e-9 * oracle.max(1.0) {
            hits += 1;
        }
    }
    assert!(
        hits * 100 >= instances * 95,
        "only {hits}/{instances} instances reached the optimum"
    );
}
