//! AP selection for collided devices.
//!
//! When an estimated number of devices k > 1 share a preamble, the resolver
//! shortlists the APs with the largest receive energies and partitions them
//! into k spatial clusters with K-means on the AP coordinates. Each collided
//! device is then served by one cluster. Simpler selections (all APs, the
//! strongest few APs, or a genie that knows the true gains) live here too so
//! experiments can compare them.

use crate::channel::LinkGains;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::scene::{Deployment, Point2};
use rand::Rng;

/// The candidate APs considered for clustering, ordered by decreasing
/// receive energy (ties broken toward the lower AP index).
#[derive(Clone, Debug)]
pub struct ApShortlist<T> {
    indices: Vec<usize>,
    coords: Vec<Point2<T>>,
}

impl<T: Scalar> ApShortlist<T> {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn coords(&self) -> &[Point2<T>] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Indices of the `count` largest energies, decreasing, ties toward the
/// lower index.
pub fn top_energy_aps<T: Scalar>(energy: &[T], count: usize) -> Vec<usize> {
    let count = count.min(energy.len());
    let mut order: Vec<usize> = (0..energy.len()).collect();
    order.sort_by(|&a, &b| {
        energy[b]
            .partial_cmp(&energy[a])
            .expect("energies must not be NaN")
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order
}

/// Shortlist the strongest APs together with their coordinates.
pub fn make_shortlist<T: Scalar>(
    energy: &[T],
    count: usize,
    deployment: &Deployment<T>,
) -> Result<ApShortlist<T>> {
    if energy.len() != deployment.num_aps() {
        return Err(invalid(format!(
            "energy vector has {} entries for {} APs",
            energy.len(),
            deployment.num_aps()
        )));
    }
    if count == 0 {
        return Err(invalid("shortlist must keep at least one AP"));
    }
    let indices = top_energy_aps(energy, count);
    let coords = indices.iter().map(|&i| deployment.position(i)).collect();
    Ok(ApShortlist { indices, coords })
}

/// A K-means partition of a shortlist. `assignments[i]` is the cluster of
/// shortlist entry i; centroids are in cluster-index order.
#[derive(Clone, Debug)]
pub struct ClusterSet<T> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Point2<T>>,
    pub wcss: T,
    shortlist: ApShortlist<T>,
}

impl<T: Scalar> ClusterSet<T> {
    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn shortlist(&self) -> &ApShortlist<T> {
        &self.shortlist
    }

    /// Global AP indices of one cluster, ascending.
    pub fn cluster_aps(&self, cluster: usize) -> Vec<usize> {
        let mut aps: Vec<usize> = self
            .assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| self.shortlist.indices()[i])
            .collect();
        aps.sort_unstable();
        aps
    }

    /// CSV with header `cluster_id,ap_index,x,y`, rows ordered by cluster
    /// then AP index.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("cluster_id,ap_index,x,y\n");
        for c in 0..self.num_clusters() {
            for (i, &assign) in self.assignments.iter().enumerate() {
                if assign == c {
                    let ap = self.shortlist.indices()[i];
                    let p = self.shortlist.coords()[i];
                    out.push_str(&format!("{c},{ap},{},{}\n", p.x, p.y));
                }
            }
        }
        out
    }
}

fn nearest_centroid<T: Scalar>(p: Point2<T>, centroids: &[Point2<T>]) -> usize {
    let mut best = 0usize;
    let mut best_d = p.dist_sq(centroids[0]);
    for (c, &cen) in centroids.iter().enumerate().skip(1) {
        let d = p.dist_sq(cen);
        // strict < keeps ties at the lower cluster index
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn wcss_of<T: Scalar>(points: &[Point2<T>], assignments: &[usize], centroids: &[Point2<T>]) -> T {
    points
        .iter()
        .zip(assignments)
        .map(|(&p, &c)| p.dist_sq(centroids[c]))
        .sum()
}

/// One Lloyd descent from explicit initial centroids. Returns assignments,
/// centroids, and the WCSS after every update step (non-increasing).
pub(crate) fn lloyd<T: Scalar>(
    points: &[Point2<T>],
    mut centroids: Vec<Point2<T>>,
) -> (Vec<usize>, Vec<Point2<T>>, Vec<T>) {
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    // WCSS strictly decreases between distinct assignment states, so this
    // terminates; the bound is a guard against pathological cycling only
    for _iter in 0..1000 {
        let mut next: Vec<usize> = points
            .iter()
            .map(|&p| nearest_centroid(p, &centroids))
            .collect();

        // empty-cluster repair: move the centroid onto the point farthest
        // from its own centroid, then reassign
        loop {
            let mut counts = vec![0usize; k];
            for &c in &next {
                counts[c] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let (far_idx, _) = points
                .iter()
                .enumerate()
                .map(|(i, &p)| (i, p.dist_sq(centroids[next[i]])))
                .fold((0usize, T::neg_infinity()), |acc, (i, d)| {
                    if d > acc.1 {
                        (i, d)
                    } else {
                        acc
                    }
                });
            centroids[empty] = points[far_idx];
            next = points
                .iter()
                .map(|&p| nearest_centroid(p, &centroids))
                .collect();
        }

        let converged = next == assignments;
        assignments = next;
        for c in 0..k {
            let members: Vec<Point2<T>> = points
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == c)
                .map(|(&p, _)| p)
                .collect();
            let n = T::from_usize(members.len()).unwrap();
            let mut mean = Point2::new(T::zero(), T::zero());
            for p in &members {
                mean.x += p.x;
                mean.y += p.y;
            }
            centroids[c] = Point2::new(mean.x / n, mean.y / n);
        }
        history.push(wcss_of(points, &assignments, &centroids));
        if converged {
            break;
        }
    }
    (assignments, centroids, history)
}

/// K-means over a shortlist: `restarts` random initializations (k distinct
/// shortlist points each), keeping the partition with the lowest WCSS.
pub fn kmeans_cluster<T: Scalar, R: Rng + ?Sized>(
    shortlist: &ApShortlist<T>,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<ClusterSet<T>> {
    if k == 0 {
        return Err(invalid("cluster count must be at least 1"));
    }
    if restarts == 0 {
        return Err(invalid("need at least one restart"));
    }
    if k > shortlist.len() {
        return Err(invalid(format!(
            "cannot split {} APs into {} clusters",
            shortlist.len(),
            k
        )));
    }
    let points = shortlist.coords();
    let mut best: Option<(Vec<usize>, Vec<Point2<T>>, T)> = None;
    for _ in 0..restarts {
        let init: Vec<Point2<T>> = rand::seq::index::sample(rng, points.len(), k)
            .into_iter()
            .map(|i| points[i])
            .collect();
        let (assignments, centroids, history) = lloyd(points, init);
        let wcss = *history.last().unwrap();
        // strict < keeps the earliest restart on ties
        if best.as_ref().map_or(true, |(_, _, w)| wcss < *w) {
            best = Some((assignments, centroids, wcss));
        }
    }
    let (assignments, centroids, wcss) = best.unwrap();
    Ok(ClusterSet {
        assignments,
        centroids,
        wcss,
        shortlist: shortlist.clone(),
    })
}

/// Outcome of resolving one collided preamble.
#[derive(Clone, Debug)]
pub struct CollisionResolution<T> {
    /// None when the multiplicity estimate was zero (nothing to serve).
    pub clusters: Option<ClusterSet<T>>,
    /// The shortlist would have exceeded the deployment and was clamped.
    pub clamped: bool,
}

/// Shortlist the `per_cluster * b_hat` strongest APs and split them into
/// `b_hat` clusters. b_hat = 1 degenerates to one cluster of the
/// `per_cluster` strongest APs; b_hat = 0 yields no clusters.
pub fn resolve_collision<T: Scalar, R: Rng + ?Sized>(
    energy: &[T],
    b_hat: usize,
    per_cluster: usize,
    deployment: &Deployment<T>,
    restarts: usize,
    rng: &mut R,
) -> Result<CollisionResolution<T>> {
    if per_cluster == 0 {
        return Err(invalid("per-cluster AP count must be at least 1"));
    }
    if b_hat == 0 {
        return Ok(CollisionResolution {
            clusters: None,
            clamped: false,
        });
    }
    let wanted = per_cluster * b_hat;
    let clamped = wanted > deployment.num_aps();
    let shortlist = make_shortlist(energy, wanted.min(deployment.num_aps()), deployment)?;
    let clusters = kmeans_cluster(&shortlist, b_hat, restarts, rng)?;
    Ok(CollisionResolution {
        clusters: Some(clusters),
        clamped,
    })
}

/// Cluster whose centroid lies closest to the given position (ties toward
/// the lower cluster index).
pub fn assign_cluster_to_position<T: Scalar>(clusters: &ClusterSet<T>, pos: Point2<T>) -> usize {
    nearest_centroid(pos, &clusters.centroids)
}

/// The `count` APs with the largest true large-scale gain toward a device.
pub fn select_genie<T: Scalar>(gains: &LinkGains<T>, ue: usize, count: usize) -> Vec<usize> {
    let beta: Vec<T> = gains.ue_column(ue).iter().copied().collect();
    top_energy_aps(&beta, count)
}

/// AP-selection strategies compared by the rate experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    AllAp,
    McStrongest,
    TedCluster,
    DnnCluster,
    Genie,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::AllAp,
        Scheme::McStrongest,
        Scheme::TedCluster,
        Scheme::DnnCluster,
        Scheme::Genie,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::AllAp => "all_ap",
            Scheme::McStrongest => "mc_strongest",
            Scheme::TedCluster => "ted_cluster",
            Scheme::DnnCluster => "dnn_cluster",
            Scheme::Genie => "genie",
        }
    }

    pub fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "all_ap" => Ok(Scheme::AllAp),
            "mc_strongest" => Ok(Scheme::McStrongest),
            "ted_cluster" => Ok(Scheme::TedCluster),
            "dnn_cluster" => Ok(Scheme::DnnCluster),
            "genie" => Ok(Scheme::Genie),
            other => Err(invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AreaSpec, RngStream};

    fn deployment_3x3() -> Deployment<f64> {
        Deployment::grid(3, 3, AreaSpec::new(900.0).unwrap(), 2).unwrap()
    }

    #[test]
    fn top_energies_break_ties_low() {
        let e = [9.0f64, 0.0, 16.0, 9.0];
        assert_eq!(top_energy_aps(&e, 2), vec![2, 0]);
        assert_eq!(top_energy_aps(&e, 3), vec![2, 0, 3]);
        assert_eq!(top_energy_aps(&e, 10), vec![2, 0, 3, 1], "count clamps to len");
    }

    #[test]
    fn shortlist_validates() {
        let d = deployment_3x3();
        assert!(make_shortlist(&[1.0; 4], 2, &d).is_err(), "wrong length");
        assert!(make_shortlist(&[1.0; 9], 0, &d).is_err());
        let s = make_shortlist(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0], 3, &d).unwrap();
        assert_eq!(s.indices(), &[8, 7, 6]);
    }

    #[test]
    fn two_well_separated_groups_recovered() {
        // four points in each of two far-apart corners
        let pts: Vec<Point2<f64>> = vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(0.0, 10.0),
            Point2::new(10.0, 10.0),
            Point2::new(900.0, 900.0),
            Point2::new(910.0, 900.0),
            Point2::new(900.0, 910.0),
            Point2::new(910.0, 910.0),
        ];
        let shortlist = ApShortlist {
            indices: (0..8).collect(),
            coords: pts,
        };
        let mut rng = RngStream::root(1).child("km");
        let cs = kmeans_cluster(&shortlist, 2, 10, &mut rng).unwrap();
        let a0 = cs.assignments[0];
        assert!(cs.assignments[..4].iter().all(|&a| a == a0));
        assert!(cs.assignments[4..].iter().all(|&a| a != a0));
        // exhaustive check over every 2-partition: no assignment beats it
        let best = exhaustive_best_wcss(cs.shortlist().coords(), 2);
        assert!((cs.wcss - best).abs() <= 1e-9 * best.max(1.0), "wcss {} vs {}", cs.wcss, best);
    }

    #[test]
    fn k_equals_one_and_k_equals_len() {
        let shortlist: ApShortlist<f64> = ApShortlist {
            indices: vec![3, 1, 4],
            coords: vec![
                Point2::new(0.0, 0.0),
                Point2::new(4.0, 0.0),
                Point2::new(0.0, 4.0),
            ],
        };
        let mut rng = RngStream::root(2).child("km");
        let one = kmeans_cluster(&shortlist, 1, 3, &mut rng).unwrap();
        assert!(one.assignments.iter().all(|&a| a == 0));
        assert_eq!(one.cluster_aps(0), vec![1, 3, 4]);
        let all = kmeans_cluster(&shortlist, 3, 3, &mut rng).unwrap();
        assert!(all.wcss.abs() < 1e-12, "singletons have zero WCSS");
        assert!(kmeans_cluster(&shortlist, 4, 3, &mut rng).is_err());
    }

    #[test]
    fn lloyd_wcss_monotone() {
        let mut rng = RngStream::root(3).child("pts");
        use rand::Rng as _;
        for trial in 0..50 {
            let pts: Vec<Point2<f64>> = (0..20)
                .map(|_| Point2::new(rng.gen::<f64>() * 100.0, rng.gen::<f64>() * 100.0))
                .collect();
            let init: Vec<Point2<f64>> = pts[..3].to_vec();
            let (_a, _c, history) = lloyd(&pts, init);
            for w in history.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "trial {trial}: WCSS rose from {} to {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    pub(super) fn exhaustive_best_wcss(points: &[Point2<f64>], k: usize) -> f64 {
        // enumerate every surjective labeling; points are few
        let n = points.len();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        loop {
            let mut seen = vec![false; k];
            for &l in &labels {
                seen[l] = true;
            }
            if seen.iter().all(|&s| s) {
                let mut w = 0.0;
                for c in 0..k {
                    let members: Vec<Point2<f64>> =
                        points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(&p, _)| p).collect();
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
            }
            // odometer increment
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
    fn empty_cluster_repair_never_leaves_empty() {
        // colinear points and adversarial duplicate-ish inits still must end
        // with every cluster nonempty
        let pts: Vec<Point2<f64>> = (0..6).map(|i| Point2::new(i as f64, 0.0)).collect();
        let shortlist = ApShortlist {
            indices: (0..6).collect(),
            coords: pts,
        };
        let mut rng = RngStream::root(4).child("km");
        for k in 1..=4 {
            let cs = kmeans_cluster(&shortlist, k, 5, &mut rng).unwrap();
            let mut counts = vec![0usize; k];
            for &a in &cs.assignments {
                counts[a] += 1;
            }
            assert!(counts.iter().all(|&c| c > 0), "k = {k}: {counts:?}");
        }
    }

    #[test]
    fn resolve_collision_paths() {
        let d = deployment_3x3();
        let energy: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let mut rng = RngStream::root(5).child("rc");
        let none = resolve_collision(&energy, 0, 4, &d, 3, &mut rng).unwrap();
        assert!(none.clusters.is_none() && !none.clamped);
        let single = resolve_collision(&energy, 1, 4, &d, 3, &mut rng).unwrap();
        let cs = single.clusters.unwrap();
        assert_eq!(cs.num_clusters(), 1);
        assert_eq!(cs.cluster_aps(0), vec![5, 6, 7, 8], "4 strongest APs");
        let clamped = resolve_collision(&energy, 4, 4, &d, 3, &mut rng).unwrap();
        assert!(clamped.clamped, "16 wanted from 9 APs");
        assert_eq!(clamped.clusters.unwrap().shortlist().len(), 9);
    }

    #[test]
    fn cluster_assignment_for_position() {
        let shortlist = ApShortlist {
            indices: vec![0, 1],
            coords: vec![Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)],
        };
        let mut rng = RngStream::root(6).child("km");
        let cs = kmeans_cluster(&shortlist, 2, 4, &mut rng).unwrap();
        let near_first = assign_cluster_to_position(&cs, Point2::new(10.0, 5.0));
        let near_second = assign_cluster_to_position(&cs, Point2::new(90.0, 5.0));
        assert_ne!(near_first, near_second);
        assert_eq!(cs.cluster_aps(near_first), vec![0]);
        assert_eq!(cs.cluster_aps(near_second), vec![1]);
    }

    #[test]
    fn genie_selects_true_strongest() {
        let beta = ndarray::array![[0.1, 0.5], [0.9, 0.5], [0.4, 0.5]];
        let gains = LinkGains::from_matrix(beta);
        assert_eq!(select_genie(&gains, 0, 2), vec![1, 2]);
        assert_eq!(select_genie(&gains, 1, 2), vec![0, 1], "ties toward low index");
    }

    #[test]
    fn scheme_labels_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::from_str(s.as_str()).unwrap(), s);
        }
        assert!(Scheme::from_str("bogus").is_err());
    }

    #[test]
    fn cluster_csv_shape() {
        let shortlist = ApShortlist {
            indices: vec![4, 2],
            coords: vec![Point2::new(1.0, 2.0), Point2::new(3.0, 4.0)],
        };
        let mut rng = RngStream::root(7).child("km");
        let cs = kmeans_cluster(&shortlist, 1, 1, &mut rng).unwrap();
        let csv = cs.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cluster_id,ap_index,x,y");
        assert_eq!(lines.len(), 3);
    }
}
