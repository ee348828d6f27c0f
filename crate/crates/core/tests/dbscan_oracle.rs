mod support;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::brute_dbscan;
use tlr_core::geometry::Vec3;
use tlr_core::mapping::dbscan;

/// Blobs of varying density plus uniform background, sometimes on a
/// coarse lattice so that distances exactly equal to eps occur.
fn instance(rng: &mut ChaCha8Rng) -> (Vec<Vec3>, f64, usize) {
    let n = rng.random_range(0..=300);
    let eps = [0.25, 0.5, 1.0][rng.random_range(0..3)];
    let min_pts = rng.random_range(1..=10);
    let lattice = rng.random_bool(0.2);
    let blobs: Vec<(Vec3, f64)> = (0..rng.random_range(1..6))
        .map(|_| {
            let c = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(0.0..5.0),
            );
            (c, rng.random_range(0.1..1.5))
        })
        .collect();
    let pts = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.25) {
                Vec3::new(
                    rng.random_range(-12.0..12.0),
                    rng.random_range(-12.0..12.0),
                    rng.random_range(-1.0..6.0),
                )
            } else {
                let (c, r) = blobs[rng.random_range(0..blobs.len())];
                c + Vec3::new(
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                )
            };
            if lattice {
                (p / eps).map(f64::round) * eps
            } else {
                p
            }
        })
        .collect();
    (pts, eps, min_pts)
}

#[test]
fn matches_brute_force_reference_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdb5c);
    let mut nontrivial = 0;
    for case in 0..1200 {
        let (pts, eps, min_pts) = instance(&mut rng);
        let got = dbscan(&pts, eps, min_pts);
        let (clusters, noise) = brute_dbscan(&pts, eps, min_pts);
        assert_eq!(
            got.clusters,
            clusters,
            "case {case}: n={} eps={eps} min_pts={min_pts}",
            pts.len()
        );
        assert_eq!(got.noise, noise, "case {case}");
        if got.clusters.len() > 1 && !got.noise.is_empty() {
            nontrivial += 1;
        }
    }
    assert!(
        nontrivial > 200,
        "only {nontrivial} instances with several clusters and noise"
    );
}

#[test]
fn cluster_sets_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let (pts, eps, min_pts) = instance(&mut rng);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let a = dbscan(&pts, eps, min_pts);
        let b = dbscan(&shuffled, eps, min_pts);
        // core points always land in the same clusters; noise sets agree
        let mut noise_b: Vec<usize> = b.noise.iter().map(|&i| perm[i]).collect();
        noise_b.sort();
        assert_eq!(a.noise, noise_b);
        assert_eq!(a.clusters.len(), b.clusters.len());
        let core = |i: usize| pts.iter().filter(|q| (*q - pts[i]).norm() <= eps).count() >= min_pts;
        let mut sets_a: Vec<Vec<usize>> = a
            .clusters
            .iter()
            .map(|c| c.iter().copied().filter(|&i| core(i)).collect())
            .collect();
        let mut sets_b: Vec<Vec<usize>> = b
            .clusters
            .iter()
            .map(|c| {
                let mut v: Vec<usize> = c.iter().map(|&i| perm[i]).filter(|&i| core(i)).collect();
                v.sort();
                v
            })
            .collect();
        sets_a.sort();
        sets_b.sort();
        assert_eq!(sets_a, sets_b);
    }
}
