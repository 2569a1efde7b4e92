use petwear_core::dp::{
    empirical_epsilon_check, laplace_sample, privatize, sensitivity, true_answer, PrivacyBudget, Query,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn measured_loss_stays_within_epsilon() {
    let base: Vec<f64> = (0..500).map(|i| 60.0 + (i % 120) as f64).collect();
    // Count: one record added. Bounded sum: one record moved from lo to hi.
    let mut added = base.clone();
    added.push(100.0);
    let mut replaced = base.clone();
    replaced[0] = 180.0;
    let cases = [(Query::Count, added), (Query::BoundedSum { lo: 60.0, hi: 180.0 }, replaced)];
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    for (q, neighbor) in &cases {
        for eps in [0.1, 0.5, 1.0] {
            let b = sensitivity(q).unwrap() / eps;
            let mech = |data: &[f64], rng: &mut ChaCha20Rng| {
                true_answer(q, data).unwrap()[0] + laplace_sample(b, rng).unwrap()
            };
            let r = empirical_epsilon_check(mech, &base, neighbor, eps, 100_000, &mut rng);
            assert!(r.max_log_ratio <= eps + 0.1, "{} at eps {eps}: {r:?}", q.name());
        }
    }
}

#[test]
fn large_counts_keep_relative_error_small() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for n in [400usize, 1000, 5000] {
        let data = vec![0.0; n];
        let mut ok = 0;
        for _ in 0..1000 {
            let mut budget = PrivacyBudget::new("u", 0.5).unwrap();
            let r = privatize(&Query::Count, &data, 0.5, &mut budget, &mut rng, 0).unwrap();
            if (r.values[0] - n as f64).abs() / n as f64 <= 0.05 {
                ok += 1;
            }
        }
        assert!(ok >= 999, "n = {n}: {ok}/1000");
    }
}
