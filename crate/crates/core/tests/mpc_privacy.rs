//! Share-distribution privacy: what any three of four parties see must not
//! depend on the secret.

use petwear_core::mpc::{dealer_setup, AuthShare};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const P: u64 = 31;
const DEALINGS: usize = 10_000;

/// Two-sample chi-square homogeneity test; returns the p-value.
fn homogeneity_p_value(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&oa, &ob) in a.iter().zip(b) {
        let col = (oa + ob) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let (ea, eb) = (na * col / total, nb * col / total);
        stat += (oa as f64 - ea).powi(2) / ea + (ob as f64 - eb).powi(2) / eb;
    }
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

fn deal(secret: u64, seed: u64) -> Vec<Vec<AuthShare>> {
    let (dealer, _) = dealer_setup(4, P, 77).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..DEALINGS).map(|_| dealer.share_input(secret, &mut rng).unwrap()).collect()
}

fn histogram(dealings: &[Vec<AuthShare>], f: impl Fn(&[AuthShare]) -> u64) -> Vec<u64> {
    let mut h = vec![0u64; P as usize];
    for d in dealings {
        h[f(d) as usize] += 1;
    }
    h
}

#[test]
fn colluding_triples_see_secret_independent_shares() {
    let five = deal(5, 1);
    let seventeen = deal(17, 2);
    for excluded in 0..4 {
        let coalition: Vec<usize> = (0..4).filter(|&i| i != excluded).collect();
        for &party in &coalition {
            let pv = homogeneity_p_value(
                &histogram(&five, |d| d[party].value),
                &histogram(&seventeen, |d| d[party].value),
            );
            assert!(pv > 0.01, "party {party} marginal: p = {pv}");
        }
        let sum = |d: &[AuthShare]| coalition.iter().map(|&i| d[i].value).sum::<u64>() % P;
        let pv = homogeneity_p_value(&histogram(&five, sum), &histogram(&seventeen, sum));
        assert!(pv > 0.01, "coalition without {excluded}: p = {pv}");
    }
}

#[test]
fn full_reconstruction_does_reveal() {
    // Sanity check of the test itself: all four shares together separate the secrets.
    let five = deal(5, 3);
    let seventeen = deal(17, 4);
    let sum = |d: &[AuthShare]| d.iter().map(|s| s.value).sum::<u64>() % P;
    assert!(homogeneity_p_value(&histogram(&five, sum), &histogram(&seventeen, sum)) < 1e-6);
}
