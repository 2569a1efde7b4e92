//! Negacyclic number-theoretic transform over `Z_p[X]/(X^N + 1)`.

use crate::arith::{add_mod, inv_mod_prime, mul_mod, pow_mod, sub_mod};

#[derive(Debug, Clone)]
pub struct NttTable {
    modulus: u64,
    n: usize,
    psi_rev: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// A primitive `2n`-th root of unity modulo the prime `p`, if `2n | p - 1`.
pub fn primitive_root_2n(p: u64, n: usize) -> Option<u64> {
    let two_n = 2 * n as u64;
    if !(p - 1).is_multiple_of(two_n) {
        return None;
    }
    let exp = (p - 1) / two_n;
    // For a power-of-two order, x^n = -1 certifies order exactly 2n.
    (2..p.min(10_000))
        .map(|g| pow_mod(g, exp, p))
        .find(|&psi| pow_mod(psi, n as u64, p) == p - 1)
}

impl NttTable {
    pub fn new(modulus: u64, n: usize) -> Option<Self> {
        if !n.is_power_of_two() || n < 2 {
            return None;
        }
        let psi = primitive_root_2n(modulus, n)?;
        let psi_inv = inv_mod_prime(psi, modulus)?;
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = mul_mod(pw, psi, modulus);
            pw_inv = mul_mod(pw_inv, psi_inv, modulus);
        }
        let n_inv = inv_mod_prime(n as u64 % modulus, modulus)?;
        Some(NttTable { modulus, n, psi_rev, psi_inv_rev, n_inv })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    /// In-place forward transform (coefficients to evaluations, bit-reversed order).
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let s = self.psi_rev[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_mod(a[j + t], s, q);
                    a[j] = add_mod(u, v, q);
                    a[j + t] = sub_mod(u, v, q);
                }
            }
            m *= 2;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, q);
                    a[j + t] = mul_mod(sub_mod(u, v, q), s, q);
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_mod(*x, self.n_inv, q);
        }
    }

    /// Negacyclic product of two coefficient vectors.
    pub fn multiply(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut fa = a.to_vec();
        let mut fb = b.to_vec();
        self.forward(&mut fa);
        self.forward(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = mul_mod(*x, *y, self.modulus);
        }
        self.inverse(&mut fa);
        fa
    }
}
