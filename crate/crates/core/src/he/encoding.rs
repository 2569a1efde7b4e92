//! Slot packing: N residues mod t <-> one plaintext polynomial, via the
//! negacyclic NTT over `Z_t`. Ring products act slot-wise.

use super::params::HeContext;
use super::HeError;

/// Plaintext polynomial with coefficients in `[0, t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plaintext {
    pub(crate) coeffs: Vec<u64>,
}

impl Plaintext {
    pub fn from_coefficients(ctx: &HeContext, coeffs: &[u64]) -> Result<Self, HeError> {
        let t = ctx.plaintext_modulus();
        if coeffs.len() > ctx.degree() {
            return Err(HeError::TooManySlots { given: coeffs.len(), slots: ctx.degree() });
        }
        if let Some(&bad) = coeffs.iter().find(|&&c| c >= t) {
            return Err(HeError::Range { value: bad, modulus: t });
        }
        let mut padded = coeffs.to_vec();
        padded.resize(ctx.degree(), 0);
        Ok(Plaintext { coeffs: padded })
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

impl HeContext {
    /// Pack up to N slot values (each in `[0, t)`); missing slots are zero.
    pub fn encode(&self, values: &[u64]) -> Result<Plaintext, HeError> {
        let mut slots = Plaintext::from_coefficients(self, values)?.coeffs;
        self.plain_ntt.inverse(&mut slots);
        Ok(Plaintext { coeffs: slots })
    }

    pub fn decode(&self, pt: &Plaintext) -> Vec<u64> {
        let mut slots = pt.coeffs.clone();
        self.plain_ntt.forward(&mut slots);
        slots
    }

    /// Slot count (equal to the ring degree).
    pub fn slots(&self) -> usize {
        self.degree()
    }
}
