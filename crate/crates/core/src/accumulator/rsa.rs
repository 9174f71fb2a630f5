//! One-way modular-exponentiation accumulator backend.
//!
//! The accumulator value starts at a public seed X and absorbs each record
//! by raising the current value to the record's exponent modulo a public
//! modulus N = P*Q (the primes are discarded after parameter generation).
//! Folding commutes, membership has zero false positives, and each record
//! gets a witness (the seed raised to every other record's exponent) that
//! verifies in one modular exponentiation.

use num_bigint_dig::{BigUint, RandBigInt, RandPrime};
use num_integer::Integer;
use num_traits::One;
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use super::AccumulatorError;
use crate::encode::{hash, put_biguint, CanonicalEncode, TAG_RSA_PAYLOAD};
use crate::model::{biguint_b64, ChainedRecord, MembershipWitness};

/// Public accumulator parameters. The factorization of the modulus is not
/// retained anywhere; no operation here needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaParams {
    /// Product of two secret primes.
    #[serde(with = "biguint_b64")]
    pub modulus: BigUint,
    /// Public base the accumulator starts from; coprime to the modulus.
    #[serde(with = "biguint_b64")]
    pub seed: BigUint,
    /// Bit size of each generated prime.
    pub prime_bits: u32,
}

impl RsaParams {
    /// Generate fresh parameters: two random primes of `prime_bits` bits and
    /// a random seed in (1, N) coprime to N.
    pub fn generate(prime_bits: usize) -> Self {
        let mut rng = OsRng;
        let p: BigUint = rng.gen_prime(prime_bits);
        let q: BigUint = loop {
            let q: BigUint = rng.gen_prime(prime_bits);
            if q != p {
                break q;
            }
        };
        let modulus = &p * &q;
        let seed = loop {
            let x = rng.gen_biguint_below(&modulus);
            if x > BigUint::one() && x.gcd(&modulus).is_one() {
                break x;
            }
        };
        RsaParams {
            modulus,
            seed,
            prime_bits: prime_bits as u32,
        }
    }

    /// Fixed tiny parameters (N = 11 * 23 = 253, X = 2) for hand-checkable
    /// arithmetic in tests.
    pub fn toy() -> Self {
        RsaParams {
            modulus: BigUint::from(253u32),
            seed: BigUint::from(2u32),
            prime_bits: 0,
        }
    }
}

/// Map a record to its fold exponent: SHA-256 of the record's canonical
/// bytes read as a big-endian integer, lowest bit set, floored at 3. Always
/// odd and >= 3, so degenerate exponents 0 and 1 cannot occur.
pub fn record_exponent(record_bytes: &[u8]) -> BigUint {
    let digest = hash(record_bytes);
    let mut e = BigUint::from_bytes_be(digest.as_bytes());
    e |= BigUint::one();
    if e < BigUint::from(3u32) {
        e = BigUint::from(3u32);
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaAccumulator {
    pub params: RsaParams,
    /// Current accumulator value; equals the seed before any fold.
    #[serde(with = "biguint_b64")]
    pub value: BigUint,
}

impl RsaAccumulator {
    pub fn empty(params: RsaParams) -> Self {
        let value = params.seed.clone();
        RsaAccumulator { params, value }
    }

    pub fn fold(&mut self, record_bytes: &[u8]) {
        self.fold_exponent(&record_exponent(record_bytes));
    }

    pub fn fold_exponent(&mut self, exponent: &BigUint) {
        self.value = self.value.modpow(exponent, &self.params.modulus);
    }

    /// Witnesses for the day's complete record list, in record order.
    pub fn witnesses(&self, records: &[ChainedRecord]) -> Vec<MembershipWitness> {
        let exponents: Vec<BigUint> = records
            .iter()
            .map(|r| record_exponent(&r.encode()))
            .collect();
        witnesses_for_exponents(&self.params, &exponents)
    }

    /// True iff `witness` raised to the record's exponent reproduces
    /// `final_value`. Adversarial inputs simply fail.
    pub fn verify_membership(
        record_bytes: &[u8],
        witness: &BigUint,
        final_value: &BigUint,
        params: &RsaParams,
    ) -> bool {
        witness.modpow(&record_exponent(record_bytes), &params.modulus) == *final_value
    }

    pub(super) fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(TAG_RSA_PAYLOAD);
        out.extend_from_slice(&self.params.prime_bits.to_be_bytes());
        put_biguint(&mut out, &self.params.modulus);
        put_biguint(&mut out, &self.params.seed);
        put_biguint(&mut out, &self.value);
        out
    }

    pub(super) fn validate(&self) -> Result<(), AccumulatorError> {
        if self.value < BigUint::one() || self.value >= self.params.modulus {
            return Err(AccumulatorError::ValueOutOfRange);
        }
        Ok(())
    }
}

/// Witness per exponent: `seed` raised to the product of all other
/// exponents. Computed by recursive root factoring (split the set, push
/// the opposite half's exponents into the base, recurse), which stays at
/// single-exponent modular exponentiations, n log n of them in total,
/// instead of the n^2 a naive per-witness fold would cost.
pub fn witnesses_for_exponents(
    params: &RsaParams,
    exponents: &[BigUint],
) -> Vec<MembershipWitness> {
    root_factor(params.seed.clone(), exponents, &params.modulus)
        .into_iter()
        .enumerate()
        .map(|(i, value)| MembershipWitness {
            record_index: i as u64,
            value,
        })
        .collect()
}

/// For each position i, `base` raised to the product of all exponents
/// except `exponents[i]`, modulo `modulus`.
pub fn root_factor(base: BigUint, exponents: &[BigUint], modulus: &BigUint) -> Vec<BigUint> {
    match exponents.len() {
        0 => Vec::new(),
        1 => vec![base],
        n => {
            let (left, right) = exponents.split_at(n / 2);
            let mut base_left = base.clone();
            for e in right {
                base_left = base_left.modpow(e, modulus);
            }
            let mut base_right = base;
            for e in left {
                base_right = base_right.modpow(e, modulus);
            }
            let mut out = root_factor(base_left, left, modulus);
            out.extend(root_factor(base_right, right, modulus));
            out
        }
    }
}
