//! Transparent bilinear group for tests: every element is stored as its
//! discrete log, so `e(a, b) = a·b mod q` in exponent space.
//!
//! NOT secure. It exists so BB1 can be checked by hand and exhaustively.

use rand::{CryptoRng, Rng, RngCore};

use super::group::BilinearGroup;

pub const MOCK_GROUP_TAG: u8 = 0xf0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockElement(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockTarget(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockGroup {
    q: u64,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl MockGroup {
    /// `q` must be prime and below 2^31 so products fit in a u64.
    pub fn new(q: u64) -> Self {
        assert!(q < 1 << 31 && is_prime(q), "mock group order must be a small prime, got {q}");
        MockGroup { q }
    }

    pub fn order(&self) -> u64 {
        self.q
    }

    pub fn element(&self, log: u64) -> MockElement {
        MockElement(log % self.q)
    }

    pub fn target(&self, log: u64) -> MockTarget {
        MockTarget(log % self.q)
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        a * b % self.q
    }

    fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.q
    }

    fn decode_u64(&self, bytes: &[u8]) -> Option<u64> {
        let arr: [u8; 8] = bytes.try_into().ok()?;
        let v = u64::from_be_bytes(arr);
        (v < self.q).then_some(v)
    }
}

impl BilinearGroup for MockGroup {
    type Scalar = u64;
    type Element = MockElement;
    type Target = MockTarget;

    fn descriptor(&self) -> Vec<u8> {
        let mut out = vec![MOCK_GROUP_TAG];
        out.extend_from_slice(&self.q.to_be_bytes());
        out
    }

    fn generator(&self) -> MockElement {
        MockElement(1)
    }

    fn op(&self, a: &MockElement, b: &MockElement) -> MockElement {
        MockElement(self.add(a.0, b.0))
    }

    fn exp(&self, a: &MockElement, k: &u64) -> MockElement {
        MockElement(self.mul(a.0, *k % self.q))
    }

    fn pair(&self, a: &MockElement, b: &MockElement) -> MockTarget {
        MockTarget(self.mul(a.0, b.0))
    }

    fn target_op(&self, a: &MockTarget, b: &MockTarget) -> MockTarget {
        MockTarget(self.add(a.0, b.0))
    }

    fn target_inv(&self, a: &MockTarget) -> MockTarget {
        MockTarget((self.q - a.0) % self.q)
    }

    fn target_exp(&self, a: &MockTarget, k: &u64) -> MockTarget {
        MockTarget(self.mul(a.0, *k % self.q))
    }

    fn target_identity(&self) -> MockTarget {
        MockTarget(0)
    }

    fn scalar_from_u64(&self, v: u64) -> u64 {
        v % self.q
    }

    fn random_scalar<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(1..self.q)
    }

    fn scalar_from_digest(&self, digest: &[u8]) -> u64 {
        digest.iter().fold(0u64, |acc, &b| (acc * 256 + u64::from(b)) % self.q)
    }

    fn encode_scalar(&self, s: &u64) -> Vec<u8> {
        s.to_be_bytes().to_vec()
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Option<u64> {
        self.decode_u64(bytes)
    }

    fn encode_element(&self, e: &MockElement) -> Vec<u8> {
        e.0.to_be_bytes().to_vec()
    }

    fn decode_element(&self, bytes: &[u8]) -> Option<MockElement> {
        self.decode_u64(bytes).map(MockElement)
    }

    fn encode_target(&self, t: &MockTarget) -> Vec<u8> {
        t.0.to_be_bytes().to_vec()
    }

    fn decode_target(&self, bytes: &[u8]) -> Option<MockTarget> {
        self.decode_u64(bytes).map(MockTarget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_and_non_degenerate() {
        let grp = MockGroup::new(1009);
        let g = grp.generator();
        assert_ne!(grp.pair(&g, &g), grp.target_identity());
        for a in [1u64, 2, 500, 1008] {
            for b in [1u64, 7, 999] {
                let lhs = grp.pair(&grp.exp(&g, &a), &grp.exp(&g, &b));
                let rhs = grp.target_exp(&grp.pair(&g, &g), &(a * b % 1009));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    #[should_panic]
    fn composite_order_rejected() {
        MockGroup::new(1000);
    }

    #[test]
    fn decoding_rejects_out_of_range() {
        let grp = MockGroup::new(101);
        assert_eq!(grp.decode_element(&100u64.to_be_bytes()), Some(MockElement(100)));
        assert_eq!(grp.decode_element(&101u64.to_be_bytes()), None);
        assert_eq!(grp.decode_element(&[0; 7]), None);
    }
}
