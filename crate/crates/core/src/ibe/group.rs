use std::fmt::Debug;

use rand::{CryptoRng, RngCore};

/// Prime-order group `G` with a symmetric bilinear map `e: G × G → GT`.
///
/// Written multiplicatively: `op` is the group law, `exp` scalar
/// exponentiation. Implementations must satisfy `e(g^a, g^b) = e(g, g)^(ab)`
/// and `e(g, g) ≠ 1`.
pub trait BilinearGroup: Clone + Send + Sync + 'static {
    type Scalar: Clone + PartialEq + Debug + Send + Sync;
    type Element: Clone + PartialEq + Debug + Send + Sync;
    type Target: Clone + PartialEq + Debug + Send + Sync;

    /// Bytes identifying the group and its parameters. Part of every encoded
    /// parameter set so values from different groups never mix.
    fn descriptor(&self) -> Vec<u8>;

    fn generator(&self) -> Self::Element;
    fn op(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn exp(&self, a: &Self::Element, k: &Self::Scalar) -> Self::Element;
    fn pair(&self, a: &Self::Element, b: &Self::Element) -> Self::Target;

    fn target_op(&self, a: &Self::Target, b: &Self::Target) -> Self::Target;
    fn target_inv(&self, a: &Self::Target) -> Self::Target;
    fn target_exp(&self, a: &Self::Target, k: &Self::Scalar) -> Self::Target;
    fn target_identity(&self) -> Self::Target;

    fn scalar_from_u64(&self, v: u64) -> Self::Scalar;
    /// Uniform in `[1, q-1]`.
    fn random_scalar<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Self::Scalar;
    /// Interprets `digest` as a big-endian integer reduced mod `q`.
    fn scalar_from_digest(&self, digest: &[u8]) -> Self::Scalar;

    fn encode_scalar(&self, s: &Self::Scalar) -> Vec<u8>;
    fn decode_scalar(&self, bytes: &[u8]) -> Option<Self::Scalar>;
    fn encode_element(&self, e: &Self::Element) -> Vec<u8>;
    fn decode_element(&self, bytes: &[u8]) -> Option<Self::Element>;
    fn encode_target(&self, t: &Self::Target) -> Vec<u8>;
    fn decode_target(&self, bytes: &[u8]) -> Option<Self::Target>;

    fn target_div(&self, a: &Self::Target, b: &Self::Target) -> Self::Target {
        self.target_op(a, &self.target_inv(b))
    }
}
