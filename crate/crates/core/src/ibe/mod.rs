//! Identity-based encryption: the bilinear group contract, a transparent mock
//! group, the BLS12-381 backend, the BB1 construction and its use as a KEM.

pub mod bb1;
pub mod bls;
pub mod group;
pub mod kem;
pub mod mock;

pub use bb1::{Ciphertext, MasterSecret, PrivateKey, PublicParams};
pub use bls::Bls12Group;
pub use group::BilinearGroup;
pub use mock::{MockElement, MockGroup, MockTarget};
