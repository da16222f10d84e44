//! Byte-level backend: NIST P-224, the X9.63 KDF over SHA-256, AES-128-GCM
//! and SHA-256.
//!
//! Encodings: scalars are 28-byte big-endian, public keys are 57-byte
//! uncompressed SEC1 points (`04 || x || y`), shared secrets are the 28-byte
//! x-coordinate.

use std::fmt;

use aes_gcm::aead::{Aead, AeadCore, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Key, Nonce};
use num_bigint::BigUint;
use num_traits::One;
use p224::elliptic_curve::ff::PrimeField;
use p224::elliptic_curve::sec1::ToEncodedPoint;
use p224::{FieldBytes, NonZeroScalar, ProjectivePoint, PublicKey, Scalar};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::provider::{CryptoError, CryptoProvider};

pub const SCALAR_LEN: usize = 28;
pub const POINT_LEN: usize = 57;
pub const SK_LEN: usize = 32;

/// ANSI X9.63 KDF with SHA-256.
pub fn x963_kdf(secret: &[u8], shared_info: &[u8], out_len: usize) -> Result<Vec<u8>, CryptoError> {
    if out_len == 0 {
        return Err(CryptoError::BadArgument(
            "KDF output length must be at least 1",
        ));
    }
    let mut out = Vec::with_capacity(out_len + 32);
    let mut counter: u32 = 1;
    while out.len() < out_len {
        let mut h = Sha256::new();
        h.update(secret);
        h.update(counter.to_be_bytes());
        h.update(shared_info);
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(out_len);
    Ok(out)
}

fn kdf_array<const N: usize>(secret: &[u8], info: &[u8]) -> [u8; N] {
    let v = x963_kdf(secret, info, N).expect("non-zero length");
    v.try_into().expect("exact length")
}

/// `SK_i = KDF(SK_{i-1}, "update", 32)`.
pub fn sk_next_bytes(sk_prev: &[u8]) -> Result<[u8; SK_LEN], CryptoError> {
    if sk_prev.len() != SK_LEN {
        return Err(CryptoError::BadArgument("rolling key must be 32 bytes"));
    }
    Ok(kdf_array(sk_prev, b"update"))
}

/// A private scalar in `[1, n-1]`, held as 28 big-endian bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretScalar([u8; SCALAR_LEN]);

impl SecretScalar {
    pub fn from_be_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SCALAR_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadArgument("scalar must be 28 bytes"))?;
        let s = Self(arr);
        s.nonzero()?;
        Ok(s)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let b = hex::decode(s).map_err(|_| CryptoError::Malformed("scalar hex"))?;
        Self::from_be_bytes(&b)
    }

    pub fn to_be_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0
    }

    fn from_scalar(s: &Scalar) -> Self {
        Self(s.to_repr().into())
    }

    fn scalar(&self) -> Result<Scalar, CryptoError> {
        Option::from(Scalar::from_repr(FieldBytes::from(self.0)))
            .ok_or(CryptoError::ScalarOutOfRange)
    }

    fn nonzero(&self) -> Result<NonZeroScalar, CryptoError> {
        Option::from(NonZeroScalar::new(self.scalar()?)).ok_or(CryptoError::ScalarOutOfRange)
    }
}

impl fmt::Debug for SecretScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretScalar({})", hex::encode(self.0))
    }
}

fn group_order() -> BigUint {
    // -1 in the scalar field is n - 1
    BigUint::from_bytes_be(&(-Scalar::ONE).to_repr()) + 1u32
}

fn scalar_from_biguint(x: &BigUint) -> Scalar {
    let raw = x.to_bytes_be();
    let mut buf = [0u8; SCALAR_LEN];
    buf[SCALAR_LEN - raw.len()..].copy_from_slice(&raw);
    Option::from(Scalar::from_repr(FieldBytes::from(buf))).expect("reduced below n")
}

/// `(u_i, v_i)` reduced into the scalar field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiversifiedScalars {
    pub u: [u8; SCALAR_LEN],
    pub v: [u8; SCALAR_LEN],
}

/// Splits `KDF(sk, "diversify", 72)` into two 36-byte integers and reduces
/// them: `u = (u mod (n-1)) + 1`, `v = v mod n`.
pub fn diversify(sk: &[u8]) -> Result<DiversifiedScalars, CryptoError> {
    if sk.len() != SK_LEN {
        return Err(CryptoError::BadArgument("rolling key must be 32 bytes"));
    }
    let uv: [u8; 72] = kdf_array(sk, b"diversify");
    let n = group_order();
    let u = BigUint::from_bytes_be(&uv[..36]) % (&n - BigUint::one()) + BigUint::one();
    let v = BigUint::from_bytes_be(&uv[36..]) % &n;
    Ok(DiversifiedScalars {
        u: scalar_from_biguint(&u).to_repr().into(),
        v: scalar_from_biguint(&v).to_repr().into(),
    })
}

/// `d_i = (d0 * u_i + v_i) mod n`. A zero result re-rolls the diversification
/// from `sk_next(sk_i)`; the epoch's own rolling key is unchanged.
pub fn d_next_scalar(d0: &SecretScalar, sk_i: &[u8]) -> Result<SecretScalar, CryptoError> {
    let d0 = d0.nonzero()?;
    let mut sk = sk_i.to_vec();
    loop {
        let ds = diversify(&sk)?;
        let u = Option::<Scalar>::from(Scalar::from_repr(FieldBytes::from(ds.u))).expect("reduced");
        let v = Option::<Scalar>::from(Scalar::from_repr(FieldBytes::from(ds.v))).expect("reduced");
        let d = *d0 * u + v;
        if !bool::from(d.is_zero()) {
            return Ok(SecretScalar::from_scalar(&d));
        }
        sk = sk_next_bytes(&sk)?.to_vec();
    }
}

pub fn public_key(d: &SecretScalar) -> Result<PublicKey, CryptoError> {
    let s = d.nonzero()?;
    PublicKey::from_affine((ProjectivePoint::GENERATOR * *s).to_affine())
        .map_err(|_| CryptoError::InvalidPoint)
}

/// Uncompressed SEC1 encoding, the beacon payload.
pub fn encode_point(p: &PublicKey) -> [u8; POINT_LEN] {
    let e = p.to_encoded_point(false);
    e.as_bytes().try_into().expect("uncompressed P-224 point")
}

pub fn decode_point(bytes: &[u8]) -> Result<PublicKey, CryptoError> {
    PublicKey::from_sec1_bytes(bytes).map_err(|_| CryptoError::InvalidPoint)
}

/// X-coordinate of `secret * peer`.
pub fn ecdh_p224(secret: &SecretScalar, peer: &PublicKey) -> Result<[u8; SCALAR_LEN], CryptoError> {
    let s = secret.nonzero()?;
    let shared = p224::ecdh::diffie_hellman(s, peer.as_affine());
    Ok((*shared.raw_secret_bytes()).into())
}

/// `KDF(shared, p_i, 32)` split into key and IV.
pub fn key_iv_split(shared: &[u8], p_i_bytes: &[u8]) -> Result<([u8; 16], [u8; 16]), CryptoError> {
    if shared.is_empty() || p_i_bytes.is_empty() {
        return Err(CryptoError::BadArgument("empty KDF input"));
    }
    let k: [u8; 32] = kdf_array(shared, p_i_bytes);
    let mut key = [0u8; 16];
    let mut iv = [0u8; 16];
    key.copy_from_slice(&k[..16]);
    iv.copy_from_slice(&k[16..]);
    Ok((key, iv))
}

fn gcm(key: &[u8; 16]) -> Aes128Gcm {
    Aes128Gcm::new(&Key::<Aes128Gcm>::from(*key))
}

fn nonce(iv: &[u8; 16]) -> Nonce<<Aes128Gcm as AeadCore>::NonceSize> {
    let n: [u8; 12] = iv[..12].try_into().expect("12 bytes");
    Nonce::from(n)
}

/// AES-128-GCM with `iv[..12]` as the nonce and the whole IV as associated
/// data. Output is `ciphertext || tag`.
pub fn aead_seal(key: &[u8; 16], plain: &[u8], iv: &[u8; 16]) -> Vec<u8> {
    gcm(key)
        .encrypt(
            &nonce(iv),
            Payload {
                msg: plain,
                aad: iv,
            },
        )
        .expect("in-memory GCM encryption")
}

pub fn aead_open(key: &[u8; 16], cipher: &[u8], iv: &[u8; 16]) -> Result<Vec<u8>, CryptoError> {
    gcm(key)
        .decrypt(
            &nonce(iv),
            Payload {
                msg: cipher,
                aad: iv,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailed)
}

/// SHA-256 of the encoded beacon key.
pub fn report_id(p_i_bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(p_i_bytes).into()
}

/// The byte-level provider. Fresh randomness comes from a seeded ChaCha20
/// stream, so a seed fixes a whole run.
#[derive(Clone, Debug)]
pub struct ConcreteProvider {
    rng: ChaCha20Rng,
}

impl ConcreteProvider {
    pub fn from_seed(seed: u64) -> Self {
        ConcreteProvider {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Draws from the same stream as the key material.
    pub fn random_bytes(&mut self, n: usize) -> Vec<u8> {
        let mut b = vec![0u8; n];
        self.rng.fill_bytes(&mut b);
        b
    }
}

impl CryptoProvider for ConcreteProvider {
    type Secret = SecretScalar;
    type SymKey = [u8; SK_LEN];
    type Pub = PublicKey;
    type Shared = [u8; SCALAR_LEN];
    type EncKey = [u8; 16];
    type Iv = [u8; 16];
    type Plain = Vec<u8>;
    type Cipher = Vec<u8>;
    type Digest = [u8; 32];

    fn fresh_secret(&mut self, _label: &str) -> SecretScalar {
        loop {
            let mut b = [0u8; SCALAR_LEN];
            self.rng.fill_bytes(&mut b);
            if let Ok(s) = SecretScalar::from_be_bytes(&b) {
                return s;
            }
        }
    }

    fn fresh_sym_key(&mut self, _label: &str) -> [u8; SK_LEN] {
        let mut b = [0u8; SK_LEN];
        self.rng.fill_bytes(&mut b);
        b
    }

    fn pub_of(&self, secret: &SecretScalar) -> PublicKey {
        // SecretScalar values are range-checked on construction
        public_key(secret).expect("valid scalar")
    }

    fn sk_next(&self, sk: &[u8; SK_LEN]) -> [u8; SK_LEN] {
        sk_next_bytes(sk).expect("32-byte key")
    }

    fn d_next(&self, d0: &SecretScalar, sk: &[u8; SK_LEN]) -> Result<SecretScalar, CryptoError> {
        d_next_scalar(d0, sk)
    }

    fn ecdh(
        &self,
        secret: &SecretScalar,
        peer: &PublicKey,
    ) -> Result<[u8; SCALAR_LEN], CryptoError> {
        ecdh_p224(secret, peer)
    }

    fn key_of(&self, shared: &[u8; SCALAR_LEN], beacon: &PublicKey) -> [u8; 16] {
        key_iv_split(shared, &encode_point(beacon))
            .expect("non-empty")
            .0
    }

    fn iv_of(&self, shared: &[u8; SCALAR_LEN], beacon: &PublicKey) -> [u8; 16] {
        key_iv_split(shared, &encode_point(beacon))
            .expect("non-empty")
            .1
    }

    fn aead_seal(&self, key: &[u8; 16], plain: &Vec<u8>, iv: &[u8; 16]) -> Vec<u8> {
        aead_seal(key, plain, iv)
    }

    fn aead_open(
        &self,
        key: &[u8; 16],
        cipher: &Vec<u8>,
        iv: &[u8; 16],
    ) -> Result<Vec<u8>, CryptoError> {
        aead_open(key, cipher, iv)
    }

    // Each e' is used for exactly one inner encryption, so a fixed nonce is
    // never repeated under the same key.
    fn sym_seal(&self, key: &[u8; 16], plain: &Vec<u8>) -> Vec<u8> {
        gcm(key)
            .encrypt(&Nonce::default(), plain.as_slice())
            .expect("in-memory GCM encryption")
    }

    fn sym_open(&self, key: &[u8; 16], sealed: &Vec<u8>) -> Result<Vec<u8>, CryptoError> {
        gcm(key)
            .decrypt(&Nonce::default(), sealed.as_slice())
            .map_err(|_| CryptoError::AuthenticationFailed)
    }

    /// `len(a) as u32 BE || a || b`
    fn pair(&self, a: &Vec<u8>, b: &Vec<u8>) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + a.len() + b.len());
        out.extend_from_slice(&(a.len() as u32).to_be_bytes());
        out.extend_from_slice(a);
        out.extend_from_slice(b);
        out
    }

    fn unpair(&self, p: &Vec<u8>) -> Result<(Vec<u8>, Vec<u8>), CryptoError> {
        if p.len() < 4 {
            return Err(CryptoError::Malformed("pair too short"));
        }
        let n = u32::from_be_bytes(p[..4].try_into().expect("4 bytes")) as usize;
        let rest = &p[4..];
        if n > rest.len() {
            return Err(CryptoError::Malformed("pair length prefix"));
        }
        Ok((rest[..n].to_vec(), rest[n..].to_vec()))
    }

    fn hash(&self, beacon: &PublicKey) -> [u8; 32] {
        report_id(&encode_point(beacon))
    }
}

/// `t_F` encoding used by the concrete pipeline.
pub fn encode_timestamp(t: u64) -> Vec<u8> {
    t.to_be_bytes().to_vec()
}

pub fn decode_timestamp(b: &[u8]) -> Result<u64, CryptoError> {
    let arr: [u8; 8] = b
        .try_into()
        .map_err(|_| CryptoError::Malformed("timestamp"))?;
    Ok(u64::from_be_bytes(arr))
}
