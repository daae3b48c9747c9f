//! Deterministic sampling primitives.
//!
//! Every random draw in the crate comes from an [`RngStream`]: a 64-bit key
//! plus a 64-bit counter fed through the Philox4x64-10 block function. A
//! stream is a value; copying it and replaying from the same counter yields
//! the same samples, and [`RngStream::split`] derives child streams from the
//! key alone so lineages get independent randomness regardless of the order
//! in which they are simulated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

const SPLIT_TAG: u64 = 0x5350_4C49_545F_4B45;
const DERIVE_TAG: u64 = 0x4445_5249_5645_5F4B;
const STREAM_KEY_HI: u64 = 0x6262_6D2D_6C61_6221;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// Philox4x64 with ten rounds.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Counter-based random stream.
///
/// Position `counter` addresses a single 64-bit word: block `counter / 4`,
/// lane `counter % 4`. The last computed block is cached; equality ignores
/// the cache.
#[derive(Clone, Copy, Debug)]
pub struct RngStream {
    key: u64,
    counter: u64,
    cached_block: u64,
    cache: [u64; 4],
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.counter == other.counter
    }
}

impl Eq for RngStream {}

impl RngStream {
    pub fn new(key: u64) -> Self {
        Self::at(key, 0)
    }

    pub fn at(key: u64, counter: u64) -> Self {
        RngStream {
            key,
            counter,
            cached_block: u64::MAX,
            cache: [0; 4],
        }
    }

    /// Stream keyed by a seed and a path of labels (experiment, replica, ...).
    pub fn derive(seed: u64, labels: &[u64]) -> Self {
        let mut key = philox4x64([seed, DERIVE_TAG, 0, 0], [seed, STREAM_KEY_HI])[0];
        for (depth, &label) in labels.iter().enumerate() {
            key = philox4x64([label, DERIVE_TAG, depth as u64 + 1, 0], [key, STREAM_KEY_HI])[0];
        }
        Self::new(key)
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Child stream `index`; depends only on this stream's key.
    pub fn split(&self, index: u64) -> Self {
        let key = philox4x64([index, SPLIT_TAG, 0, 0], [self.key, STREAM_KEY_HI])[0];
        Self::new(key)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let block = self.counter >> 2;
        if block != self.cached_block {
            self.cache = philox4x64([block, 0, 0, 0], [self.key, STREAM_KEY_HI]);
            self.cached_block = block;
        }
        let out = self.cache[(self.counter & 3) as usize];
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fills `out` with independent standard normals (Box-Muller, two words
    /// per pair; an odd tail discards the sine branch).
    #[inline]
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    #[inline]
    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }
}

/// A point or increment in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    coords: Vec<f64>,
}

impl Displacement {
    pub fn zeros(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Displacement { coords: vec![0.0; d] })
    }

    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        check_dim(coords.len())?;
        Ok(Displacement { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl std::ops::Add for &Displacement {
    type Output = Displacement;
    fn add(self, rhs: &Displacement) -> Displacement {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        Displacement {
            coords: self.coords.iter().zip(&rhs.coords).map(|(a, b)| a + b).collect(),
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::InvalidDimension(d))
    } else {
        Ok(())
    }
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gaussian_vector(stream: &mut RngStream, d: usize) -> Result<Displacement> {
    check_dim(d)?;
    let mut coords = vec![0.0; d];
    stream.fill_standard_normal(&mut coords);
    Ok(Displacement { coords })
}

pub fn brownian_increment(stream: &mut RngStream, d: usize, dt: f64) -> Result<Displacement> {
    check_dim(d)?;
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be finite and >= 0, got {dt}")));
    }
    let mut coords = vec![0.0; d];
    stream.fill_standard_normal(&mut coords);
    let scale = dt.sqrt();
    coords.iter_mut().for_each(|c| *c *= scale);
    Ok(Displacement { coords })
}

/// Exp(1) waiting time.
#[inline]
pub fn exp_lifetime(stream: &mut RngStream) -> f64 {
    -stream.uniform_open0().ln()
}

/// Probability that a 1-d Brownian bridge from `x0` to `x1` over `dt` reaches
/// `barrier`. Returns 1 when an endpoint already sits at or above it.
pub fn bridge_crossing_prob(x0: f64, x1: f64, dt: f64, barrier: f64) -> f64 {
    bridge_crossing_prob_gaps(barrier - x0, barrier - x1, dt)
}

/// Same as [`bridge_crossing_prob`] expressed through the two endpoint gaps
/// to the barrier; exact for a barrier that moves linearly over the interval.
#[inline]
pub fn bridge_crossing_prob_gaps(gap0: f64, gap1: f64, dt: f64) -> f64 {
    if gap0 <= 0.0 || gap1 <= 0.0 {
        return 1.0;
    }
    if gap0.is_infinite() || gap1.is_infinite() {
        return 0.0;
    }
    if dt <= 0.0 {
        return 0.0;
    }
    (-2.0 * gap0 * gap1 / dt).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_matches_reference_vectors() {
        // Reference outputs of numpy.random.Philox, whose first block uses counter 1.
        assert_eq!(
            philox4x64([1, 0, 0, 0], [0, 0]),
            [0x02f4ba6408e4d89b, 0x3dd62b0b9ca8c5b2, 0x1c8667a55d902e79, 0x907d7a052fd5b4dc]
        );
        assert_eq!(
            philox4x64([1, 0, 0, 0], [0x1234, 0x5678]),
            [0x7af1ec3cbd0ad88a, 0x009cd89c3efe261f, 0x0b019d81fcae091c, 0x61331f09223ecda9]
        );
    }

    #[test]
    fn replay_is_identical() {
        let mut a = RngStream::at(42, 17);
        let mut b = RngStream::at(42, 17);
        assert_eq!(gaussian_vector(&mut a, 5).unwrap(), gaussian_vector(&mut b, 5).unwrap());
        assert_eq!(a.counter(), b.counter());
        let mut c = RngStream::at(42, 17);
        c.next_u64();
        let mut d = RngStream::at(42, 18);
        assert_eq!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut s = RngStream::new(1);
        assert!(matches!(gaussian_vector(&mut s, 0), Err(Error::InvalidDimension(0))));
        assert!(matches!(brownian_increment(&mut s, 0, 1.0), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn negative_dt_rejected() {
        let mut s = RngStream::new(1);
        assert!(matches!(brownian_increment(&mut s, 2, -0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_dt_is_zero_vector() {
        let mut s = RngStream::new(9);
        let inc = brownian_increment(&mut s, 3, 0.0).unwrap();
        assert!(inc.coords().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn bridge_probability_values() {
        assert_eq!(bridge_crossing_prob(0.0, 0.0, 1.0, 0.0), 1.0);
        assert!((bridge_crossing_prob(0.0, 0.0, 1.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(bridge_crossing_prob(0.0, 0.0, 1.0, f64::INFINITY), 0.0);
        assert_eq!(bridge_crossing_prob(2.0, 0.0, 1.0, 1.0), 1.0);
        assert!(bridge_crossing_prob(0.0, 0.0, 1.0, 1e6) == 0.0);
    }

    #[test]
    fn split_children_differ() {
        let s = RngStream::new(5);
        let (a, b) = (s.split(0), s.split(1));
        assert_ne!(a.key(), b.key());
        assert_eq!(a, s.split(0));
        let mut advanced = s;
        advanced.next_u64();
        assert_eq!(advanced.split(0), a);
    }

    proptest::proptest! {
        #[test]
        fn bridge_monotone_in_barrier(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, dt in 0.01f64..4.0,
                                      b in 0.0f64..5.0, db in 0.0f64..5.0) {
            let base = x0.max(x1) + b;
            let p_lo = bridge_crossing_prob(x0, x1, dt, base);
            let p_hi = bridge_crossing_prob(x0, x1, dt, base + db);
            proptest::prop_assert!(p_hi <= p_lo + 1e-15);
            proptest::prop_assert!((0.0..=1.0).contains(&p_lo));
        }

        #[test]
        fn uniform_in_range(key in proptest::num::u64::ANY, ctr in 0u64..1_000_000) {
            let mut s = RngStream::at(key, ctr);
            let u = s.uniform();
            let v = s.uniform_open0();
            proptest::prop_assert!((0.0..1.0).contains(&u));
            proptest::prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}
