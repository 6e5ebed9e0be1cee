//! Service area, AP layout, traffic model, and reproducible random streams.
//!
//! The scene is a square area with access points on a regular grid and a
//! large population of mostly-idle user devices. Each device wakes up
//! independently with a small probability per slot and picks one preamble
//! uniformly from the pool.
//!
//! Randomness is organized as a tree of named streams derived from one
//! master seed. A stream is addressed by its path, e.g. root -> "trial" ->
//! 17 -> "noise". Identical (seed, path) always yields the identical
//! sequence, no matter in which order sibling streams are consumed, which
//! is what makes parallel Monte Carlo runs reproducible bit for bit.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use sha2::{Digest, Sha256};

/// A point in the plane, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    pub fn dist_sq(self, other: Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Self) -> T {
        self.dist_sq(other).sqrt()
    }
}

/// Square service area with side length in meters.
#[derive(Clone, Copy, Debug)]
pub struct AreaSpec<T> {
    side_m: T,
}

impl<T: Scalar> AreaSpec<T> {
    pub fn new(side_m: T) -> Result<Self> {
        if !side_m.is_finite() || side_m <= T::zero() {
            return Err(invalid(format!("area side must be positive, got {side_m}")));
        }
        Ok(AreaSpec { side_m })
    }

    pub fn side_m(&self) -> T {
        self.side_m
    }
}

/// Traffic model: `num_ues` devices, each active with `activation_prob` per
/// slot, choosing uniformly among `pool_size` preambles.
#[derive(Clone, Copy, Debug)]
pub struct TrafficSpec<T> {
    pub num_ues: usize,
    pub activation_prob: T,
    pub pool_size: usize,
}

impl<T: Scalar> TrafficSpec<T> {
    pub fn new(num_ues: usize, activation_prob: T, pool_size: usize) -> Result<Self> {
        if num_ues == 0 {
            return Err(invalid("traffic needs at least one device"));
        }
        if !(activation_prob >= T::zero() && activation_prob <= T::one()) {
            return Err(invalid(format!(
                "activation probability must lie in [0, 1], got {activation_prob}"
            )));
        }
        if pool_size == 0 {
            return Err(invalid("preamble pool must not be empty"));
        }
        Ok(TrafficSpec {
            num_ues,
            activation_prob,
            pool_size,
        })
    }
}

/// Fixed AP layout inside an area. Every AP carries the same number of
/// antennas. AP indices are 0-based and stable: serialization and all
/// energy vectors use this order.
#[derive(Clone, Debug)]
pub struct Deployment<T> {
    area: AreaSpec<T>,
    positions: Vec<Point2<T>>,
    antennas_per_ap: usize,
}

impl<T: Scalar> Deployment<T> {
    /// APs at the centers of a rows x cols partition of the area. AP k sits
    /// at row k / cols, column k % cols, i.e. x = (col + 1/2) side / cols,
    /// y = (row + 1/2) side / rows.
    pub fn grid(rows: usize, cols: usize, area: AreaSpec<T>, antennas_per_ap: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("grid needs at least one row and one column"));
        }
        if antennas_per_ap == 0 {
            return Err(invalid("APs need at least one antenna"));
        }
        let side = area.side_m();
        let half = T::of(0.5);
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                positions.push(Point2::new(
                    (T::from_usize(c).unwrap() + half) * side / T::from_usize(cols).unwrap(),
                    (T::from_usize(r).unwrap() + half) * side / T::from_usize(rows).unwrap(),
                ));
            }
        }
        Ok(Deployment {
            area,
            positions,
            antennas_per_ap,
        })
    }

    pub fn from_positions(
        area: AreaSpec<T>,
        positions: Vec<Point2<T>>,
        antennas_per_ap: usize,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("deployment needs at least one AP"));
        }
        if antennas_per_ap == 0 {
            return Err(invalid("APs need at least one antenna"));
        }
        let side = area.side_m();
        for (i, p) in positions.iter().enumerate() {
            if !(p.x >= T::zero() && p.x <= side && p.y >= T::zero() && p.y <= side) {
                return Err(invalid(format!("AP {i} lies outside the area")));
            }
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if positions[i] == positions[j] {
                    return Err(invalid(format!("APs {i} and {j} share a position")));
                }
            }
        }
        Ok(Deployment {
            area,
            positions,
            antennas_per_ap,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.positions.len()
    }

    pub fn antennas_per_ap(&self) -> usize {
        self.antennas_per_ap
    }

    pub fn total_antennas(&self) -> usize {
        self.positions.len() * self.antennas_per_ap
    }

    pub fn position(&self, ap: usize) -> Point2<T> {
        self.positions[ap]
    }

    pub fn positions(&self) -> &[Point2<T>] {
        &self.positions
    }

    pub fn area(&self) -> AreaSpec<T> {
        self.area
    }

    /// CSV with header `ap_index,x_m,y_m,antennas`, one row per AP in index
    /// order. Floats are printed with shortest round-trip precision.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("ap_index,x_m,y_m,antennas\n");
        for (i, p) in self.positions.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", p.x, p.y, self.antennas_per_ap));
        }
        out
    }

    /// Parse the CSV produced by [`Deployment::to_csv_string`]. Indices must
    /// be contiguous from 0 and the antenna count identical on every row.
    pub fn from_csv_str(text: &str, area: AreaSpec<T>) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| crate::Error::Format("deployment csv is empty".into()))?;
        if header.trim() != "ap_index,x_m,y_m,antennas" {
            return Err(crate::Error::Format(format!(
                "unexpected deployment header: {header}"
            )));
        }
        let mut positions = Vec::new();
        let mut antennas = None;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(crate::Error::Format(format!(
                    "deployment line {}: expected 4 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let idx: usize = fields[0].trim().parse().map_err(|_| {
                crate::Error::Format(format!("deployment line {}: bad index", lineno + 2))
            })?;
            if idx != positions.len() {
                return Err(crate::Error::Format(format!(
                    "deployment line {}: index {} out of order",
                    lineno + 2,
                    idx
                )));
            }
            let x: f64 = fields[1].trim().parse().map_err(|_| {
                crate::Error::Format(format!("deployment line {}: bad x", lineno + 2))
            })?;
            let y: f64 = fields[2].trim().parse().map_err(|_| {
                crate::Error::Format(format!("deployment line {}: bad y", lineno + 2))
            })?;
            let a: usize = fields[3].trim().parse().map_err(|_| {
                crate::Error::Format(format!("deployment line {}: bad antenna count", lineno + 2))
            })?;
            match antennas {
                None => antennas = Some(a),
                Some(prev) if prev != a => {
                    return Err(crate::Error::Format(
                        "deployment rows disagree on antenna count".into(),
                    ))
                }
                _ => {}
            }
            positions.push(Point2::new(T::of(x), T::of(y)));
        }
        let antennas =
            antennas.ok_or_else(|| crate::Error::Format("deployment csv has no rows".into()))?;
        Deployment::from_positions(area, positions, antennas)
    }
}

/// One segment of a stream path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathSeg {
    Label(&'static str),
    Index(u64),
}

impl From<&'static str> for PathSeg {
    fn from(s: &'static str) -> Self {
        PathSeg::Label(s)
    }
}

impl From<u64> for PathSeg {
    fn from(i: u64) -> Self {
        PathSeg::Index(i)
    }
}

impl From<usize> for PathSeg {
    fn from(i: usize) -> Self {
        PathSeg::Index(i as u64)
    }
}

/// Counter-based random stream addressed by (master seed, path).
///
/// Each derived stream is an independent ChaCha8 generator whose 256-bit key
/// is the SHA-256 digest of the master seed and the encoded path, so deriving
/// a child never consumes state from the parent. Use [`RngStream::child`] to
/// descend; the stream itself implements [`RngCore`].
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: Vec<PathSeg>,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn root(master_seed: u64) -> Self {
        Self::derive(master_seed, Vec::new())
    }

    /// Child stream with one more path segment. Independent of any draws
    /// already made from `self`.
    pub fn child(&self, seg: impl Into<PathSeg>) -> Self {
        let mut path = self.path.clone();
        path.push(seg.into());
        Self::derive(self.seed, path)
    }

    pub fn path(&self) -> &[PathSeg] {
        &self.path
    }

    pub fn master_seed(&self) -> u64 {
        self.seed
    }

    fn derive(seed: u64, path: Vec<PathSeg>) -> Self {
        let mut h = Sha256::new();
        h.update(b"gfra-stream-v1");
        h.update(seed.to_le_bytes());
        for seg in &path {
            match seg {
                PathSeg::Label(s) => {
                    h.update([0x4c]);
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
                PathSeg::Index(i) => {
                    h.update([0x49]);
                    h.update(i.to_le_bytes());
                }
            }
        }
        let digest: [u8; 32] = h.finalize().into();
        RngStream {
            seed,
            path,
            rng: ChaCha8Rng::from_seed(digest),
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Derive the stream at `path` below the master seed in one call.
pub fn derive_stream(master_seed: u64, path: &[PathSeg]) -> RngStream {
    RngStream::derive(master_seed, path.to_vec())
}

/// Number of devices that become active this slot, Binomial(num_ues,
/// activation_prob).
pub fn sample_active_count<T: Scalar, R: Rng + ?Sized>(
    traffic: &TrafficSpec<T>,
    rng: &mut R,
) -> usize {
    let p = traffic.activation_prob.as_f64();
    let dist = Binomial::new(traffic.num_ues as u64, p).expect("validated probability");
    dist.sample(rng) as usize
}

/// Independent uniform positions in the area, one per device.
pub fn place_ues_uniform<T: Scalar, R: Rng + ?Sized>(
    count: usize,
    area: &AreaSpec<T>,
    rng: &mut R,
) -> Vec<Point2<T>> {
    let side = area.side_m();
    (0..count)
        .map(|_| {
            // draw order: x then y
            let x = T::uniform_01(rng) * side;
            let y = T::uniform_01(rng) * side;
            Point2::new(x, y)
        })
        .collect()
}
