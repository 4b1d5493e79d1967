//! Traditional and lossy checkpoint/restart over a storage target.
//!
//! Restarted methods only need `(i, x⁽ⁱ⁾)` to resume, so an image holds the
//! iteration index and either the raw solution vector or a compressed block.
//! Recovery decodes the vector and rebuilds the solver from it.
//!
//! On-disk image: `b"CKPTIMG1"`, `u32` version, `u64` iteration, `u8` payload
//! kind (0 raw, 1 lossy), `u64` payload length, `u64` xxh64 checksum of the
//! payload, then the payload (little-endian doubles, or a compressed block).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::compress::{compress, decompress, CompressedBlock, CompressorConfig};
use crate::error::{invalid, Error, Result};
use crate::solvers::{LinearSystem, Method, SolveConfig, SolverState};

pub const IMAGE_MAGIC: &[u8; 8] = b"CKPTIMG1";
pub const IMAGE_VERSION: u32 = 1;
pub const IMAGE_HEADER_LEN: usize = 8 + 4 + 8 + 1 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Raw(Vec<f64>),
    Lossy(CompressedBlock),
}

impl Payload {
    pub fn kind(&self) -> u8 {
        match self {
            Payload::Raw(_) => 0,
            Payload::Lossy(_) => 1,
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            Payload::Raw(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Payload::Lossy(b) => b.to_bytes(),
        }
    }

    fn from_bytes(kind: u8, bytes: &[u8]) -> Result<Self> {
        match kind {
            0 => {
                if bytes.len() % 8 != 0 {
                    return Err(Error::UnrecoverableImage("raw payload is not a whole number of doubles".into()));
                }
                Ok(Payload::Raw(
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ))
            }
            1 => CompressedBlock::from_bytes(bytes)
                .map(Payload::Lossy)
                .map_err(|e| Error::UnrecoverableImage(e.to_string())),
            k => Err(Error::UnrecoverableImage(format!("unknown payload kind {k}"))),
        }
    }
}

/// A checkpointed `(iteration, x)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointImage {
    iteration: u64,
    payload: Payload,
    checksum: u64,
    /// Commit sequence number assigned by the storage target; 0 before commit.
    created_at: u64,
}

impl CheckpointImage {
    pub fn new(iteration: usize, payload: Payload) -> Self {
        let checksum = xxh64(&payload.to_bytes(), 0);
        Self {
            iteration: iteration as u64,
            payload,
            checksum,
            created_at: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration as usize
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn is_lossy(&self) -> bool {
        matches!(self.payload, Payload::Lossy(_))
    }

    /// Decodes the checkpointed vector, decompressing if needed.
    pub fn vector(&self) -> Result<Vec<f64>> {
        match &self.payload {
            Payload::Raw(v) => Ok(v.clone()),
            Payload::Lossy(b) => decompress(b).map_err(|e| Error::UnrecoverableImage(e.to_string())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload.to_bytes();
        let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + payload.len());
        out.extend_from_slice(IMAGE_MAGIC);
        out.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.push(self.payload.kind());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Parses an image and validates its checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::UnrecoverableImage(m.to_string());
        if bytes.len() < IMAGE_HEADER_LEN {
            return Err(bad("image shorter than its header"));
        }
        if &bytes[..8] != IMAGE_MAGIC {
            return Err(bad("bad image magic"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != IMAGE_VERSION {
            return Err(bad("unsupported image version"));
        }
        let iteration = u64_at(12);
        let kind = bytes[20];
        let len = u64_at(21) as usize;
        let checksum = u64_at(29);
        let payload = &bytes[IMAGE_HEADER_LEN..];
        if payload.len() != len {
            return Err(bad("payload length disagrees with header"));
        }
        if xxh64(payload, 0) != checksum {
            return Err(bad("checksum mismatch"));
        }
        Ok(Self {
            iteration,
            payload: Payload::from_bytes(kind, payload)?,
            checksum,
            created_at: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backing {
    Memory,
    File(PathBuf),
}

/// Where images are committed. At most one image is live; a commit replaces
/// it atomically, and a failed commit leaves the previous image intact.
#[derive(Debug)]
pub struct StorageTarget {
    backing: Backing,
    /// Bytes per simulated time unit.
    write_bandwidth: Option<f64>,
    read_bandwidth: Option<f64>,
    committed: Option<Vec<u8>>,
    sequence: u64,
    fail_next_write: bool,
}

impl StorageTarget {
    pub fn memory() -> Self {
        Self {
            backing: Backing::Memory,
            write_bandwidth: None,
            read_bandwidth: None,
            committed: None,
            sequence: 0,
            fail_next_write: false,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            backing: Backing::File(path.into()),
            ..Self::memory()
        }
    }

    pub fn with_bandwidth(mut self, write: f64, read: f64) -> Result<Self> {
        if !(write > 0.0 && read > 0.0) {
            return Err(invalid("bandwidths must be positive"));
        }
        self.write_bandwidth = Some(write);
        self.read_bandwidth = Some(read);
        Ok(self)
    }

    pub fn backing(&self) -> &Backing {
        &self.backing
    }

    /// Simulated time to write `bytes`, zero when no bandwidth is configured.
    pub fn write_time(&self, bytes: u64) -> f64 {
        self.write_bandwidth.map_or(0.0, |bw| bytes as f64 / bw)
    }

    pub fn read_time(&self, bytes: u64) -> f64 {
        self.read_bandwidth.map_or(0.0, |bw| bytes as f64 / bw)
    }

    /// Makes the next commit fail as if the storage write broke.
    pub fn inject_write_failure(&mut self) {
        self.fail_next_write = true;
    }

    pub fn has_image(&self) -> bool {
        match &self.backing {
            Backing::Memory => self.committed.is_some(),
            Backing::File(p) => p.exists(),
        }
    }

    /// Number of successful commits so far.
    pub fn sequence(&self) -> u64 {
        self.sequence
    }

    /// Writes `image` and makes it the live image. Returns the bytes written.
    pub fn commit(&mut self, image: &mut CheckpointImage) -> Result<u64> {
        let bytes = image.to_bytes();
        if std::mem::take(&mut self.fail_next_write) {
            return Err(Error::CheckpointFailed("injected storage failure".into()));
        }
        match &self.backing {
            Backing::Memory => {}
            Backing::File(path) => write_atomically(path, &bytes)
                .map_err(|e| Error::CheckpointFailed(format!("{}: {e}", path.display())))?,
        }
        let n = bytes.len() as u64;
        if self.backing == Backing::Memory {
            self.committed = Some(bytes);
        }
        self.sequence += 1;
        image.created_at = self.sequence;
        Ok(n)
    }

    /// Loads and validates the live image.
    pub fn load(&self) -> Result<(CheckpointImage, u64)> {
        let bytes = match &self.backing {
            Backing::Memory => self
                .committed
                .clone()
                .ok_or_else(|| Error::UnrecoverableImage("no committed image".into()))?,
            Backing::File(p) => fs::read(p).map_err(|e| Error::UnrecoverableImage(format!("{}: {e}", p.display())))?,
        };
        let mut image = CheckpointImage::from_bytes(&bytes)?;
        image.created_at = self.sequence;
        Ok((image, bytes.len() as u64))
    }

    #[cfg(test)]
    fn corrupt_for_test(&mut self, offset: usize) {
        if let Some(b) = self.committed.as_mut() {
            b[offset] ^= 0xff;
        }
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Cost of one checkpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CkptCost {
    pub bytes: u64,
    /// Measured wall-clock compression time in seconds (zero for traditional).
    pub compress_seconds: f64,
    /// `bytes / write_bandwidth` in simulated time units.
    pub write_time: f64,
}

impl CkptCost {
    /// `T_comp + write time`.
    pub fn total(&self) -> f64 {
        self.compress_seconds + self.write_time
    }
}

/// Cost of one recovery.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecCost {
    pub bytes: u64,
    pub read_time: f64,
    pub decompress_seconds: f64,
}

impl RecCost {
    pub fn total(&self) -> f64 {
        self.read_time + self.decompress_seconds
    }
}

/// Checkpoints `(i, x)` uncompressed.
pub fn checkpoint_traditional(state: &SolverState, target: &mut StorageTarget) -> Result<(CheckpointImage, CkptCost)> {
    let mut image = CheckpointImage::new(state.iteration(), Payload::Raw(state.solution().into_owned()));
    let bytes = target.commit(&mut image)?;
    Ok((
        image,
        CkptCost {
            bytes,
            compress_seconds: 0.0,
            write_time: target.write_time(bytes),
        },
    ))
}

/// Compresses `x` and checkpoints `(i, compressed x)`.
pub fn checkpoint_lossy(
    state: &SolverState,
    config: &CompressorConfig,
    target: &mut StorageTarget,
) -> Result<(CheckpointImage, CkptCost)> {
    let x = state.solution();
    let start = Instant::now();
    let block = compress(&x, config).map_err(|e| Error::CheckpointFailed(e.to_string()))?;
    let compress_seconds = start.elapsed().as_secs_f64();
    let mut image = CheckpointImage::new(state.iteration(), Payload::Lossy(block));
    let bytes = target.commit(&mut image)?;
    Ok((
        image,
        CkptCost {
            bytes,
            compress_seconds,
            write_time: target.write_time(bytes),
        },
    ))
}

/// Rebuilds a solver from an image: decode `x`, then recompute the residual
/// and auxiliary vectors as for a fresh initial guess.
pub fn restore(
    image: &CheckpointImage,
    method: Method,
    sys: &LinearSystem,
    config: SolveConfig,
) -> Result<(SolverState, f64)> {
    let start = Instant::now();
    let x = image.vector()?;
    let decompress_seconds = if image.is_lossy() { start.elapsed().as_secs_f64() } else { 0.0 };
    let state = SolverState::rebuild_from_solution(method, sys, config, x, image.iteration())?;
    Ok((state, decompress_seconds))
}

/// Loads the live image from `target` and rebuilds the solver from it.
pub fn recover(
    target: &StorageTarget,
    method: Method,
    sys: &LinearSystem,
    config: SolveConfig,
) -> Result<(SolverState, RecCost)> {
    let (image, bytes) = target.load()?;
    let (state, decompress_seconds) = restore(&image, method, sys, config)?;
    Ok((
        state,
        RecCost {
            bytes,
            read_time: target.read_time(bytes),
            decompress_seconds,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cg(m: usize, steps: usize) -> (LinearSystem, SolverState) {
        let sys = LinearSystem::poisson2d(m).unwrap();
        let mut s = SolverState::init(Method::Cg, &sys, SolveConfig::new(1e-12, 10_000, 10)).unwrap();
        for _ in 0..steps {
            s.step(&sys).unwrap();
        }
        (sys, s)
    }

    #[test]
    fn traditional_round_trip_is_bitwise() {
        let (sys, s) = run_cg(8, 7);
        let mut t = StorageTarget::memory();
        let (img, cost) = checkpoint_traditional(&s, &mut t).unwrap();
        assert_eq!(cost.bytes as usize, 8 * sys.n() + IMAGE_HEADER_LEN);
        assert_eq!(img.created_at(), 1);
        let (r, _) = recover(&t, Method::Cg, &sys, *s.config()).unwrap();
        assert_eq!(r.iteration(), 7);
        let a: Vec<u64> = r.solution().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = s.solution().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn traditional_write_time_from_bandwidth() {
        let n = 1_000_000;
        let sys = LinearSystem::with_jacobi(crate::CsrMatrix::identity(n), crate::DenseVector::ones(n)).unwrap();
        let s = SolverState::init(Method::Jacobi, &sys, SolveConfig::new(1e-8, 10, 10)).unwrap();
        let mut t = StorageTarget::memory().with_bandwidth(66_667.0, 66_667.0).unwrap();
        let (_, cost) = checkpoint_traditional(&s, &mut t).unwrap();
        assert!((cost.write_time - 120.0).abs() / 120.0 < 1e-3, "{}", cost.write_time);
    }

    #[test]
    fn lossy_recovery_within_bound() {
        let (sys, s) = run_cg(16, 12);
        let mut t = StorageTarget::memory();
        let cfg = CompressorConfig::absolute(1e-5);
        let (img, _) = checkpoint_lossy(&s, &cfg, &mut t).unwrap();
        assert!(img.is_lossy());
        let (r, cost) = recover(&t, Method::Cg, &sys, *s.config()).unwrap();
        assert!(cost.decompress_seconds >= 0.0);
        let worst = r
            .solution()
            .iter()
            .zip(s.solution().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-5);
    }

    #[test]
    fn constant_vector_compresses_below_one_percent() {
        let n = 1_000_000;
        let sys = LinearSystem::with_jacobi(crate::CsrMatrix::identity(n), crate::DenseVector::ones(n)).unwrap();
        let mut s = SolverState::init(Method::Jacobi, &sys, SolveConfig::new(1e-20, 10, 10)).unwrap();
        // one Jacobi step on the identity gives x = b = 1 everywhere
        s.step(&sys).unwrap();
        let mut t = StorageTarget::memory();
        let (_, cost) = checkpoint_lossy(&s, &CompressorConfig::relative(1e-4), &mut t).unwrap();
        assert!((cost.bytes as f64) < 0.01 * 8e6);
    }

    #[test]
    fn failed_commit_keeps_last_good() {
        let (sys, mut s) = run_cg(8, 3);
        let mut t = StorageTarget::memory();
        checkpoint_traditional(&s, &mut t).unwrap();
        for _ in 0..3 {
            s.step(&sys).unwrap();
        }
        t.inject_write_failure();
        assert!(matches!(checkpoint_traditional(&s, &mut t), Err(Error::CheckpointFailed(_))));
        let (r, _) = recover(&t, Method::Cg, &sys, *s.config()).unwrap();
        assert_eq!(r.iteration(), 3);
    }

    #[test]
    fn checksum_mismatch_is_unrecoverable() {
        let (sys, s) = run_cg(4, 2);
        let mut t = StorageTarget::memory();
        checkpoint_traditional(&s, &mut t).unwrap();
        t.corrupt_for_test(IMAGE_HEADER_LEN + 3);
        assert!(matches!(
            recover(&t, Method::Cg, &sys, *s.config()),
            Err(Error::UnrecoverableImage(_))
        ));
    }

    #[test]
    fn empty_target_is_unrecoverable() {
        let sys = LinearSystem::poisson2d(3).unwrap();
        let t = StorageTarget::memory();
        assert!(matches!(
            recover(&t, Method::Cg, &sys, SolveConfig::new(1e-8, 10, 5)),
            Err(Error::UnrecoverableImage(_))
        ));
    }

    #[test]
    fn file_backing_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.img");
        let (sys, s) = run_cg(8, 4);
        let mut t = StorageTarget::file(&path);
        checkpoint_lossy(&s, &CompressorConfig::relative(1e-6), &mut t).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], IMAGE_MAGIC);
        assert_eq!(bytes[20], 1);
        let (r, _) = recover(&t, Method::Cg, &sys, *s.config()).unwrap();
        assert_eq!(r.iteration(), 4);
        assert!(!dir.path().join("ckpt.img.tmp").exists());
    }
}
