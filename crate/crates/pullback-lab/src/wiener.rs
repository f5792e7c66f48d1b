//! Two-sided noise paths on fixed grids.
//!
//! A path is a piecewise-linear function pinned to 0 at time 0, sampled once
//! on a uniform grid that straddles the origin. The two half-axes consume
//! independent substreams of one seeded generator and are accumulated outward
//! from 0, so widening the grid at a fixed step never changes values on nodes
//! the grids share. The shift map re-centers the grid without discarding
//! data: (shift t)(r) = path(r + t) - path(t).

use crate::error::{Error, Result};
use crate::numerics::fmt_g17;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

/// Relative slack when deciding whether a time sits on the grid.
const ALIGN_TOL: f64 = 1e-6;

/// Uniform grid with t_min < 0 < t_max and 0 exactly on a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    step: f64,
    n_points: usize,
    /// Index of the node at time 0.
    zero_index: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        if !(t_min < 0.0 && 0.0 < t_max) {
            return Err(Error::Config(format!(
                "grid must straddle 0: t_min = {t_min}, t_max = {t_max}"
            )));
        }
        let neg = -t_min / step;
        let pos = t_max / step;
        if (neg - neg.round()).abs() > ALIGN_TOL || (pos - pos.round()).abs() > ALIGN_TOL {
            return Err(Error::Config(format!(
                "grid endpoints must be integer multiples of the step: t_min = {t_min}, t_max = {t_max}, step = {step}"
            )));
        }
        let zero_index = neg.round() as usize;
        let n_points = zero_index + pos.round() as usize + 1;
        Ok(TimeGrid {
            step,
            n_points,
            zero_index,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    pub fn t_min(&self) -> f64 {
        -(self.zero_index as f64) * self.step
    }

    pub fn t_max(&self) -> f64 {
        (self.n_points - 1 - self.zero_index) as f64 * self.step
    }

    /// Time of node i; exact 0.0 at the zero index.
    pub fn node_time(&self, i: usize) -> f64 {
        (i as f64 - self.zero_index as f64) * self.step
    }

    /// Signed node offset of t from the origin, if t is grid-aligned.
    pub fn aligned_steps(&self, t: f64) -> Result<i64> {
        let pos = t / self.step;
        let k = pos.round();
        if (pos - k).abs() > ALIGN_TOL {
            return Err(Error::Misaligned { t, step: self.step });
        }
        Ok(k as i64)
    }

    /// Node index of a grid-aligned time within support.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self.aligned_steps(t)?;
        let idx = k + self.zero_index as i64;
        if idx < 0 || idx >= self.n_points as i64 {
            return Err(Error::OutOfSupport {
                t,
                t_min: self.t_min(),
                t_max: self.t_max(),
            });
        }
        Ok(idx as usize)
    }

    fn contains(&self, t: f64) -> bool {
        let slack = ALIGN_TOL * self.step;
        t >= self.t_min() - slack && t <= self.t_max() + slack
    }
}

#[derive(Debug, Clone)]
enum PathKind {
    Sampled(Vec<f64>),
    Zero,
    Linear { slope: f64 },
}

/// Sup of |path(t)/t| over grid nodes with |t| >= t0, the empirical surrogate
/// for the sublinear-growth property used by truncation certificates.
#[derive(Debug, Clone, Copy)]
pub struct SublinearityReport {
    pub t0: f64,
    pub sup_ratio: f64,
    /// Growth constant downstream tail bounds should assume.
    pub recommended_epsilon: f64,
    pub nodes_checked: usize,
}

/// A two-sided path sample on a fixed grid.
#[derive(Debug, Clone)]
pub struct WienerPath {
    grid: TimeGrid,
    kind: PathKind,
    seed: u64,
    /// Accumulated shift offset relative to the originally sampled frame.
    origin_shift: f64,
}

impl WienerPath {
    /// Draws one path. The halves t >= 0 and t <= 0 use independent
    /// substreams of the seeded generator and are summed outward from 0.
    pub fn sample(grid: TimeGrid, seed: u64) -> Self {
        let scale = grid.step().sqrt();
        let mut values = vec![0.0_f64; grid.n_points()];
        let i0 = grid.zero_index();

        let mut fwd = ChaCha12Rng::seed_from_u64(seed);
        fwd.set_stream(1);
        for i in i0 + 1..grid.n_points() {
            let z: f64 = StandardNormal.sample(&mut fwd);
            values[i] = values[i - 1] + scale * z;
        }

        let mut bwd = ChaCha12Rng::seed_from_u64(seed);
        bwd.set_stream(2);
        for k in 1..=i0 {
            let z: f64 = StandardNormal.sample(&mut bwd);
            values[i0 - k] = values[i0 - k + 1] + scale * z;
        }

        WienerPath {
            grid,
            kind: PathKind::Sampled(values),
            seed,
            origin_shift: 0.0,
        }
    }

    /// The identically-zero path (deterministic limit delta -> 0).
    pub fn zero(grid: TimeGrid) -> Self {
        WienerPath {
            grid,
            kind: PathKind::Zero,
            seed: 0,
            origin_shift: 0.0,
        }
    }

    /// The path t -> slope * t, which violates sublinearity when slope != 0;
    /// used to exercise diagnostics and tail-certificate failures.
    pub fn linear(grid: TimeGrid, slope: f64) -> Self {
        WienerPath {
            grid,
            kind: PathKind::Linear { slope },
            seed: 0,
            origin_shift: 0.0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin_shift(&self) -> f64 {
        self.origin_shift
    }

    pub fn value_at_node(&self, i: usize) -> f64 {
        match &self.kind {
            PathKind::Sampled(v) => v[i],
            PathKind::Zero => 0.0,
            PathKind::Linear { slope } => slope * self.grid.node_time(i),
        }
    }

    /// Piecewise-linear evaluation; node-exact on grid times.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !self.grid.contains(t) {
            return Err(Error::OutOfSupport {
                t,
                t_min: self.grid.t_min(),
                t_max: self.grid.t_max(),
            });
        }
        let pos = t / self.grid.step() + self.grid.zero_index() as f64;
        let nearest = pos.round();
        let last = (self.grid.n_points() - 1) as f64;
        if (pos - nearest).abs() <= ALIGN_TOL && (0.0..=last).contains(&nearest) {
            return Ok(self.value_at_node(nearest as usize));
        }
        let lo = pos.floor().clamp(0.0, last - 1.0) as usize;
        let frac = pos - lo as f64;
        let a = self.value_at_node(lo);
        let b = self.value_at_node(lo + 1);
        Ok(a + frac * (b - a))
    }

    /// The shifted path r -> path(r + t) - path(t) on support
    /// [t_min - t, t_max - t]. Every node is kept; t must be grid-aligned and
    /// strictly inside the support so the new grid still straddles 0.
    pub fn shift(&self, t: f64) -> Result<WienerPath> {
        let k = self.grid.aligned_steps(t)?;
        let new_zero = self.grid.zero_index() as i64 + k;
        if new_zero <= 0 || new_zero >= self.grid.n_points() as i64 - 1 {
            return Err(Error::OutOfSupport {
                t,
                t_min: self.grid.t_min(),
                t_max: self.grid.t_max(),
            });
        }
        let new_zero = new_zero as usize;
        let grid = TimeGrid {
            step: self.grid.step(),
            n_points: self.grid.n_points(),
            zero_index: new_zero,
        };
        let kind = match &self.kind {
            PathKind::Sampled(v) => {
                let pivot = v[new_zero];
                PathKind::Sampled(v.iter().map(|x| x - pivot).collect())
            }
            PathKind::Zero => PathKind::Zero,
            PathKind::Linear { slope } => PathKind::Linear { slope: *slope },
        };
        Ok(WienerPath {
            grid,
            kind,
            seed: self.seed,
            origin_shift: self.origin_shift + t,
        })
    }

    /// Empirical sublinearity over nodes with |t| >= t0.
    pub fn sublinearity(&self, t0: f64) -> Result<SublinearityReport> {
        if !(t0 > 0.0) {
            return Err(Error::Config(format!("sublinearity threshold must be positive, got {t0}")));
        }
        if self.grid.t_max() < t0 && -self.grid.t_min() < t0 {
            return Err(Error::InsufficientSupport {
                what: "sublinearity report",
                available: self.grid.t_max().max(-self.grid.t_min()),
                needed: t0,
            });
        }
        let mut sup: f64 = 0.0;
        let mut n = 0usize;
        for i in 0..self.grid.n_points() {
            let t = self.grid.node_time(i);
            if t.abs() >= t0 {
                sup = sup.max((self.value_at_node(i) / t).abs());
                n += 1;
            }
        }
        Ok(SublinearityReport {
            t0,
            sup_ratio: sup,
            recommended_epsilon: sup,
            nodes_checked: n,
        })
    }

    /// Sup of |path(r)/r| over grid nodes r <= -cutoff (forward = false) or
    /// r >= cutoff (forward = true); the per-truncation growth constant for
    /// tail certificates.
    pub fn growth_ratio_beyond(&self, cutoff: f64, forward: bool) -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..self.grid.n_points() {
            let t = self.grid.node_time(i);
            if (forward && t >= cutoff) || (!forward && t <= -cutoff) {
                sup = sup.max((self.value_at_node(i) / t).abs());
            }
        }
        sup
    }
}

const CACHE_MAGIC: &[u8; 4] = b"WPTH";
const CACHE_VERSION: u32 = 1;
const CACHE_HEADER_LEN: usize = 32;

/// On-disk cache of sampled paths: per path one flat file of little-endian
/// f64 node values after a 32-byte header (magic, version, seed, t_min, step).
#[derive(Debug, Clone)]
pub struct PathCache {
    dir: PathBuf,
}

impl PathCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(PathCache {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn file_name(grid: &TimeGrid, seed: u64) -> String {
        format!(
            "wpth-{seed:016x}-{:016x}-{:016x}-{:016x}.bin",
            grid.t_min().to_bits(),
            grid.t_max().to_bits(),
            grid.step().to_bits()
        )
    }

    pub fn store(&self, path: &WienerPath) -> Result<PathBuf> {
        let values = match &path.kind {
            PathKind::Sampled(v) => v,
            _ => {
                return Err(Error::Cache(
                    "only sampled paths are cached; synthetic paths are free to rebuild".into(),
                ))
            }
        };
        let file = self.dir.join(Self::file_name(&path.grid, path.seed));
        let mut buf = Vec::with_capacity(CACHE_HEADER_LEN + values.len() * 8);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&path.seed.to_le_bytes());
        buf.extend_from_slice(&path.grid.t_min().to_le_bytes());
        buf.extend_from_slice(&path.grid.step().to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        // Concurrent rows may store the same (seed, grid) path. Sampling is
        // deterministic, so the bytes agree; staging through a unique temp
        // name and renaming keeps the visible file complete at all times.
        static STORE_SEQ: AtomicU64 = AtomicU64::new(0);
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            Self::file_name(&path.grid, path.seed),
            std::process::id(),
            STORE_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        drop(f);
        fs::rename(&tmp, &file)?;
        Ok(file)
    }

    pub fn load(&self, grid: TimeGrid, seed: u64) -> Result<Option<WienerPath>> {
        let file = self.dir.join(Self::file_name(&grid, seed));
        if !file.exists() {
            return Ok(None);
        }
        let mut bytes = Vec::new();
        fs::File::open(&file)?.read_to_end(&mut bytes)?;
        if bytes.len() < CACHE_HEADER_LEN || &bytes[0..4] != CACHE_MAGIC {
            return Err(Error::Cache(format!("{} is not a path cache file", file.display())));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported cache version {version}")));
        }
        let file_seed = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let t_min = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let step = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        if file_seed != seed || t_min.to_bits() != grid.t_min().to_bits() || step.to_bits() != grid.step().to_bits()
        {
            return Err(Error::Cache(format!(
                "cache header mismatch for {}: seed {file_seed}, t_min {}, step {}",
                file.display(),
                fmt_g17(t_min),
                fmt_g17(step)
            )));
        }
        let n = (bytes.len() - CACHE_HEADER_LEN) / 8;
        if n != grid.n_points() || (bytes.len() - CACHE_HEADER_LEN) % 8 != 0 {
            return Err(Error::Cache(format!(
                "cache payload holds {n} values, grid wants {}",
                grid.n_points()
            )));
        }
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let off = CACHE_HEADER_LEN + 8 * i;
            values.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        }
        Ok(Some(WienerPath {
            grid,
            kind: PathKind::Sampled(values),
            seed,
            origin_shift: 0.0,
        }))
    }

    /// Cache-through sampling: load on hit, otherwise sample and store.
    pub fn load_or_sample(&self, grid: TimeGrid, seed: u64) -> Result<WienerPath> {
        if let Some(p) = self.load(grid, seed)? {
            return Ok(p);
        }
        let p = WienerPath::sample(grid, seed);
        self.store(&p)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(t_min: f64, t_max: f64, step: f64) -> TimeGrid {
        TimeGrid::new(t_min, t_max, step).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(TimeGrid::new(-1.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.0, 1.0, -0.1).is_err());
        assert!(TimeGrid::new(0.5, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(-1.0, -0.5, 0.1).is_err());
        // 0 must be a node: t_min not a multiple of step
        assert!(TimeGrid::new(-1.05, 1.0, 0.1).is_err());
    }

    #[test]
    fn grid_node_times_are_exact_at_zero() {
        let g = grid(-2.0, 3.0, 0.1);
        assert_eq!(g.node_time(g.zero_index()), 0.0);
        assert_eq!(g.n_points(), 51);
        assert!((g.t_min() + 2.0).abs() < 1e-12);
        assert!((g.t_max() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_path_is_zero_at_origin_and_deterministic() {
        let g = grid(-10.0, 10.0, 0.01);
        let p = WienerPath::sample(g, 7);
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        let q = WienerPath::sample(g, 7);
        for i in 0..g.n_points() {
            assert_eq!(p.value_at_node(i), q.value_at_node(i));
        }
        let r = WienerPath::sample(g, 8);
        assert_ne!(p.eval(1.0).unwrap(), r.eval(1.0).unwrap());
    }

    #[test]
    fn widening_the_grid_preserves_common_nodes() {
        let narrow = WienerPath::sample(grid(-5.0, 5.0, 0.01), 42);
        let wide = WienerPath::sample(grid(-20.0, 12.0, 0.01), 42);
        for &t in &[-5.0, -1.23, 0.0, 0.5, 3.21, 5.0] {
            assert_eq!(narrow.eval(t).unwrap(), wide.eval(t).unwrap());
        }
    }

    #[test]
    fn halves_are_independent_streams() {
        let g = grid(-4.0, 4.0, 0.01);
        let p = WienerPath::sample(g, 3);
        // mirrored nodes must not repeat the same increments
        assert_ne!(p.eval(1.0).unwrap(), p.eval(-1.0).unwrap());
    }

    #[test]
    fn increments_have_the_right_moments() {
        // Deterministic Monte Carlo: fixed seed list, so this either always
        // passes or always fails.
        let g = grid(-1.0, 4.0, 0.01);
        let n = 10_000usize;
        let mut sums = [0.0_f64; 3];
        let mut sq = [0.0_f64; 3];
        let ts = [1.0, 4.0, -1.0];
        for seed in 0..n as u64 {
            let p = WienerPath::sample(g, seed);
            for (j, &t) in ts.iter().enumerate() {
                let v = p.eval(t).unwrap();
                sums[j] += v;
                sq[j] += v * v;
            }
        }
        for (j, &t) in ts.iter().enumerate() {
            let mean = sums[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            let sigma = t.abs().sqrt();
            assert!(
                mean.abs() < 5.0 * sigma / (n as f64).sqrt(),
                "mean at t={t}: {mean}"
            );
            assert!(
                (var - t.abs()).abs() < 0.05 * t.abs(),
                "variance at t={t}: {var}"
            );
        }
    }

    #[test]
    fn eval_interpolates_between_nodes() {
        let g = grid(-1.0, 1.0, 0.5);
        let p = WienerPath::sample(g, 11);
        let a = p.eval(0.5).unwrap();
        let b = p.eval(1.0).unwrap();
        let mid = p.eval(0.75).unwrap();
        assert!((mid - 0.5 * (a + b)).abs() < 1e-12);
        let lo = a.min(b) - 1e-12;
        let hi = a.max(b) + 1e-12;
        assert!(mid >= lo && mid <= hi);
    }

    #[test]
    fn eval_outside_support_errors() {
        let p = WienerPath::sample(grid(-1.0, 1.0, 0.1), 1);
        assert!(matches!(p.eval(1.2), Err(Error::OutOfSupport { .. })));
        assert!(matches!(p.eval(-1.2), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn shift_matches_definition_and_accumulates_provenance() {
        let p = WienerPath::sample(grid(-4.0, 4.0, 0.5), 5);
        let s = p.shift(1.0).unwrap();
        // (shift 1)(2) = p(3) - p(1)
        let expect = p.eval(3.0).unwrap() - p.eval(1.0).unwrap();
        assert!((s.eval(2.0).unwrap() - expect).abs() < 1e-12);
        assert_eq!(s.eval(0.0).unwrap(), 0.0);
        assert_eq!(s.origin_shift(), 1.0);
        assert!((s.grid().t_min() + 5.0).abs() < 1e-12);
        assert!((s.grid().t_max() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shift_rejects_misaligned_or_exhausting_offsets() {
        let p = WienerPath::sample(grid(-2.0, 2.0, 0.5), 5);
        assert!(matches!(p.shift(0.3), Err(Error::Misaligned { .. })));
        // shifting to the boundary would leave no data on one side of 0
        assert!(p.shift(2.0).is_err());
        assert!(p.shift(-2.0).is_err());
    }

    #[test]
    fn synthetic_paths_shift_to_themselves() {
        let g = grid(-3.0, 3.0, 0.1);
        let z = WienerPath::zero(g).shift(1.0).unwrap();
        assert_eq!(z.eval(-2.0).unwrap(), 0.0);
        let l = WienerPath::linear(g, 2.0).shift(-1.0).unwrap();
        assert!((l.eval(1.5).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(l.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn sublinearity_of_synthetic_paths() {
        let g = grid(-50.0, 50.0, 0.1);
        let z = WienerPath::zero(g).sublinearity(1.0).unwrap();
        assert_eq!(z.sup_ratio, 0.0);
        let l = WienerPath::linear(g, 1.0).sublinearity(1.0).unwrap();
        assert!((l.sup_ratio - 1.0).abs() < 1e-12);
        let tiny = WienerPath::zero(grid(-0.5, 0.5, 0.1));
        assert!(tiny.sublinearity(1.0).is_err());
    }

    #[test]
    fn sublinearity_shrinks_on_long_windows() {
        // |path(t)/t| concentrates near 1/sqrt(|t|); the sup over |t| >= 1 is
        // far below the worst near-origin ratios and well below 1.
        let p = WienerPath::sample(grid(-200.0, 200.0, 0.01), 7);
        let rep = p.sublinearity(1.0).unwrap();
        assert!(rep.sup_ratio < 1.0, "sup ratio {}", rep.sup_ratio);
        assert!(rep.sup_ratio > 0.0);
        let far = p.growth_ratio_beyond(50.0, false);
        assert!(far <= rep.sup_ratio + 1e-15);
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PathCache::new(dir.path()).unwrap();
        let g = grid(-2.0, 2.0, 0.01);
        let p = WienerPath::sample(g, 99);
        cache.store(&p).unwrap();
        let q = cache.load(g, 99).unwrap().expect("cache hit");
        for i in 0..g.n_points() {
            assert_eq!(p.value_at_node(i).to_bits(), q.value_at_node(i).to_bits());
        }
        assert!(cache.load(g, 100).unwrap().is_none());
        let r = cache.load_or_sample(g, 100).unwrap();
        assert_eq!(r.seed(), 100);
        assert!(cache.load(g, 100).unwrap().is_some());
    }

    #[test]
    fn cache_rejects_mismatched_grid() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PathCache::new(dir.path()).unwrap();
        let p = WienerPath::sample(grid(-2.0, 2.0, 0.01), 7);
        let file = cache.store(&p).unwrap();
        // same name, truncated payload
        let bytes = fs::read(&file).unwrap();
        fs::write(&file, &bytes[..bytes.len() - 16]).unwrap();
        assert!(cache.load(grid(-2.0, 2.0, 0.01), 7).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shift_group_law(seed in 0u64..1000, a in -10i64..10, b in -10i64..10) {
            let g = grid(-16.0, 16.0, 0.25);
            let p = WienerPath::sample(g, seed);
            let s = a as f64 * 0.25;
            let t = b as f64 * 0.25;
            prop_assume!((s + t).abs() < 15.0 && s.abs() < 15.0);
            let two = p.shift(s).unwrap().shift(t).unwrap();
            let one = p.shift(s + t).unwrap();
            for k in 0..g.n_points() {
                let d = (two.value_at_node(k) - one.value_at_node(k)).abs();
                prop_assert!(d <= 1e-12, "node {k}: {d}");
            }
        }

        #[test]
        fn shift_by_zero_is_identity(seed in 0u64..1000) {
            let g = grid(-4.0, 4.0, 0.5);
            let p = WienerPath::sample(g, seed);
            let s = p.shift(0.0).unwrap();
            for k in 0..g.n_points() {
                prop_assert_eq!(p.value_at_node(k), s.value_at_node(k));
            }
        }
    }
}
