//! Analytic desk-scale cost model of a MapReduce job, driven by the
//! classic Hadoop v1 tunables. It is not a discrete-event simulator: each
//! phase is a closed-form term chosen to reproduce the qualitative
//! dataflow — buffer spills, merge rounds, shuffle, reducer waves — and
//! the cross-parameter interactions that make these knobs hard to tune by
//! hand.
//!
//! # Model
//!
//! Sizes in bytes, costs in seconds, `mb(x) = x / 2^20`. With `m =
//! ceil(input / block)` map tasks running in `ceil(m / map_slots)` waves
//! and per-map output `M = input * map_output_ratio / m`:
//!
//! * The map sort buffer holds `B = io.sort.mb MB * (1 -
//!   io.sort.record.percent) * io.sort.spill.percent` before spilling
//!   (record accounting reduces the usable fraction), so a map spills
//!   `s = max(1, ceil(M / B))` times. Each spill chunk is sorted in
//!   memory; sorting cost scales with the data size times the log of the
//!   chunk record count, so a larger buffer trades spill I/O against sort
//!   (and buffer-allocation) CPU.
//! * Spilled files are merged `io.sort.factor` streams at a time;
//!   `ceil(log_factor(s))` full passes rewrite the map output per pass.
//! * Shuffle moves all map output (scaled by `compress_speedup` when map
//!   compression is on) across the network. If the space declares
//!   `reduce.slowstart.completedmaps`, early reducer start overlaps up to
//!   30% of the shuffle linearly.
//! * Each of `R = mapred.reduce.tasks` reducers (waves of `reduce_slots`)
//!   buffers its `shuffle / R` share in a buffer of `io.sort.mb MB *
//!   shuffle.input.buffer.percent`; in-memory segments are merged to disk
//!   whenever the buffer passes `shuffle.merge.percent` of its size or
//!   `inmem.merge.threshold` segments accumulate. On-disk segments are
//!   merged `io.sort.factor` at a time — `ceil((segs-1)/(factor-1))`
//!   merge operations, the "five rounds for forty files at factor ten"
//!   arithmetic — and `reduce.input.buffer.percent` of the buffer may
//!   retain input in memory through the reduce itself, saving disk I/O.
//! * Output compression shrinks the final write but charges compression
//!   CPU for every output byte.
//! * Startup cost grows linearly with the task count, which is what makes
//!   very large reducer counts counterproductive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{AlgoPoint, ParameterSpace, ParameterSpec, SpaceError, SystemConfig};

/// Effective sequential disk throughput, seconds per MB.
const IO_SEC_PER_MB: f64 = 0.010;
/// Aggregate shuffle network throughput, seconds per MB.
const NET_SEC_PER_MB: f64 = 0.012;
/// In-memory sort cost, seconds per MB per log2(records in a chunk).
const SORT_SEC_PER_MB_LOG2: f64 = 0.0015;
/// Sort-buffer allocation and bookkeeping, seconds per MB of buffer.
const BUF_ALLOC_SEC_PER_MB: f64 = 0.001;
/// Fixed cost of opening and flushing one spill file.
const SPILL_OVERHEAD_SEC: f64 = 0.2;
/// Codec CPU cost, seconds per (uncompressed) MB.
const COMPRESS_CPU_SEC_PER_MB: f64 = 0.006;
/// Fixed cost of one reduce-side merge operation.
const MERGE_OP_OVERHEAD_SEC: f64 = 0.3;
/// Per-task (JVM spawn and scheduling) overhead as a fraction of the base
/// startup cost.
const PER_TASK_STARTUP: f64 = 0.5;

const MB: f64 = 1024.0 * 1024.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("job profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Static description of the job and cluster being simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobProfile {
    pub input_bytes: f64,
    /// Map output bytes per input byte.
    pub map_output_ratio: f64,
    pub record_size_bytes: f64,
    pub map_slots: u32,
    pub reduce_slots: u32,
    pub cpu_cost_weight: f64,
    pub io_cost_weight: f64,
    pub network_cost_weight: f64,
    pub startup_cost_seconds: f64,
    /// Factor applied to shuffled bytes when map-output compression is on.
    pub compress_speedup: f64,
    pub block_size_bytes: f64,
}

impl JobProfile {
    /// The bundled reference profile: 64 blocks of 64 MiB (4 GiB input),
    /// Terasort-like unit output ratio and 100-byte records, and the
    /// 3 map / 2 reduce slot ratio of a single worker node.
    pub fn reference() -> JobProfile {
        JobProfile {
            input_bytes: 64.0 * 64.0 * MB,
            map_output_ratio: 1.0,
            record_size_bytes: 100.0,
            map_slots: 3,
            reduce_slots: 2,
            cpu_cost_weight: 1.0,
            io_cost_weight: 1.0,
            network_cost_weight: 1.0,
            startup_cost_seconds: 2.0,
            compress_speedup: 0.6,
            block_size_bytes: 64.0 * MB,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("input_bytes", self.input_bytes),
            ("map_output_ratio", self.map_output_ratio),
            ("record_size_bytes", self.record_size_bytes),
            ("block_size_bytes", self.block_size_bytes),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(SimError::InvalidProfile(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.map_slots == 0 || self.reduce_slots == 0 {
            return Err(SimError::InvalidProfile(
                "map_slots and reduce_slots must be positive".into(),
            ));
        }
        let weights = [
            ("cpu_cost_weight", self.cpu_cost_weight),
            ("io_cost_weight", self.io_cost_weight),
            ("network_cost_weight", self.network_cost_weight),
            ("startup_cost_seconds", self.startup_cost_seconds),
        ];
        for (name, v) in weights {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::InvalidProfile(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.cpu_cost_weight == 0.0
            && self.io_cost_weight == 0.0
            && self.network_cost_weight == 0.0
        {
            return Err(SimError::InvalidProfile(
                "at least one cost weight must be positive".into(),
            ));
        }
        if !(self.compress_speedup > 0.0 && self.compress_speedup <= 1.0) {
            return Err(SimError::InvalidProfile(format!(
                "compress_speedup must lie in (0, 1], got {}",
                self.compress_speedup
            )));
        }
        Ok(())
    }
}

/// Per-phase cost decomposition, in seconds. `total` is exactly the sum
/// of the seven components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimBreakdown {
    pub map_sort_cost: f64,
    pub map_spill_io: f64,
    pub map_merge_io: f64,
    pub shuffle_cost: f64,
    pub reduce_merge_cost: f64,
    pub reduce_io: f64,
    pub startup_cost: f64,
    pub total: f64,
}

impl std::fmt::Display for SimBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "map sort / buffer   {:10.2} s", self.map_sort_cost)?;
        writeln!(f, "map spill io        {:10.2} s", self.map_spill_io)?;
        writeln!(f, "map merge io        {:10.2} s", self.map_merge_io)?;
        writeln!(f, "shuffle             {:10.2} s", self.shuffle_cost)?;
        writeln!(f, "reduce merge        {:10.2} s", self.reduce_merge_cost)?;
        writeln!(f, "reduce io           {:10.2} s", self.reduce_io)?;
        writeln!(f, "startup/scheduling  {:10.2} s", self.startup_cost)?;
        write!(f, "total               {:10.2} s", self.total)
    }
}

/// Suggested partial-workload size for tuning runs: twice the cluster's
/// map slots times the block size, so every tuning iteration exercises
/// exactly two map waves. Advice, not enforcement.
pub fn suggested_partial_input_bytes(map_slots: u32, block_size_bytes: f64) -> f64 {
    2.0 * f64::from(map_slots) * block_size_bytes
}

/// Number of merge passes over the data to collapse `streams` sorted runs
/// with fan-in `factor`: 0 for a single run, 1 whenever `factor >=
/// streams`.
fn merge_passes(streams: u64, factor: u64) -> u64 {
    let factor = factor.max(2);
    let mut passes = 0;
    let mut remaining = streams;
    while remaining > 1 {
        remaining = remaining.div_ceil(factor);
        passes += 1;
    }
    passes
}

/// Number of individual merge operations to collapse `streams` runs with
/// fan-in `factor`: each operation turns up to `factor` runs into one, so
/// 40 runs at factor 10 take 5 operations.
fn merge_operations(streams: u64, factor: u64) -> u64 {
    let factor = factor.max(2);
    if streams < 2 {
        0
    } else {
        (streams - 1).div_ceil(factor - 1)
    }
}

/// The cost model bound to one profile and one parameter space. Missing
/// knobs fall back to their stock defaults, so a space that tunes only a
/// subset of the parameters still simulates.
#[derive(Debug, Clone)]
pub struct MrCostModel {
    profile: JobProfile,
    space: ParameterSpace,
}

impl MrCostModel {
    pub fn new(profile: JobProfile, space: ParameterSpace) -> Result<MrCostModel, SimError> {
        profile.validate()?;
        Ok(MrCostModel { profile, space })
    }

    pub fn profile(&self) -> &JobProfile {
        &self.profile
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn knob(&self, config: &SystemConfig, name: &str, default: f64) -> f64 {
        self.space.value_of(config, name).unwrap_or(default)
    }

    /// Deterministic cost of one job under `config`.
    pub fn simulate(&self, config: &SystemConfig) -> Result<SimBreakdown, SimError> {
        self.space.validate_config(config)?;
        let p = &self.profile;

        let sort_mb = self.knob(config, "io.sort.mb", 100.0);
        let spill_pct = self.knob(config, "io.sort.spill.percent", 0.08);
        let factor = self.knob(config, "io.sort.factor", 10.0).max(2.0) as u64;
        let shuf_in_pct = self.knob(config, "shuffle.input.buffer.percent", 0.7);
        let shuf_merge_pct = self.knob(config, "shuffle.merge.percent", 0.66);
        let inmem_thresh = self.knob(config, "inmem.merge.threshold", 1000.0).max(1.0);
        let red_in_pct = self.knob(config, "reduce.input.buffer.percent", 0.0);
        let reduce_tasks = self.knob(config, "mapred.reduce.tasks", 1.0);
        let record_pct = self.knob(config, "io.sort.record.percent", 0.05);
        let map_compress = self.knob(config, "mapred.compress.map.output", 0.0) != 0.0;
        let out_compress = self.knob(config, "mapred.output.compress", 0.0) != 0.0;
        let slowstart = self.space.value_of(config, "reduce.slowstart.completedmaps");

        let reducers = if reduce_tasks < 1.0 {
            log::warn!("config maps to zero reducers; simulating with a single reducer");
            1.0
        } else {
            reduce_tasks
        };

        let mb = |bytes: f64| bytes / MB;

        // Map phase structure.
        let maps = (p.input_bytes / p.block_size_bytes).ceil();
        let map_waves = (maps / f64::from(p.map_slots)).ceil();
        let map_out = p.input_bytes * p.map_output_ratio;
        let per_map = map_out / maps;
        let comp = if map_compress { p.compress_speedup } else { 1.0 };

        let buf_eff = (sort_mb * MB * (1.0 - record_pct) * spill_pct).max(1.0);
        let spills = (per_map / buf_eff).ceil().max(1.0);
        let map_merge = merge_passes(spills as u64, factor) as f64;

        let chunk = per_map.min(buf_eff);
        let chunk_records = (chunk / p.record_size_bytes).max(2.0);

        let map_compress_cpu = if map_compress {
            COMPRESS_CPU_SEC_PER_MB * mb(per_map)
        } else {
            0.0
        };
        let map_sort_cost = p.cpu_cost_weight
            * map_waves
            * (SORT_SEC_PER_MB_LOG2 * mb(per_map) * chunk_records.log2()
                + BUF_ALLOC_SEC_PER_MB * sort_mb
                + map_compress_cpu);
        let map_spill_io = p.io_cost_weight
            * map_waves
            * (IO_SEC_PER_MB * mb(per_map * comp) + SPILL_OVERHEAD_SEC * spills);
        let map_merge_io =
            p.io_cost_weight * map_waves * IO_SEC_PER_MB * mb(per_map * comp) * map_merge;

        // Shuffle.
        let shuffle_bytes = map_out * comp;
        let overlap = match slowstart {
            Some(ss) => 0.70 + 0.30 * ss.clamp(0.0, 1.0),
            None => 1.0,
        };
        let shuffle_cost = p.network_cost_weight * NET_SEC_PER_MB * mb(shuffle_bytes) * overlap;

        // Reduce phase structure.
        let reduce_waves = (reducers / f64::from(p.reduce_slots)).ceil();
        let per_red = shuffle_bytes / reducers;
        let seg = per_red / maps;
        let shuf_buf = sort_mb * MB * shuf_in_pct;
        let trigger = (shuf_buf * shuf_merge_pct).max(seg).max(1.0);
        let events_by_bytes = if per_red > shuf_buf {
            (per_red / trigger).ceil()
        } else {
            0.0
        };
        let events_by_count = (maps / inmem_thresh).floor();
        let disk_segs = events_by_bytes.max(events_by_count);
        // Input not retained under reduce.input.buffer.percent is written
        // to (and re-read from) the reducer's disk before the reduce runs.
        let mem_reduce = sort_mb * MB * red_in_pct;
        let disk_bytes = (per_red - mem_reduce).max(0.0);
        let red_passes = merge_passes(disk_segs as u64, factor) as f64;
        let merge_ops = merge_operations(disk_segs as u64, factor) as f64;

        let reduce_merge_cost = reduce_waves
            * (p.io_cost_weight * IO_SEC_PER_MB * mb(disk_bytes) * red_passes
                + p.cpu_cost_weight * MERGE_OP_OVERHEAD_SEC * merge_ops);

        let out_comp = if out_compress { p.compress_speedup } else { 1.0 };
        let out_cpu = if out_compress {
            p.cpu_cost_weight * COMPRESS_CPU_SEC_PER_MB * mb(map_out) / reducers
        } else {
            0.0
        };
        let reduce_io = reduce_waves
            * (p.io_cost_weight
                * IO_SEC_PER_MB
                * (mb(disk_bytes) + mb(map_out * out_comp) / reducers)
                + out_cpu);

        let startup_cost =
            p.startup_cost_seconds * (1.0 + PER_TASK_STARTUP * (maps + reducers));

        let components = [
            map_sort_cost,
            map_spill_io,
            map_merge_io,
            shuffle_cost,
            reduce_merge_cost,
            reduce_io,
            startup_cost,
        ];
        Ok(SimBreakdown {
            map_sort_cost,
            map_spill_io,
            map_merge_io,
            shuffle_cost,
            reduce_merge_cost,
            reduce_io,
            startup_cost,
            total: components.iter().sum(),
        })
    }

    /// Total cost at a normalized point.
    pub fn total_at(&self, point: &AlgoPoint) -> Result<f64, SimError> {
        let config = self.space.map_to_system(point)?;
        Ok(self.simulate(&config)?.total)
    }

    /// Rank coordinates by how much the total moves when each is swept
    /// alone across `points` grid values, all else at the default point.
    /// Returns `(coordinate, spread)` pairs, most sensitive first.
    pub fn sensitivity_ranking(&self, points: usize) -> Result<Vec<(usize, f64)>, SimError> {
        let base = self.space.default_point();
        let mut ranking = Vec::with_capacity(self.space.dim());
        for axis in 0..self.space.dim() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..points {
                let t = k as f64 / (points - 1).max(1) as f64;
                let mut coords = base.coords().to_vec();
                coords[axis] = t;
                let total = self.total_at(&AlgoPoint::new(coords))?;
                lo = lo.min(total);
                hi = hi.max(total);
            }
            ranking.push((axis, hi - lo));
        }
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(ranking)
    }

    /// Exhaustive coarse-grid minimum over the given coordinates with
    /// `points` values per axis, every other coordinate pinned to `base`.
    pub fn grid_minimum(
        &self,
        axes: &[usize],
        points: usize,
        base: &AlgoPoint,
    ) -> Result<(AlgoPoint, f64), SimError> {
        let mut best_point = base.clone();
        let mut best_total = self.total_at(base)?;
        let mut odometer = vec![0usize; axes.len()];
        loop {
            let mut coords = base.coords().to_vec();
            for (&axis, &step) in axes.iter().zip(&odometer) {
                coords[axis] = step as f64 / (points - 1).max(1) as f64;
            }
            let point = AlgoPoint::new(coords);
            let total = self.total_at(&point)?;
            if total < best_total {
                best_total = total;
                best_point = point;
            }
            // Advance the mixed-radix odometer.
            let mut i = 0;
            loop {
                if i == odometer.len() {
                    return Ok((best_point, best_total));
                }
                odometer[i] += 1;
                if odometer[i] < points {
                    break;
                }
                odometer[i] = 0;
                i += 1;
            }
        }
    }
}

/// The eleven-parameter space of the classic Hadoop v1 tunables, with
/// stock defaults. Bounds are this crate's choice, wide enough to cover
/// both the defaults and the far larger values tuning tends to reach
/// (e.g. merge fan-in up to 500, in-memory merge threshold up to 10000);
/// override them in the run config if your system differs.
pub fn default_space() -> ParameterSpace {
    ParameterSpace::new(vec![
        ParameterSpec::integer("io.sort.mb", 32, 2048, 100).unwrap(),
        ParameterSpec::real("io.sort.spill.percent", 0.05, 0.95, 0.08).unwrap(),
        ParameterSpec::integer("io.sort.factor", 2, 500, 10).unwrap(),
        ParameterSpec::real("shuffle.input.buffer.percent", 0.1, 0.95, 0.7).unwrap(),
        ParameterSpec::real("shuffle.merge.percent", 0.05, 0.95, 0.66).unwrap(),
        ParameterSpec::integer("inmem.merge.threshold", 100, 10000, 1000).unwrap(),
        ParameterSpec::real("reduce.input.buffer.percent", 0.0, 0.8, 0.0).unwrap(),
        ParameterSpec::integer("mapred.reduce.tasks", 1, 200, 1).unwrap(),
        ParameterSpec::real("io.sort.record.percent", 0.01, 0.5, 0.05).unwrap(),
        ParameterSpec::boolean("mapred.compress.map.output", false).unwrap(),
        ParameterSpec::boolean("mapred.output.compress", false).unwrap(),
    ])
    .expect("builtin space is valid")
}
