//! Rainflow cycle counting over state-of-charge histories.
//!
//! Cycles are identified with the global-extremum procedure: the half cycle
//! between the global maximum and minimum is counted first, then the chains of
//! successively smaller extremes running out to both ends of the history are
//! counted as half cycles, and whatever lies between consecutive chain points
//! closes into full cycles. A full cycle is reported as two [`HalfCycle`]s of
//! equal depth and opposite direction.
//!
//! Besides depths, counting records which power intervals each half cycle is
//! made of. An interval whose SoC change is split between several cycles is a
//! junction interval; the split is stored as an [`IntervalShare`] so that
//! depths can be rebuilt from power vectors.

use serde::{Deserialize, Serialize};

use crate::degradation::BatteryParams;
use crate::error::{Error, Result};

/// Normalized state-of-charge samples, `T + 1` values for `T` power intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocProfile {
    values: Vec<f64>,
    interval_hours: f64,
}

impl SocProfile {
    pub fn new(values: Vec<f64>, interval_hours: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("profile must have at least one sample".into()));
        }
        if !(interval_hours.is_finite() && interval_hours > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample spacing must be positive, got {interval_hours}"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidParameter(format!(
                "soc sample {i} = {v} is outside [0, 1]"
            )));
        }
        Ok(Self { values, interval_hours })
    }

    /// Profile with unit sample spacing, for tests and ad-hoc analysis.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1.0)
    }

    /// Additionally checks every sample against `[soc_min, soc_max]`.
    pub fn with_bounds(values: Vec<f64>, interval_hours: f64, soc_min: f64, soc_max: f64) -> Result<Self> {
        let p = Self::new(values, interval_hours)?;
        if let Some((i, v)) = p
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| **v < soc_min || **v > soc_max)
        {
            return Err(Error::InvalidParameter(format!(
                "soc sample {i} = {v} is outside [{soc_min}, {soc_max}]"
            )));
        }
        Ok(p)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interval_hours(&self) -> f64 {
        self.interval_hours
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of power intervals, `T`.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }
}

/// Local extremes of a profile. Flat runs collapse to their first sample,
/// except a flat tail, which is represented by the last sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPoints {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl TurningPoints {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    fn of(delta: f64) -> Option<Direction> {
        if delta > 0.0 {
            Some(Direction::Charge)
        } else if delta < 0.0 {
            Some(Direction::Discharge)
        } else {
            None
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Charge => Direction::Discharge,
            Direction::Discharge => Direction::Charge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleKind {
    /// A residual half cycle.
    Half,
    /// One of the two halves of a closed full cycle.
    FullMember,
}

/// Part of one interval's SoC change attributed to a half cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalShare {
    pub interval: usize,
    /// SoC change carried by this cycle within the interval.
    pub amount: f64,
    /// `amount` over the interval's total absolute SoC change.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfCycle {
    pub depth: f64,
    pub direction: Direction,
    pub kind: CycleKind,
    pub shares: Vec<IntervalShare>,
    pub junction_intervals: Vec<usize>,
    /// Sample at which the half cycle starts.
    pub start: usize,
    /// Samples whose SoC values fix the depth: `depth = s[upper] - s[lower]`.
    pub upper: usize,
    pub lower: usize,
    /// Index of the other half within the owning [`CycleSet`], for full cycles.
    pub partner: Option<usize>,
}

impl HalfCycle {
    pub fn intervals(&self) -> impl Iterator<Item = usize> + '_ {
        self.shares.iter().map(|s| s.interval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSet {
    pub half_cycles: Vec<HalfCycle>,
    /// Number of power intervals `T` in the counted profile.
    pub source_length: usize,
}

/// A cycle as listed in a classic rainflow table: full cycles appear once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountedCycle {
    pub depth: f64,
    pub kind: CountedKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountedKind {
    Half,
    Full,
}

impl CycleSet {
    pub fn len(&self) -> usize {
        self.half_cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.half_cycles.is_empty()
    }

    pub fn depths(&self) -> Vec<f64> {
        self.half_cycles.iter().map(|h| h.depth).collect()
    }

    pub fn depths_in(&self, direction: Direction) -> Vec<f64> {
        self.half_cycles
            .iter()
            .filter(|h| h.direction == direction)
            .map(|h| h.depth)
            .collect()
    }

    /// Cycles in time order with each full cycle listed once.
    pub fn counted(&self) -> Vec<CountedCycle> {
        let mut out = Vec::new();
        for (i, h) in self.half_cycles.iter().enumerate() {
            match (h.kind, h.partner) {
                (CycleKind::FullMember, Some(p)) if p < i => {}
                (CycleKind::FullMember, _) => out.push(CountedCycle { depth: h.depth, kind: CountedKind::Full }),
                (CycleKind::Half, _) => out.push(CountedCycle { depth: h.depth, kind: CountedKind::Half }),
            }
        }
        out
    }

    /// For every interval, the half cycles (by index) sharing it and their fractions.
    pub fn interval_owners(&self) -> Vec<Vec<(usize, f64)>> {
        let mut owners = vec![Vec::new(); self.source_length];
        for (i, h) in self.half_cycles.iter().enumerate() {
            for s in &h.shares {
                owners[s.interval].push((i, s.fraction));
            }
        }
        owners
    }
}

pub fn extract_turning_points(profile: &SocProfile) -> TurningPoints {
    turning_points(profile.values())
}

pub fn turning_points(s: &[f64]) -> TurningPoints {
    let mut indices = Vec::new();
    if s.is_empty() {
        return TurningPoints { indices, values: Vec::new() };
    }
    indices.push(0);
    let mut dir: Option<Direction> = None;
    // first sample of the flat run holding s[i - 1]
    let mut run_start = 0;
    for i in 1..s.len() {
        let Some(d) = Direction::of(s[i] - s[i - 1]) else {
            continue;
        };
        match dir {
            Some(prev) if prev != d => indices.push(run_start),
            _ => {}
        }
        dir = Some(d);
        run_start = i;
    }
    if dir.is_some() {
        indices.push(s.len() - 1);
    }
    let values = indices.iter().map(|&i| s[i]).collect();
    TurningPoints { indices, values }
}

pub fn count_cycles(profile: &SocProfile) -> CycleSet {
    count_cycles_raw(profile.values())
}

struct Builder {
    direction: Direction,
    kind: CycleKind,
    start: usize,
    upper: usize,
    lower: usize,
    shares: Vec<(usize, f64)>,
    partner: Option<usize>,
}

struct Open {
    level: f64,
    half: usize,
}

/// Rainflow counting on a raw sample slice. Values are not range-checked.
pub fn count_cycles_raw(s: &[f64]) -> CycleSet {
    let source_length = s.len().saturating_sub(1);
    let tp = turning_points(s);
    if tp.len() < 2 {
        return CycleSet { half_cycles: Vec::new(), source_length };
    }

    let chain = extremum_chain(&tp.values);
    let mut builders: Vec<Builder> = Vec::new();
    for w in chain.windows(2) {
        let (a, b) = (tp.indices[w[0]], tp.indices[w[1]]);
        count_segment(s, a, b, &mut builders);
    }
    finish(s, builders, source_length)
}

/// Positions (into the turning-point list) of the residual half-cycle chain,
/// in time order, from the first to the last turning point.
fn extremum_chain(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    // earliest argmax / argmin over v[..=k]
    let mut pre_max = vec![0; n];
    let mut pre_min = vec![0; n];
    for k in 1..n {
        pre_max[k] = if v[k] > v[pre_max[k - 1]] { k } else { pre_max[k - 1] };
        pre_min[k] = if v[k] < v[pre_min[k - 1]] { k } else { pre_min[k - 1] };
    }
    // latest argmax / argmin over v[k..]
    let mut suf_max = vec![n - 1; n];
    let mut suf_min = vec![n - 1; n];
    for k in (0..n - 1).rev() {
        suf_max[k] = if v[k] > v[suf_max[k + 1]] { k } else { suf_max[k + 1] };
        suf_min[k] = if v[k] < v[suf_min[k + 1]] { k } else { suf_min[k + 1] };
    }

    let gmax = pre_max[n - 1];
    let gmin = pre_min[n - 1];
    let (first, second) = if gmax < gmin { (gmax, gmin) } else { (gmin, gmax) };

    let mut back = vec![first];
    let mut cur = first;
    let mut want_min = first == gmax;
    while cur > 0 {
        cur = if want_min { pre_min[cur - 1] } else { pre_max[cur - 1] };
        back.push(cur);
        want_min = !want_min;
    }
    back.reverse();

    let mut chain = back;
    chain.push(second);
    let mut cur = second;
    let mut want_max = second == gmin;
    while cur < n - 1 {
        cur = if want_max { suf_max[cur + 1] } else { suf_min[cur + 1] };
        chain.push(cur);
        want_max = !want_max;
    }
    chain
}

/// Counts the residual half cycle between samples `a` and `b` (the extremes of
/// the segment) plus every full cycle nested inside, attributing each portion
/// of each interval's SoC change to the cycle that traverses it.
fn count_segment(s: &[f64], a: usize, b: usize, builders: &mut Vec<Builder>) {
    let seg_dir = match Direction::of(s[b] - s[a]) {
        Some(d) => d,
        None => return,
    };
    let (upper, lower) = if seg_dir == Direction::Charge { (b, a) } else { (a, b) };
    let bottom = builders.len();
    builders.push(Builder {
        direction: seg_dir,
        kind: CycleKind::Half,
        start: a,
        upper,
        lower,
        shares: Vec::new(),
        partner: None,
    });
    let mut stack = vec![Open { level: s[a], half: bottom }];
    // sample index behind each open entry, parallel to `stack`
    let mut samples = vec![a];
    let mut cur_dir = seg_dir;
    let mut run_start = a;

    for t in a..b {
        let (from, to) = (s[t], s[t + 1]);
        let Some(dir) = Direction::of(to - from) else {
            continue;
        };
        if dir != cur_dir {
            let id = builders.len();
            builders.push(Builder {
                direction: dir,
                kind: CycleKind::FullMember,
                start: run_start,
                upper: run_start,
                lower: run_start,
                shares: Vec::new(),
                partner: None,
            });
            stack.push(Open { level: from, half: id });
            samples.push(run_start);
            cur_dir = dir;
        }
        run_start = t + 1;

        let mut cur = from;
        while stack.len() >= 3 {
            let prev = &stack[stack.len() - 2];
            let reached = match dir {
                Direction::Charge => to >= prev.level,
                Direction::Discharge => to <= prev.level,
            };
            if !reached {
                break;
            }
            let level = prev.level;
            let top = stack.pop().unwrap();
            let prev = stack.pop().unwrap();
            let top_sample = samples.pop().unwrap();
            let prev_sample = samples.pop().unwrap();
            add_share(&mut builders[top.half], t, (level - cur).abs());
            let (hi, lo) = if prev.level > top.level {
                (prev_sample, top_sample)
            } else {
                (top_sample, prev_sample)
            };
            for (h, other) in [(prev.half, top.half), (top.half, prev.half)] {
                let bld = &mut builders[h];
                bld.upper = hi;
                bld.lower = lo;
                bld.partner = Some(other);
            }
            cur = level;
        }
        let owner = stack.last().unwrap().half;
        add_share(&mut builders[owner], t, (to - cur).abs());
    }

    // Entries left above the bottom only arise from exact ties at the segment
    // extreme; they are closed against the segment end as residual halves.
    for (open, &sample) in stack.iter().zip(samples.iter()).skip(1) {
        let bld = &mut builders[open.half];
        if bld.partner.is_none() {
            bld.kind = CycleKind::Half;
            let (hi, lo) = if s[sample] > s[b] { (sample, b) } else { (b, sample) };
            bld.upper = hi;
            bld.lower = lo;
        }
    }
}

fn add_share(b: &mut Builder, interval: usize, amount: f64) {
    if amount > 0.0 {
        match b.shares.last_mut() {
            Some((i, a)) if *i == interval => *a += amount,
            _ => b.shares.push((interval, amount)),
        }
    }
}

fn finish(s: &[f64], builders: Vec<Builder>, source_length: usize) -> CycleSet {
    let mut order: Vec<usize> = (0..builders.len())
        .filter(|&i| s[builders[i].upper] - s[builders[i].lower] > 0.0)
        .collect();
    order.sort_by_key(|&i| (builders[i].start, i));
    let mut new_index = vec![usize::MAX; builders.len()];
    for (k, &i) in order.iter().enumerate() {
        new_index[i] = k;
    }

    let mut owner_count = vec![0u32; source_length];
    for &i in &order {
        for &(t, _) in &builders[i].shares {
            owner_count[t] += 1;
        }
    }

    let half_cycles = order
        .iter()
        .map(|&i| {
            let b = &builders[i];
            let shares: Vec<IntervalShare> = b
                .shares
                .iter()
                .map(|&(t, amount)| {
                    let total = (s[t + 1] - s[t]).abs();
                    IntervalShare { interval: t, amount, fraction: amount / total }
                })
                .collect();
            let junction_intervals = shares
                .iter()
                .filter(|sh| owner_count[sh.interval] > 1)
                .map(|sh| sh.interval)
                .collect();
            HalfCycle {
                depth: s[b.upper] - s[b.lower],
                direction: b.direction,
                kind: b.kind,
                shares,
                junction_intervals,
                start: b.start,
                upper: b.upper,
                lower: b.lower,
                partner: b.partner.map(|p| new_index[p]).filter(|&p| p != usize::MAX),
            }
        })
        .collect();
    CycleSet { half_cycles, source_length }
}

/// Rebuilds half-cycle depths from power vectors using the interval sets of
/// `cycles`. Charging cycles accumulate `(c·η_c − d/η_d)·t_s/E` over their
/// intervals and discharging cycles the negation, weighted by each interval's
/// share; with no simultaneous charge and discharge this is exactly
/// `Σ c·t_s·η_c/E` and `Σ d·t_s/(η_d·E)`.
pub fn cycle_depths_from_power(
    charge: &[f64],
    discharge: &[f64],
    cycles: &CycleSet,
    params: &BatteryParams,
) -> Result<Vec<f64>> {
    let t = cycles.source_length;
    for v in [charge, discharge] {
        if v.len() != t {
            return Err(Error::LengthMismatch { expected: t, got: v.len() });
        }
    }
    let ts = params.interval_hours;
    let e = params.energy_mwh;
    Ok(cycles
        .half_cycles
        .iter()
        .map(|h| {
            h.shares
                .iter()
                .map(|sh| {
                    let net = (charge[sh.interval] * params.eta_c - discharge[sh.interval] / params.eta_d) * ts / e;
                    let signed = match h.direction {
                        Direction::Charge => net,
                        Direction::Discharge => -net,
                    };
                    sh.fraction * signed
                })
                .sum()
        })
        .collect())
}
