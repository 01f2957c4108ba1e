//! Stream model, the exact frequency-vector accumulator and synthetic generators.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::LevelGrid;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamUpdate {
    pub index: u64,
    pub delta: i64,
}

impl StreamUpdate {
    pub fn new(index: u64, delta: i64) -> Self {
        Self { index, delta }
    }
}

/// Default magnitude bound `m = n^3`, saturating.
pub fn default_bound(n: usize) -> u64 {
    (n as u64).saturating_mul(n as u64).saturating_mul(n as u64).max(1)
}

/// Exact accumulator used as ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyVector {
    values: Vec<i64>,
    bound: u64,
}

impl FrequencyVector {
    pub fn new(n: usize) -> Self {
        Self::with_bound(n, default_bound(n))
    }

    pub fn with_bound(n: usize, bound: u64) -> Self {
        Self {
            values: vec![0; n],
            bound,
        }
    }

    pub fn from_values(values: Vec<i64>) -> Self {
        let bound = default_bound(values.len());
        Self { values, bound }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn apply(&mut self, u: StreamUpdate) -> Result<()> {
        let n = self.values.len();
        let i = usize::try_from(u.index)
            .ok()
            .filter(|&i| i < n)
            .ok_or(Error::IndexOutOfRange { index: u.index, n })?;
        let next = i128::from(self.values[i]) + i128::from(u.delta);
        if next.unsigned_abs() > u128::from(self.bound) {
            return Err(Error::MagnitudeBound {
                index: i,
                magnitude: next.unsigned_abs(),
                bound: self.bound,
            });
        }
        self.values[i] = next as i64;
        Ok(())
    }

    pub fn apply_all<'a, I>(&mut self, updates: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a StreamUpdate>,
    {
        for u in updates {
            self.apply(*u)?;
        }
        Ok(())
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != 0).count()
    }

    /// Sum of squares excluding the `k` largest magnitudes.
    pub fn f2_tail(&self, k: usize) -> f64 {
        let mut sq: Vec<f64> = self.values.iter().map(|v| (*v as f64) * (*v as f64)).collect();
        sq.sort_unstable_by(|a, b| b.total_cmp(a));
        sq.iter().skip(k).sum()
    }
}

/// Generator parameters, serialized with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamKind {
    /// `counts[i]` coordinates land in level `i + 1` at base `base`.
    PlantedLevels {
        n: usize,
        base: f64,
        counts: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        magnitudes: Option<Vec<u64>>,
        /// Cancelling update pairs added on top of the planted mass.
        #[serde(default)]
        churn: usize,
    },
    RandomTurnstile {
        n: usize,
        updates: usize,
        max_delta: i64,
    },
    SingleSpike {
        n: usize,
        index: u64,
        magnitude: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    #[serde(flatten)]
    pub kind: StreamKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Wrapped {
    stream: StreamSpec,
}

impl StreamSpec {
    pub fn planted(n: usize, base: f64, counts: Vec<u64>, seed: u64) -> Self {
        Self {
            kind: StreamKind::PlantedLevels {
                n,
                base,
                counts,
                magnitudes: None,
                churn: 0,
            },
            seed,
            bound: None,
        }
    }

    pub fn planted_magnitudes(n: usize, base: f64, counts: Vec<u64>, magnitudes: Vec<u64>, seed: u64) -> Self {
        Self {
            kind: StreamKind::PlantedLevels {
                n,
                base,
                counts,
                magnitudes: Some(magnitudes),
                churn: 0,
            },
            seed,
            bound: None,
        }
    }

    pub fn random_turnstile(n: usize, updates: usize, max_delta: i64, seed: u64) -> Self {
        Self {
            kind: StreamKind::RandomTurnstile { n, updates, max_delta },
            seed,
            bound: None,
        }
    }

    pub fn single_spike(n: usize, index: u64, magnitude: i64, seed: u64) -> Self {
        Self {
            kind: StreamKind::SingleSpike { n, index, magnitude },
            seed,
            bound: None,
        }
    }

    pub fn with_churn(mut self, extra: usize) -> Self {
        if let StreamKind::PlantedLevels { churn, .. } = &mut self.kind {
            *churn = extra;
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        match &self.kind {
            StreamKind::PlantedLevels { n, .. }
            | StreamKind::RandomTurnstile { n, .. }
            | StreamKind::SingleSpike { n, .. } => *n,
        }
    }

    pub fn bound(&self) -> u64 {
        self.bound.unwrap_or_else(|| default_bound(self.n()))
    }

    /// Parses `{"stream": {...}}`, or a bare spec object.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("stream") {
            Some(s) => s.clone(),
            None => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Wrapped {
            stream: self.clone(),
        })?)
    }

    /// Replays the generated stream into an exact accumulator.
    pub fn frequency_vector(&self) -> Result<FrequencyVector> {
        let mut v = FrequencyVector::with_bound(self.n(), self.bound());
        v.apply_all(&generate_stream(self)?)?;
        Ok(v)
    }
}

/// Deterministic update sequence for `spec`.
pub fn generate_stream(spec: &StreamSpec) -> Result<Vec<StreamUpdate>> {
    let mut rng = seed::rng(seed::derive_named(spec.seed, "stream", "generate", 0));
    let bound = spec.bound();
    match &spec.kind {
        StreamKind::PlantedLevels {
            n,
            base,
            counts,
            magnitudes,
            churn,
        } => {
            let total: u64 = counts.iter().sum();
            if total > *n as u64 {
                return Err(Error::InfeasibleSpec(format!(
                    "planted counts sum to {total}, more than n = {n}"
                )));
            }
            if !(*base > 1.0) {
                return Err(Error::InfeasibleSpec(format!("base {base} must exceed 1")));
            }
            if let Some(m) = magnitudes {
                if m.len() != counts.len() {
                    return Err(Error::InfeasibleSpec(
                        "magnitudes and counts differ in length".into(),
                    ));
                }
            }
            let grid = LevelGrid::new(*base, bound.max(2));
            let mut slots: Vec<usize> = (0..*n).collect();
            slots.shuffle(&mut rng);
            let mut slots = slots.into_iter();
            let mut updates = Vec::new();
            for (li, &count) in counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let level = li + 1;
                let mag = match magnitudes {
                    Some(m) => m[li],
                    None => grid.smallest_integer_in(level).ok_or_else(|| {
                        Error::InfeasibleSpec(format!("level {level} holds no integer"))
                    })?,
                };
                if mag > bound {
                    return Err(Error::InfeasibleSpec(format!(
                        "magnitude {mag} exceeds the bound {bound}"
                    )));
                }
                if grid.level_of(mag) != level {
                    return Err(Error::InfeasibleSpec(format!(
                        "magnitude {mag} is not in level {level} at base {base}"
                    )));
                }
                for _ in 0..count {
                    let index = slots.next().expect("counts checked against n") as u64;
                    let sign: i64 = if rng.random::<bool>() { 1 } else { -1 };
                    let mag = mag as i64;
                    // split into two updates so the stream is not trivially insert-only
                    let first = rng.random_range(0..=mag);
                    if first > 0 {
                        updates.push(StreamUpdate::new(index, sign * first));
                    }
                    if mag - first > 0 {
                        updates.push(StreamUpdate::new(index, sign * (mag - first)));
                    }
                }
            }
            for _ in 0..*churn {
                let index = rng.random_range(0..*n as u64);
                let d = rng.random_range(1..=8i64);
                updates.push(StreamUpdate::new(index, d));
                updates.push(StreamUpdate::new(index, -d));
            }
            updates.shuffle(&mut rng);
            Ok(updates)
        }
        StreamKind::RandomTurnstile {
            n,
            updates,
            max_delta,
        } => {
            if *n == 0 || *max_delta < 1 {
                return Err(Error::InfeasibleSpec(
                    "random turnstile needs n ≥ 1 and max_delta ≥ 1".into(),
                ));
            }
            if (*updates as u128) * (*max_delta as u128) > u128::from(bound) {
                return Err(Error::InfeasibleSpec(format!(
                    "{updates} updates of size {max_delta} may exceed the bound {bound}"
                )));
            }
            Ok((0..*updates)
                .map(|_| {
                    let index = rng.random_range(0..*n as u64);
                    let mag = rng.random_range(1..=*max_delta);
                    let delta = if rng.random::<bool>() { mag } else { -mag };
                    StreamUpdate::new(index, delta)
                })
                .collect())
        }
        StreamKind::SingleSpike {
            n,
            index,
            magnitude,
        } => {
            if *index >= *n as u64 {
                return Err(Error::InfeasibleSpec(format!(
                    "spike index {index} outside n = {n}"
                )));
            }
            if magnitude.unsigned_abs() > bound {
                return Err(Error::InfeasibleSpec(format!(
                    "magnitude {magnitude} exceeds the bound {bound}"
                )));
            }
            Ok(if *magnitude == 0 {
                Vec::new()
            } else {
                vec![StreamUpdate::new(*index, *magnitude)]
            })
        }
    }
}

/// Reads `<index> <delta>` lines; blank lines and `#` comments are skipped.
pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<StreamUpdate>> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let parse_err = |reason: String| Error::Parse {
            line: no + 1,
            reason,
        };
        let index = parts
            .next()
            .ok_or_else(|| parse_err("missing index".into()))?
            .parse::<u64>()
            .map_err(|e| parse_err(format!("index: {e}")))?;
        let delta = parts
            .next()
            .ok_or_else(|| parse_err("missing delta".into()))?
            .parse::<i64>()
            .map_err(|e| parse_err(format!("delta: {e}")))?;
        if parts.next().is_some() {
            return Err(parse_err("trailing fields".into()));
        }
        out.push(StreamUpdate::new(index, delta));
    }
    Ok(out)
}

pub fn write_stream<W: Write>(mut writer: W, updates: &[StreamUpdate]) -> Result<()> {
    for u in updates {
        writeln!(writer, "{} {}", u.index, u.delta)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level::exact_level_vector;

    #[test]
    fn accumulation() {
        let mut v = FrequencyVector::new(3);
        v.apply(StreamUpdate::new(1, 5)).unwrap();
        assert_eq!(v.values(), &[0, 5, 0]);
        v.apply(StreamUpdate::new(1, -5)).unwrap();
        assert_eq!(v.values(), &[0, 0, 0]);

        let mut w = FrequencyVector::from_values(vec![2, 0]);
        w.apply(StreamUpdate::new(0, -7)).unwrap();
        assert_eq!(w.values(), &[-5, 0]);
    }

    #[test]
    fn out_of_range_and_bound() {
        let mut v = FrequencyVector::with_bound(2, 10);
        assert!(matches!(
            v.apply(StreamUpdate::new(2, 1)),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        ));
        v.apply(StreamUpdate::new(0, 10)).unwrap();
        assert!(matches!(
            v.apply(StreamUpdate::new(0, 1)),
            Err(Error::MagnitudeBound { index: 0, .. })
        ));
        assert_eq!(v.values()[0], 10);
    }

    #[test]
    fn planted_counts_are_realized() {
        let spec = StreamSpec::planted(100, 2.0, vec![10, 0, 5], 7);
        let v = spec.frequency_vector().unwrap();
        let lv = exact_level_vector::<f64>(&v, 2.0).unwrap();
        assert_eq!(&lv.counts[..3], &[10, 0, 5]);
        assert!(lv.counts[3..].iter().all(|c| *c == 0));
        let small = v.values().iter().filter(|x| x.unsigned_abs() == 1).count();
        let big = v
            .values()
            .iter()
            .filter(|x| (4..8).contains(&x.unsigned_abs()))
            .count();
        assert_eq!((small, big), (10, 5));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = StreamSpec::planted(100, 2.0, vec![10, 0, 5], 7).with_churn(20);
        assert_eq!(generate_stream(&spec).unwrap(), generate_stream(&spec).unwrap());
        let other = spec.clone().with_seed(8);
        assert_ne!(generate_stream(&spec).unwrap(), generate_stream(&other).unwrap());
    }

    #[test]
    fn random_turnstile_matches_replay() {
        let spec = StreamSpec::random_turnstile(50, 1000, 9, 3);
        let ups = generate_stream(&spec).unwrap();
        assert_eq!(ups.len(), 1000);
        let mut brute = vec![0i64; 50];
        for u in &ups {
            brute[u.index as usize] += u.delta;
        }
        assert_eq!(spec.frequency_vector().unwrap().values(), brute.as_slice());
    }

    #[test]
    fn infeasible_specs() {
        let too_many = StreamSpec::planted(4, 2.0, vec![3, 3], 1);
        assert!(matches!(generate_stream(&too_many), Err(Error::InfeasibleSpec(_))));
        let mut big = StreamSpec::single_spike(4, 0, 100, 1);
        big.bound = Some(64);
        assert!(matches!(generate_stream(&big), Err(Error::InfeasibleSpec(_))));
        let wrong_level = StreamSpec::planted_magnitudes(10, 2.0, vec![0, 2], vec![0, 5], 1);
        assert!(generate_stream(&wrong_level).is_err());
    }

    #[test]
    fn json_roundtrip_with_wrapper() {
        let spec = StreamSpec::planted(100, 1.5, vec![1, 2, 3], 9).with_churn(4);
        let text = spec.to_json().unwrap();
        assert!(text.contains("\"stream\""));
        assert!(text.contains("\"planted_levels\""));
        assert_eq!(StreamSpec::from_json(&text).unwrap(), spec);
        let bare = r#"{"kind":"single_spike","n":10,"index":3,"magnitude":-4,"seed":2}"#;
        let s = StreamSpec::from_json(bare).unwrap();
        assert_eq!(s.kind, StreamKind::SingleSpike { n: 10, index: 3, magnitude: -4 });
    }

    #[test]
    fn stream_file_format() {
        let text = "# header\n3 5\n\n  1 -2 # inline\n";
        let ups = read_stream(text.as_bytes()).unwrap();
        assert_eq!(ups, vec![StreamUpdate::new(3, 5), StreamUpdate::new(1, -2)]);
        let mut buf = Vec::new();
        write_stream(&mut buf, &ups).unwrap();
        assert_eq!(read_stream(buf.as_slice()).unwrap(), ups);
        match read_stream("1 2\n1 x\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
