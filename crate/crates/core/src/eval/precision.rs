use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::reach::MaskVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    Off,
    /// Keep max(2, ceil(n/2)) events.
    Half,
    /// Keep exactly 2 events.
    Pair,
}

impl PrecisionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrecisionMode::Off => "off",
            PrecisionMode::Half => "half",
            PrecisionMode::Pair => "pair",
        }
    }

    fn target(self, n: usize) -> usize {
        match self {
            _ if n <= 2 => n,
            PrecisionMode::Off => n,
            PrecisionMode::Half => n.div_ceil(2).max(2),
            PrecisionMode::Pair => 2,
        }
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecisionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(PrecisionMode::Off),
            "half" => Ok(PrecisionMode::Half),
            "pair" => Ok(PrecisionMode::Pair),
            other => Err(format!(
                "unknown precision mode `{other}` (off, half, pair)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionStats {
    pub shrunk: usize,
    /// Masks missing the true event, passed through unchanged.
    pub violations: usize,
}

/// Shrinks each mask around its true event using a seeded random choice of the
/// remaining events.
pub fn simulate_precision(
    masks: &[MaskVector],
    labels: &[usize],
    mode: PrecisionMode,
    seed: u64,
) -> (Vec<MaskVector>, PrecisionStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = PrecisionStats::default();
    let out = masks
        .iter()
        .zip(labels)
        .map(|(mask, &label)| {
            if label >= mask.len() || !mask.get(label) {
                stats.violations += 1;
                return mask.clone();
            }
            let n = mask.count();
            let target = mode.target(n);
            if target == n {
                return mask.clone();
            }
            let others: Vec<usize> = mask.events().filter(|&e| e != label).collect();
            let mut keep = vec![label];
            keep.extend(
                sample(&mut rng, others.len(), target - 1)
                    .into_iter()
                    .map(|i| others[i]),
            );
            stats.shrunk += 1;
            MaskVector::from_events(mask.len(), keep)
        })
        .collect();
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_mode() {
        let six = MaskVector::from_events(8, [0, 1, 2, 4, 5, 7]);
        for (mode, size) in [
            (PrecisionMode::Half, 3),
            (PrecisionMode::Pair, 2),
            (PrecisionMode::Off, 6),
        ] {
            let (out, _) = simulate_precision(std::slice::from_ref(&six), &[4], mode, 1);
            assert_eq!(out[0].count(), size);
            assert!(out[0].get(4));
            assert!(out[0].events().all(|e| six.get(e)));
        }
        let five = MaskVector::from_events(8, [0, 1, 2, 3, 4]);
        let (out, _) = simulate_precision(&[five], &[0], PrecisionMode::Half, 1);
        assert_eq!(out[0].count(), 3);
        let three = MaskVector::from_events(4, [0, 1, 2]);
        let (out, _) = simulate_precision(&[three], &[0], PrecisionMode::Half, 1);
        assert_eq!(out[0].count(), 2);
    }

    #[test]
    fn small_and_violating_masks_pass_through() {
        let one = MaskVector::from_events(4, [2]);
        let two = MaskVector::from_events(4, [1, 2]);
        let bad = MaskVector::from_events(4, [0, 1, 3]);
        let input = vec![one, two, bad];
        let (out, stats) = simulate_precision(&input, &[2, 1, 2], PrecisionMode::Pair, 9);
        assert_eq!(out, input);
        assert_eq!(stats.violations, 1);
        assert_eq!(stats.shrunk, 0);
    }

    #[test]
    fn seeded() {
        let masks = vec![MaskVector::ones(10); 20];
        let labels = vec![3; 20];
        let a = simulate_precision(&masks, &labels, PrecisionMode::Half, 5);
        let b = simulate_precision(&masks, &labels, PrecisionMode::Half, 5);
        assert_eq!(a, b);
        assert_eq!("PAIR".parse::<PrecisionMode>(), Ok(PrecisionMode::Pair));
    }
}
