//! Leafwise Moore paths as chart chains.
//!
//! A path records where it starts (a chart and a transverse coordinate), the
//! charts it passes through and how long it takes. The continuous curve is
//! never stored: transport only depends on the chain and the starting plaque.

use rand::Rng;
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError};
use crate::jet::DEFAULT_TOLERANCE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path is invalid at hop {hop}: {reason}")]
    Invalid { hop: usize, reason: String },
    #[error("endpoint ({end_chart}, {end_y:?}) does not match base ({base_chart}, {base_y:?})")]
    EndpointMismatch {
        end_chart: String,
        end_y: Vec<f64>,
        base_chart: String,
        base_y: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub base_chart: String,
    pub base_y: Vec<f64>,
    /// `U_0, …, U_k` with `U_0 = base_chart`.
    pub chain: Vec<String>,
    pub duration: f64,
    /// Hop times `t_1 < … < t_k` inside `(0, duration)`.
    pub partition: Option<Vec<f64>>,
}

impl ChainPath {
    /// A path of duration 1 along `chain`.
    pub fn new<S: AsRef<str>>(base_y: Vec<f64>, chain: &[S]) -> Self {
        let chain: Vec<String> = chain.iter().map(|c| c.as_ref().to_owned()).collect();
        Self {
            base_chart: chain.first().cloned().unwrap_or_default(),
            base_y,
            chain,
            duration: 1.0,
            partition: None,
        }
    }

    /// The unit morphism `(γ_x, 0)`.
    pub fn identity(chart: &str, y: Vec<f64>) -> Self {
        Self {
            base_chart: chart.to_owned(),
            base_y: y,
            chain: vec![chart.to_owned()],
            duration: 0.0,
            partition: None,
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_partition(mut self, partition: Vec<f64>) -> Self {
        self.partition = Some(partition);
        self
    }

    pub fn hops(&self) -> impl Iterator<Item = (&str, &str)> {
        self.chain.windows(2).map(|w| (w[0].as_str(), w[1].as_str()))
    }

    pub fn hop_count(&self) -> usize {
        self.chain.len().saturating_sub(1)
    }

    pub fn final_chart(&self) -> &str {
        self.chain.last().map_or(self.base_chart.as_str(), String::as_str)
    }

    /// Checks the combinatorial invariants that do not need an atlas.
    fn check_shape(&self) -> Result<(), PathError> {
        let bad = |reason: &str| PathError::Invalid {
            hop: 0,
            reason: reason.to_owned(),
        };
        if self.chain.first() != Some(&self.base_chart) {
            return Err(bad("chain must start at the base chart"));
        }
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(bad("duration must be a finite non-negative number"));
        }
        if self.duration == 0.0 && self.chain.len() != 1 {
            return Err(bad("a path of duration 0 must stay in one chart"));
        }
        if let Some(times) = &self.partition {
            if times.len() != self.hop_count() {
                return Err(bad("partition needs one time per hop"));
            }
            let inside = times.iter().all(|t| 0.0 < *t && *t < self.duration);
            let increasing = times.windows(2).all(|w| w[0] < w[1]);
            if !inside || !increasing {
                return Err(bad("partition must be strictly increasing inside (0, duration)"));
            }
        }
        Ok(())
    }
}

/// Coordinates visited along the chain: `ys[i]` lives in `chain[i]`.
pub fn trajectory(atlas: &Atlas, p: &ChainPath) -> Result<Vec<Vec<f64>>, PathError> {
    p.check_shape()?;
    if !atlas.has_chart(&p.base_chart) {
        return Err(PathError::Invalid {
            hop: 0,
            reason: format!("unknown chart `{}`", p.base_chart),
        });
    }
    if p.base_y.len() != atlas.codim() {
        return Err(PathError::Invalid {
            hop: 0,
            reason: format!("base_y has length {}, codimension is {}", p.base_y.len(), atlas.codim()),
        });
    }
    let mut ys = vec![p.base_y.clone()];
    for (hop, (src, dst)) in p.hops().enumerate() {
        let here = ys.last().expect("non-empty");
        let next = atlas.apply_transition(src, dst, here).map_err(|e| PathError::Invalid {
            hop,
            reason: match e {
                AtlasError::MissingTransition { .. } | AtlasError::UnknownChart(_) => {
                    format!("no transition {src}→{dst}")
                }
                other => other.to_string(),
            },
        })?;
        ys.push(next);
    }
    Ok(ys)
}

/// Final chart and transverse coordinate.
pub fn endpoint(atlas: &Atlas, p: &ChainPath) -> Result<(String, Vec<f64>), PathError> {
    let mut ys = trajectory(atlas, p)?;
    Ok((p.final_chart().to_owned(), ys.pop().expect("non-empty")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub valid: bool,
    /// First violated hop and the reason.
    pub violation: Option<(usize, String)>,
}

pub fn validate(atlas: &Atlas, p: &ChainPath) -> PathReport {
    match trajectory(atlas, p) {
        Ok(_) => PathReport {
            valid: true,
            violation: None,
        },
        Err(PathError::Invalid { hop, reason }) => PathReport {
            valid: false,
            violation: Some((hop, reason)),
        },
        Err(other) => PathReport {
            valid: false,
            violation: Some((0, other.to_string())),
        },
    }
}

/// Moore concatenation: `first` then `second`.
pub fn concat(atlas: &Atlas, second: &ChainPath, first: &ChainPath) -> Result<ChainPath, PathError> {
    trajectory(atlas, second)?;
    let (end_chart, end_y) = endpoint(atlas, first)?;
    let matches = end_chart == second.base_chart
        && end_y.len() == second.base_y.len()
        && end_y.iter().zip(&second.base_y).all(|(a, b)| (a - b).abs() <= DEFAULT_TOLERANCE);
    if !matches {
        return Err(PathError::EndpointMismatch {
            end_chart,
            end_y,
            base_chart: second.base_chart.clone(),
            base_y: second.base_y.clone(),
        });
    }
    let mut chain = first.chain.clone();
    chain.extend(second.chain.iter().skip(1).cloned());
    let partition = match (&first.partition, &second.partition) {
        (Some(a), Some(b)) => Some(a.iter().copied().chain(b.iter().map(|t| t + first.duration)).collect()),
        (Some(a), None) if second.hop_count() == 0 => Some(a.clone()),
        (None, Some(b)) if first.hop_count() == 0 => Some(b.iter().map(|t| t + first.duration).collect()),
        _ => None,
    };
    Ok(ChainPath {
        base_chart: first.base_chart.clone(),
        base_y: first.base_y.clone(),
        chain,
        duration: first.duration + second.duration,
        partition,
    })
}

/// The reversed path `(γ⁻¹, d)`, based at the endpoint of `p`.
pub fn reverse(atlas: &Atlas, p: &ChainPath) -> Result<ChainPath, PathError> {
    let (chart, y) = endpoint(atlas, p)?;
    let mut chain = p.chain.clone();
    chain.reverse();
    Ok(ChainPath {
        base_chart: chart,
        base_y: y,
        chain,
        duration: p.duration,
        partition: p.partition.as_ref().map(|ts| ts.iter().rev().map(|t| p.duration - t).collect()),
    })
}

/// A random chain of `hops` steps from `(chart, y)`. Every step lands inside
/// the domain of its reverse, so the walk can also be reversed. `None` when
/// a coordinate has no admissible neighbour.
pub fn random_walk(atlas: &Atlas, chart: &str, y: &[f64], hops: usize, rng: &mut impl Rng) -> Option<ChainPath> {
    let mut chain = vec![chart.to_owned()];
    let mut here = y.to_vec();
    for _ in 0..hops {
        let current = chain.last().expect("non-empty").clone();
        let options: Vec<(String, Vec<f64>)> = atlas
            .neighbors(&current)
            .filter_map(|n| {
                let v = atlas.apply_transition(&current, n, &here).ok()?;
                atlas.apply_transition(n, &current, &v).ok()?;
                Some((n.to_owned(), v))
            })
            .collect();
        if options.is_empty() {
            return None;
        }
        let (next, v) = options[rng.gen_range(0..options.len())].clone();
        chain.push(next);
        here = v;
    }
    Some(if hops == 0 {
        ChainPath::identity(chart, y.to_vec())
    } else {
        ChainPath::new(y.to_vec(), &chain)
    })
}
