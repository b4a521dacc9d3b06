//! Memoized, data-parallel per-instance sensitivity.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::ProjectedDataset;
use crate::query::{Accumulator, CompiledQuery, Contribution, Query, QueryOutput};

static NEXT_PIS_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    /// `‖a − b‖` in this norm.
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        Ok(match self {
            Norm::L1 => diffs.map(f64::abs).sum(),
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        })
    }

    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Identity of one computed [`PisTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PisId(u64);

/// Per-instance sensitivities `‖q(x) − q(x_{-i})‖` for every unique projected
/// record, with a per-row view through the projection's multiplicities.
#[derive(Clone, Debug)]
pub struct PisTable {
    id: PisId,
    norm: Norm,
    full_output: QueryOutput,
    neighbor_outputs: Vec<QueryOutput>,
    per_unique: Vec<f64>,
    weights: Vec<usize>,
    row_uid: Arc<[u32]>,
}

impl PisTable {
    pub fn id(&self) -> PisId {
        self.id
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    /// `q(x)`.
    pub fn full_output(&self) -> &QueryOutput {
        &self.full_output
    }

    /// `q(x_{-i})` for any row `i` of unique record `u`.
    pub fn neighbor_output(&self, u: usize) -> &QueryOutput {
        &self.neighbor_outputs[u]
    }

    pub fn per_unique(&self) -> &[f64] {
        &self.per_unique
    }

    /// Multiplicity of each unique record.
    pub fn weights(&self) -> &[usize] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.row_uid.len()
    }

    pub fn unique_of(&self, row: usize) -> usize {
        self.row_uid[row] as usize
    }

    pub fn per_row(&self, row: usize) -> f64 {
        self.per_unique[self.unique_of(row)]
    }

    pub(crate) fn row_uid(&self) -> &Arc<[u32]> {
        &self.row_uid
    }

    pub fn min(&self) -> f64 {
        self.per_unique.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.per_unique.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// How one pass over the rows accumulates the query.
enum Plan {
    /// COUNT and GROUP-BY-COUNT: each unique record increments one slot, with
    /// slot `k` collecting non-matching records.
    Counting { slot: Vec<u32>, k: usize, grouped: bool },
    Values(Vec<Contribution>),
}

impl Plan {
    fn new(compiled: &CompiledQuery, contributions: Vec<Contribution>, k: usize) -> Self {
        match compiled.accumulator() {
            Accumulator::Count(_) | Accumulator::Groups(_) => Plan::Counting {
                grouped: matches!(compiled.accumulator(), Accumulator::Groups(_)),
                slot: contributions
                    .iter()
                    .map(|c| match c {
                        Contribution::Nothing => k as u32,
                        Contribution::One => 0,
                        Contribution::Group(g) => *g as u32,
                        Contribution::Value(_) => unreachable!("counting query"),
                    })
                    .collect(),
                k,
            },
            _ => Plan::Values(contributions),
        }
    }

    /// Evaluates the query over every row of the projection except `skip`.
    fn evaluate_without(&self, compiled: &CompiledQuery, row_uid: &[u32], skip: Option<usize>) -> Result<QueryOutput> {
        match self {
            Plan::Counting { slot, k, grouped } => {
                let mut counts = vec![0u64; k + 1];
                for &uid in row_uid {
                    counts[slot[uid as usize] as usize] += 1;
                }
                if let Some(r) = skip {
                    counts[slot[row_uid[r] as usize] as usize] -= 1;
                }
                counts.truncate(*k);
                if *grouped {
                    Accumulator::Groups(counts).finish()
                } else {
                    Accumulator::Count(counts[0]).finish()
                }
            }
            Plan::Values(contributions) => {
                let mut acc = compiled.accumulator();
                for (r, &uid) in row_uid.iter().enumerate() {
                    if Some(r) != skip {
                        acc.add(contributions[uid as usize]);
                    }
                }
                acc.finish()
            }
        }
    }
}

/// Computes the per-instance sensitivity of every record of `p`, evaluating
/// `q(x_{-i})` once per unique projected record.
///
/// Unique records are split into contiguous chunks of `max(1, U / workers)`
/// and processed on up to `workers` threads. The result does not depend on
/// the worker count.
pub fn per_instance_sensitivity(
    p: &ProjectedDataset,
    q: &Query,
    norm: Norm,
    workers: usize,
) -> Result<PisTable> {
    let compiled = q.compile(&p.layout())?;
    let contributions = p
        .records()
        .iter()
        .map(|r| compiled.contribution(r))
        .collect::<Result<Vec<_>>>()?;
    let row_uid = p.row_uid();
    let plan = Plan::new(&compiled, contributions, q.k());
    let full = plan.evaluate_without(&compiled, row_uid, None)?;

    let u_count = p.unique_count();
    let one = |u: usize| -> Result<(QueryOutput, f64)> {
        let out = plan.evaluate_without(&compiled, row_uid, Some(p.rows_of(u)[0]))?;
        let pis = norm.distance(full.values(), out.values())?;
        Ok((out, pis))
    };

    let workers = workers.max(1);
    let chunk = (u_count / workers).max(1);
    let chunks: Vec<std::ops::Range<usize>> = (0..u_count)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(u_count))
        .collect();
    let run_chunk = |range: std::ops::Range<usize>| range.map(one).collect::<Result<Vec<_>>>();

    let results: Vec<Result<Vec<(QueryOutput, f64)>>> = if workers == 1 || chunks.len() == 1 {
        chunks.iter().cloned().map(run_chunk).collect()
    } else {
        let threads = workers.min(chunks.len());
        let mut slots: Vec<Option<Result<Vec<(QueryOutput, f64)>>>> =
            (0..chunks.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let chunks = &chunks;
                    let run_chunk = &run_chunk;
                    s.spawn(move || {
                        (t..chunks.len())
                            .step_by(threads)
                            .map(|c| (c, run_chunk(chunks[c].clone())))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (c, r) in h.join().expect("sensitivity worker panicked") {
                    slots[c] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every chunk computed")).collect()
    };

    let mut neighbor_outputs = Vec::with_capacity(u_count);
    let mut per_unique = Vec::with_capacity(u_count);
    for chunk in results {
        for (out, pis) in chunk? {
            neighbor_outputs.push(out);
            per_unique.push(pis);
        }
    }
    Ok(PisTable {
        id: PisId(NEXT_PIS_ID.fetch_add(1, Ordering::Relaxed)),
        norm,
        full_output: full,
        neighbor_outputs,
        per_unique,
        weights: (0..u_count).map(|u| p.multiplicity(u)).collect(),
        row_uid: Arc::clone(row_uid),
    })
}
