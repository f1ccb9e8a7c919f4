//! Verification and identification metrics plus the dual-eye rules.

mod report;

pub use report::{render_table, ProtocolResult, Report, ReportPoint};

use crate::error::{Error, Result};
use crate::matcher::PairScore;
use crate::scalar::Scalar;

/// Labeled similarities; higher means more similar.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet<T> {
    pub genuine: Vec<T>,
    pub impostor: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl<T: Scalar> ScoreSet<T> {
    /// Splits pair scores by label. `Side::Right` reads the right-eye
    /// component of dual pairs and skips single pairs.
    pub fn from_pairs(scores: &[PairScore<T>], side: Side) -> Self {
        let mut set = ScoreSet {
            genuine: Vec::new(),
            impostor: Vec::new(),
        };
        for p in scores {
            let s = match side {
                Side::Left => Some(p.left.similarity),
                Side::Right => p.right.map(|r| r.similarity),
            };
            if let Some(s) = s {
                if p.genuine {
                    set.genuine.push(s);
                } else {
                    set.impostor.push(s);
                }
            }
        }
        set
    }
}

/// One operating point. `threshold` is `+inf` when no finite score meets the budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetPoint<T> {
    pub far_target: T,
    pub achieved_far: T,
    pub frr: T,
    pub threshold: T,
}

fn sorted<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Minimum number of impostors needed to resolve `far_target`.
pub fn impostors_needed(far_target: f64) -> usize {
    (1.0 / far_target - 1e-9).ceil().max(1.0) as usize
}

/// Smallest threshold whose false-accept rate stays within the target
/// (accept iff similarity >= threshold), and the FRR it implies.
pub fn frr_at_far<T: Scalar>(scores: &ScoreSet<T>, far_target: T) -> Result<DetPoint<T>> {
    let target = far_target.as_f64();
    let n = scores.impostor.len();
    let needed = impostors_needed(target);
    if n < needed {
        return Err(Error::InsufficientImpostors {
            needed,
            available: n,
        });
    }
    if scores.genuine.is_empty() {
        return Err(Error::EmptyGenuine);
    }
    let imp = sorted(&scores.impostor);
    // Walk distinct impostor values upward; FAR only falls as t rises.
    let mut threshold = T::infinity();
    let mut count_ge = 0usize;
    let mut i = 0;
    while i < n {
        let ge = n - i;
        if (ge as f64) / (n as f64) <= target {
            threshold = imp[i];
            count_ge = ge;
            break;
        }
        let v = imp[i];
        while i < n && imp[i] == v {
            i += 1;
        }
    }
    let gen = sorted(&scores.genuine);
    let rejected = gen.partition_point(|&g| g < threshold);
    Ok(DetPoint {
        far_target,
        achieved_far: T::lit(count_ge as f64 / n as f64),
        frr: T::lit(rejected as f64 / gen.len() as f64),
        threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn from_score<T: PartialOrd>(similarity: T, threshold: T) -> Self {
        if similarity >= threshold {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// Dual-eye verification accepts only when both eyes do.
pub fn dual_fuse_verification(left: Decision, right: Decision) -> Decision {
    match (left, right) {
        (Decision::Accept, Decision::Accept) => Decision::Accept,
        _ => Decision::Reject,
    }
}

/// Dual-eye identification is correct only when both eyes rank the true subject first.
pub fn dual_rank1<C: PartialEq + ?Sized>(left_top: &C, right_top: &C, truth: &C) -> bool {
    left_top == truth && right_top == truth
}

/// Dual operating point with per-eye thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualDetPoint<T> {
    pub point: DetPoint<T>,
    pub threshold_right: T,
}

/// Each eye is thresholded at its own FRR@FAR point (computed from its
/// component of the dual pairs), then the decisions are AND-fused.
pub fn dual_frr_at_far<T: Scalar>(
    scores: &[PairScore<T>],
    far_target: T,
) -> Result<DualDetPoint<T>> {
    let left = frr_at_far(&ScoreSet::from_pairs(scores, Side::Left), far_target)?;
    let right = frr_at_far(&ScoreSet::from_pairs(scores, Side::Right), far_target)?;
    let (mut n_gen, mut rejected, mut n_imp, mut accepted) = (0usize, 0usize, 0usize, 0usize);
    for p in scores {
        let r = p
            .right
            .ok_or_else(|| Error::InvalidSpec("single-eye pair in dual evaluation".into()))?;
        let d = dual_fuse_verification(
            Decision::from_score(p.left.similarity, left.threshold),
            Decision::from_score(r.similarity, right.threshold),
        );
        if p.genuine {
            n_gen += 1;
            rejected += (d == Decision::Reject) as usize;
        } else {
            n_imp += 1;
            accepted += (d == Decision::Accept) as usize;
        }
    }
    Ok(DualDetPoint {
        point: DetPoint {
            far_target,
            achieved_far: T::lit(accepted as f64 / n_imp as f64),
            frr: T::lit(rejected as f64 / n_gen as f64),
            threshold: left.threshold,
        },
        threshold_right: right.threshold,
    })
}

/// Similarity of one probe against one gallery entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryScore<T> {
    pub gallery_id: String,
    pub similarity: T,
    /// Gallery entry belongs to the probe's class.
    pub genuine: bool,
}

/// Highest-similarity entry; ties go to the lexicographically smallest gallery id.
pub fn top1<T: Scalar>(entries: &[GalleryScore<T>]) -> Option<&GalleryScore<T>> {
    entries.iter().reduce(|best, e| {
        if e.similarity > best.similarity
            || (e.similarity == best.similarity && e.gallery_id < best.gallery_id)
        {
            e
        } else {
            best
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank1 {
    pub correct: usize,
    pub total: usize,
}

impl Rank1 {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Rank-1 over per-probe score lists.
pub fn rank1<T: Scalar>(probes: &[Vec<GalleryScore<T>>]) -> Result<Rank1> {
    let mut correct = 0;
    for entries in probes {
        let top = top1(entries).ok_or(Error::EmptyGallery)?;
        correct += top.genuine as usize;
    }
    Ok(Rank1 {
        correct,
        total: probes.len(),
    })
}

/// Groups identification pair scores by probe (in first-seen order) and
/// computes rank-1; dual pairs use the conjunction rule.
pub fn rank1_from_pairs<T: Scalar>(scores: &[PairScore<T>]) -> Result<Rank1> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<
        String,
        (Vec<GalleryScore<T>>, Vec<GalleryScore<T>>),
    > = std::collections::HashMap::new();
    for p in scores {
        let key = p.probe.key();
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), Vec::new())
        });
        g.0.push(GalleryScore {
            gallery_id: p.reference.key(),
            similarity: p.left.similarity,
            genuine: p.genuine,
        });
        if let Some(r) = p.right {
            g.1.push(GalleryScore {
                gallery_id: p.reference.key(),
                similarity: r.similarity,
                genuine: p.genuine,
            });
        }
    }
    let mut correct = 0;
    for key in &order {
        let (left, right) = &groups[key];
        let l = top1(left).ok_or(Error::EmptyGallery)?;
        let ok = if right.is_empty() {
            l.genuine
        } else {
            let r = top1(right).ok_or(Error::EmptyGallery)?;
            dual_rank1(&l.genuine, &r.genuine, &true)
        };
        correct += ok as usize;
    }
    Ok(Rank1 {
        correct,
        total: order.len(),
    })
}
