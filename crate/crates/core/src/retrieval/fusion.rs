use std::collections::HashMap;
use std::hash::Hash;

/// Reciprocal rank fusion of two rankings: `Σ 1/(rrf_k + rank)` with ranks
/// starting at 1. Items missing from one list only get the other's term.
///
/// Equal fused scores fall back to the better single-list rank, then to
/// first appearance (list `a` before list `b`).
pub fn rrf_fuse<T>(a: &[T], b: &[T], rrf_k: u32) -> Vec<(T, f64)>
where
    T: Clone + Eq + Hash,
{
    struct Acc {
        score: f64,
        best_rank: usize,
        first_seen: usize,
    }
    let k = rrf_k as f64;
    let mut acc: HashMap<&T, Acc> = HashMap::new();
    let mut order: Vec<&T> = Vec::new();
    for (offset, list) in [(0, a), (a.len(), b)] {
        for (i, item) in list.iter().enumerate() {
            let rank = i + 1;
            let term = 1.0 / (k + rank as f64);
            match acc.get_mut(item) {
                Some(e) => {
                    e.score += term;
                    e.best_rank = e.best_rank.min(rank);
                }
                None => {
                    acc.insert(
                        item,
                        Acc {
                            score: term,
                            best_rank: rank,
                            first_seen: offset + i,
                        },
                    );
                    order.push(item);
                }
            }
        }
    }
    order.sort_by(|x, y| {
        let (ax, ay) = (&acc[x], &acc[y]);
        ay.score
            .total_cmp(&ax.score)
            .then(ax.best_rank.cmp(&ay.best_rank))
            .then(ax.first_seen.cmp(&ay.first_seen))
    });
    order
        .into_iter()
        .map(|item| (item.clone(), acc[item].score))
        .collect()
}
