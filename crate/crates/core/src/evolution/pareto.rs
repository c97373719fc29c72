//! Dominance, non-dominated sorting, crowding distance and population ranking.

use std::cmp::Ordering;

use crate::dsl::Genome;
use crate::fitness::ObjectiveVector;

impl AsRef<[f64]> for ObjectiveVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// `a` is no worse than `b` in every objective.
pub fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// 1-based front index per member.
pub fn non_dominated_sort<V: AsRef<[f64]>>(vs: &[V]) -> Vec<usize> {
    let n = vs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (vs[i].as_ref(), vs[j].as_ref());
            if dominates(a, b) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(b, a) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut front = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut k = 1;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            front[i] = k;
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        current = next;
        k += 1;
    }
    front
}

/// Crowding distance of each member of a single front.
pub fn crowding_distance<V: AsRef<[f64]>>(front: &[V]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let m = front[0].as_ref().len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let val = |i: usize| front[i].as_ref()[k];
        order.sort_by(|&a, &b| val(a).partial_cmp(&val(b)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let lo = val(order[0]);
        let hi = val(order[n - 1]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi == lo {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (val(w[2]) - val(w[0])) / (hi - lo);
        }
    }
    dist
}

/// A scored population in total order: front ascending, crowding
/// descending, index ascending.
#[derive(Clone, Debug)]
pub struct RankedPopulation {
    pub members: Vec<(Genome, ObjectiveVector)>,
    pub front: Vec<usize>,
    pub crowding: Vec<f64>,
    /// Member indices from best to worst.
    pub order: Vec<usize>,
    /// 1-based position of each member in `order`.
    pub rank: Vec<usize>,
}

impl RankedPopulation {
    pub fn new(members: Vec<(Genome, ObjectiveVector)>) -> Self {
        let objs: Vec<ObjectiveVector> = members.iter().map(|m| m.1).collect();
        let front = non_dominated_sort(&objs);
        let mut crowding = vec![0.0; members.len()];
        let fronts = front.iter().copied().max().unwrap_or(0);
        for f in 1..=fronts {
            let idx: Vec<usize> = (0..members.len()).filter(|&i| front[i] == f).collect();
            let sub: Vec<ObjectiveVector> = idx.iter().map(|&i| objs[i]).collect();
            for (&i, d) in idx.iter().zip(crowding_distance(&sub)) {
                crowding[i] = d;
            }
        }
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| {
            front[a]
                .cmp(&front[b])
                .then(crowding[b].partial_cmp(&crowding[a]).unwrap_or(Ordering::Equal))
                .then(a.cmp(&b))
        });
        let mut rank = vec![0; members.len()];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos + 1;
        }
        Self {
            members,
            front,
            crowding,
            order,
            rank,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `r^(-1/2)` for the member's position `r` in the total order.
    pub fn scaled_fitness(&self, i: usize) -> f64 {
        (self.rank[i] as f64).powf(-0.5)
    }

    /// Indices of front 1, best first.
    pub fn first_front(&self) -> Vec<usize> {
        self.order.iter().copied().take_while(|&i| self.front[i] == 1).collect()
    }
}
