//! Exact graph edit distance by depth-first branch and bound over partial
//! node assignments.
//!
//! Unit costs everywhere: node insert/delete 1, node substitution (element
//! label) 1, edge insert/delete 1, edge substitution (bond order) 1. The
//! search assigns the first graph's nodes in index order to either an unused
//! node of the second graph or to deletion, pruning with an admissible
//! unmatched-node + label-mismatch lower bound.

#![allow(clippy::needless_range_loop)]

use crate::graph::{Element, MolecularGraph};

#[derive(Debug, thiserror::Error)]
pub enum GedError {
    #[error("graph with {size} nodes exceeds the exact-search limit {limit}")]
    TooLarge { size: usize, limit: usize },
}

pub const DEFAULT_NODE_LIMIT: usize = 8;

pub fn ged_exact(
    g1: &MolecularGraph,
    g2: &MolecularGraph,
    node_limit: usize,
) -> Result<u32, GedError> {
    for g in [g1, g2] {
        if g.atom_count() > node_limit {
            return Err(GedError::TooLarge {
                size: g.atom_count(),
                limit: node_limit,
            });
        }
    }
    let mut ctx = Search {
        g1,
        g2,
        labels1: g1.atoms().iter().map(|a| a.element).collect(),
        labels2: g2.atoms().iter().map(|a| a.element).collect(),
        // delete everything, insert everything
        best: (g1.atom_count() + g1.bond_count() + g2.atom_count() + g2.bond_count()) as u32,
    };
    let mut assignment: Vec<Option<usize>> = Vec::with_capacity(g1.atom_count());
    let mut used = vec![false; g2.atom_count()];
    ctx.descend(&mut assignment, &mut used, 0);
    Ok(ctx.best)
}

struct Search<'a> {
    g1: &'a MolecularGraph,
    g2: &'a MolecularGraph,
    labels1: Vec<Element>,
    labels2: Vec<Element>,
    best: u32,
}

impl Search<'_> {
    fn descend(&mut self, assignment: &mut Vec<Option<usize>>, used: &mut [bool], cost: u32) {
        let k = assignment.len();
        if cost + self.lower_bound(k, used) >= self.best {
            return;
        }
        if k == self.g1.atom_count() {
            let total = cost + self.completion_cost(assignment, used);
            if total < self.best {
                self.best = total;
            }
            return;
        }
        // branch over candidate images, cheapest incremental cost first
        let mut branches: Vec<(u32, Option<usize>)> = Vec::new();
        for v in 0..self.g2.atom_count() {
            if !used[v] {
                branches.push((self.assign_cost(assignment, k, Some(v)), Some(v)));
            }
        }
        branches.push((self.assign_cost(assignment, k, None), None));
        branches.sort_by_key(|&(c, image)| (c, image.map_or(usize::MAX, |v| v)));
        for (delta, image) in branches {
            assignment.push(image);
            if let Some(v) = image {
                used[v] = true;
            }
            self.descend(assignment, used, cost + delta);
            if let Some(v) = image {
                used[v] = false;
            }
            assignment.pop();
        }
    }

    /// Cost of assigning g1 node `u` to `image`, counting the node edit and
    /// every edge between u and the already-assigned nodes.
    fn assign_cost(&self, assignment: &[Option<usize>], u: usize, image: Option<usize>) -> u32 {
        let mut cost = 0;
        match image {
            None => cost += 1, // node deletion
            Some(v) => {
                if self.labels1[u] != self.labels2[v] {
                    cost += 1;
                }
            }
        }
        for (w, &w_image) in assignment.iter().enumerate() {
            let o1 = self.g1.bond_order(u, w);
            let o2 = match (image, w_image) {
                (Some(v), Some(x)) => self.g2.bond_order(v, x),
                _ => None,
            };
            if o1 != o2 {
                cost += 1;
            }
        }
        cost
    }

    /// After all g1 nodes are assigned: unused g2 nodes are insertions, and
    /// every g2 edge with an endpoint that is not an image is an insertion.
    fn completion_cost(&self, _assignment: &[Option<usize>], used: &[bool]) -> u32 {
        let mut cost = used.iter().filter(|&&u| !u).count() as u32;
        for bond in self.g2.bonds() {
            if !used[bond.a] || !used[bond.b] {
                cost += 1;
            }
        }
        cost
    }

    /// Admissible bound from nodes alone: match as many same-label pairs as
    /// possible for free, substitute across labels, delete/insert the rest.
    fn lower_bound(&self, k: usize, used: &[bool]) -> u32 {
        let r1 = self.g1.atom_count() - k;
        let r2 = used.iter().filter(|&&u| !u).count();
        let mut matchable = 0usize;
        let mut counts: std::collections::BTreeMap<Element, (usize, usize)> = Default::default();
        for &l in &self.labels1[k..] {
            counts.entry(l).or_default().0 += 1;
        }
        for (v, &l) in self.labels2.iter().enumerate() {
            if !used[v] {
                counts.entry(l).or_default().1 += 1;
            }
        }
        for (_, (c1, c2)) in counts {
            matchable += c1.min(c2);
        }
        (r1.min(r2) - matchable.min(r1.min(r2)) + r1.abs_diff(r2)) as u32
    }
}
