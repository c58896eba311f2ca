use super::ExogenousChain;
use crate::error::{Error, Result};

/// Default limit on the number of history nodes.
pub const NODE_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryNode {
    pub stage: usize,
    /// Exogenous state at this stage.
    pub state: usize,
    pub parent: Option<usize>,
    /// Probability of the whole history given the initial state.
    pub prob: f64,
    pub children: Vec<usize>,
}

/// Positive-probability histories `(s_0, ..., s_t)` for a fixed `s_0`.
///
/// Nodes are stored layer by layer, so a parent always precedes its
/// children and node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTree {
    pub s0: usize,
    pub nodes: Vec<HistoryNode>,
    pub layers: Vec<Vec<usize>>,
}

impl HistoryTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn node(&self, id: usize) -> &HistoryNode {
        &self.nodes[id]
    }

    /// `P(child | parent)`.
    pub fn cond_prob(&self, id: usize) -> f64 {
        match self.nodes[id].parent {
            Some(p) => self.nodes[id].prob / self.nodes[p].prob,
            None => 1.0,
        }
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Exogenous states along the path to `id`.
    pub fn history(&self, id: usize) -> Vec<usize> {
        self.path(id)
            .into_iter()
            .map(|n| self.nodes[n].state)
            .collect()
    }

    /// Ids of `id` and all its descendants, parents first.
    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.nodes[out[i]].children);
            i += 1;
        }
        out
    }
}

pub fn enumerate_histories(chain: &ExogenousChain, s0: usize) -> Result<HistoryTree> {
    enumerate_histories_with_budget(chain, s0, NODE_BUDGET)
}

/// Enumerate the tree, failing with a capacity error once more than
/// `budget` nodes would be needed.
pub fn enumerate_histories_with_budget(
    chain: &ExogenousChain,
    s0: usize,
    budget: usize,
) -> Result<HistoryTree> {
    if s0 >= chain.len() {
        return Err(Error::Invalid(format!(
            "initial state {s0} out of range for {} states",
            chain.len()
        )));
    }
    let mut nodes = vec![HistoryNode {
        stage: 0,
        state: s0,
        parent: None,
        prob: 1.0,
        children: vec![],
    }];
    let mut layers = vec![vec![0]];
    for t in 1..=chain.horizon {
        let mut layer = Vec::new();
        for &p in &layers[t - 1] {
            let sp = nodes[p].state;
            for (s, &pr) in chain.transition[sp].iter().enumerate() {
                if pr <= 0.0 {
                    continue;
                }
                if nodes.len() >= budget {
                    return Err(Error::Capacity { budget });
                }
                let id = nodes.len();
                let prob = nodes[p].prob * pr;
                nodes.push(HistoryNode {
                    stage: t,
                    state: s,
                    parent: Some(p),
                    prob,
                    children: vec![],
                });
                nodes[p].children.push(id);
                layer.push(id);
            }
        }
        layers.push(layer);
    }
    Ok(HistoryTree { s0, nodes, layers })
}
