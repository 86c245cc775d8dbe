//! Transfer learning graph: vertices are (domain, task) problems, edges are
//! knowledge-flow directions. Must be acyclic; the pipeline's instance is
//! the linear chain P1 -> P2 -> P3.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemDesc {
    pub domain: String,
    pub task: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferGraph {
    pub vertices: Vec<ProblemDesc>,
    pub edges: Vec<(usize, usize)>,
}

impl TransferGraph {
    pub fn new(vertices: Vec<ProblemDesc>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = TransferGraph { vertices, edges };
        g.validate()?;
        Ok(g)
    }

    /// Chain graph v0 -> v1 -> ... -> vn.
    pub fn linear_chain(problems: Vec<ProblemDesc>) -> Result<Self> {
        let edges = (1..problems.len()).map(|i| (i - 1, i)).collect();
        TransferGraph::new(problems, edges)
    }

    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.edges {
            if a >= self.vertices.len() || b >= self.vertices.len() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) references a missing vertex"
                )));
            }
        }
        // Kahn's algorithm; leftover vertices mean a cycle.
        let n = self.vertices.len();
        let mut indegree = vec![0usize; n];
        for &(_, b) in &self.edges {
            indegree[b] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &(a, b) in &self.edges {
                if a == v {
                    indegree[b] -= 1;
                    if indegree[b] == 0 {
                        queue.push(b);
                    }
                }
            }
        }
        if seen != n {
            return Err(Error::InvalidArgument(
                "transfer graph contains a cycle".into(),
            ));
        }
        Ok(())
    }

    /// True when an edge `from -> to` exists.
    pub fn is_predecessor(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str) -> ProblemDesc {
        ProblemDesc { domain: name.into(), task: name.into() }
    }

    #[test]
    fn linear_chain_is_valid() {
        let g = TransferGraph::linear_chain(vec![p("objects"), p("lights"), p("poverty")]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert!(g.is_predecessor(0, 1));
        assert!(!g.is_predecessor(1, 0));
    }

    #[test]
    fn cycles_rejected() {
        let verts = vec![p("a"), p("b"), p("c")];
        assert!(TransferGraph::new(verts.clone(), vec![(0, 1), (1, 2), (2, 0)]).is_err());
        assert!(TransferGraph::new(verts.clone(), vec![(0, 0)]).is_err());
        assert!(TransferGraph::new(verts, vec![(0, 1), (1, 2)]).is_ok());
    }

    #[test]
    fn dangling_edge_rejected() {
        assert!(TransferGraph::new(vec![p("a")], vec![(0, 3)]).is_err());
    }
}
