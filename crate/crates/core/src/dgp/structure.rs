//! Conditional-independence queries over the variables of a synthetic DGP.
//!
//! Variables are the `p` features followed by the target (index `p`).
//! Independence is decided by d-separation on the generating DAG, after
//! merging variables that are deterministic copies of each other. A DGP can
//! instead declare an XOR triple, whose members are pairwise independent but
//! jointly dependent (d-separation is not faithful there).

use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct Structure {
    n_nodes: usize,
    parents: Vec<Vec<usize>>,
    /// representative of each node after merging deterministic copies
    alias: Vec<usize>,
    /// three variables forming an XOR triple, if any
    xor: Option<[usize; 3]>,
}

impl Structure {
    pub fn new(n_nodes: usize) -> Self {
        Self { n_nodes, parents: vec![Vec::new(); n_nodes], alias: (0..n_nodes).collect(), xor: None }
    }

    pub fn edge(mut self, from: usize, to: usize) -> Self {
        self.parents[to].push(from);
        self
    }

    /// `copy` is a deterministic copy of `of`.
    pub fn alias(mut self, copy: usize, of: usize) -> Self {
        self.alias[copy] = of;
        self
    }

    pub fn xor(mut self, triple: [usize; 3]) -> Self {
        self.xor = Some(triple);
        self
    }

    /// Append `k` isolated nodes before the last node (the target), keeping
    /// the target at the end. Indices of existing features are unchanged.
    pub fn with_isolated_features(&self, k: usize) -> Self {
        let old_y = self.n_nodes - 1;
        let new_y = old_y + k;
        let remap = |v: usize| if v == old_y { new_y } else { v };
        let n = self.n_nodes + k;
        let mut out = Structure::new(n);
        for (child, ps) in self.parents.iter().enumerate() {
            out.parents[remap(child)] = ps.iter().map(|&v| remap(v)).collect();
        }
        for (v, &a) in self.alias.iter().enumerate() {
            out.alias[remap(v)] = remap(a);
        }
        out.xor = self.xor.map(|t| t.map(remap));
        out
    }

    /// Is `A ⊥ B | C`? Sets must be pairwise disjoint.
    pub fn independent(&self, a: &[usize], b: &[usize], c: &[usize]) -> bool {
        if let Some(t) = self.xor {
            return self.xor_independent(t, a, b, c);
        }
        let rep = |v: usize| self.alias[v];
        let c_rep: BTreeSet<usize> = c.iter().map(|&v| rep(v)).collect();
        // variables determined by the conditioning set carry no information
        let a_rep: BTreeSet<usize> = a.iter().map(|&v| rep(v)).filter(|v| !c_rep.contains(v)).collect();
        let b_rep: BTreeSet<usize> = b.iter().map(|&v| rep(v)).filter(|v| !c_rep.contains(v)).collect();
        if a_rep.is_empty() || b_rep.is_empty() {
            return true;
        }
        if a_rep.intersection(&b_rep).next().is_some() {
            return false;
        }
        self.d_separated(&a_rep, &b_rep, &c_rep)
    }

    fn xor_independent(&self, t: [usize; 3], a: &[usize], b: &[usize], c: &[usize]) -> bool {
        let core = |s: &[usize]| s.iter().filter(|v| t.contains(v)).count();
        let (ka, kb, kc) = (core(a), core(b), core(c));
        if ka == 0 || kb == 0 {
            return true;
        }
        // any two members are independent; anything involving the third is not
        kc == 0 && ka == 1 && kb == 1
    }

    fn d_separated(&self, a: &BTreeSet<usize>, b: &BTreeSet<usize>, c: &BTreeSet<usize>) -> bool {
        let n = self.n_nodes;
        // parents in the merged graph
        let parents: Vec<BTreeSet<usize>> = (0..n)
            .map(|v| {
                let mut ps = BTreeSet::new();
                for u in 0..n {
                    if self.alias[u] == v {
                        for &p in &self.parents[u] {
                            let r = self.alias[p];
                            if r != v {
                                ps.insert(r);
                            }
                        }
                    }
                }
                ps
            })
            .collect();

        // ancestral set of A ∪ B ∪ C
        let mut anc = vec![false; n];
        let mut stack: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
        while let Some(v) = stack.pop() {
            if !anc[v] {
                anc[v] = true;
                stack.extend(parents[v].iter().copied());
            }
        }

        // moralized undirected graph on the ancestral set
        let mut adj = vec![BTreeSet::new(); n];
        for v in (0..n).filter(|&v| anc[v]) {
            let ps: Vec<usize> = parents[v].iter().copied().filter(|&p| anc[p]).collect();
            for (i, &p) in ps.iter().enumerate() {
                adj[p].insert(v);
                adj[v].insert(p);
                for &q in &ps[i + 1..] {
                    adj[p].insert(q);
                    adj[q].insert(p);
                }
            }
        }

        // reachability from A avoiding C
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = a.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if seen[v] || c.contains(&v) {
                continue;
            }
            if b.contains(&v) {
                return false;
            }
            seen[v] = true;
            stack.extend(adj[v].iter().copied());
        }
        true
    }
}
