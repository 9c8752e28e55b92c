use serde::Serialize;

use crate::exact::matrix::NonnegativeMatrix;
use crate::scalar::Real;

/// Communicating classes of the directed graph of positive entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommunicatingStructure {
    /// Each class sorted ascending; classes ordered by smallest member.
    pub classes: Vec<Vec<usize>>,
    /// `closed[c]`: no edge leaves class `c`.
    pub closed: Vec<bool>,
    /// States in no closed class, ascending.
    pub transient: Vec<usize>,
    #[serde(skip)]
    class_of: Vec<usize>,
    #[serde(skip)]
    nontrivial: Vec<bool>,
}

impl CommunicatingStructure {
    pub fn class_of(&self, state: usize) -> usize {
        self.class_of[state]
    }

    pub fn closed_classes(&self) -> impl Iterator<Item = &[usize]> {
        self.classes
            .iter()
            .zip(&self.closed)
            .filter(|(_, &c)| c)
            .map(|(c, _)| c.as_slice())
    }

    /// A class is non-trivial if it carries a cycle (more than one state,
    /// or a self-loop).
    pub fn is_nontrivial(&self, class: usize) -> bool {
        self.nontrivial[class]
    }
}

fn adjacency<T: Real, M: NonnegativeMatrix<T> + ?Sized>(m: &M) -> Vec<Vec<usize>> {
    (0..m.order())
        .map(|i| {
            let mut row = Vec::new();
            m.for_each_in_row(i, &mut |j, v| {
                if v > T::zero() {
                    row.push(j);
                }
            });
            row
        })
        .collect()
}

/// Tarjan's algorithm, iterative so deep chains cannot overflow the stack.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < adj[v].len() {
                let w = adj[v][top.1];
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

pub fn communicating_structure<T: Real, M: NonnegativeMatrix<T> + ?Sized>(
    m: &M,
) -> CommunicatingStructure {
    let adj = adjacency(m);
    let mut classes = strongly_connected(&adj);
    for c in &mut classes {
        c.sort_unstable();
    }
    classes.sort_unstable_by_key(|c| c[0]);
    let n = adj.len();
    let mut class_of = vec![0usize; n];
    for (k, c) in classes.iter().enumerate() {
        for &s in c {
            class_of[s] = k;
        }
    }
    let closed: Vec<bool> = classes
        .iter()
        .enumerate()
        .map(|(k, c)| c.iter().all(|&s| adj[s].iter().all(|&t| class_of[t] == k)))
        .collect();
    let nontrivial = classes
        .iter()
        .map(|c| c.len() > 1 || adj[c[0]].contains(&c[0]))
        .collect();
    let transient = (0..n).filter(|&s| !closed[class_of[s]]).collect();
    CommunicatingStructure {
        classes,
        closed,
        transient,
        class_of,
        nontrivial,
    }
}

/// States reachable from `start` (including it) along positive entries.
pub fn reachable_from<T: Real, M: NonnegativeMatrix<T> + ?Sized>(m: &M, start: usize) -> Vec<bool> {
    let mut seen = vec![false; m.order()];
    let mut todo = vec![start];
    seen[start] = true;
    while let Some(i) = todo.pop() {
        m.for_each_in_row(i, &mut |j, v| {
            if v > T::zero() && !seen[j] {
                seen[j] = true;
                todo.push(j);
            }
        });
    }
    seen
}
