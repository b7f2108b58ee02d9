//! Shared test-only machinery: a random-DAG corpus generator and the
//! brute-force path-enumeration oracle for d-separation and back-door
//! queries (exponential; capped at 6 nodes).

// each integration test compiles its own copy and uses a different subset
#![allow(dead_code)]

use std::collections::HashSet;

/// Minimal xorshift so the corpus needs no RNG dependency in tests.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    pub fn chance(&mut self, p_num: u64, p_den: u64) -> bool {
        self.next() % p_den < p_num
    }
}

/// Random DAG: nodes N0..N{n-1}, edges only from lower to higher index.
pub fn random_dag(seed: u64) -> (Vec<String>, Vec<(usize, usize)>) {
    let mut rng = TestRng::new(seed);
    let n = 2 + (rng.next() % 5) as usize; // 2..=6
    let labels: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.chance(2, 5) {
                edges.push((i, j));
            }
        }
    }
    (labels, edges)
}

pub struct Adj {
    n: usize,
    pub parents: Vec<Vec<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl Adj {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in edges {
            children[a].push(b);
            parents[b].push(a);
        }
        Adj {
            n,
            parents,
            children,
        }
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = self.parents[v].clone();
        out.extend(&self.children[v]);
        out
    }

    pub fn descendants(&self, v: usize) -> HashSet<usize> {
        let mut out = HashSet::new();
        let mut stack = self.children[v].clone();
        while let Some(c) = stack.pop() {
            if out.insert(c) {
                stack.extend(&self.children[c]);
            }
        }
        out
    }

    /// All simple undirected paths from `a` to `b`.
    pub fn all_paths(&self, a: usize, b: usize) -> Vec<Vec<usize>> {
        let mut paths = Vec::new();
        let mut current = vec![a];
        let mut on_path = vec![false; self.n];
        on_path[a] = true;
        self.extend_path(b, &mut current, &mut on_path, &mut paths);
        paths
    }

    fn extend_path(
        &self,
        target: usize,
        current: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        paths: &mut Vec<Vec<usize>>,
    ) {
        let last = *current.last().unwrap();
        if last == target {
            paths.push(current.clone());
            return;
        }
        for w in self.neighbors(last) {
            if on_path[w] {
                continue;
            }
            on_path[w] = true;
            current.push(w);
            self.extend_path(target, current, on_path, paths);
            current.pop();
            on_path[w] = false;
        }
    }

    pub fn is_collider(&self, path: &[usize], i: usize) -> bool {
        let v = path[i];
        self.parents[v].contains(&path[i - 1]) && self.parents[v].contains(&path[i + 1])
    }

    /// Standard blocking rules: a non-collider in the conditioning set blocks;
    /// a collider blocks unless it or one of its descendants is conditioned on.
    pub fn path_open(&self, path: &[usize], given: &HashSet<usize>) -> bool {
        for i in 1..path.len() - 1 {
            let v = path[i];
            if self.is_collider(path, i) {
                let mut opened = given.contains(&v);
                if !opened {
                    opened = self.descendants(v).iter().any(|d| given.contains(d));
                }
                if !opened {
                    return false;
                }
            } else if given.contains(&v) {
                return false;
            }
        }
        true
    }

    pub fn d_separated(&self, a: usize, b: usize, given: &HashSet<usize>) -> bool {
        self.all_paths(a, b)
            .iter()
            .all(|p| !self.path_open(p, given))
    }

    /// Back-door oracle: no adjustment node descends from the treatment, and
    /// every path starting with an arrow into the treatment is blocked.
    pub fn backdoor(&self, t: usize, o: usize, adjust: &HashSet<usize>) -> bool {
        let desc = self.descendants(t);
        if adjust.iter().any(|z| desc.contains(z)) {
            return false;
        }
        self.all_paths(t, o)
            .iter()
            .filter(|p| self.parents[t].contains(&p[1]))
            .all(|p| !self.path_open(p, adjust))
    }
}

pub fn subsets(pool: &[usize]) -> Vec<Vec<usize>> {
    (0..(1usize << pool.len()))
        .map(|mask| {
            pool.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}
