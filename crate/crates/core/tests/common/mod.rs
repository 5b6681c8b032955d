//! Reference implementations the engine is checked against. Each one is the
//! plainest possible version of the computation, written without reference
//! to the library code paths.

#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

/// Sort everything, average the first `ceil(k·n/100)` (at least one).
pub fn min_k_oracle(logprobs: &[f64], k_percent: f64) -> (f64, usize) {
    let n = logprobs.len();
    let mut k = (k_percent * n as f64 / 100.0).ceil() as usize;
    if k < 1 {
        k = 1;
    }
    if k > n {
        k = n;
    }
    let mut sorted = logprobs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sum = 0.0;
    for x in &sorted[..k] {
        sum += x;
    }
    (sum / k as f64, k)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Textbook DBSCAN from an explicit distance matrix: cores by counting,
/// clusters as connected components of the core graph (union-find), each
/// border point attached to its lowest-index core neighbour, labels numbered
/// by first appearance.
pub fn naive_dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize, dist: fn(&[f64], &[f64]) -> f64) -> Vec<i64> {
    let n = points.len();
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(&points[i], &points[j])).collect()).collect();
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| d[i][j] <= eps).count() >= min_samples).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && d[i][j] <= eps {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut component = vec![None; n];
    for i in 0..n {
        if core[i] {
            component[i] = Some(find(&mut parent, i));
        } else if let Some(c) = (0..n).find(|&j| core[j] && d[i][j] <= eps) {
            component[i] = Some(find(&mut parent, c));
        }
    }
    let mut names: Vec<usize> = Vec::new();
    component
        .iter()
        .map(|c| match c {
            None => -1,
            Some(root) => match names.iter().position(|r| r == root) {
                Some(p) => p as i64,
                None => {
                    names.push(*root);
                    names.len() as i64 - 1
                }
            },
        })
        .collect()
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contam-audit"))
}

/// Runs the binary and returns its exit code.
pub fn run_cli(args: &[&str], cwd: &Path) -> i32 {
    let out = bin().args(args).current_dir(cwd).output().expect("binary runs");
    out.status.code().expect("exited normally")
}
