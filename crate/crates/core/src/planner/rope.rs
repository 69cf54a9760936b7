use super::env::{path_length, Environment};
use crate::Point2;

const MAX_PASSES: usize = 200;
const CUT_HALVINGS: usize = 12;
const SETTLE_TOL: f64 = 1e-3;

/// Lookahead that lets every node see the rest of the path.
pub fn max_opt_factor(path: &[Point2]) -> usize {
    path.len().saturating_sub(1).max(1)
}

/// One farthest-first shortcut pass: from each kept node, jump to the
/// farthest of the next `opt_factor` nodes that is directly reachable.
fn shortcut(path: &[Point2], env: &Environment, opt_factor: usize) -> Vec<Point2> {
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let far = (i + opt_factor.max(1)).min(path.len() - 1);
        let j = (i + 2..=far)
            .rev()
            .find(|&j| env.segment_free(&path[i], &path[j]))
            .unwrap_or(i + 1);
        out.push(path[j]);
        i = j;
    }
    out
}

/// Replaces each interior vertex by the widest free chord across its
/// corner. Both halves of the old corner stay on already-free edges.
fn cut_corners(path: &[Point2], env: &Environment) -> Vec<Point2> {
    let mut out = vec![path[0]];
    for i in 1..path.len() - 1 {
        let (p, v, n) = (*out.last().expect("non-empty"), path[i], path[i + 1]);
        let (lp, ln) = (v.dist(&p), v.dist(&n));
        let mut d = lp.min(ln);
        let mut cut = None;
        for _ in 0..CUT_HALVINGS {
            if d < 1e-3 {
                break;
            }
            let a = v.lerp(&p, d / lp);
            let b = v.lerp(&n, d / ln);
            if env.segment_free(&a, &b) {
                cut = Some((a, b));
                break;
            }
            d *= 0.5;
        }
        match cut {
            Some((a, b)) => {
                if a.dist(&p) > 1e-9 {
                    out.push(a);
                }
                out.push(b);
            }
            None => out.push(v),
        }
    }
    let last = path[path.len() - 1];
    if out.last().is_some_and(|q| q.dist(&last) < 1e-9) {
        out.pop();
    }
    out.push(last);
    out
}

/// Pulls the path taut: farthest-first shortcuts alternate with corner
/// cutting until the length settles. Never lengthens the path and keeps
/// every edge free in `env`.
pub fn rope_optimize(path: &[Point2], env: &Environment, opt_factor: usize) -> Vec<Point2> {
    if path.len() < 3 {
        return path.to_vec();
    }
    let full = opt_factor >= max_opt_factor(path);
    let mut best = shortcut(path, env, opt_factor);
    for _ in 0..MAX_PASSES {
        if best.len() < 3 {
            break;
        }
        let cut = cut_corners(&best, env);
        let next = shortcut(&cut, env, if full { max_opt_factor(&cut) } else { opt_factor });
        if path_length(&next) < path_length(&best) - SETTLE_TOL {
            best = next;
        } else {
            break;
        }
    }
    best
}
