//! Independent reference implementations shared by the integration tests
//! and the acceptance suite.
#![allow(dead_code)]

use num_rational::Ratio;
use pushwatch_core::forest::Node;
use pushwatch_core::Label;

/// Angle at `b` via the two-argument arctangent of the cross and dot
/// products.
pub fn atan2_angle(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (ux, uy) = (a.0 - b.0, a.1 - b.1);
    let (vx, vy) = (c.0 - b.0, c.1 - b.1);
    let cross = ux * vy - uy * vx;
    let dot = ux * vx + uy * vy;
    cross.abs().atan2(dot).to_degrees()
}

type Q = Ratio<i64>;

fn gini_q(c: [i64; 2]) -> Q {
    let n = c[0] + c[1];
    Q::from_integer(1) - Q::new(c[0] * c[0] + c[1] * c[1], n * n)
}

/// Exhaustive search of every (feature, midpoint) split at every node,
/// scored by exact weighted Gini. Integer-valued features keep midpoints
/// exact. Returns the tree in preorder.
pub fn brute_force_tree(x: &[Vec<i64>], y: &[Label], max_depth: usize) -> Vec<Node> {
    let mut out = Vec::new();
    let all: Vec<usize> = (0..x.len()).collect();
    build(x, y, &all, 0, max_depth, &mut out);
    out
}

fn build(x: &[Vec<i64>], y: &[Label], s: &[usize], depth: usize, max_depth: usize, out: &mut Vec<Node>) {
    let mut counts = [0i64; 2];
    for &i in s {
        counts[y[i].index()] += 1;
    }
    let leaf = Node::Leaf { counts: [counts[0] as u32, counts[1] as u32] };
    if counts[0] == 0 || counts[1] == 0 || s.len() < 2 || depth >= max_depth {
        out.push(leaf);
        return;
    }
    let n = s.len() as i64;
    // (impurity, feature, threshold doubled)
    let mut best: Option<(Q, usize, i64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<i64> = s.iter().map(|&i| x[i][f]).collect();
        vals.sort();
        vals.dedup();
        for w in vals.windows(2) {
            let t2 = w[0] + w[1];
            let mut l = [0i64; 2];
            let mut r = [0i64; 2];
            for &i in s {
                if 2 * x[i][f] <= t2 {
                    l[y[i].index()] += 1;
                } else {
                    r[y[i].index()] += 1;
                }
            }
            let (nl, nr) = (l[0] + l[1], r[0] + r[1]);
            let imp = Q::new(nl, n) * gini_q(l) + Q::new(nr, n) * gini_q(r);
            let better = match &best {
                None => true,
                Some((bi, bf, bt)) => imp < *bi || (imp == *bi && (f, t2) < (*bf, *bt)),
            };
            if better {
                best = Some((imp, f, t2));
            }
        }
    }
    let Some((_, f, t2)) = best else {
        out.push(leaf);
        return;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = s.iter().partition(|&&i| 2 * x[i][f] <= t2);
    let idx = out.len();
    out.push(Node::Split { feature: f, threshold: t2 as f64 / 2.0, right: 0 });
    build(x, y, &l, depth + 1, max_depth, out);
    let right = out.len();
    if let Node::Split { right: r_slot, .. } = &mut out[idx] {
        *r_slot = right;
    }
    build(x, y, &r, depth + 1, max_depth, out);
}

/// The twenty small datasets used by the tree oracle: sizes 3..=12,
/// two or three integer features in 0..5 with frequent ties, both classes
/// present.
pub fn oracle_datasets() -> Vec<(Vec<Vec<i64>>, Vec<Label>)> {
    let mut state: u64 = 0x2545_F491_4F6C_DD1D;
    let mut next = move |m: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % m
    };
    (0..20)
        .map(|k| {
            let n = 3 + k % 10;
            let d = 2 + k % 2;
            let x: Vec<Vec<i64>> = (0..n).map(|_| (0..d).map(|_| next(5) as i64).collect()).collect();
            let mut y: Vec<Label> = (0..n).map(|_| Label::from_index(next(2) as usize).unwrap()).collect();
            y[0] = Label::Normal;
            y[n - 1] = Label::Push;
            (x, y)
        })
        .collect()
}

/// Best total IoU over both assignments of a 2x2 instance.
pub fn brute_force_2x2(ious: [[f64; 2]; 2]) -> [usize; 2] {
    if ious[0][0] + ious[1][1] >= ious[0][1] + ious[1][0] {
        [0, 1]
    } else {
        [1, 0]
    }
}
