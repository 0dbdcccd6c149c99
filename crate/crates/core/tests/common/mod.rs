//! Reference computations written independently of the library: dense
//! Gaussian elimination for policy evaluation, a recursive trajectory
//! enumerator and central differences.
#![allow(dead_code)]

use pgop_core::mdp::TabularMdp;
use pgop_core::ParamMode;
use rand::Rng;

pub type Rows = Vec<Vec<f64>>;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Rows, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

pub struct Eval {
    pub v: Vec<f64>,
    pub q: Rows,
    pub d: Vec<f64>,
    pub j: f64,
}

pub fn evaluate(mdp: &TabularMdp, pi: &Rows) -> Eval {
    let (ns, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut m = vec![vec![0.0; ns]; ns];
    let mut r = vec![0.0; ns];
    for s in 0..ns {
        m[s][s] += 1.0;
        for a in 0..na {
            r[s] += pi[s][a] * mdp.reward(s, a);
            for (t, p) in mdp.transition(s, a).iter().enumerate() {
                m[s][t] -= g * pi[s][a] * p;
            }
        }
    }
    let v = solve(m.clone(), r);
    let mt: Rows = (0..ns)
        .map(|i| (0..ns).map(|k| m[k][i]).collect())
        .collect();
    let d = solve(mt, mdp.start().to_vec());
    let q = (0..ns)
        .map(|s| {
            (0..na)
                .map(|a| {
                    let next: f64 = mdp
                        .transition(s, a)
                        .iter()
                        .zip(&v)
                        .map(|(p, v)| p * v)
                        .sum();
                    mdp.reward(s, a) + g * next
                })
                .collect()
        })
        .collect();
    let j = mdp.start().iter().zip(&v).map(|(p, v)| p * v).sum();
    Eval { v, q, d, j }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Action probabilities for parameters laid out as the library does:
/// `θ[s·A + a]` in tabular mode, `θ[a]` in shared mode.
pub fn probs(mode: ParamMode, ns: usize, na: usize, theta: &[f64]) -> Rows {
    (0..ns)
        .map(|s| match mode {
            ParamMode::Tabular => softmax(&theta[s * na..(s + 1) * na]),
            ParamMode::Shared => softmax(theta),
        })
        .collect()
}

pub fn rows_of(table: &pgop_core::PolicyTable) -> Rows {
    (0..table.n_states())
        .map(|s| table.row(s).to_vec())
        .collect()
}

pub fn random_theta<R: Rng>(
    rng: &mut R,
    mode: ParamMode,
    ns: usize,
    na: usize,
    scale: f64,
) -> Vec<f64> {
    let n = match mode {
        ParamMode::Tabular => ns * na,
        ParamMode::Shared => na,
    };
    (0..n)
        .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// Random MDP whose states form a chain of layers: every action moves to a
/// strictly later state, the last state is absorbing, and rewards outside
/// it lie in `[0.1, 1]`. Every episode ends within `n_states − 1` steps.
pub fn layered_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let goal = ns - 1;
    let mut p = Vec::new();
    let mut r = Vec::new();
    for s in 0..ns {
        for _ in 0..na {
            let mut row = vec![0.0; ns];
            if s == goal {
                row[goal] = 1.0;
                r.push(0.0);
            } else {
                let w: Vec<f64> = (s + 1..ns).map(|_| rng.random::<f64>() + 0.05).collect();
                let z: f64 = w.iter().sum();
                for (k, t) in (s + 1..ns).enumerate() {
                    row[t] = w[k] / z;
                }
                r.push(0.1 + 0.9 * rng.random::<f64>());
            }
            p.extend(row);
        }
    }
    let mut start = vec![0.0; ns];
    start[0] = 1.0;
    let terminal = (0..ns).map(|s| s == goal).collect();
    TabularMdp::from_flat(ns, na, gamma, start, terminal, p, r).unwrap()
}

/// One enumerated trajectory: probability, discounted return and the
/// probability of each of its prefixes.
pub struct Path {
    pub prob: f64,
    pub ret: f64,
    pub prefix: Vec<f64>,
    pub steps: Vec<(usize, usize)>,
    pub rewards: Vec<f64>,
}

pub fn enumerate(mdp: &TabularMdp, pi: &Rows, horizon: usize) -> Vec<Path> {
    fn go(
        mdp: &TabularMdp,
        pi: &Rows,
        horizon: usize,
        s: usize,
        mass: f64,
        acc: &mut Path,
        out: &mut Vec<Path>,
    ) {
        for a in 0..mdp.n_actions() {
            if pi[s][a] == 0.0 {
                continue;
            }
            let m = mass * pi[s][a];
            let depth = acc.steps.len();
            acc.steps.push((s, a));
            acc.rewards.push(mdp.reward(s, a));
            acc.prefix.push(m);
            acc.ret += mdp.gamma().powi(depth as i32) * mdp.reward(s, a);
            if depth + 1 == horizon {
                out.push(Path {
                    prob: m,
                    ret: acc.ret,
                    prefix: acc.prefix.clone(),
                    steps: acc.steps.clone(),
                    rewards: acc.rewards.clone(),
                });
            } else {
                for (t, &p) in mdp.transition(s, a).iter().enumerate() {
                    if p > 0.0 {
                        go(mdp, pi, horizon, t, m * p, acc, out);
                    }
                }
            }
            acc.ret -= mdp.gamma().powi(depth as i32) * mdp.reward(s, a);
            acc.steps.pop();
            acc.rewards.pop();
            acc.prefix.pop();
        }
    }
    let mut out = Vec::new();
    let mut acc = Path {
        prob: 1.0,
        ret: 0.0,
        prefix: Vec::new(),
        steps: Vec::new(),
        rewards: Vec::new(),
    };
    for (s, &p) in mdp.start().iter().enumerate() {
        if p > 0.0 {
            go(mdp, pi, horizon, s, p, &mut acc, &mut out);
        }
    }
    out
}

/// Probability of `path`'s prefixes under `pi`, keeping its transitions.
pub fn reweight(mdp: &TabularMdp, pi: &Rows, path: &Path) -> Vec<f64> {
    let (s0, _) = path.steps[0];
    let mut m = mdp.start()[s0];
    let mut out = Vec::with_capacity(path.steps.len());
    for (k, &(s, a)) in path.steps.iter().enumerate() {
        m *= pi[s][a];
        out.push(m);
        if let Some(&(t, _)) = path.steps.get(k + 1) {
            m *= mdp.transition(s, a)[t];
        }
    }
    out
}

/// Operator bound `J(μ) + Σ_s d(s) Σ_a μ Q log(π/μ)` from its definition.
pub fn operator_bound(e: &Eval, mu: &Rows, pi: &Rows) -> f64 {
    let mut total = e.j;
    for s in 0..mu.len() {
        for a in 0..mu[s].len() {
            let w = e.d[s] * mu[s][a] * e.q[s][a];
            if w != 0.0 {
                total += w * (pi[s][a] / mu[s][a]).ln();
            }
        }
    }
    total
}

pub fn cpi(e: &Eval, mu: &Rows, pi: &Rows) -> f64 {
    let mut total = e.j;
    for s in 0..mu.len() {
        for a in 0..mu[s].len() {
            total += e.d[s] * e.q[s][a] * (pi[s][a] - mu[s][a]);
        }
    }
    total
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Central differences with one Richardson step, accurate to `O(h⁴)`.
pub fn richardson_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let coarse = central_difference(&f, x, h);
    let fine = central_difference(&f, x, h / 2.0);
    fine.iter()
        .zip(&coarse)
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect()
}
