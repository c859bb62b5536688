//! Exact weight bookkeeping for the iteration scheme: the interpolation
//! weights `α_j`, `β_j`, the `(γ_j, b_j)` sequences for `n = 3`, the
//! iteration tree for general `n`, and the series `Σ b_j γ_j`.
//!
//! With `Δ = p/n` the weights are fixed by
//!
//! ```text
//! 1/(jΔ)      = (1 − α_j)/(j(j+1)) + α_j/((j+1)Δ)
//! 1/(j(j+1))  = (1 − β_j)/((j−1)j) + β_j/(jΔ)
//! ```
//!
//! whose solutions are `α_j = (Δ−j−1)/(Δ−j)` and `β_j = 2Δ/((j+1)(Δ−j+1))`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, serde_exact, Rational};

/// `α_j = (Δ − (j+1)) / (Δ − j)`.
pub fn alpha_closed(j: usize, delta: &Rational) -> Result<Rational> {
    let den = delta - rational::int(j as i64);
    if den.is_zero() {
        return Err(Error::DegenerateExponent(format!("α_{j} is undefined at Δ = {j}")));
    }
    Ok((delta - rational::int(j as i64 + 1)) / den)
}

/// `β_j = 2Δ / ((j+1)(Δ − j + 1))`.
pub fn beta_closed(j: usize, delta: &Rational) -> Result<Rational> {
    let den = rational::int(j as i64 + 1) * (delta - rational::int(j as i64 - 1));
    if den.is_zero() {
        return Err(Error::DegenerateExponent(format!("β_{j} is undefined at Δ = {}", j as i64 - 1)));
    }
    Ok(rational::int(2) * delta / den)
}

/// `α_j` solved from its defining relation.
fn alpha_from_relation(j: usize, delta: &Rational) -> Result<Rational> {
    let jj = rational::int(j as i64);
    let j1 = rational::int(j as i64 + 1);
    let lhs = (&jj * delta).recip();
    let lo = (&jj * &j1).recip();
    let hi = (&j1 * delta).recip();
    // lhs = lo + α (hi − lo)
    let slope = &hi - &lo;
    if slope.is_zero() {
        return Err(Error::DegenerateExponent(format!("the relation for α_{j} is degenerate at Δ = {j}")));
    }
    Ok((lhs - lo) / slope)
}

/// `β_j` solved from its defining relation.
fn beta_from_relation(j: usize, delta: &Rational) -> Result<Rational> {
    let jj = rational::int(j as i64);
    let lhs = (&jj * rational::int(j as i64 + 1)).recip();
    let lo = (rational::int(j as i64 - 1) * &jj).recip();
    let hi = (&jj * delta).recip();
    let slope = &hi - &lo;
    if slope.is_zero() {
        return Err(Error::DegenerateExponent(format!(
            "the relation for β_{j} is degenerate at Δ = {}",
            j as i64 - 1
        )));
    }
    Ok((lhs - lo) / slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSystem {
    pub n: usize,
    #[serde(with = "serde_exact")]
    pub p: Rational,
    #[serde(with = "serde_exact")]
    pub delta: Rational,
    /// `α_1, …, α_{n−1}`
    #[serde(with = "serde_exact::vec")]
    pub alpha: Vec<Rational>,
    /// `β_2, …, β_{n−1}`
    #[serde(with = "serde_exact::vec")]
    pub beta: Vec<Rational>,
}

impl WeightSystem {
    pub fn alpha(&self, j: usize) -> &Rational {
        &self.alpha[j - 1]
    }

    pub fn beta(&self, j: usize) -> &Rational {
        &self.beta[j - 2]
    }

    pub fn all_in_unit_interval(&self) -> bool {
        let zero = Rational::zero();
        let one = Rational::one();
        self.alpha.iter().chain(&self.beta).all(|w| *w >= zero && *w <= one)
    }

    /// The same weights from the closed forms.
    pub fn closed_form(n: usize, p: &Rational) -> Result<Self> {
        let delta = validate_exponent(n, p)?;
        Ok(Self {
            n,
            p: p.clone(),
            alpha: (1..n).map(|j| alpha_closed(j, &delta)).collect::<Result<_>>()?,
            beta: (2..n).map(|j| beta_closed(j, &delta)).collect::<Result<_>>()?,
            delta,
        })
    }
}

fn validate_exponent(n: usize, p: &Rational) -> Result<Rational> {
    if n < 2 {
        return Err(Error::invalid(format!("degree n = {n} must be at least 2")));
    }
    if !rational::is_positive(p) {
        return Err(Error::invalid("exponent p must be positive"));
    }
    Ok(p / rational::int(n as i64))
}

/// Solves each defining relation exactly.
pub fn weights_from_relations(n: usize, p: &Rational) -> Result<WeightSystem> {
    let delta = validate_exponent(n, p)?;
    Ok(WeightSystem {
        n,
        p: p.clone(),
        alpha: (1..n).map(|j| alpha_from_relation(j, &delta)).collect::<Result<_>>()?,
        beta: (2..n).map(|j| beta_from_relation(j, &delta)).collect::<Result<_>>()?,
        delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaB {
    #[serde(with = "serde_exact::vec")]
    pub gamma: Vec<Rational>,
    #[serde(with = "serde_exact::vec")]
    pub b: Vec<Rational>,
}

impl GammaB {
    pub fn sum_gamma(&self) -> Rational {
        self.gamma.iter().sum()
    }

    pub fn sum_b_gamma(&self) -> Rational {
        self.gamma.iter().zip(&self.b).map(|(g, b)| g * b).sum()
    }
}

/// `γ_0 = 1 − α_1`, `γ_i = α_1 (1−α_2)(1−β_2) [(1−α_2) β_2]^{i−1}`,
/// `b_i = 2 (3/2)^i`, for `i = 0..=r`.
pub fn gamma_b_n3(p: &Rational, r: usize) -> Result<GammaB> {
    let w = weights_from_relations(3, p)?;
    let one = Rational::one();
    let (a1, a2, b2) = (w.alpha(1), w.alpha(2), w.beta(2));
    let ratio = (&one - a2) * b2;
    let mut gamma = vec![&one - a1];
    let mut b = vec![rational::int(2)];
    let mut g = a1 * (&one - a2) * (&one - b2);
    let three_halves = rational::ratio(3, 2);
    for _ in 1..=r {
        gamma.push(g.clone());
        b.push(b.last().expect("nonempty") * &three_halves);
        g *= &ratio;
    }
    Ok(GammaB { gamma, b })
}

// ---------------------------------------------------------------------------
// iteration tree

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "k")]
pub enum NodeKind {
    /// A term `A_p`; a leaf contributing `weight · b`.
    A,
    /// A term `D_{kp/n}` with `1 ≤ k < n`.
    D(usize),
    /// A term `D_p`; a leaf contributing nothing.
    DFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Weight on the edge from the parent (1 for the root).
    #[serde(with = "serde_exact")]
    pub edge_weight: Rational,
    /// Product of edge weights from the root.
    #[serde(with = "serde_exact")]
    pub weight: Rational,
    /// Accumulated inflation factor.
    #[serde(with = "serde_exact")]
    pub scale: Rational,
    /// For `A_p`: the ball exponent `b`. For `D_{kp/n}`: the exponent of the
    /// ball on which the node is processed, `scale · (k+1)`.
    #[serde(with = "serde_exact")]
    pub ball: Rational,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub expanded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionOrder {
    /// Each step processes every pending node on the smallest ball.
    BallExponent,
    /// Each step processes every pending node.
    Generation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTree {
    pub n: usize,
    #[serde(with = "serde_exact")]
    pub p: Rational,
    pub depth: usize,
    pub order: ExpansionOrder,
    pub nodes: Vec<TreeNode>,
}

/// Children of a processed `D_{jp/n}` node as `(kind, edge weight, scale
/// multiplier)`:
///
/// * `D_{(j+1)p/n}` with weight `α_j` (a `D_p` leaf when `j + 1 = n`);
/// * `D_{kp/n}` for `2 ≤ k ≤ j` with weight
///   `(1 − α_j) β_k Π_{m=k+1}^{j} (1 − β_m)` and multiplier `(j+1)/k`;
/// * `A_p` with weight `(1 − α_j) Π_{m=2}^{j} (1 − β_m)` and multiplier `(j+1)/2`.
pub fn children_of(w: &WeightSystem, j: usize) -> Vec<(NodeKind, Rational, Rational)> {
    let n = w.n;
    let one = Rational::one();
    let aj = w.alpha(j);
    let rest = &one - aj;
    let mut out = Vec::new();
    let next = if j + 1 == n { NodeKind::DFull } else { NodeKind::D(j + 1) };
    out.push((next, aj.clone(), one.clone()));
    let mut tail = one.clone();
    for k in (2..=j).rev() {
        out.push((
            NodeKind::D(k),
            &rest * w.beta(k) * &tail,
            rational::ratio(j as i64 + 1, k as i64),
        ));
        tail *= &one - w.beta(k);
    }
    out.push((NodeKind::A, &rest * &tail, rational::ratio(j as i64 + 1, 2)));
    out
}

/// Expands the tree from the root `D_{p/n}`: the root is processed first,
/// then `depth` further steps in the chosen order.
pub fn build_tree(n: usize, p: &Rational, depth: usize, order: ExpansionOrder, max_nodes: usize) -> Result<IterationTree> {
    let w = weights_from_relations(n, p)?;
    let one = Rational::one();
    let mut nodes = vec![TreeNode {
        kind: NodeKind::D(1),
        edge_weight: one.clone(),
        weight: one.clone(),
        scale: one.clone(),
        ball: rational::int(2),
        parent: None,
        children: vec![],
        expanded: false,
    }];
    let expand = |nodes: &mut Vec<TreeNode>, idx: usize| -> Result<()> {
        let NodeKind::D(j) = nodes[idx].kind else {
            return Ok(());
        };
        for (kind, edge, mult) in children_of(&w, j) {
            let scale = &nodes[idx].scale * &mult;
            let ball = match kind {
                NodeKind::A => rational::int(2) * &scale,
                NodeKind::D(k) => &scale * rational::int(k as i64 + 1),
                NodeKind::DFull => scale.clone(),
            };
            let node = TreeNode {
                kind,
                weight: &nodes[idx].weight * &edge,
                edge_weight: edge,
                scale,
                ball,
                parent: Some(idx),
                children: vec![],
                expanded: false,
            };
            if nodes.len() >= max_nodes {
                return Err(Error::DepthBudgetExceeded { limit: max_nodes });
            }
            nodes.push(node);
            let child = nodes.len() - 1;
            nodes[idx].children.push(child);
        }
        nodes[idx].expanded = true;
        Ok(())
    };
    expand(&mut nodes, 0)?;
    for _ in 0..depth {
        let pending: Vec<usize> = (0..nodes.len())
            .filter(|&i| matches!(nodes[i].kind, NodeKind::D(_)) && !nodes[i].expanded)
            .collect();
        if pending.is_empty() {
            break;
        }
        let chosen: Vec<usize> = match order {
            ExpansionOrder::Generation => pending,
            ExpansionOrder::BallExponent => {
                let min = pending.iter().map(|&i| nodes[i].ball.clone()).min().expect("nonempty");
                pending.into_iter().filter(|&i| nodes[i].ball == min).collect()
            }
        };
        for idx in chosen {
            expand(&mut nodes, idx)?;
        }
    }
    Ok(IterationTree {
        n,
        p: p.clone(),
        depth,
        order,
        nodes,
    })
}

impl IterationTree {
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|node| node.children.is_empty())
    }

    /// `(γ, b)` for every `A_p` leaf, sorted by `b` then `γ`.
    pub fn a_leaves(&self) -> Vec<(Rational, Rational)> {
        let mut out: Vec<(Rational, Rational)> = self
            .nodes
            .iter()
            .filter(|node| node.kind == NodeKind::A)
            .map(|node| (node.weight.clone(), node.ball.clone()))
            .collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// `A_p` leaf weights grouped by ball exponent.
    pub fn gamma_by_ball(&self) -> BTreeMap<Rational, Rational> {
        let mut out = BTreeMap::new();
        for (g, b) in self.a_leaves() {
            *out.entry(b).or_insert_with(Rational::zero) += g;
        }
        out
    }

    pub fn sum_b_gamma(&self) -> Rational {
        self.a_leaves().iter().map(|(g, b)| g * b).sum()
    }

    pub fn sum_gamma(&self) -> Rational {
        self.a_leaves().iter().map(|(g, _)| g).sum()
    }

    /// Whether edge weights out of every expanded node sum to exactly 1.
    pub fn bifurcations_balanced(&self) -> bool {
        self.nodes
            .iter()
            .filter(|node| node.expanded)
            .all(|node| node.children.iter().map(|&c| &self.nodes[c].edge_weight).sum::<Rational>().is_one())
    }

    /// One line per node, two spaces of indentation per level:
    ///
    /// ```text
    /// D_{1p/3} scale=1 ball=2 weight=1/1
    ///   D_{2p/3} scale=1 ball=3 weight=2/3 edge=2/3
    ///   A_p b=2 weight=1/3 edge=1/3
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, level)) = stack.pop() {
            let node = &self.nodes[idx];
            let indent = "  ".repeat(level);
            let name = match node.kind {
                NodeKind::A => "A_p".to_string(),
                NodeKind::D(k) => format!("D_{{{k}p/{}}}", self.n),
                NodeKind::DFull => "D_p".to_string(),
            };
            let _ = write!(out, "{indent}{name}");
            match node.kind {
                NodeKind::A => {
                    let _ = write!(out, " b={}", rational::to_exact_string(&node.ball));
                }
                NodeKind::D(_) => {
                    let _ = write!(
                        out,
                        " scale={} ball={}",
                        rational::to_exact_string(&node.scale),
                        rational::to_exact_string(&node.ball)
                    );
                }
                NodeKind::DFull => {
                    let _ = write!(out, " scale={}", rational::to_exact_string(&node.scale));
                }
            }
            let _ = write!(out, " weight={}", rational::to_exact_string(&node.weight));
            if node.parent.is_some() {
                let _ = write!(out, " edge={}", rational::to_exact_string(&node.edge_weight));
            }
            if matches!(node.kind, NodeKind::D(_)) && !node.expanded {
                out.push_str(" pending");
            }
            out.push('\n');
            for &c in node.children.iter().rev() {
                stack.push((c, level + 1));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// the series Σ b γ

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSum {
    pub n: usize,
    #[serde(with = "serde_exact")]
    pub p: Rational,
    pub generations: usize,
    #[serde(with = "serde_exact")]
    pub partial_sum: Rational,
    /// Upper bound on the omitted terms, `+∞` when no contraction was found.
    pub tail_bound: f64,
    /// Contraction factor used for the tail bound.
    pub ratio: f64,
}

/// Per-generation transfer: mass on `D_{jp/n}` (weight times scale) moves to
/// `D_{kp/n}` with factor `edge · multiplier`, and `A_p` leaves contribute
/// `edge · (j+1) · mass`.
struct Transfer {
    /// `to[j][k]`, both 1-based types below `n`
    to: Vec<Vec<Rational>>,
    /// contribution of unit mass on type `j`
    leaf: Vec<Rational>,
}

fn transfer(w: &WeightSystem) -> Transfer {
    let n = w.n;
    let mut to = vec![vec![Rational::zero(); n]; n];
    let mut leaf = vec![Rational::zero(); n];
    for j in 1..n {
        for (kind, edge, mult) in children_of(w, j) {
            match kind {
                NodeKind::A => leaf[j] = &edge * &mult * rational::int(2),
                NodeKind::D(k) => to[j][k] += &edge * &mult,
                NodeKind::DFull => {}
            }
        }
    }
    Transfer { to, leaf }
}

/// `Σ b_j γ_j` over every `A_p` leaf produced by generations `0..=r` of the
/// tree (generation 0 is the root), with a geometric bound on the rest.
///
/// Mass is aggregated per node type, so the cost is polynomial in `r`.
pub fn omega1_series(n: usize, p: &Rational, r: usize) -> Result<SeriesSum> {
    let w = weights_from_relations(n, p)?;
    let t = transfer(&w);
    let mut mass = vec![Rational::zero(); n];
    mass[1] = Rational::one();
    let mut sum = Rational::zero();
    for _ in 0..=r {
        let mut next = vec![Rational::zero(); n];
        for j in 1..n {
            if mass[j].is_zero() {
                continue;
            }
            sum += &mass[j] * &t.leaf[j];
            for k in 2..n {
                if !t.to[j][k].is_zero() {
                    next[k] += &mass[j] * &t.to[j][k];
                }
            }
        }
        mass = next;
    }
    let (tail_bound, ratio) = tail_bound(&t, &mass, n);
    Ok(SeriesSum {
        n,
        p: p.clone(),
        generations: r,
        partial_sum: sum,
        tail_bound,
        ratio,
    })
}

/// With `v > 0`, `G v ≤ ρ v` and `a ≤ c v`, the remaining contribution
/// `Σ_t m G^t a` is at most `c (m · v) / (1 − ρ)`.
fn tail_bound(t: &Transfer, mass: &[Rational], n: usize) -> (f64, f64) {
    let types: Vec<usize> = (2..n).collect();
    if types.is_empty() {
        return (0.0, 0.0);
    }
    let g: Vec<Vec<f64>> = types
        .iter()
        .map(|&j| types.iter().map(|&k| rational::to_f64(&t.to[j][k])).collect())
        .collect();
    let a: Vec<f64> = types.iter().map(|&j| rational::to_f64(&t.leaf[j])).collect();
    let m: Vec<f64> = types.iter().map(|&j| rational::to_f64(&mass[j])).collect();
    let d = types.len();
    // Perron vector of G by power iteration, kept strictly positive
    let mut v = vec![1.0; d];
    for _ in 0..2000 {
        let mut nv: Vec<f64> = (0..d).map(|i| (0..d).map(|k| g[i][k] * v[k]).sum::<f64>() + 1e-300).collect();
        let norm = nv.iter().cloned().fold(0.0, f64::max);
        nv.iter_mut().for_each(|x| *x = (*x / norm).max(1e-12));
        v = nv;
    }
    let rho = (0..d)
        .map(|i| (0..d).map(|k| g[i][k] * v[k]).sum::<f64>() / v[i])
        .fold(0.0, f64::max)
        * (1.0 + 1e-12);
    if rho >= 1.0 {
        return (f64::INFINITY, rho);
    }
    let c = (0..d).map(|i| a[i] / v[i]).fold(0.0, f64::max);
    let mv: f64 = m.iter().zip(&v).map(|(x, y)| x * y).sum();
    ((c * mv / (1.0 - rho)) * (1.0 + 1e-9), rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn n3_p12_relations() {
        let w = weights_from_relations(3, &rational::int(12)).unwrap();
        assert_eq!(w.alpha, vec![ratio(2, 3), ratio(1, 2)]);
        assert_eq!(w.beta, vec![ratio(8, 9)]);
        assert_eq!(w, WeightSystem::closed_form(3, &rational::int(12)).unwrap());
        assert!(w.all_in_unit_interval());
    }

    #[test]
    fn endpoint_delta_is_n_plus_one() {
        for n in 3..9usize {
            let p = rational::int((n * (n + 1)) as i64);
            let w = weights_from_relations(n, &p).unwrap();
            for j in 1..n {
                assert_eq!(*w.alpha(j), ratio((n - j) as i64, (n + 1 - j) as i64));
            }
        }
    }

    #[test]
    fn degenerate_exponents_are_rejected() {
        // Δ = 1 makes the α_1 relation degenerate
        assert!(matches!(weights_from_relations(3, &rational::int(3)), Err(Error::DegenerateExponent(_))));
        assert!(matches!(alpha_closed(2, &rational::int(2)), Err(Error::DegenerateExponent(_))));
        assert!(matches!(beta_closed(3, &rational::int(2)), Err(Error::DegenerateExponent(_))));
        assert!(weights_from_relations(1, &rational::int(3)).is_err());
        assert!(weights_from_relations(3, &rational::int(-3)).is_err());
    }

    #[test]
    fn gamma_b_examples() {
        let gb = gamma_b_n3(&rational::int(12), 1).unwrap();
        assert_eq!(gb.gamma, vec![ratio(1, 3), ratio(1, 27)]);
        assert_eq!(gb.b, vec![rational::int(2), rational::int(3)]);
        let gb = gamma_b_n3(&rational::int(12), 200).unwrap();
        assert!((rational::to_f64(&gb.sum_b_gamma()) - 1.0).abs() < 1e-9);
        assert!(gb.sum_gamma() < Rational::one());
    }

    #[test]
    fn tree_root_only_has_single_a_leaf() {
        for n in 2..7 {
            let tree = build_tree(n, &ratio((n * (n + 1)) as i64 * 10 - 1, 10), 0, ExpansionOrder::BallExponent, 1000).unwrap();
            let a = tree.a_leaves();
            let w = weights_from_relations(n, &tree.p).unwrap();
            assert_eq!(a.len(), 1);
            assert_eq!(a[0].0, Rational::one() - w.alpha(1));
            assert_eq!(a[0].1, rational::int(2));
        }
    }

    #[test]
    fn n3_tree_matches_gamma_b() {
        let p = ratio(119, 10);
        let tree = build_tree(3, &p, 6, ExpansionOrder::BallExponent, 10_000).unwrap();
        let gb = gamma_b_n3(&p, 6).unwrap();
        let leaves = tree.a_leaves();
        assert_eq!(leaves.len(), 7);
        for (i, (g, b)) in leaves.iter().enumerate() {
            assert_eq!(*g, gb.gamma[i]);
            assert_eq!(*b, gb.b[i]);
        }
        assert!(tree.bifurcations_balanced());
    }

    #[test]
    fn n3_depth_two_has_six_leaves() {
        let p = ratio(119, 10);
        let w = weights_from_relations(3, &p).unwrap();
        let one = Rational::one();
        let (a1, a2, b2) = (w.alpha(1).clone(), w.alpha(2).clone(), w.beta(2).clone());
        let tree = build_tree(3, &p, 2, ExpansionOrder::BallExponent, 1000).unwrap();
        let mut got: Vec<(NodeKind, Rational, Rational)> =
            tree.leaves().map(|l| (l.kind, l.weight.clone(), l.scale.clone())).collect();
        got.sort_by(|x, y| format!("{:?}", x.0).cmp(&format!("{:?}", y.0)).then(x.2.cmp(&y.2)));
        let mut expected = vec![
            (NodeKind::A, &one - &a1, one.clone()),
            (NodeKind::A, &a1 * (&one - &a2) * (&one - &b2), ratio(3, 2)),
            (NodeKind::A, (&one - &a2) * (&one - &b2) * &a1 * (&one - &a2) * &b2, ratio(9, 4)),
            (NodeKind::D(2), (&one - &a2) * &b2 * &a1 * (&one - &a2) * &b2, ratio(9, 4)),
            (NodeKind::DFull, &a1 * &a2, one.clone()),
            (NodeKind::DFull, &a2 * &a1 * (&one - &a2) * &b2, ratio(3, 2)),
        ];
        expected.sort_by(|x, y| format!("{:?}", x.0).cmp(&format!("{:?}", y.0)).then(x.2.cmp(&y.2)));
        assert_eq!(got, expected);
        let balls: Vec<Rational> = tree.a_leaves().into_iter().map(|(_, b)| b).collect();
        assert_eq!(balls, vec![rational::int(2), rational::int(3), ratio(9, 2)]);
    }

    #[test]
    fn ball_order_expands_smaller_balls_first() {
        let tree = build_tree(4, &ratio(199, 10), 6, ExpansionOrder::BallExponent, 100_000).unwrap();
        let done = tree.nodes.iter().filter(|x| x.expanded).map(|x| x.ball.clone()).max().unwrap();
        for node in &tree.nodes {
            if let NodeKind::D(k) = node.kind {
                assert_eq!(node.ball, &node.scale * rational::int(k as i64 + 1));
                if !node.expanded {
                    assert!(node.ball >= done);
                }
            }
        }
        assert!(tree.bifurcations_balanced());
    }

    #[test]
    fn tree_budget() {
        assert!(matches!(
            build_tree(5, &ratio(299, 10), 50, ExpansionOrder::Generation, 100),
            Err(Error::DepthBudgetExceeded { .. })
        ));
    }

    #[test]
    fn series_matches_gamma_b_for_n3() {
        let p = ratio(239, 20);
        let s = omega1_series(3, &p, 40).unwrap();
        assert_eq!(s.partial_sum, gamma_b_n3(&p, 40).unwrap().sum_b_gamma());
        assert!(s.tail_bound.is_finite() && s.tail_bound > 0.0);
    }

    #[test]
    fn series_matches_generation_tree() {
        let p = ratio(199, 10);
        let tree = build_tree(4, &p, 5, ExpansionOrder::Generation, 1_000_000).unwrap();
        let s = omega1_series(4, &p, 5).unwrap();
        assert_eq!(tree.sum_b_gamma(), s.partial_sum);
    }

    #[test]
    fn tail_bound_covers_the_rest() {
        let p = ratio(119, 10);
        let short = omega1_series(3, &p, 20).unwrap();
        let long = omega1_series(3, &p, 400).unwrap();
        let gap = rational::to_f64(&(&long.partial_sum - &short.partial_sum));
        assert!(gap <= short.tail_bound, "{gap} > {}", short.tail_bound);
        assert!(long.tail_bound < 1e-12);
    }

    #[test]
    fn text_export_lists_every_node() {
        let tree = build_tree(3, &rational::int(12), 1, ExpansionOrder::BallExponent, 100).unwrap();
        let text = tree.to_text();
        assert_eq!(text.lines().count(), tree.nodes.len());
        assert!(text.starts_with("D_{1p/3} scale=1/1 ball=2/1 weight=1/1\n"));
        assert!(text.contains("  A_p b=2/1 weight=1/3 edge=1/3"));
    }
}
