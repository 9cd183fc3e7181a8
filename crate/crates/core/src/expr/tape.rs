use std::collections::HashMap;

use super::{BaseFunction, Expr, ExprError, Transform};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf(usize),
    Param(usize),
    Const(f64),
    Add(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Powi(usize, i32),
    Neg(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leaf {
    feature: usize,
    transform: Transform,
    owner: usize,
}

/// A composed candidate flattened into a topologically ordered op list.
/// Children always precede parents, so forward is a single ascending sweep
/// and reverse-mode accumulation a single descending one.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    owners: Vec<usize>,
    owner_ids: Vec<String>,
    leaves: Vec<Leaf>,
    output: usize,
    n_params: usize,
    n_features_needed: usize,
}

/// Leaf columns (transformed inputs) for a batch of rows, leaf-major.
#[derive(Debug, Clone)]
pub struct Prepared {
    n: usize,
    cols: Vec<f64>,
}

impl Prepared {
    pub fn rows(&self) -> usize {
        self.n
    }
}

/// Scratch buffers reused across passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    vals: Vec<f64>,
    adj: Vec<f64>,
}

enum Inputs<'a> {
    Features(&'a [usize]),
    Nodes(&'a [usize]),
}

struct Builder {
    ops: Vec<Op>,
    owners: Vec<usize>,
    leaves: Vec<Leaf>,
    leaf_ops: HashMap<(usize, Transform), usize>,
}

impl Builder {
    fn push(&mut self, op: Op, owner: usize) -> usize {
        self.ops.push(op);
        self.owners.push(owner);
        self.ops.len() - 1
    }

    fn emit(
        &mut self,
        e: &Expr,
        inputs: &Inputs<'_>,
        param_offset: usize,
        owner: usize,
        owner_id: &str,
    ) -> Result<usize, ExprError> {
        Ok(match e {
            Expr::Const(c) => self.push(Op::Const(*c), owner),
            Expr::Param(i) => self.push(Op::Param(param_offset + i), owner),
            Expr::Input { index, transform } => match inputs {
                Inputs::Features(map) => {
                    let feature = map[*index];
                    let key = (feature, *transform);
                    if let Some(&op) = self.leaf_ops.get(&key) {
                        op
                    } else {
                        let leaf = self.leaves.len();
                        self.leaves.push(Leaf { feature, transform: *transform, owner });
                        let op = self.push(Op::Leaf(leaf), owner);
                        self.leaf_ops.insert(key, op);
                        op
                    }
                }
                Inputs::Nodes(nodes) => {
                    let node = nodes[*index];
                    match transform {
                        Transform::Identity => node,
                        Transform::Square => self.push(Op::Powi(node, 2), owner),
                        Transform::Cube => self.push(Op::Powi(node, 3), owner),
                        Transform::UpperNormalQuantile => {
                            return Err(ExprError::Malformed {
                                id: owner_id.to_string(),
                                detail: "quantile transforms are only allowed on raw inputs".into(),
                            })
                        }
                    }
                }
            },
            Expr::Add(terms) => {
                let mut acc: Option<usize> = None;
                for t in terms {
                    let node = self.emit(t, inputs, param_offset, owner, owner_id)?;
                    acc = Some(match acc {
                        None => node,
                        Some(a) => self.push(Op::Add(a, node), owner),
                    });
                }
                match acc {
                    Some(a) => a,
                    None => self.push(Op::Const(0.0), owner),
                }
            }
            Expr::Mul(a, b) => {
                let a = self.emit(a, inputs, param_offset, owner, owner_id)?;
                let b = self.emit(b, inputs, param_offset, owner, owner_id)?;
                self.push(Op::Mul(a, b), owner)
            }
            Expr::Div(a, b) => {
                let a = self.emit(a, inputs, param_offset, owner, owner_id)?;
                let b = self.emit(b, inputs, param_offset, owner, owner_id)?;
                self.push(Op::Div(a, b), owner)
            }
            Expr::Powi(a, k) => {
                let a = self.emit(a, inputs, param_offset, owner, owner_id)?;
                self.push(Op::Powi(a, *k), owner)
            }
            Expr::Neg(a) => {
                let a = self.emit(a, inputs, param_offset, owner, owner_id)?;
                self.push(Op::Neg(a), owner)
            }
        })
    }
}

impl Tape {
    /// Flattens `first(second_1(x_S), ..., second_J(x_S))` with
    /// `x_S = x[covariates]`. Parameter order is first layer, then each
    /// second-layer slot in turn.
    pub fn compose(
        first: &BaseFunction,
        second: &[BaseFunction],
        covariates: &[usize],
    ) -> Result<Tape, ExprError> {
        if second.len() != first.arity {
            return Err(ExprError::Config(format!(
                "first-layer {} takes {} inputs but {} second-layer functions were given",
                first.id,
                first.arity,
                second.len()
            )));
        }
        let mut b = Builder {
            ops: Vec::new(),
            owners: Vec::new(),
            leaves: Vec::new(),
            leaf_ops: HashMap::new(),
        };
        let mut owner_ids = vec![first.id.clone()];
        let mut offset = first.param_count;
        let mut slot_nodes = Vec::with_capacity(second.len());
        for (j, f) in second.iter().enumerate() {
            if f.arity != covariates.len() {
                return Err(ExprError::Config(format!(
                    "second-layer {} takes {} inputs but the covariate subset has {}",
                    f.id,
                    f.arity,
                    covariates.len()
                )));
            }
            owner_ids.push(f.id.clone());
            let node = b.emit(&f.body, &Inputs::Features(covariates), offset, j + 1, &f.id)?;
            slot_nodes.push(node);
            offset += f.param_count;
        }
        let output = b.emit(&first.body, &Inputs::Nodes(&slot_nodes), 0, 0, &first.id)?;
        Ok(Tape {
            ops: b.ops,
            owners: b.owners,
            owner_ids,
            leaves: b.leaves,
            output,
            n_params: offset,
            n_features_needed: covariates.iter().map(|c| c + 1).max().unwrap_or(0),
        })
    }

    /// A tape for a single base function applied directly to `covariates`.
    pub fn single(f: &BaseFunction, covariates: &[usize]) -> Result<Tape, ExprError> {
        if f.arity != covariates.len() {
            return Err(ExprError::Config(format!(
                "{} takes {} inputs, got {}",
                f.id,
                f.arity,
                covariates.len()
            )));
        }
        let mut b = Builder {
            ops: Vec::new(),
            owners: Vec::new(),
            leaves: Vec::new(),
            leaf_ops: HashMap::new(),
        };
        let output = b.emit(&f.body, &Inputs::Features(covariates), 0, 0, &f.id)?;
        Ok(Tape {
            ops: b.ops,
            owners: b.owners,
            owner_ids: vec![f.id.clone()],
            leaves: b.leaves,
            output,
            n_params: f.param_count,
            n_features_needed: covariates.iter().map(|c| c + 1).max().unwrap_or(0),
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Computes transformed leaf columns for `n` rows of width `stride`.
    pub fn prepare(&self, rows: &[f64], stride: usize) -> Result<Prepared, ExprError> {
        if stride < self.n_features_needed {
            return Err(ExprError::Config(format!(
                "rows have {stride} features, model needs at least {}",
                self.n_features_needed
            )));
        }
        let n = rows.len().checked_div(stride).unwrap_or(0);
        let mut cols = vec![0.0; self.leaves.len() * n];
        for (l, leaf) in self.leaves.iter().enumerate() {
            let col = &mut cols[l * n..(l + 1) * n];
            for (i, c) in col.iter_mut().enumerate() {
                let raw = rows[i * stride + leaf.feature];
                *c = match leaf.transform.apply(raw) {
                    Some(v) if v.is_finite() => v,
                    _ => {
                        return Err(ExprError::Domain {
                            id: self.owner_ids[leaf.owner].clone(),
                            detail: format!(
                                "input {} = {raw} outside the domain of {:?}",
                                leaf.feature + 1,
                                leaf.transform
                            ),
                        })
                    }
                };
            }
        }
        Ok(Prepared { n, cols })
    }

    /// Fills `ws` with every node's value column; returns the output column.
    pub fn forward<'w>(&self, theta: &[f64], prep: &Prepared, ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(theta.len(), self.n_params);
        let n = prep.n;
        ws.vals.resize(self.ops.len() * n, 0.0);
        let vals = &mut ws.vals;
        for (i, op) in self.ops.iter().enumerate() {
            let (before, rest) = vals.split_at_mut(i * n);
            let out = &mut rest[..n];
            let col = |k: usize| &before[k * n..(k + 1) * n];
            match *op {
                Op::Leaf(l) => out.copy_from_slice(&prep.cols[l * n..(l + 1) * n]),
                Op::Param(p) => out.fill(theta[p]),
                Op::Const(c) => out.fill(c),
                Op::Add(a, b) => {
                    for ((o, x), y) in out.iter_mut().zip(col(a)).zip(col(b)) {
                        *o = x + y;
                    }
                }
                Op::Mul(a, b) => {
                    for ((o, x), y) in out.iter_mut().zip(col(a)).zip(col(b)) {
                        *o = x * y;
                    }
                }
                Op::Div(a, b) => {
                    for ((o, x), y) in out.iter_mut().zip(col(a)).zip(col(b)) {
                        *o = x / y;
                    }
                }
                Op::Powi(a, 2) => {
                    for (o, x) in out.iter_mut().zip(col(a)) {
                        *o = x * x;
                    }
                }
                Op::Powi(a, k) => {
                    for (o, x) in out.iter_mut().zip(col(a)) {
                        *o = x.powi(k);
                    }
                }
                Op::Neg(a) => {
                    for (o, x) in out.iter_mut().zip(col(a)) {
                        *o = -x;
                    }
                }
            }
        }
        &ws.vals[self.output * n..(self.output + 1) * n]
    }

    /// Fills `ws.adj` with d(objective)/d(node) per row, given the output
    /// seed column.
    fn sweep(&self, seed: &[f64], ws: &mut Workspace) {
        let n = seed.len();
        ws.adj.clear();
        ws.adj.resize(self.ops.len() * n, 0.0);
        ws.adj[self.output * n..(self.output + 1) * n].copy_from_slice(seed);
        let vals = &ws.vals;
        let adj = &mut ws.adj;
        for i in (0..self.ops.len()).rev() {
            let (before, rest) = adj.split_at_mut(i * n);
            let up = &rest[..n];
            let v = |k: usize| &vals[k * n..(k + 1) * n];
            match self.ops[i] {
                Op::Leaf(_) | Op::Const(_) | Op::Param(_) => {}
                Op::Add(a, b) => {
                    for (d, u) in before[a * n..(a + 1) * n].iter_mut().zip(up) {
                        *d += u;
                    }
                    for (d, u) in before[b * n..(b + 1) * n].iter_mut().zip(up) {
                        *d += u;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (v(a), v(b));
                    for r in 0..n {
                        before[a * n + r] += up[r] * vb[r];
                    }
                    for r in 0..n {
                        before[b * n + r] += up[r] * va[r];
                    }
                }
                Op::Div(a, b) => {
                    let (vb, vi) = (v(b), v(i));
                    for r in 0..n {
                        before[a * n + r] += up[r] / vb[r];
                    }
                    for r in 0..n {
                        before[b * n + r] -= up[r] * vi[r] / vb[r];
                    }
                }
                Op::Powi(a, k) => {
                    let va = v(a);
                    let kf = k as f64;
                    for r in 0..n {
                        before[a * n + r] += up[r] * kf * va[r].powi(k - 1);
                    }
                }
                Op::Neg(a) => {
                    for (d, u) in before[a * n..(a + 1) * n].iter_mut().zip(up) {
                        *d -= u;
                    }
                }
            }
        }
    }

    /// Reverse sweep after [`Tape::forward`]. `seed` holds d(objective)/d(output)
    /// per row; the parameter gradient is written into `grad`.
    pub fn backward(&self, seed: &[f64], ws: &mut Workspace, grad: &mut [f64]) {
        let n = seed.len();
        self.sweep(seed, ws);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, op) in self.ops.iter().enumerate() {
            if let Op::Param(p) = *op {
                grad[p] += ws.adj[i * n..(i + 1) * n].iter().sum::<f64>();
            }
        }
    }

    /// Per-row derivatives of the output after [`Tape::forward`] over `n`
    /// rows, written row-major into `jac` (`n x n_params`).
    pub fn jacobian(&self, n: usize, ws: &mut Workspace, jac: &mut [f64]) {
        let k = self.n_params;
        self.sweep(&vec![1.0; n], ws);
        jac.iter_mut().for_each(|g| *g = 0.0);
        for (i, op) in self.ops.iter().enumerate() {
            if let Op::Param(p) = *op {
                for (r, a) in ws.adj[i * n..(i + 1) * n].iter().enumerate() {
                    jac[r * k + p] += a;
                }
            }
        }
    }

    /// Names the base function owning the first non-finite node of the last
    /// forward pass, if any.
    pub fn first_nonfinite(&self, ws: &Workspace, n: usize) -> Option<String> {
        (0..self.ops.len())
            .find(|&i| ws.vals[i * n..(i + 1) * n].iter().any(|v| !v.is_finite()))
            .map(|i| self.owner_ids[self.owners[i]].clone())
    }
}
