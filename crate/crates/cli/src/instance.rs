//! Allocation instance files.
//!
//! Plain-text, line-oriented:
//!
//! ```text
//! products=<k> users=<n>
//! product <i> budget <B_i> weight <a_i> network <path> horizon <T_i>
//! capacity user <j> <u_j>
//! target <j> <node>
//! group cap <c> users <j> <j> ...
//! costs <path>
//! ```
//!
//! `network` and `costs` paths are resolved relative to the instance file.
//! Users without a `capacity` line get one slot; users without a `target`
//! line map to the node with their own index. The cost file is a CSV with
//! header `product,user,cost`; when present the instance takes the knapsack
//! path, otherwise budgets act as per-product assignment caps.

use std::fs;
use std::path::{Path, PathBuf};

use influence::constraints::{
    normalize_costs, ConstraintSystem, GroundSet, LaminarGroup, LaminarMatroid, Matroid,
    PartitionMatroid,
};
use influence::error::{Error, Result};
use influence::netmodel::{DiffusionNetwork, NodeId};

#[derive(Debug, Clone)]
pub struct ProductSpec {
    pub budget: f64,
    pub weight: f64,
    pub network_path: PathBuf,
    pub horizon: f64,
}

#[derive(Debug)]
pub struct Instance {
    pub products: Vec<ProductSpec>,
    pub num_users: usize,
    pub user_caps: Vec<u32>,
    pub target_nodes: Vec<NodeId>,
    pub groups: Vec<LaminarGroup>,
    pub raw_costs: Option<Vec<f64>>,
    pub networks: Vec<DiffusionNetwork>,
}

impl Instance {
    pub fn ground(&self) -> Result<GroundSet> {
        GroundSet::new(self.products.len(), self.num_users)
    }

    pub fn has_costs(&self) -> bool {
        self.raw_costs.is_some()
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.budget).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.weight).collect()
    }

    pub fn horizons(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.horizon).collect()
    }

    /// Build the feasibility structure: user caps plus either product caps
    /// (uniform, unit cost per assignment) or per-product knapsacks, plus
    /// any laminar group caps.
    pub fn constraint_system(&self) -> Result<ConstraintSystem> {
        let ground = self.ground()?;
        let mut matroids = vec![Matroid::Partition(PartitionMatroid::user_columns(
            ground,
            &self.user_caps,
        )?)];
        let knapsack = match &self.raw_costs {
            Some(raw) => Some(normalize_costs(ground, raw, &self.budgets())?),
            None => {
                let caps: Vec<u32> = self.products.iter().map(|p| p.budget.floor() as u32).collect();
                matroids.push(Matroid::Partition(PartitionMatroid::product_rows(ground, &caps)?));
                None
            }
        };
        if !self.groups.is_empty() {
            matroids.push(Matroid::Laminar(LaminarMatroid::new(
                self.num_users,
                self.groups.clone(),
            )?));
        }
        ConstraintSystem::new(ground, matroids, knapsack)
    }

    /// Out-degree of each target node per product network.
    pub fn degrees(&self) -> Vec<Vec<u32>> {
        self.networks
            .iter()
            .map(|net| {
                self.target_nodes
                    .iter()
                    .map(|&v| net.out_degree(v) as u32)
                    .collect()
            })
            .collect()
    }

    /// User groups as plain user-id lists, for the group-local baseline.
    pub fn group_user_lists(&self) -> Vec<Vec<u32>> {
        self.groups.iter().map(|g| g.users.clone()).collect()
    }
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    parse_instance(&text, dir)
}

fn parse_instance(text: &str, dir: &Path) -> Result<Instance> {
    let mut lines = text.lines().enumerate();
    let (num_products, num_users) = match lines.next() {
        Some((_, line)) => parse_header(line)?,
        None => return Err(Error::parse(1, "empty instance file")),
    };
    if num_products == 0 || num_users == 0 {
        return Err(Error::parse(1, "need at least one product and one user"));
    }

    let mut products: Vec<Option<ProductSpec>> = vec![None; num_products];
    let mut user_caps = vec![1u32; num_users];
    let mut target_nodes: Vec<NodeId> = (0..num_users as NodeId).collect();
    let mut groups = Vec::new();
    let mut costs_path: Option<PathBuf> = None;

    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "product" => {
                if toks.len() != 10
                    || toks[2] != "budget"
                    || toks[4] != "weight"
                    || toks[6] != "network"
                    || toks[8] != "horizon"
                {
                    return Err(Error::parse(
                        lineno,
                        "expected `product <i> budget <B> weight <a> network <path> horizon <T>`",
                    ));
                }
                let idx: usize = parse_tok(lineno, toks[1], "product index")?;
                if idx >= num_products {
                    return Err(Error::parse(lineno, format!("product {idx} out of range")));
                }
                if products[idx].is_some() {
                    return Err(Error::parse(lineno, format!("product {idx} declared twice")));
                }
                products[idx] = Some(ProductSpec {
                    budget: parse_positive(lineno, toks[3], "budget")?,
                    weight: parse_positive(lineno, toks[5], "weight")?,
                    network_path: dir.join(toks[7]),
                    horizon: parse_nonnegative(lineno, toks[9], "horizon")?,
                });
            }
            "capacity" => {
                if toks.len() != 4 || toks[1] != "user" {
                    return Err(Error::parse(lineno, "expected `capacity user <j> <u_j>`"));
                }
                let j: usize = parse_tok(lineno, toks[2], "user index")?;
                if j >= num_users {
                    return Err(Error::parse(lineno, format!("user {j} out of range")));
                }
                user_caps[j] = parse_tok(lineno, toks[3], "capacity")?;
            }
            "target" => {
                if toks.len() != 3 {
                    return Err(Error::parse(lineno, "expected `target <j> <node>`"));
                }
                let j: usize = parse_tok(lineno, toks[1], "user index")?;
                if j >= num_users {
                    return Err(Error::parse(lineno, format!("user {j} out of range")));
                }
                target_nodes[j] = parse_tok(lineno, toks[2], "node id")?;
            }
            "group" => {
                if toks.len() < 5 || toks[1] != "cap" || toks[3] != "users" {
                    return Err(Error::parse(lineno, "expected `group cap <c> users <j> ...`"));
                }
                let cap: u32 = parse_tok(lineno, toks[2], "group cap")?;
                let users = toks[4..]
                    .iter()
                    .map(|t| parse_tok(lineno, t, "group user"))
                    .collect::<Result<Vec<u32>>>()?;
                groups.push(LaminarGroup { users, cap });
            }
            "costs" => {
                if toks.len() != 2 {
                    return Err(Error::parse(lineno, "expected `costs <path>`"));
                }
                costs_path = Some(dir.join(toks[1]));
            }
            other => {
                return Err(Error::parse(lineno, format!("unknown directive `{other}`")));
            }
        }
    }

    let products: Vec<ProductSpec> = products
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| Error::input(format!("product {i} has no declaration line"))))
        .collect::<Result<_>>()?;

    let networks: Vec<DiffusionNetwork> = products
        .iter()
        .map(|p| DiffusionNetwork::load(&p.network_path))
        .collect::<Result<_>>()?;
    let nodes0 = networks[0].num_nodes();
    if let Some((i, n)) = networks
        .iter()
        .enumerate()
        .find(|(_, n)| n.num_nodes() != nodes0)
    {
        return Err(Error::input(format!(
            "inconsistent instance: product 0 network has {nodes0} nodes but product {i} network has {}",
            n.num_nodes()
        )));
    }
    for (j, &v) in target_nodes.iter().enumerate() {
        if v as usize >= nodes0 {
            return Err(Error::input(format!(
                "target node {v} of user {j} out of range for {nodes0}-node networks"
            )));
        }
    }

    let raw_costs = match costs_path {
        None => None,
        Some(p) => Some(load_cost_matrix(&p, num_products, num_users)?),
    };

    Ok(Instance {
        products,
        num_users,
        user_caps,
        target_nodes,
        groups,
        raw_costs,
        networks,
    })
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut products = None;
    let mut users = None;
    for tok in line.split_whitespace() {
        if let Some(v) = tok.strip_prefix("products=") {
            products = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("users=") {
            users = v.parse::<usize>().ok();
        }
    }
    match (products, users) {
        (Some(k), Some(n)) => Ok((k, n)),
        _ => Err(Error::parse(1, "expected header `products=<k> users=<n>`")),
    }
}

fn parse_tok<T: std::str::FromStr>(lineno: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(lineno, format!("bad {what} `{tok}`")))
}

fn parse_positive(lineno: usize, tok: &str, what: &str) -> Result<f64> {
    let v: f64 = parse_tok(lineno, tok, what)?;
    if !(v > 0.0) {
        return Err(Error::parse(lineno, format!("{what} must be positive, got {v}")));
    }
    Ok(v)
}

fn parse_nonnegative(lineno: usize, tok: &str, what: &str) -> Result<f64> {
    let v: f64 = parse_tok(lineno, tok, what)?;
    if !(v >= 0.0) {
        return Err(Error::parse(lineno, format!("{what} must be >= 0, got {v}")));
    }
    Ok(v)
}

/// CSV `product,user,cost` with header; every pair must appear exactly once.
fn load_cost_matrix(path: &Path, num_products: usize, num_users: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut costs = vec![None; num_products * num_users];
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if lineno == 1 {
            if line.trim() != "product,user,cost" {
                return Err(Error::parse(lineno, "expected cost header `product,user,cost`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::parse(lineno, "expected `product,user,cost`"));
        }
        let i_: usize = parse_tok(lineno, cols[0].trim(), "product")?;
        let j: usize = parse_tok(lineno, cols[1].trim(), "user")?;
        let c = parse_positive(lineno, cols[2].trim(), "cost")?;
        if i_ >= num_products || j >= num_users {
            return Err(Error::parse(lineno, "cost entry out of range"));
        }
        let slot = i_ * num_users + j;
        if costs[slot].is_some() {
            return Err(Error::parse(lineno, format!("duplicate cost for product {i_} user {j}")));
        }
        costs[slot] = Some(c);
    }
    costs
        .into_iter()
        .enumerate()
        .map(|(id, c)| {
            c.ok_or_else(|| {
                Error::input(format!(
                    "cost matrix missing product {} user {}",
                    id / num_users,
                    id % num_users
                ))
            })
        })
        .collect()
}
