use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The multi-indices `i ∈ {0..d}^k` with `i₁ + … + i_k ≤ d`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSet {
    order: usize,
    params: usize,
    indices: Vec<Vec<u32>>,
    // (left position, right position, product position) for every pair whose
    // total degree stays within `order`.
    products: Vec<(usize, usize, usize)>,
}

impl MultiIndexSet {
    pub fn new(order: usize, params: usize) -> Self {
        let mut indices = Vec::new();
        let mut current = vec![0u32; params];
        enumerate(&mut current, 0, order as u32, &mut indices);

        let mut products = Vec::new();
        for (a, ia) in indices.iter().enumerate() {
            for (b, ib) in indices.iter().enumerate() {
                let sum: Vec<u32> = ia.iter().zip(ib).map(|(x, y)| x + y).collect();
                if sum.iter().sum::<u32>() as usize <= order {
                    let c = indices.binary_search(&sum).expect("degree-bounded sum is in the set");
                    products.push((a, b, c));
                }
            }
        }
        MultiIndexSet {
            order,
            params,
            indices,
            products,
        }
    }

    /// Like [`MultiIndexSet::new`] but refuses sets with more than `limit` elements.
    pub fn bounded(order: usize, params: usize, limit: usize) -> Result<Self> {
        let size = binomial(order + params, params);
        if size > limit {
            return Err(Error::TooLarge { size, limit });
        }
        Ok(Self::new(order, params))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, pos: usize) -> &[u32] {
        &self.indices[pos]
    }

    pub fn position(&self, index: &[u32]) -> Option<usize> {
        self.indices.binary_search_by(|p| p.as_slice().cmp(index)).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.indices.iter().map(|v| v.as_slice())
    }

    pub(crate) fn products(&self) -> &[(usize, usize, usize)] {
        &self.products
    }

    /// `a^i = ∏ a_j^{i_j}` with the convention `0⁰ = 1`.
    pub fn monomial(&self, pos: usize, a: &[f64]) -> f64 {
        self.indices[pos]
            .iter()
            .zip(a)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    /// Number of branch symbols `2^|E|`.
    pub fn symbol_count(&self) -> usize {
        1usize << self.len()
    }
}

fn enumerate(current: &mut Vec<u32>, slot: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
    if slot == current.len() {
        out.push(current.clone());
        return;
    }
    for e in 0..=budget {
        current[slot] = e;
        enumerate(current, slot + 1, budget - e, out);
    }
    current[slot] = 0;
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, j| acc * (n - j) / (j + 1))
}

/// A sign choice `δ: E → {−1, +1}`, identified with its index in `0..2^|E|`:
/// bit `j` set means `δ(E_j) = +1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchSymbol {
    signs: Vec<i8>,
}

impl BranchSymbol {
    pub fn from_index(index: usize, len: usize) -> Self {
        let signs = (0..len).map(|j| if (index >> j) & 1 == 1 { 1 } else { -1 }).collect();
        BranchSymbol { signs }
    }

    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Usage("branch symbol entries must be ±1".into()));
        }
        Ok(BranchSymbol { signs })
    }

    pub fn constant(sign: i8, len: usize) -> Self {
        BranchSymbol {
            signs: vec![if sign < 0 { -1 } else { 1 }; len],
        }
    }

    pub fn index(&self) -> usize {
        self.signs
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .map(|(j, _)| 1usize << j)
            .sum()
    }

    pub fn sign(&self, pos: usize) -> f64 {
        f64::from(self.signs[pos])
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Index-wise sign of the y-coefficients, ties going to `+1`.
    pub fn select(y: impl IntoIterator<Item = f64>) -> Self {
        BranchSymbol {
            signs: y.into_iter().map(|v| if v < 0.0 { -1 } else { 1 }).collect(),
        }
    }
}
