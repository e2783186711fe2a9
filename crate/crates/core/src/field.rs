//! Dense storage for the five conserved fields over all elements.
//!
//! Layout is `[element][component][node]` so the line-wise derivative kernels
//! stream contiguous per-component node ranges, and whole elements are
//! contiguous blocks for element-parallel iteration.

use crate::gas::State5;

pub const NUM_FIELDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldArray {
    num_elements: usize,
    nodes_per_element: usize,
    data: Vec<f64>,
}

impl FieldArray {
    pub fn zeros(num_elements: usize, nodes_per_element: usize) -> Self {
        FieldArray {
            num_elements,
            nodes_per_element,
            data: vec![0.0; num_elements * NUM_FIELDS * nodes_per_element],
        }
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn nodes_per_element(&self) -> usize {
        self.nodes_per_element
    }

    /// Length of one element block (`NUM_FIELDS · nodes_per_element`).
    pub fn block_len(&self) -> usize {
        NUM_FIELDS * self.nodes_per_element
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn elem(&self, e: usize) -> &[f64] {
        let b = self.block_len();
        &self.data[e * b..(e + 1) * b]
    }

    pub fn elem_mut(&mut self, e: usize) -> &mut [f64] {
        let b = self.block_len();
        &mut self.data[e * b..(e + 1) * b]
    }

    /// Component `c` of element `e` as a per-node slice.
    pub fn comp(&self, e: usize, c: usize) -> &[f64] {
        let npe = self.nodes_per_element;
        let start = e * self.block_len() + c * npe;
        &self.data[start..start + npe]
    }

    pub fn node_state(&self, e: usize, node: usize) -> State5 {
        let npe = self.nodes_per_element;
        let base = e * self.block_len() + node;
        [
            self.data[base],
            self.data[base + npe],
            self.data[base + 2 * npe],
            self.data[base + 3 * npe],
            self.data[base + 4 * npe],
        ]
    }

    pub fn set_node_state(&mut self, e: usize, node: usize, q: &State5) {
        let npe = self.nodes_per_element;
        let base = e * self.block_len() + node;
        for k in 0..NUM_FIELDS {
            self.data[base + k * npe] = q[k];
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Read one node's 5-vector from an element block slice.
#[inline]
pub fn block_node_state(block: &[f64], npe: usize, node: usize) -> State5 {
    [
        block[node],
        block[node + npe],
        block[node + 2 * npe],
        block[node + 3 * npe],
        block[node + 4 * npe],
    ]
}

/// Accumulate a 5-vector into one node of an element block slice.
#[inline]
pub fn block_add_node(block: &mut [f64], npe: usize, node: usize, v: &State5) {
    block[node] += v[0];
    block[node + npe] += v[1];
    block[node + 2 * npe] += v[2];
    block[node + 3 * npe] += v[3];
    block[node + 4 * npe] += v[4];
}
