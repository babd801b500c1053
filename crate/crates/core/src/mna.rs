//! Minimal complex modified nodal analysis at a single frequency.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ComplexValue;

/// Smallest acceptable ratio between the smallest and largest LU pivot.
const MIN_PIVOT_RATIO: f64 = 1e-13;

/// Handle of a voltage-source branch, used to read back its current.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branch(usize);

/// Two-terminal admittances and ideal voltage sources between numbered
/// nodes. Node 0 is ground.
#[derive(Debug, Clone)]
pub struct Netlist {
    nodes: usize,
    admittances: Vec<(usize, usize, ComplexValue)>,
    sources: Vec<(usize, usize, ComplexValue)>,
}

pub struct Solution {
    nodes: usize,
    x: DVector<ComplexValue>,
}

impl Netlist {
    /// `nodes` counts the non-ground nodes.
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            admittances: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn admittance(&mut self, a: usize, b: usize, y: ComplexValue) {
        self.admittances.push((a, b, y));
    }

    /// Source with `V(a) - V(b) = v`. Its branch current flows from `a`
    /// through the source to `b`.
    pub fn voltage_source(&mut self, a: usize, b: usize, v: ComplexValue) -> Branch {
        self.sources.push((a, b, v));
        Branch(self.sources.len() - 1)
    }

    pub fn solve(&self) -> Result<Solution> {
        let n = self.nodes + self.sources.len();
        let mut m = DMatrix::<ComplexValue>::zeros(n, n);
        let mut rhs = DVector::<ComplexValue>::zeros(n);
        let idx = |node: usize| node.checked_sub(1);

        for &(a, b, y) in &self.admittances {
            if let Some(i) = idx(a) {
                m[(i, i)] += y;
            }
            if let Some(j) = idx(b) {
                m[(j, j)] += y;
            }
            if let (Some(i), Some(j)) = (idx(a), idx(b)) {
                m[(i, j)] -= y;
                m[(j, i)] -= y;
            }
        }
        for (k, &(a, b, v)) in self.sources.iter().enumerate() {
            let row = self.nodes + k;
            let one = ComplexValue::new(1.0, 0.0);
            if let Some(i) = idx(a) {
                m[(i, row)] += one;
                m[(row, i)] += one;
            }
            if let Some(j) = idx(b) {
                m[(j, row)] -= one;
                m[(row, j)] -= one;
            }
            rhs[row] = v;
        }

        let lu = m.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
        // NaN ratios fail too.
        if pivot_ratio.is_nan() || pivot_ratio < MIN_PIVOT_RATIO {
            return Err(Error::Conditioning { pivot_ratio });
        }
        let x = lu.solve(&rhs).ok_or(Error::Conditioning { pivot_ratio })?;
        if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Conditioning { pivot_ratio });
        }
        Ok(Solution { nodes: self.nodes, x })
    }
}

impl Solution {
    pub fn node_voltage(&self, node: usize) -> ComplexValue {
        if node == 0 {
            ComplexValue::new(0.0, 0.0)
        } else {
            self.x[node - 1]
        }
    }

    pub fn branch_current(&self, branch: Branch) -> ComplexValue {
        self.x[self.nodes + branch.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divider() {
        let mut net = Netlist::new(2);
        let src = net.voltage_source(1, 0, ComplexValue::new(10.0, 0.0));
        net.admittance(1, 2, ComplexValue::new(1.0 / 1000.0, 0.0));
        net.admittance(2, 0, ComplexValue::new(1.0 / 3000.0, 0.0));
        let s = net.solve().unwrap();
        assert!((s.node_voltage(2).re - 7.5).abs() < 1e-12);
        // Source delivers 2.5 mA, which enters its + terminal as -2.5 mA.
        assert!((s.branch_current(src).re + 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn floating_node_is_singular() {
        let mut net = Netlist::new(3);
        net.voltage_source(1, 0, ComplexValue::new(1.0, 0.0));
        net.admittance(1, 2, ComplexValue::new(1.0, 0.0));
        // node 3 connects to nothing
        assert!(matches!(net.solve(), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn series_resonance_short_is_reported() {
        // Two sources forced across an ideal short: inconsistent and singular.
        let mut net = Netlist::new(1);
        net.voltage_source(1, 0, ComplexValue::new(1.0, 0.0));
        net.voltage_source(1, 0, ComplexValue::new(2.0, 0.0));
        assert!(matches!(net.solve(), Err(Error::Conditioning { .. })));
    }
}
