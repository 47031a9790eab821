//! Uniform periodic grid on the unit cell `[0,1]^d`.
//!
//! The grid has `N` nodes per axis and `N - 1` cells per axis. Nodes on the
//! max faces are identified with their min-face partners, so only the
//! `(N - 1)^d` nodes with all grid indices below `N - 1` carry unknowns
//! ("canonical" nodes). Elements are referenced by the canonical index of
//! their min corner.
//!
//! Element integrals use the tensor-product Simpson rule on the reference
//! cell: per axis the points `{0, 1/2, 1}` with weights `{1/6, 4/6, 1/6}`.

use crate::{Error, Result};

/// Largest corner count of a cell (hexahedron).
pub const MAX_CORNERS: usize = 8;

const SIMPSON_POINTS: [f64; 3] = [0.0, 0.5, 1.0];
const SIMPSON_WEIGHTS: [f64; 3] = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];

/// Multilinear shape functions on the reference cell `[0,1]^d`.
///
/// Corner `c` sits at the vertex whose `k`-th coordinate is bit `k` of `c`.
/// Returns the `2^d` values and their reference gradients (unused components
/// are zero for `d = 2`).
pub fn shape_eval(dim: usize, local: [f64; 3]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let corners = 1 << dim;
    let mut values = vec![0.0; corners];
    let mut grads = vec![[0.0; 3]; corners];
    for c in 0..corners {
        let mut factors = [1.0; 3];
        let mut dfactors = [0.0; 3];
        for k in 0..dim {
            if (c >> k) & 1 == 1 {
                factors[k] = local[k];
                dfactors[k] = 1.0;
            } else {
                factors[k] = 1.0 - local[k];
                dfactors[k] = -1.0;
            }
        }
        values[c] = factors[..dim].iter().product();
        for k in 0..dim {
            let mut g = dfactors[k];
            for (j, f) in factors[..dim].iter().enumerate() {
                if j != k {
                    g *= f;
                }
            }
            grads[c][k] = g;
        }
    }
    (values, grads)
}

/// Simpson quadrature tables for one (uniform) element.
#[derive(Debug, Clone)]
pub struct Quadrature {
    corners: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
}

impl Quadrature {
    fn simpson(dim: usize, h: f64) -> Self {
        let corners = 1 << dim;
        let count = 3usize.pow(dim as u32);
        let measure = h.powi(dim as i32);
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count * corners);
        let mut grads = Vec::with_capacity(count * corners);
        for q in 0..count {
            let mut xi = [0.0; 3];
            let mut w = measure;
            let mut rest = q;
            for x in xi.iter_mut().take(dim) {
                let i = rest % 3;
                rest /= 3;
                *x = SIMPSON_POINTS[i];
                w *= SIMPSON_WEIGHTS[i];
            }
            let (phi, dphi) = shape_eval(dim, xi);
            points.push(xi);
            weights.push(w);
            values.extend_from_slice(&phi);
            grads.extend(dphi.into_iter().map(|g| [g[0] / h, g[1] / h, g[2] / h]));
        }
        Quadrature {
            corners,
            points,
            weights,
            values,
            grads,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates of point `q`.
    pub fn point(&self, q: usize) -> [f64; 3] {
        self.points[q]
    }

    /// Physical weight of point `q` (includes the cell measure `h^d`).
    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shape function values at point `q`, one per corner.
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.corners..(q + 1) * self.corners]
    }

    /// Physical shape function gradients at point `q`, one per corner.
    pub fn grads(&self, q: usize) -> &[[f64; 3]] {
        &self.grads[q * self.corners..(q + 1) * self.corners]
    }
}

/// Immutable periodic grid on `[0,1]^d`.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    dim: usize,
    nodes_per_axis: usize,
    cells: usize,
    h: f64,
    quadrature: Quadrature,
    elements: Vec<[u32; MAX_CORNERS]>,
    neighbors: Vec<u32>,
}

impl PeriodicMesh {
    pub fn new(dim: usize, nodes_per_axis: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Mesh(format!("dimension must be 2 or 3, got {dim}")));
        }
        if nodes_per_axis < 3 {
            return Err(Error::Mesh(format!(
                "need at least 3 nodes per axis, got {nodes_per_axis}"
            )));
        }
        let cells = nodes_per_axis - 1;
        let count = cells.pow(dim as u32);
        if count * 3usize.pow(dim as u32) > u32::MAX as usize {
            return Err(Error::Mesh(format!("grid with {nodes_per_axis} nodes per axis is too large")));
        }
        let h = 1.0 / cells as f64;
        let mut mesh = PeriodicMesh {
            dim,
            nodes_per_axis,
            cells,
            h,
            quadrature: Quadrature::simpson(dim, h),
            elements: Vec::with_capacity(count),
            neighbors: Vec::new(),
        };

        let corners = mesh.corners();
        for e in 0..count {
            let base = mesh.grid_index(e);
            let mut nodes = [0u32; MAX_CORNERS];
            for (c, node) in nodes.iter_mut().enumerate().take(corners) {
                let mut idx = [0isize; 3];
                for k in 0..dim {
                    idx[k] = base[k] as isize + ((c >> k) & 1) as isize;
                }
                *node = mesh.wrap(idx) as u32;
            }
            mesh.elements.push(nodes);
        }

        let slots = mesh.slots();
        let mut neighbors = Vec::with_capacity(count * slots);
        for node in 0..count {
            let base = mesh.grid_index(node);
            for s in 0..slots {
                let off = slot_offset(s);
                let mut idx = [0isize; 3];
                for k in 0..dim {
                    idx[k] = base[k] as isize + off[k];
                }
                neighbors.push(mesh.wrap(idx) as u32);
            }
        }
        mesh.neighbors = neighbors;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N`, the number of grid nodes per axis including the identified max face.
    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    /// `N - 1`, also the number of canonical nodes per axis.
    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Number of canonical (unknown-carrying) nodes, `(N-1)^d`.
    pub fn num_nodes(&self) -> usize {
        self.elements.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// `2^d`.
    pub fn corners(&self) -> usize {
        1 << self.dim
    }

    /// Number of stencil neighbors per node, `3^d` (including the node itself).
    pub fn slots(&self) -> usize {
        3usize.pow(self.dim as u32)
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// Canonical node indices of element `e`, one per corner.
    pub fn element_nodes(&self, e: usize) -> &[u32] {
        &self.elements[e][..self.corners()]
    }

    /// Grid index of canonical node (or element) `i`.
    pub fn grid_index(&self, i: usize) -> [usize; 3] {
        let m = self.cells;
        let mut out = [0; 3];
        let mut rest = i;
        for x in out.iter_mut().take(self.dim) {
            *x = rest % m;
            rest /= m;
        }
        out
    }

    /// Canonical index for an arbitrary (possibly out-of-range) grid index.
    pub fn wrap(&self, idx: [isize; 3]) -> usize {
        let m = self.cells as isize;
        let mut out = 0usize;
        for k in (0..self.dim).rev() {
            out = out * self.cells + idx[k].rem_euclid(m) as usize;
        }
        out
    }

    /// Position of canonical node `i` (its min-face representative).
    pub fn node_position(&self, i: usize) -> [f64; 3] {
        let g = self.grid_index(i);
        [
            g[0] as f64 * self.h,
            g[1] as f64 * self.h,
            g[2] as f64 * self.h,
        ]
    }

    /// Physical position of quadrature point `q` in element `e`.
    pub fn quadrature_position(&self, e: usize, q: usize) -> [f64; 3] {
        let g = self.grid_index(e);
        let xi = self.quadrature.point(q);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = (g[k] as f64 + xi[k]) * self.h;
        }
        x
    }

    /// Canonical index of the neighbor of `node` in stencil slot `slot`.
    #[inline]
    pub fn neighbor(&self, node: usize, slot: usize) -> usize {
        self.neighbors[node * self.slots() + slot] as usize
    }

    pub(crate) fn neighbor_table(&self) -> &[u32] {
        &self.neighbors
    }

    /// Stencil slot of corner `to` seen from corner `from` of the same element.
    #[inline]
    pub fn corner_slot(&self, from: usize, to: usize) -> usize {
        let mut slot = 0;
        let mut stride = 1;
        for k in 0..self.dim {
            let off = ((to >> k) & 1) as isize - ((from >> k) & 1) as isize;
            slot += (off + 1) as usize * stride;
            stride *= 3;
        }
        slot
    }

    /// Interpolated value of a nodal field at every quadrature point of `e`.
    pub fn interpolate_element(&self, field: &[f64], e: usize, out: &mut [f64]) {
        let nodes = self.element_nodes(e);
        for (q, o) in out.iter_mut().enumerate().take(self.quadrature.len()) {
            *o = self
                .quadrature
                .values(q)
                .iter()
                .zip(nodes)
                .map(|(phi, &n)| phi * field[n as usize])
                .sum();
        }
    }

    /// Simpson integral of `f` evaluated at physical quadrature positions.
    pub fn integrate_fn(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        let mut total = 0.0;
        for e in 0..self.num_elements() {
            for q in 0..self.quadrature.len() {
                total += self.quadrature.weight(q) * f(self.quadrature_position(e, q));
            }
        }
        total
    }

    /// Simpson integral of `g(v)` where `v` is the multilinear interpolant of a nodal field.
    pub fn integrate_nodal(&self, field: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let mut vq = vec![0.0; self.quadrature.len()];
        let mut total = 0.0;
        for e in 0..self.num_elements() {
            self.interpolate_element(field, e, &mut vq);
            for (q, &v) in vq.iter().enumerate() {
                total += self.quadrature.weight(q) * g(v);
            }
        }
        total
    }

    /// Evaluate the periodic multilinear interpolant at an arbitrary point.
    pub fn sample(&self, field: &[f64], x: [f64; 3]) -> f64 {
        let m = self.cells as f64;
        let mut base = [0isize; 3];
        let mut local = [0.0; 3];
        for k in 0..self.dim {
            let s = x[k].rem_euclid(1.0) * m;
            let i = s.floor();
            base[k] = i as isize;
            local[k] = s - i;
        }
        let (phi, _) = shape_eval(self.dim, local);
        let mut value = 0.0;
        for (c, p) in phi.iter().enumerate() {
            let mut idx = base;
            for (k, ix) in idx.iter_mut().enumerate().take(self.dim) {
                *ix += ((c >> k) & 1) as isize;
            }
            value += p * field[self.wrap(idx)];
        }
        value
    }

    /// Nodal samples of `f` at the canonical node positions.
    pub fn nodal_from_fn(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| f(self.node_position(i))).collect()
    }
}

/// Offset in `{-1,0,1}^3` of stencil slot `s`.
#[inline]
pub fn slot_offset(s: usize) -> [isize; 3] {
    [
        (s % 3) as isize - 1,
        ((s / 3) % 3) as isize - 1,
        ((s / 9) % 3) as isize - 1,
    ]
}

/// Multilinear prolongation of a nodal field to a finer periodic grid.
pub fn prolongate(coarse: &PeriodicMesh, values: &[f64], fine: &PeriodicMesh) -> Result<Vec<f64>> {
    if coarse.dim() != fine.dim() {
        return Err(Error::DimensionMismatch {
            expected: coarse.dim(),
            actual: fine.dim(),
        });
    }
    if values.len() != coarse.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: coarse.num_nodes(),
            actual: values.len(),
        });
    }
    let (mc, mf) = (coarse.cells_per_axis(), fine.cells_per_axis());
    if mf < mc || mf % mc != 0 {
        return Err(Error::Mesh(format!(
            "cannot prolongate from {} to {} nodes per axis: cell counts {mc} and {mf} are not nested",
            coarse.nodes_per_axis(),
            fine.nodes_per_axis()
        )));
    }
    let ratio = mf / mc;
    let dim = coarse.dim();
    let out = (0..fine.num_nodes())
        .map(|i| {
            let g = fine.grid_index(i);
            let mut base = [0isize; 3];
            let mut local = [0.0; 3];
            for k in 0..dim {
                base[k] = (g[k] / ratio) as isize;
                local[k] = (g[k] % ratio) as f64 / ratio as f64;
            }
            let (phi, _) = shape_eval(dim, local);
            let mut value = 0.0;
            for (c, p) in phi.iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                let mut idx = base;
                for (k, ix) in idx.iter_mut().enumerate().take(dim) {
                    *ix += ((c >> k) & 1) as isize;
                }
                value += p * values[coarse.wrap(idx)];
            }
            value
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = PeriodicMesh::new(3, 17).unwrap();
        assert_eq!(m.num_elements(), 16 * 16 * 16);
        assert_eq!(m.num_nodes(), 16 * 16 * 16);
        let m = PeriodicMesh::new(2, 3).unwrap();
        assert_eq!(m.num_elements(), 4);
        assert_eq!(m.num_nodes(), 4);
        let m = PeriodicMesh::new(3, 33).unwrap();
        assert_eq!(m.num_elements(), 32768);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PeriodicMesh::new(3, 2).is_err());
        assert!(PeriodicMesh::new(1, 9).is_err());
        assert!(PeriodicMesh::new(4, 9).is_err());
    }

    #[test]
    fn shape_functions_at_corner_and_center() {
        for dim in [2, 3] {
            let (phi, _) = shape_eval(dim, [0.0; 3]);
            assert_eq!(phi[0], 1.0);
            assert!(phi[1..].iter().all(|&p| p == 0.0));
            let (phi, grads) = shape_eval(dim, [0.5; 3]);
            let expect = 0.5f64.powi(dim as i32);
            assert!(phi.iter().all(|&p| (p - expect).abs() < 1e-15));
            for k in 0..3 {
                let s: f64 = grads.iter().map(|g| g[k]).sum();
                assert!(s.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let pts = [[0.1, 0.7, 0.3], [0.9, 0.2, 0.55], [0.33, 0.66, 0.99]];
        for p in pts {
            let (phi, grads) = shape_eval(3, p);
            assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for k in 0..3 {
                assert!(grads.iter().map(|g| g[k]).sum::<f64>().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn element_weights_sum_to_cell_measure() {
        for dim in [2, 3] {
            let m = PeriodicMesh::new(dim, 7).unwrap();
            let s: f64 = m.quadrature().weights().iter().sum();
            assert!((s - m.spacing().powi(dim as i32)).abs() < 1e-16);
            assert!((m.integrate_fn(|_| 1.0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn simpson_exact_for_cubic_monomials() {
        let m = PeriodicMesh::new(3, 5).unwrap();
        // x^3 y^2 z over the unit cube is 1/4 * 1/3 * 1/2.
        let got = m.integrate_fn(|x| x[0].powi(3) * x[1].powi(2) * x[2]);
        assert!((got - 1.0 / 24.0).abs() < 1e-14, "{got}");
        let got = m.integrate_fn(|x| x[1].powi(3));
        assert!((got - 0.25).abs() < 1e-14);
    }

    #[test]
    fn every_element_has_distinct_corners() {
        let m = PeriodicMesh::new(3, 4).unwrap();
        for e in 0..m.num_elements() {
            let mut nodes = m.element_nodes(e).to_vec();
            assert_eq!(nodes.len(), 8);
            nodes.sort();
            nodes.dedup();
            assert_eq!(nodes.len(), 8);
        }
    }

    #[test]
    fn max_face_aliases_min_face() {
        let m = PeriodicMesh::new(2, 5).unwrap();
        // last column of elements wraps to node column 0
        let e = m.wrap([3, 1, 0]);
        let nodes = m.element_nodes(e);
        assert_eq!(nodes[1] as usize, m.wrap([0, 1, 0]));
        assert_eq!(nodes[3] as usize, m.wrap([0, 2, 0]));
    }

    #[test]
    fn corner_slot_matches_neighbor_table() {
        let m = PeriodicMesh::new(3, 6).unwrap();
        for e in [0, 17, m.num_elements() - 1] {
            let nodes = m.element_nodes(e);
            for a in 0..8 {
                for b in 0..8 {
                    let slot = m.corner_slot(a, b);
                    assert_eq!(m.neighbor(nodes[a] as usize, slot), nodes[b] as usize);
                }
            }
        }
    }

    #[test]
    fn prolongation_reproduces_constants() {
        let c = PeriodicMesh::new(3, 5).unwrap();
        let f = PeriodicMesh::new(3, 9).unwrap();
        let v = vec![0.37; c.num_nodes()];
        let p = prolongate(&c, &v, &f).unwrap();
        assert!(p.iter().all(|&x| (x - 0.37).abs() < 1e-15));
    }

    #[test]
    fn prolongation_hat_midpoints_average() {
        let c = PeriodicMesh::new(2, 5).unwrap();
        let f = PeriodicMesh::new(2, 9).unwrap();
        let mut v = vec![0.0; c.num_nodes()];
        v[c.wrap([1, 1, 0])] = 1.0;
        let p = prolongate(&c, &v, &f).unwrap();
        assert_eq!(p[f.wrap([2, 2, 0])], 1.0);
        assert_eq!(p[f.wrap([3, 2, 0])], 0.5);
        assert_eq!(p[f.wrap([1, 2, 0])], 0.5);
        assert_eq!(p[f.wrap([3, 3, 0])], 0.25);
        assert_eq!(p[f.wrap([4, 4, 0])], 0.0);
    }

    #[test]
    fn prolongation_sawtooth_agrees_at_shared_nodes() {
        let c = PeriodicMesh::new(2, 3).unwrap();
        let f = PeriodicMesh::new(2, 5).unwrap();
        let v = c.nodal_from_fn(|x| x[0]);
        let p = prolongate(&c, &v, &f).unwrap();
        for i in 0..c.num_nodes() {
            let g = c.grid_index(i);
            let j = f.wrap([2 * g[0] as isize, 2 * g[1] as isize, 0]);
            assert_eq!(p[j], v[i]);
        }
        // inserted point between x=0.5 and the wrapped x=1 (value 0)
        assert_eq!(p[f.wrap([3, 0, 0])], 0.25);
    }

    #[test]
    fn prolongation_rejects_incompatible() {
        let c = PeriodicMesh::new(3, 5).unwrap();
        let f = PeriodicMesh::new(3, 8).unwrap();
        assert!(prolongate(&c, &vec![0.0; c.num_nodes()], &f).is_err());
    }
}
