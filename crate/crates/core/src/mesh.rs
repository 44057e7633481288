//! Admissible finite-volume meshes, piecewise-constant fields and exact cell
//! averages of separable polynomials.
//!
//! The data model is dimension-agnostic: a cell carries its center, measure
//! and (optionally) an axis-aligned bounding box, and an interior edge
//! carries the pair of cells it separates, its measure `m_σ` and the center
//! distance `d_{K|L}`. Exterior edges are not stored; with homogeneous
//! Neumann conditions they carry no flux.
//!
//! Only the uniform square generator on `(-w, w)²` is provided. Cells are
//! numbered `n = L·k + m` with `k` the x-index and `m` the y-index.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::{Deref, Index};

use crate::numfmt::fmt_f64;
use crate::{Error, Result};

/// A control volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Cell center `x_K`.
    pub center: Vec<f64>,
    /// Lebesgue measure `m_K`.
    pub measure: f64,
    /// Per-axis `(lower, upper)` bounds when the cell is an axis-aligned box.
    pub bounds: Option<Vec<(f64, f64)>>,
}

/// An interior interface `σ = K|L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorEdge {
    pub cells: (usize, usize),
    /// `m_σ`, the (d-1)-dimensional measure of the interface.
    pub measure: f64,
    /// `d_{K|L}`, the distance between the two cell centers.
    pub center_distance: f64,
}

impl InteriorEdge {
    /// TPFA transmissibility `m_σ / d_{K|L}`.
    pub fn transmissibility(&self) -> f64 {
        self.measure / self.center_distance
    }
}

/// Derived regularity metrics of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub m_min: f64,
    pub m_max: f64,
    /// Largest `ξ` with `ξ·h ≤ d(x_K, σ)` for every cell and face.
    pub xi: f64,
    /// Maximum number of edges incident to a vertex, when known.
    pub max_vertex_edges: Option<usize>,
}

impl Regularity {
    pub fn measure_ratio(&self) -> f64 {
        self.m_max / self.m_min
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    cells: Vec<Cell>,
    edges: Vec<InteriorEdge>,
    /// Edge indices incident to each cell.
    incidence: Vec<Vec<usize>>,
    size: f64,
    cells_per_axis: Option<usize>,
    regularity: Regularity,
}

impl Mesh {
    /// Builds a mesh from explicit parts and checks the structural invariants.
    ///
    /// `size` is the mesh size `h` and `xi` the regularity constant; both are
    /// supplied by the generator since they depend on face geometry the data
    /// model does not store.
    pub fn from_parts(
        cells: Vec<Cell>,
        edges: Vec<InteriorEdge>,
        size: f64,
        xi: f64,
        max_vertex_edges: Option<usize>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        if !(size.is_finite() && size > 0.0) {
            return Err(Error::InvalidMesh(format!("mesh size must be positive, got {size}")));
        }
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::InvalidMesh(format!("regularity constant must be positive, got {xi}")));
        }
        for (k, c) in cells.iter().enumerate() {
            if !(c.measure.is_finite() && c.measure > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {k} has measure {}", c.measure)));
            }
        }
        let mut incidence = vec![Vec::new(); cells.len()];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (e, edge) in edges.iter().enumerate() {
            let (k, l) = edge.cells;
            if k == l || k >= cells.len() || l >= cells.len() {
                return Err(Error::InvalidMesh(format!("edge {e} references cells ({k}, {l})")));
            }
            if !seen.insert((k.min(l), k.max(l))) {
                return Err(Error::InvalidMesh(format!("duplicate edge between cells {k} and {l}")));
            }
            if !(edge.measure > 0.0 && edge.center_distance > 0.0)
                || !edge.measure.is_finite()
                || !edge.center_distance.is_finite()
            {
                return Err(Error::InvalidMesh(format!("edge {e} has degenerate geometry")));
            }
            incidence[k].push(e);
            incidence[l].push(e);
        }
        let (m_min, m_max) = cells
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), c| (lo.min(c.measure), hi.max(c.measure)));
        Ok(Self {
            cells,
            edges,
            incidence,
            size,
            cells_per_axis: None,
            regularity: Regularity { m_min, m_max, xi, max_vertex_edges },
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.edges
    }

    /// Indices of the interior edges touching cell `k`.
    pub fn edges_of(&self, k: usize) -> &[usize] {
        &self.incidence[k]
    }

    /// Mesh size `h = sup diam(K)`.
    pub fn size(&self) -> f64 {
        self.size
    }

    /// `L` for uniform meshes.
    pub fn cells_per_axis(&self) -> Option<usize> {
        self.cells_per_axis
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn measures(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(|c| c.measure)
    }

    pub fn total_measure(&self) -> f64 {
        self.measures().sum()
    }

    /// Writes `cell,center_x,center_y,measure` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cell,center_x,center_y,measure")?;
        for (k, c) in self.cells.iter().enumerate() {
            let x = c.center.first().copied().unwrap_or(f64::NAN);
            let y = c.center.get(1).copied().unwrap_or(f64::NAN);
            writeln!(out, "{k},{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(c.measure))?;
        }
        Ok(())
    }
}

/// Uniform `L × L` mesh of `(-1, 1)²`.
pub fn build_uniform_mesh(cells_per_axis: usize) -> Result<Mesh> {
    build_uniform_mesh_on(cells_per_axis, 1.0)
}

/// Uniform `L × L` mesh of `(-w, w)²`.
pub fn build_uniform_mesh_on(cells_per_axis: usize, half_width: f64) -> Result<Mesh> {
    let l = cells_per_axis;
    if l == 0 {
        return Err(Error::InvalidConfig("cells per axis must be at least 1".into()));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::InvalidConfig(format!("domain half width must be positive, got {half_width}")));
    }
    let width = 2.0 * half_width / l as f64;
    let lower = |i: usize| -half_width + 2.0 * half_width * i as f64 / l as f64;
    let upper = |i: usize| -half_width + 2.0 * half_width * (i + 1) as f64 / l as f64;

    let mut cells = Vec::with_capacity(l * l);
    for k in 0..l {
        for m in 0..l {
            let bx = (lower(k), upper(k));
            let by = (lower(m), upper(m));
            cells.push(Cell {
                center: vec![0.5 * (bx.0 + bx.1), 0.5 * (by.0 + by.1)],
                measure: width * width,
                bounds: Some(vec![bx, by]),
            });
        }
    }

    let idx = |k: usize, m: usize| l * k + m;
    let mut edges = Vec::with_capacity(2 * l * l.saturating_sub(1));
    for k in 0..l {
        for m in 0..l {
            if k + 1 < l {
                edges.push(InteriorEdge { cells: (idx(k, m), idx(k + 1, m)), measure: width, center_distance: width });
            }
            if m + 1 < l {
                edges.push(InteriorEdge { cells: (idx(k, m), idx(k, m + 1)), measure: width, center_distance: width });
            }
        }
    }

    let size = std::f64::consts::SQRT_2 * width;
    // every face sits half a cell width from the center
    let xi = 0.5 * width / size;
    let max_vertex_edges = Some(if l >= 2 { 4 } else { 2 });
    let mut mesh = Mesh::from_parts(cells, edges, size, xi, max_vertex_edges)?;
    mesh.cells_per_axis = Some(l);
    Ok(mesh)
}

/// Piecewise-constant field, one value per control volume.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField(Vec<f64>);

impl DiscreteField {
    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("discrete field"))
        }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(len, 0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Checks that the field has one entry per cell of `mesh`.
    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.0.len() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, actual: self.0.len() })
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `max_K u_K - min_K u_K`.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }
}

impl Deref for DiscreteField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for DiscreteField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl std::fmt::Display for DiscreteField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::from("(");
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{v:.8}");
        }
        s.push(')');
        f.write_str(&s)
    }
}

/// `p(x)·q(y)` with coefficient lists in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparablePolynomial {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SeparablePolynomial {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn constant(c: f64) -> Self {
        Self { x: vec![c], y: vec![1.0] }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        horner(&self.x, x) * horner(&self.y, y)
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Mean of the polynomial with coefficients `coeffs` over `[a, b]`, from its
/// antiderivative.
fn interval_mean(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let anti = |t: f64| {
        coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * t + c / (i + 1) as f64)
            * t
    };
    (anti(b) - anti(a)) / (b - a)
}

/// Exact cell means of a separable polynomial on a mesh of axis-aligned boxes.
pub fn cell_average(poly: &SeparablePolynomial, mesh: &Mesh) -> Result<DiscreteField> {
    let values = mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(k, cell)| match cell.bounds.as_deref() {
            Some([(x0, x1), (y0, y1)]) => {
                Ok(interval_mean(&poly.x, *x0, *x1) * interval_mean(&poly.y, *y0, *y1))
            }
            _ => Err(Error::InvalidMesh(format!("cell {k} is not a two-dimensional box"))),
        })
        .collect::<Result<Vec<_>>>()?;
    DiscreteField::new(values)
}

/// `Σ_K m_K (u_K − v_K)²`, the squared L² distance of the piecewise-constant
/// functions.
pub fn squared_l2_distance(u: &DiscreteField, v: &DiscreteField, mesh: &Mesh) -> Result<f64> {
    u.check_len(mesh.num_cells())?;
    v.check_len(mesh.num_cells())?;
    Ok(mesh
        .measures()
        .zip(u.iter().zip(v.iter()))
        .map(|(m, (a, b))| m * (a - b) * (a - b))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden;

    /// 3-point Gauss–Legendre on `[a, b]`, exact through degree 5.
    fn gauss3(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        nodes.iter().zip(weights).map(|(t, w)| w * f(c + r * t)).sum::<f64>() * r
    }

    fn quadrature_average(poly: &SeparablePolynomial, mesh: &Mesh) -> Vec<f64> {
        mesh.cells()
            .iter()
            .map(|c| {
                let b = c.bounds.as_ref().unwrap();
                let (x0, x1) = b[0];
                let (y0, y1) = b[1];
                let inner = |x: f64| gauss3(|y| poly.eval(x, y), y0, y1);
                gauss3(inner, x0, x1) / c.measure
            })
            .collect()
    }

    #[test]
    fn single_cell_mesh() {
        let mesh = build_uniform_mesh(1).unwrap();
        assert_eq!(mesh.num_cells(), 1);
        assert_eq!(mesh.cells()[0].measure, 4.0);
        assert!(mesh.interior_edges().is_empty());
    }

    #[test]
    fn two_by_two_geometry() {
        let mesh = build_uniform_mesh(2).unwrap();
        assert_eq!(mesh.num_cells(), 4);
        assert!(mesh.measures().all(|m| m == 1.0));
        assert_eq!(mesh.interior_edges().len(), 4);
        for e in mesh.interior_edges() {
            assert_eq!(e.measure, 1.0);
            assert_eq!(e.center_distance, 1.0);
        }
        // K_1 = (-1,0) x (0,1)
        assert_eq!(mesh.cells()[1].bounds.as_ref().unwrap(), &vec![(-1.0, 0.0), (0.0, 1.0)]);
    }

    #[test]
    fn five_by_five_geometry() {
        let mesh = build_uniform_mesh(5).unwrap();
        assert_eq!(mesh.num_cells(), 25);
        assert!(mesh.measures().all(|m| (m - 0.16).abs() < 1e-15));
        assert!((mesh.size() - 8f64.sqrt() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_invariants() {
        for l in 1..=12 {
            let mesh = build_uniform_mesh(l).unwrap();
            assert!((mesh.total_measure() - 4.0).abs() <= 4.0 * 1e-12);
            assert_eq!(mesh.interior_edges().len(), 2 * l * (l - 1));
            assert!((mesh.size() - 8f64.sqrt() / l as f64).abs() < 1e-14);
            let xi = mesh.regularity().xi;
            assert!((xi - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-14);
            for e in mesh.interior_edges() {
                assert!((e.measure - 2.0 / l as f64).abs() < 1e-15);
                assert!((e.center_distance - 2.0 / l as f64).abs() < 1e-15);
            }
            if l >= 2 {
                for k in 0..mesh.num_cells() {
                    assert!((2..=4).contains(&mesh.edges_of(k).len()));
                }
            }
        }
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(matches!(build_uniform_mesh(0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn from_parts_rejects_bad_edges() {
        let cell = |x: f64| Cell { center: vec![x, 0.0], measure: 1.0, bounds: None };
        let cells = vec![cell(0.0), cell(1.0)];
        let self_loop = InteriorEdge { cells: (0, 0), measure: 1.0, center_distance: 1.0 };
        assert!(Mesh::from_parts(cells.clone(), vec![self_loop], 1.0, 0.5, None).is_err());
        let dup = InteriorEdge { cells: (0, 1), measure: 1.0, center_distance: 1.0 };
        let dup_rev = InteriorEdge { cells: (1, 0), ..dup };
        assert!(Mesh::from_parts(cells.clone(), vec![dup, dup_rev], 1.0, 0.5, None).is_err());
        let out_of_range = InteriorEdge { cells: (0, 2), ..dup };
        assert!(Mesh::from_parts(cells.clone(), vec![out_of_range], 1.0, 0.5, None).is_err());
        let flat = InteriorEdge { measure: 0.0, ..dup };
        assert!(Mesh::from_parts(cells, vec![flat], 1.0, 0.5, None).is_err());
    }

    #[test]
    fn initial_datum_averages_match_printed_vector() {
        let mesh = build_uniform_mesh(2).unwrap();
        let u0 = cell_average(&golden::initial_datum(), &mesh).unwrap();
        for (a, b) in u0.iter().zip(golden::INITIAL_L2) {
            assert!((a - b).abs() < 1e-6, "{u0}");
        }
    }

    #[test]
    fn exact_averages_agree_with_quadrature() {
        let poly = golden::initial_datum();
        for l in [2, 3, 5, 8] {
            let mesh = build_uniform_mesh(l).unwrap();
            let exact = cell_average(&poly, &mesh).unwrap();
            let quad = quadrature_average(&poly, &mesh);
            for (a, b) in exact.iter().zip(&quad) {
                assert!((a - b).abs() < 1e-13, "L={l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_polynomial_averages_to_itself() {
        let mesh = build_uniform_mesh(4).unwrap();
        let u = cell_average(&SeparablePolynomial::constant(0.37), &mesh).unwrap();
        assert!(u.iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn cell_average_is_linear() {
        let mesh = build_uniform_mesh(3).unwrap();
        let p = SeparablePolynomial::new(vec![1.0, -2.0, 0.5], vec![0.25, 3.0]);
        let q = SeparablePolynomial::new(vec![2.0, -1.0, 0.5], vec![0.25, 3.0]);
        let sum = SeparablePolynomial::new(vec![3.0, -3.0, 1.0], vec![0.25, 3.0]);
        let (ap, aq, asum) = (
            cell_average(&p, &mesh).unwrap(),
            cell_average(&q, &mesh).unwrap(),
            cell_average(&sum, &mesh).unwrap(),
        );
        for k in 0..mesh.num_cells() {
            assert!((ap[k] + aq[k] - asum[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn squared_distance_examples() {
        let m1 = build_uniform_mesh(1).unwrap();
        let one = DiscreteField::constant(1, 1.0);
        let zero = DiscreteField::zeros(1);
        assert_eq!(squared_l2_distance(&one, &zero, &m1).unwrap(), 4.0);
        assert_eq!(squared_l2_distance(&one, &one, &m1).unwrap(), 0.0);

        let m2 = build_uniform_mesh(2).unwrap();
        let e0 = DiscreteField::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(squared_l2_distance(&e0, &DiscreteField::zeros(4), &m2).unwrap(), 1.0);
        assert!(matches!(
            squared_l2_distance(&e0, &zero, &m2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn field_rejects_non_finite() {
        assert!(DiscreteField::new(vec![0.0, f64::NAN]).is_err());
        assert!(DiscreteField::new(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_export_has_one_row_per_cell() {
        let mesh = build_uniform_mesh(3).unwrap();
        let mut buf = Vec::new();
        mesh.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "cell,center_x,center_y,measure");
        assert_eq!(lines.len(), 10);
        assert!(lines[1].starts_with("0,"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distance_is_a_squared_norm(
                l in 1usize..6,
                seed in proptest::collection::vec(-10.0f64..10.0, 72),
                scale in -5.0f64..5.0,
            ) {
                let mesh = build_uniform_mesh(l).unwrap();
                let n = mesh.num_cells();
                let u = DiscreteField::new(seed[..n].to_vec()).unwrap();
                let v = DiscreteField::new(seed[36..36 + n].to_vec()).unwrap();
                let d = squared_l2_distance(&u, &v, &mesh).unwrap();
                prop_assert!(d >= 0.0);
                prop_assert!((d - squared_l2_distance(&v, &u, &mesh).unwrap()).abs() <= 1e-12 * d.max(1.0));
                let su = DiscreteField::new(u.iter().zip(v.iter()).map(|(a, b)| b + scale * (a - b)).collect()).unwrap();
                let ds = squared_l2_distance(&su, &v, &mesh).unwrap();
                prop_assert!((ds - scale * scale * d).abs() <= 1e-10 * d.max(1.0));
            }
        }
    }
}
