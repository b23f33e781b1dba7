//! Analytic domains, their discretization and the normal-flow perturbation
//! of polygons.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded Euclidean domain in one or two dimensions.
///
/// Rectangles are `(0, lx) × (0, ly)`, disks are centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Rectangle { lx: f64, ly: f64 },
    Disk { r: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl DomainSpec {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let d = DomainSpec::Interval { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(lx: f64, ly: f64) -> Result<Self> {
        let d = DomainSpec::Rectangle { lx, ly };
        d.validate()?;
        Ok(d)
    }

    pub fn disk(r: f64) -> Result<Self> {
        let d = DomainSpec::Disk { r };
        d.validate()?;
        Ok(d)
    }

    /// Builds a polygon, reversing clockwise input to positive orientation.
    pub fn polygon(mut vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() >= 3 && signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let d = DomainSpec::Polygon { vertices };
        d.validate()?;
        Ok(d)
    }

    /// The rectangle `(0, lx) × (0, ly)` as a counter-clockwise polygon.
    pub fn rectangle_polygon(lx: f64, ly: f64) -> Result<Self> {
        Self::polygon(vec![[0.0, 0.0], [lx, 0.0], [lx, ly], [0.0, ly]])
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            DomainSpec::Interval { a, b } => {
                if !finite(&[*a, *b]) || a >= b {
                    return Err(Error::InvalidDomain(format!("interval needs a < b (got {a}, {b})")));
                }
            }
            DomainSpec::Rectangle { lx, ly } => {
                if !finite(&[*lx, *ly]) || *lx <= 0.0 || *ly <= 0.0 {
                    return Err(Error::InvalidDomain(format!(
                        "rectangle needs positive sides (got {lx}, {ly})"
                    )));
                }
            }
            DomainSpec::Disk { r } => {
                if !r.is_finite() || *r <= 0.0 {
                    return Err(Error::InvalidDomain(format!("disk needs R > 0 (got {r})")));
                }
            }
            DomainSpec::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidDomain("polygon needs at least 3 vertices".into()));
                }
                if !vertices.iter().all(|v| finite(v)) {
                    return Err(Error::InvalidDomain("polygon vertex is not finite".into()));
                }
                let area = signed_area(vertices);
                if area == 0.0 {
                    return Err(Error::InvalidDomain("polygon has zero area".into()));
                }
                if area < 0.0 {
                    return Err(Error::InvalidDomain("polygon is clockwise".into()));
                }
                if let Some((i, j)) = find_self_intersection(vertices) {
                    return Err(Error::InvalidDomain(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainSpec::Interval { .. } => "interval",
            DomainSpec::Rectangle { .. } => "rectangle",
            DomainSpec::Disk { .. } => "disk",
            DomainSpec::Polygon { .. } => "polygon",
        }
    }

    /// Flat parameter list in the order used by config files.
    pub fn params(&self) -> Vec<f64> {
        match self {
            DomainSpec::Interval { a, b } => vec![*a, *b],
            DomainSpec::Rectangle { lx, ly } => vec![*lx, *ly],
            DomainSpec::Disk { r } => vec![*r],
            DomainSpec::Polygon { vertices } => vertices.iter().flat_map(|v| [v[0], v[1]]).collect(),
        }
    }

    pub fn from_params(kind: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() != n {
                Err(Error::InvalidDomain(format!(
                    "{kind} takes {n} parameter(s), got {}",
                    params.len()
                )))
            } else {
                Ok(())
            }
        };
        match kind {
            "interval" => {
                want(2)?;
                Self::interval(params[0], params[1])
            }
            "rectangle" => {
                want(2)?;
                Self::rectangle(params[0], params[1])
            }
            "disk" => {
                want(1)?;
                Self::disk(params[0])
            }
            "polygon" => {
                if !params.len().is_multiple_of(2) {
                    return Err(Error::InvalidDomain("polygon parameters come in x,y pairs".into()));
                }
                Self::polygon(params.chunks(2).map(|c| [c[0], c[1]]).collect())
            }
            other => Err(Error::InvalidDomain(format!("unknown domain type `{other}`"))),
        }
    }

    /// Distance from `p` to the boundary, negative outside. For intervals
    /// only `p[0]` is used.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            DomainSpec::Interval { a, b } => (p[0] - a).min(b - p[0]),
            DomainSpec::Rectangle { lx, ly } => {
                let inside = p[0].min(lx - p[0]).min(p[1]).min(ly - p[1]);
                if inside >= 0.0 {
                    inside
                } else {
                    let dx = (-p[0]).max(p[0] - lx).max(0.0);
                    let dy = (-p[1]).max(p[1] - ly).max(0.0);
                    -(dx * dx + dy * dy).sqrt()
                }
            }
            DomainSpec::Disk { r } => r - p[0].hypot(p[1]),
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                let mut dmin = f64::INFINITY;
                for i in 0..n {
                    dmin = dmin.min(point_segment_distance(p, vertices[i], vertices[(i + 1) % n]));
                }
                if point_in_polygon(p, vertices) {
                    dmin
                } else {
                    -dmin
                }
            }
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Axis-aligned bounding box `[xmin, xmax, ymin, ymax]`.
    fn bounding_box(&self) -> [f64; 4] {
        match self {
            DomainSpec::Interval { a, b } => [*a, *b, 0.0, 0.0],
            DomainSpec::Rectangle { lx, ly } => [0.0, *lx, 0.0, *ly],
            DomainSpec::Disk { r } => [-r, *r, -r, *r],
            DomainSpec::Polygon { vertices } => {
                let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                for v in vertices {
                    bb[0] = bb[0].min(v[0]);
                    bb[1] = bb[1].max(v[0]);
                    bb[2] = bb[2].min(v[1]);
                    bb[3] = bb[3].max(v[1]);
                }
                bb
            }
        }
    }
}

/// Exact length/area of the domain.
pub fn volume(spec: &DomainSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec {
        DomainSpec::Interval { a, b } => b - a,
        DomainSpec::Rectangle { lx, ly } => lx * ly,
        DomainSpec::Disk { r } => PI * r * r,
        DomainSpec::Polygon { vertices } => signed_area(vertices),
    })
}

/// Perimeter; for an interval the counting measure of its two endpoints.
pub fn boundary_measure(spec: &DomainSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec {
        DomainSpec::Interval { .. } => 2.0,
        DomainSpec::Rectangle { lx, ly } => 2.0 * (lx + ly),
        DomainSpec::Disk { r } => 2.0 * PI * r,
        DomainSpec::Polygon { vertices } => {
            let n = vertices.len();
            (0..n)
                .map(|i| {
                    let (p, q) = (vertices[i], vertices[(i + 1) % n]);
                    (q[0] - p[0]).hypot(q[1] - p[1])
                })
                .sum()
        }
    })
}

/// Shoelace formula; positive for counter-clockwise vertex order.
pub fn signed_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut acc = crate::numeric::sum::CompensatedSum::new();
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        acc.add(p[0] * q[1]);
        acc.add(-q[0] * p[1]);
    }
    0.5 * acc.value()
}

fn point_in_polygon(p: [f64; 2], vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (vertices[i], vertices[j]);
        if (vi[1] > p[1]) != (vj[1] > p[1]) {
            let x_cross = vi[0] + (p[1] - vi[1]) * (vj[0] - vi[0]) / (vj[1] - vi[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).hypot(p[1] - cy)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent intersecting edges, if any.
fn find_self_intersection(vertices: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = vertices.len();
    for i in 0..n {
        let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
        if a1 == a2 {
            return Some((i, i));
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Moves every vertex along its outward normal: `σ + eps·f(σ)·ν(σ)`, with
/// `ν` the normalized bisector of the two adjacent edge normals.
pub fn perturb_polygon(poly: &DomainSpec, f: &[f64], eps: f64) -> Result<DomainSpec> {
    let vertices = match poly {
        DomainSpec::Polygon { vertices } => vertices,
        other => {
            return Err(Error::InvalidArgument(format!(
                "perturb_polygon needs a polygon, got {}",
                other.name()
            )))
        }
    };
    poly.validate()?;
    if f.len() != vertices.len() {
        return Err(Error::InvalidArgument(format!(
            "flow has {} values for {} vertices",
            f.len(),
            vertices.len()
        )));
    }
    if eps == 0.0 {
        return Ok(poly.clone());
    }
    let normals = vertex_normals(vertices);
    let moved: Vec<[f64; 2]> = vertices
        .iter()
        .zip(&normals)
        .zip(f)
        .map(|((v, nu), fi)| [v[0] + eps * fi * nu[0], v[1] + eps * fi * nu[1]])
        .collect();
    let area = signed_area(&moved);
    if area <= 0.0 {
        return Err(Error::SelfIntersecting("orientation flipped".into()));
    }
    if let Some((i, j)) = find_self_intersection(&moved) {
        return Err(Error::SelfIntersecting(format!("edges {i} and {j} cross")));
    }
    Ok(DomainSpec::Polygon { vertices: moved })
}

/// Outward unit vertex normals (angle-bisector convention at corners).
pub fn vertex_normals(vertices: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = vertices.len();
    let edge_normal = |i: usize| {
        let (p, q) = (vertices[i], vertices[(i + 1) % n]);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = dx.hypot(dy);
        [dy / len, -dx / len]
    };
    (0..n)
        .map(|i| {
            let a = edge_normal((i + n - 1) % n);
            let b = edge_normal(i);
            let (x, y) = (a[0] + b[0], a[1] + b[1]);
            let len = x.hypot(y);
            [x / len, y / len]
        })
        .collect()
}

/// How a grid discretizes its domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Stair-step lattice: interior lattice points, everything else Dirichlet zero.
    Lattice,
    /// Radial reduction of a disk: nodes `r_i = i·h` on `[0, R)`, rotationally
    /// symmetric fields only.
    Radial,
}

/// Dense lookup from lattice coordinates to interior node index.
#[derive(Clone, Debug)]
struct LatticeIndex {
    i0: i64,
    j0: i64,
    nx: usize,
    ny: usize,
    table: Vec<usize>,
}

impl LatticeIndex {
    const EMPTY: usize = usize::MAX;

    fn get(&self, i: i64, j: i64) -> Option<usize> {
        let (di, dj) = (i - self.i0, j - self.j0);
        if di < 0 || dj < 0 || di as usize >= self.nx || dj as usize >= self.ny {
            return None;
        }
        match self.table[dj as usize * self.nx + di as usize] {
            Self::EMPTY => None,
            k => Some(k),
        }
    }
}

/// Interior nodes of a discretized domain with quadrature weights.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: DomainSpec,
    h: f64,
    kind: GridKind,
    nodes: Vec<[f64; 2]>,
    lattice: Vec<[i64; 2]>,
    weights: Vec<f64>,
    index: LatticeIndex,
    /// Radial grids only: distance from the last node to the boundary.
    outer_gap: f64,
}

impl Grid {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn kind(&self) -> GridKind {
        self.kind
    }
    pub fn dim(&self) -> usize {
        match self.kind {
            GridKind::Radial => 1,
            GridKind::Lattice => self.spec.dim(),
        }
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }
    pub fn lattice_coords(&self) -> &[[i64; 2]] {
        &self.lattice
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn outer_gap(&self) -> f64 {
        self.outer_gap
    }

    /// Interior index of the lattice point `(i, j)`, if it is a node.
    pub fn node_at(&self, i: i64, j: i64) -> Option<usize> {
        self.index.get(i, j)
    }

    /// Index of the node closest to `p`.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let key = |q: &[f64; 2]| match self.kind {
            GridKind::Radial => (q[0] - p[0].hypot(p[1])).abs(),
            GridKind::Lattice => (q[0] - p[0]).hypot(q[1] - p[1]),
        };
        (0..self.len())
            .min_by(|&a, &b| key(&self.nodes[a]).total_cmp(&key(&self.nodes[b])))
            .expect("grid is nonempty")
    }

    /// Longest run of nodes along one lattice line (used to size iteration caps).
    pub fn longest_line(&self) -> usize {
        match self.kind {
            GridKind::Radial => self.len(),
            GridKind::Lattice if self.spec.dim() == 1 => self.len(),
            GridKind::Lattice => {
                let mut rows = std::collections::HashMap::<i64, usize>::new();
                let mut cols = std::collections::HashMap::<i64, usize>::new();
                for c in &self.lattice {
                    *rows.entry(c[1]).or_default() += 1;
                    *cols.entry(c[0]).or_default() += 1;
                }
                rows.values().chain(cols.values()).copied().max().unwrap_or(0)
            }
        }
    }

    /// Writes `x,y,index,weight` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "index", "weight"])?;
        for (k, (p, wt)) in self.nodes.iter().zip(&self.weights).enumerate() {
            w.write_record([p[0].to_string(), p[1].to_string(), k.to_string(), wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stair-step lattice of spacing `h`. Nodes are ordered lexicographically by
/// `(j, i)` lattice coordinates (rows of constant y, x increasing).
pub fn build_grid(spec: &DomainSpec, h: f64) -> Result<Grid> {
    spec.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive (got {h})")));
    }
    let margin = 1e-9 * h;
    let bb = spec.bounding_box();
    let (x_origin, i_range, j_range) = match spec {
        DomainSpec::Interval { a, b } => {
            let n = ((b - a) / h).ceil() as i64;
            (*a, (1, n), (0, 0))
        }
        _ => (
            0.0,
            ((bb[0] / h).floor() as i64, (bb[1] / h).ceil() as i64),
            ((bb[2] / h).floor() as i64, (bb[3] / h).ceil() as i64),
        ),
    };

    let nx = (i_range.1 - i_range.0 + 1) as usize;
    let ny = (j_range.1 - j_range.0 + 1) as usize;
    let mut table = vec![LatticeIndex::EMPTY; nx * ny];
    let mut nodes = Vec::new();
    let mut lattice = Vec::new();
    for j in j_range.0..=j_range.1 {
        for i in i_range.0..=i_range.1 {
            let p = [x_origin + i as f64 * h, j as f64 * h];
            if spec.signed_distance(p) > margin {
                let k = nodes.len();
                table[(j - j_range.0) as usize * nx + (i - i_range.0) as usize] = k;
                nodes.push(p);
                lattice.push([i, j]);
            }
        }
    }

    let distinct = |axis: usize| {
        let mut v: Vec<i64> = lattice.iter().map(|c| c[axis]).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let nxi = distinct(0);
    if nxi < 3 {
        return Err(Error::GridTooCoarse { axis: 'x', nodes: nxi });
    }
    if spec.dim() == 2 {
        let nyi = distinct(1);
        if nyi < 3 {
            return Err(Error::GridTooCoarse { axis: 'y', nodes: nyi });
        }
    }

    let w = h.powi(spec.dim() as i32);
    let weights = vec![w; nodes.len()];
    Ok(Grid {
        spec: spec.clone(),
        h,
        kind: GridKind::Lattice,
        nodes,
        lattice,
        weights,
        index: LatticeIndex {
            i0: i_range.0,
            j0: j_range.0,
            nx,
            ny,
            table,
        },
        outer_gap: 0.0,
    })
}

/// Radial grid for a disk: nodes `r_i = i·h` strictly inside `[0, R)`.
/// Node 0 is the center. Weights are the areas of the annular cells
/// `[r_i − h/2, r_i + h/2]` (a disk of radius `h/2` at the center).
pub fn build_radial_grid(spec: &DomainSpec, h: f64) -> Result<Grid> {
    let r_max = match spec {
        DomainSpec::Disk { r } => *r,
        other => {
            return Err(Error::Unsupported(format!(
                "radial reduction needs a disk, got {}",
                other.name()
            )))
        }
    };
    spec.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive (got {h})")));
    }
    let mut nodes = Vec::new();
    let mut lattice = Vec::new();
    let mut i = 0i64;
    loop {
        let r = i as f64 * h;
        if r_max - r <= 1e-9 * h {
            break;
        }
        nodes.push([r, 0.0]);
        lattice.push([i, 0]);
        i += 1;
    }
    if nodes.len() < 3 {
        return Err(Error::GridTooCoarse { axis: 'r', nodes: nodes.len() });
    }
    let outer_gap = r_max - nodes.last().unwrap()[0];
    let weights = nodes
        .iter()
        .map(|p| {
            if p[0] == 0.0 {
                2.0 * PI * h * h / 8.0
            } else {
                2.0 * PI * p[0] * h
            }
        })
        .collect();
    let n = nodes.len();
    Ok(Grid {
        spec: spec.clone(),
        h,
        kind: GridKind::Radial,
        nodes,
        lattice,
        weights,
        index: LatticeIndex {
            i0: 0,
            j0: 0,
            nx: n,
            ny: 1,
            table: (0..n).collect(),
        },
        outer_gap,
    })
}
