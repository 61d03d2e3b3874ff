//! Cell-centred half-domain grids and Fermi-coordinate data for plane curves.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid spacing h = {h}: 1/h must be an integer >= 2")]
    InvalidSpacing { h: f64 },
    #[error("dimension n = {n} not supported (1 or 2)")]
    Dimension { n: usize },
    #[error("Fermi chart violated: y * kappa = {value} >= 1")]
    ChartViolation { value: f64 },
    #[error("ambiguous projection: feet at {first} and {second} are equidistant")]
    AmbiguousProjection { first: f64, second: f64 },
    #[error("point is outside the tubular neighbourhood")]
    OutsideTube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `x ∈ [-1,1]^n`, `y ∈ (0,1]`.
    HalfRectangle,
    /// Cells of the half rectangle whose centres satisfy `|x|² + y² ≤ 1`.
    HalfDisk,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::HalfRectangle => "half_rectangle",
            Shape::HalfDisk => "half_disk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Sigma,
    Outer,
}

/// A face on the boundary of the grid. `axis == n` is the `y` direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub axis: usize,
    pub side: i8,
    pub kind: FaceKind,
    pub midpoint: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct HalfGrid {
    pub n: usize,
    pub shape: Shape,
    pub h: f64,
    /// Cells per axis of the bounding box: `[2/h, (2/h), 1/h]` for the `x` axes then `y`.
    pub dims: Vec<usize>,
    /// Cell centres, `n` coordinates of `x` followed by `y`.
    pub centers: Vec<[f64; 3]>,
    /// Integer box index of every cell.
    pub ijk: Vec<[usize; 3]>,
    lookup: Vec<Option<usize>>,
    pub boundary_faces: Vec<BoundaryFace>,
}

impl HalfGrid {
    pub fn build(n: usize, shape: Shape, h: f64) -> Result<Self, GeometryError> {
        if n != 1 && n != 2 {
            return Err(GeometryError::Dimension { n });
        }
        let m = (1.0 / h).round();
        if !(h > 0.0) || m < 2.0 || (m * h - 1.0).abs() > 1e-12 {
            return Err(GeometryError::InvalidSpacing { h });
        }
        let m = m as usize;
        let h = 1.0 / m as f64;
        let mut dims = vec![2 * m; n];
        dims.push(m);
        let total: usize = dims.iter().product();
        let coord = |axis: usize, i: usize| {
            if axis == n {
                (i as f64 + 0.5) * h
            } else {
                -1.0 + (i as f64 + 0.5) * h
            }
        };
        let mut lookup = vec![None; total];
        let mut centers = Vec::new();
        let mut ijk = Vec::new();
        let ni = dims[0];
        let nk = if n == 2 { dims[1] } else { 1 };
        // y outermost so that rows of constant y are contiguous
        for j in 0..m {
            for k in 0..nk {
                for i in 0..ni {
                    let mut c = [0.0; 3];
                    c[0] = coord(0, i);
                    if n == 2 {
                        c[1] = coord(1, k);
                    }
                    c[n] = coord(n, j);
                    let r2: f64 = c[..=n].iter().map(|v| v * v).sum();
                    if shape == Shape::HalfDisk && r2 > 1.0 {
                        continue;
                    }
                    let idx = [i, k, j];
                    lookup[Self::flat(&dims, n, idx)] = Some(centers.len());
                    centers.push(c);
                    ijk.push(idx);
                }
            }
        }
        let mut grid = Self {
            n,
            shape,
            h,
            dims,
            centers,
            ijk,
            lookup,
            boundary_faces: Vec::new(),
        };
        let mut faces = Vec::new();
        for c in 0..grid.len() {
            for axis in 0..=n {
                for side in [-1i8, 1] {
                    if grid.neighbor(c, axis, side).is_none() {
                        let mut mid = grid.centers[c];
                        mid[axis] += side as f64 * 0.5 * h;
                        if axis == n && side < 0 {
                            mid[n] = 0.0;
                        }
                        let kind = if axis == n && side < 0 {
                            FaceKind::Sigma
                        } else {
                            FaceKind::Outer
                        };
                        faces.push(BoundaryFace {
                            cell: c,
                            axis,
                            side,
                            kind,
                            midpoint: mid,
                        });
                    }
                }
            }
        }
        grid.boundary_faces = faces;
        Ok(grid)
    }

    fn flat(dims: &[usize], n: usize, idx: [usize; 3]) -> usize {
        if n == 1 {
            idx[2] * dims[0] + idx[0]
        } else {
            (idx[2] * dims[1] + idx[1]) * dims[0] + idx[0]
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn x(&self, c: usize) -> &[f64] {
        &self.centers[c][..self.n]
    }

    pub fn y(&self, c: usize) -> f64 {
        self.centers[c][self.n]
    }

    /// Cell volume `h^{n+1}`.
    pub fn volume(&self) -> f64 {
        self.h.powi(self.n as i32 + 1)
    }

    /// Face area `h^n`.
    pub fn face_area(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Neighbouring cell across the face `(axis, side)`; `axis == n` is `y`.
    pub fn neighbor(&self, c: usize, axis: usize, side: i8) -> Option<usize> {
        let mut idx = self.ijk[c];
        let slot = if axis == self.n { 2 } else if axis == 0 { 0 } else { 1 };
        let limit = self.dims[axis];
        if side < 0 {
            if idx[slot] == 0 {
                return None;
            }
            idx[slot] -= 1;
        } else {
            if idx[slot] + 1 >= limit {
                return None;
            }
            idx[slot] += 1;
        }
        self.lookup[Self::flat(&self.dims, self.n, idx)]
    }

    /// Cell containing the box index, if present.
    pub fn cell_at(&self, idx: [usize; 3]) -> Option<usize> {
        self.lookup.get(Self::flat(&self.dims, self.n, idx)).copied().flatten()
    }

    pub fn sigma_faces(&self) -> impl Iterator<Item = &BoundaryFace> {
        self.boundary_faces.iter().filter(|f| f.kind == FaceKind::Sigma)
    }

    /// One-line description used in CSV headers.
    pub fn describe(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        format!(
            "n={} shape={} h={} box={} cells={}",
            self.n,
            self.shape,
            self.h,
            dims.join("x"),
            self.len()
        )
    }
}

/// Free-function form of [`HalfGrid::build`].
pub fn build_half_grid(n: usize, shape: Shape, h: f64) -> Result<HalfGrid, GeometryError> {
    HalfGrid::build(n, shape, h)
}

type CurveFn = Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub enum CurveKind {
    /// Arc-length circle; `inward` selects the normal pointing to the centre.
    Circle {
        centre: [f64; 2],
        radius: f64,
        inward: bool,
    },
    /// Arc-length line through `point` with unit `direction`; the normal is its left rotation.
    Line { point: [f64; 2], direction: [f64; 2] },
    /// Any regular curve on `[0, period]`; derivatives by central differences.
    Parametric { f: CurveFn, period: f64 },
}

/// A plane curve `Σ` with normal `ν` given by the left rotation of `ψ'`.
#[derive(Clone)]
pub struct EmbeddedCurve {
    pub kind: CurveKind,
    pub label: String,
}

impl fmt::Debug for EmbeddedCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmbeddedCurve({})", self.label)
    }
}

const CURVE_FD: f64 = 1e-5;

impl EmbeddedCurve {
    pub fn circle(centre: [f64; 2], radius: f64, inward: bool) -> Self {
        Self {
            kind: CurveKind::Circle {
                centre,
                radius,
                inward,
            },
            label: format!("circle(R={radius})"),
        }
    }

    pub fn line(point: [f64; 2], direction: [f64; 2]) -> Self {
        let n = (direction[0].powi(2) + direction[1].powi(2)).sqrt();
        Self {
            kind: CurveKind::Line {
                point,
                direction: [direction[0] / n, direction[1] / n],
            },
            label: "line".into(),
        }
    }

    pub fn parametric(label: &str, period: f64, f: impl Fn(f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            kind: CurveKind::Parametric { f: Arc::new(f), period },
            label: label.into(),
        }
    }

    /// Parameter length for closed curves, `None` for lines.
    pub fn period(&self) -> Option<f64> {
        match &self.kind {
            CurveKind::Circle { radius, .. } => Some(2.0 * PI * radius),
            CurveKind::Line { .. } => None,
            CurveKind::Parametric { period, .. } => Some(*period),
        }
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        match &self.kind {
            CurveKind::Circle {
                centre,
                radius,
                inward,
            } => {
                let th = if *inward { s / radius } else { -s / radius };
                [centre[0] + radius * th.cos(), centre[1] + radius * th.sin()]
            }
            CurveKind::Line { point, direction } => {
                [point[0] + s * direction[0], point[1] + s * direction[1]]
            }
            CurveKind::Parametric { f, .. } => f(s),
        }
    }

    /// `ψ'(s)`.
    pub fn tangent(&self, s: f64) -> [f64; 2] {
        match &self.kind {
            CurveKind::Circle { inward, radius, .. } => {
                let sg = if *inward { 1.0 } else { -1.0 };
                let th = sg * s / radius;
                [-sg * th.sin(), sg * th.cos()]
            }
            CurveKind::Line { direction, .. } => *direction,
            CurveKind::Parametric { f, .. } => {
                let (p, m) = (f(s + CURVE_FD), f(s - CURVE_FD));
                [(p[0] - m[0]) / (2.0 * CURVE_FD), (p[1] - m[1]) / (2.0 * CURVE_FD)]
            }
        }
    }

    pub fn speed(&self, s: f64) -> f64 {
        let t = self.tangent(s);
        (t[0] * t[0] + t[1] * t[1]).sqrt()
    }

    /// Unit normal `ν(s)`.
    pub fn normal(&self, s: f64) -> [f64; 2] {
        let t = self.tangent(s);
        let l = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [-t[1] / l, t[0] / l]
    }

    /// Signed curvature `κ` with `ν' = -κ ψ'`.
    pub fn curvature(&self, s: f64) -> f64 {
        match &self.kind {
            CurveKind::Circle { radius, .. } => 1.0 / radius,
            CurveKind::Line { .. } => 0.0,
            CurveKind::Parametric { f, .. } => {
                let h = 1e-4;
                let (p, c, m) = (f(s + h), f(s), f(s - h));
                let d1 = [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)];
                let d2 = [(p[0] - 2.0 * c[0] + m[0]) / (h * h), (p[1] - 2.0 * c[1] + m[1]) / (h * h)];
                let sp = (d1[0] * d1[0] + d1[1] * d1[1]).sqrt();
                (d1[0] * d2[1] - d1[1] * d2[0]) / (sp * sp * sp)
            }
        }
    }

    /// The Fermi chart `Z(s, y) = ψ(s) + y ν(s)`.
    pub fn chart(&self, s: f64, y: f64) -> [f64; 2] {
        let p = self.point(s);
        let nu = self.normal(s);
        [p[0] + y * nu[0], p[1] + y * nu[1]]
    }
}

/// `√det g^y = |ψ'(s)| (1 - y κ(s))`.
pub fn fermi_mu(curve: &EmbeddedCurve, s: f64, y: f64) -> Result<f64, GeometryError> {
    let yk = y * curve.curvature(s);
    if yk >= 1.0 {
        return Err(GeometryError::ChartViolation { value: yk });
    }
    Ok(curve.speed(s) * (1.0 - yk))
}

/// `|det DZ(s, y)|` by central differences of the chart.
pub fn chart_jacobian_fd(curve: &EmbeddedCurve, s: f64, y: f64, step: f64) -> f64 {
    let zs = [curve.chart(s + step, y), curve.chart(s - step, y)];
    let zy = [curve.chart(s, y + step), curve.chart(s, y - step)];
    let ds = [(zs[0][0] - zs[1][0]) / (2.0 * step), (zs[0][1] - zs[1][1]) / (2.0 * step)];
    let dy = [(zy[0][0] - zy[1][0]) / (2.0 * step), (zy[0][1] - zy[1][1]) / (2.0 * step)];
    (ds[0] * dy[1] - ds[1] * dy[0]).abs()
}

/// Mean curvature of the level set `Σ_y`, analytically and as `-∂_y μ / μ`.
pub fn mean_curvature_check(curve: &EmbeddedCurve, s: f64, y: f64) -> Result<(f64, f64), GeometryError> {
    let k = curve.curvature(s);
    let analytic = k / (1.0 - y * k);
    let step = 1e-4;
    let mp = fermi_mu(curve, s, y + step)?;
    let mm = fermi_mu(curve, s, y - step)?;
    let m0 = fermi_mu(curve, s, y)?;
    let fd = -(mp - mm) / (2.0 * step) / m0;
    Ok((analytic, (analytic - fd).abs()))
}

/// Signed distance to the curve, positive on the side of `ν`, and the foot parameter.
pub fn signed_distance(curve: &EmbeddedCurve, p: [f64; 2]) -> Result<(f64, f64), GeometryError> {
    match &curve.kind {
        CurveKind::Line { point, direction } => {
            let r = [p[0] - point[0], p[1] - point[1]];
            let s = r[0] * direction[0] + r[1] * direction[1];
            let d = -r[0] * direction[1] + r[1] * direction[0];
            Ok((d, s))
        }
        CurveKind::Circle {
            centre,
            radius,
            inward,
        } => {
            let r = [p[0] - centre[0], p[1] - centre[1]];
            let rho = (r[0] * r[0] + r[1] * r[1]).sqrt();
            if rho < 1e-14 * radius {
                let per = 2.0 * PI * radius;
                return Err(GeometryError::AmbiguousProjection {
                    first: 0.0,
                    second: 0.5 * per,
                });
            }
            let th = r[1].atan2(r[0]).rem_euclid(2.0 * PI);
            let s = if *inward { th * radius } else { (2.0 * PI - th).rem_euclid(2.0 * PI) * radius };
            let d = if *inward { radius - rho } else { rho - radius };
            Ok((d, s))
        }
        CurveKind::Parametric { period, .. } => project_parametric(curve, *period, p),
    }
}

fn project_parametric(curve: &EmbeddedCurve, period: f64, p: [f64; 2]) -> Result<(f64, f64), GeometryError> {
    let n = 512;
    let d2 = |s: f64| {
        let q = curve.point(s);
        (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
    };
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        let s0 = period * i as f64 / n as f64;
        let (a, b, c) = (d2(s0 - period / n as f64), d2(s0), d2(s0 + period / n as f64));
        if b <= a && b <= c {
            // golden section on the bracket
            let (mut lo, mut hi) = (s0 - period / n as f64, s0 + period / n as f64);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..100 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if d2(m1) < d2(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let s = 0.5 * (lo + hi);
            cands.push((d2(s), s.rem_euclid(period)));
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (best, s) = cands[0];
    if let Some(&(second, s2)) = cands.get(1) {
        let gap = (s - s2).abs().min(period - (s - s2).abs());
        if (second.sqrt() - best.sqrt()).abs() < 1e-10 && gap > 1e-6 {
            return Err(GeometryError::AmbiguousProjection { first: s, second: s2 });
        }
    }
    let q = curve.point(s);
    let nu = curve.normal(s);
    let d = (p[0] - q[0]) * nu[0] + (p[1] - q[1]) * nu[1];
    Ok((d, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let g = HalfGrid::build(1, Shape::HalfRectangle, 0.25).unwrap();
        assert_eq!(g.len(), 32);
        assert_eq!(g.sigma_faces().count(), 8);
        let g = HalfGrid::build(2, Shape::HalfRectangle, 0.125).unwrap();
        assert_eq!(g.len(), 16 * 16 * 8);
        let d = HalfGrid::build(1, Shape::HalfDisk, 0.25).unwrap();
        assert!(d.centers.iter().all(|c| c[0] * c[0] + c[1] * c[1] <= 1.0));
        assert!(d.len() < 32);
    }

    #[test]
    fn spacing_validated() {
        assert!(HalfGrid::build(1, Shape::HalfRectangle, 0.3).is_err());
        assert!(HalfGrid::build(3, Shape::HalfRectangle, 0.25).is_err());
    }

    #[test]
    fn neighbours_and_faces() {
        let g = HalfGrid::build(1, Shape::HalfRectangle, 0.25).unwrap();
        let c = g.cell_at([0, 0, 0]).unwrap();
        assert_eq!(g.neighbor(c, 0, -1), None);
        assert_eq!(g.neighbor(c, 1, -1), None);
        assert_eq!(g.neighbor(c, 0, 1), g.cell_at([1, 0, 0]));
        // 8 sigma + 8 top + 2 * 4 sides
        assert_eq!(g.boundary_faces.len(), 24);
        assert!(g.sigma_faces().all(|f| f.midpoint[1] == 0.0));
    }

    #[test]
    fn fermi_examples() {
        let line = EmbeddedCurve::line([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(fermi_mu(&line, 0.3, 0.7).unwrap(), 1.0);
        let circ = EmbeddedCurve::circle([0.0, 0.0], 2.0, true);
        assert!((fermi_mu(&circ, 1.1, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(fermi_mu(&circ, 0.0, 2.0), Err(GeometryError::ChartViolation { .. })));
    }

    #[test]
    fn mean_curvature_examples() {
        let circ = EmbeddedCurve::circle([0.0, 0.0], 2.0, true);
        let (h0, _) = mean_curvature_check(&circ, 0.2, 0.0).unwrap();
        assert!((h0 - 0.5).abs() < 1e-15);
        let (h, res) = mean_curvature_check(&circ, 0.2, 0.5).unwrap();
        assert!((h - 2.0 / 3.0).abs() < 1e-15);
        assert!(res < 1e-6);
        let line = EmbeddedCurve::line([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(mean_curvature_check(&line, 0.0, 0.3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn distance_examples() {
        let c = EmbeddedCurve::circle([0.0, 0.0], 1.0, true);
        let (d, _) = signed_distance(&c, [0.0, 0.5]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let (d, s) = signed_distance(&c, [0.0, 1.0]).unwrap();
        assert!(d.abs() < 1e-15);
        let q = c.point(s);
        assert!((q[0]).abs() < 1e-12 && (q[1] - 1.0).abs() < 1e-12);
        let line = EmbeddedCurve::line([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(signed_distance(&line, [0.3, 0.2]).unwrap(), (0.2, 0.3));
        assert!(matches!(
            signed_distance(&c, [0.0, 0.0]),
            Err(GeometryError::AmbiguousProjection { .. })
        ));
    }

    #[test]
    fn parametric_matches_circle() {
        let r = 2.0;
        let p = EmbeddedCurve::parametric("c", 2.0 * PI * r, move |s| [r * (s / r).cos(), r * (s / r).sin()]);
        assert!((p.curvature(0.7) - 0.5).abs() < 1e-6);
        let (d, s) = signed_distance(&p, [1.2, 0.9]).unwrap();
        assert!((d - 0.5).abs() < 1e-9);
        assert!((s - r * 0.9f64.atan2(1.2)).abs() < 1e-6);
    }
}
