//! Isolating blocks: boundary classification, the transversality constant,
//! the nonlocal sup bound, relative homology of the block pair, and the
//! Morse-inequality forcing bound.
//!
//! A candidate block is a compact region whose boundary facets the kernel-free
//! field crosses transversally. [`classify_boundary`] samples each facet and
//! labels it ingress (field points outward, so profiles flow in) or egress,
//! recording the worst-case normal flux `c_perp`. [`nonlocal_sup_bound`]
//! estimates the sup norm of the kernel term over the block; when the ratio of
//! the two is below one ([`morse_iso_hypothesis`]), the chain-complex homology
//! is identified with the CW homology of the block relative to its egress
//! boundary, computed by [`relative_homology`]. [`forcing_bound`] turns those
//! ranks into a lower bound on the number of connecting orbits.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::Error;
use crate::floer::{format_state, ChainComplex};
use crate::gf2::Gf2Matrix;
use crate::kernel::spectral_norm;
use crate::system::System;
use crate::Result;

/// Normal fluxes smaller than this are reported as tangencies.
pub const TANGENCY_TOLERANCE: f64 = 1e-10;

/// Grid resolution per axis for the interior sup bound.
pub const SUP_GRID_PER_AXIS: usize = 50;

/// Candidate block geometry. Facets are indexed as documented per variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BlockGeometry {
    /// `[a, b]` in one dimension. Facet 0 is `{a}`, facet 1 is `{b}`.
    Interval { a: f64, b: f64 },
    /// Closed ball of the given radius centred at the origin. One spherical
    /// facet for `dim >= 2`; two point facets (as for an interval) in
    /// dimension one. Sampling supports `dim <= 3`.
    Ball { dim: usize, radius: f64 },
    /// Convex polygon in the plane. Facet `i` is the edge from vertex `i` to
    /// vertex `i + 1` (cyclically); the vertex list is normalised to
    /// counterclockwise order.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Planar region `|x| <= R`, `|y| <= R^2 - x^2` bounded by two parabolic
    /// arcs meeting at `(+-R, 0)`. Facet 0 is the upper arc, facet 1 the
    /// lower.
    Lens { radius: f64 },
}

impl BlockGeometry {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            BlockGeometry::Interval { .. } => 1,
            BlockGeometry::Ball { dim, .. } => *dim,
            BlockGeometry::Polygon { .. } | BlockGeometry::Lens { .. } => 2,
        }
    }

    /// Checks the geometric preconditions and normalises the polygon
    /// orientation to counterclockwise.
    pub fn validate(&mut self) -> Result<()> {
        match self {
            BlockGeometry::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a < *b) {
                    return Err(Error::Precondition(format!(
                        "interval needs a < b, got [{a}, {b}]"
                    )));
                }
            }
            BlockGeometry::Ball { dim, radius } => {
                if *dim == 0 || *dim > 3 {
                    return Err(Error::Precondition(format!(
                        "ball sampling supports dimensions 1 to 3, got {dim}"
                    )));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Precondition(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
            BlockGeometry::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::Precondition(format!(
                        "polygon needs at least 3 vertices, got {}",
                        vertices.len()
                    )));
                }
                let n = vertices.len();
                let area: f64 = (0..n)
                    .map(|i| {
                        let [x0, y0] = vertices[i];
                        let [x1, y1] = vertices[(i + 1) % n];
                        x0 * y1 - x1 * y0
                    })
                    .sum();
                if area < 0.0 {
                    vertices.reverse();
                }
                for i in 0..n {
                    let [x0, y0] = vertices[i];
                    let [x1, y1] = vertices[(i + 1) % n];
                    let [x2, y2] = vertices[(i + 2) % n];
                    let cross = (x1 - x0) * (y2 - y1) - (y1 - y0) * (x2 - x1);
                    if cross <= 0.0 {
                        return Err(Error::Precondition(format!(
                            "polygon is not strictly convex at vertex {}",
                            (i + 1) % n
                        )));
                    }
                }
            }
            BlockGeometry::Lens { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Precondition(format!(
                        "lens radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of boundary facets.
    pub fn facet_count(&self) -> usize {
        match self {
            BlockGeometry::Interval { .. } => 2,
            BlockGeometry::Ball { dim: 1, .. } => 2,
            BlockGeometry::Ball { .. } => 1,
            BlockGeometry::Polygon { vertices } => vertices.len(),
            BlockGeometry::Lens { .. } => 2,
        }
    }

    /// Sample points and outward unit normals on one facet. Corner points are
    /// avoided by sampling at fractional offsets. Point facets return a
    /// single sample regardless of `m`.
    fn facet_samples(&self, facet: usize, m: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
        let m = m.max(1);
        match self {
            BlockGeometry::Interval { a, b } => {
                let (x, sign) = if facet == 0 { (*a, -1.0) } else { (*b, 1.0) };
                vec![(
                    DVector::from_element(1, x),
                    DVector::from_element(1, sign),
                )]
            }
            BlockGeometry::Ball { dim: 1, radius } => {
                let sign = if facet == 0 { -1.0 } else { 1.0 };
                vec![(
                    DVector::from_element(1, sign * radius),
                    DVector::from_element(1, sign),
                )]
            }
            BlockGeometry::Ball { dim: 2, radius } => (0..m)
                .map(|j| {
                    let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                    let normal = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
                    (&normal * *radius, normal)
                })
                .collect(),
            BlockGeometry::Ball { radius, .. } => {
                // Fibonacci sphere: near-uniform samples without poles.
                let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
                (0..m)
                    .map(|j| {
                        let z = 1.0 - 2.0 * (j as f64 + 0.5) / m as f64;
                        let r = (1.0 - z * z).sqrt();
                        let phi = golden * j as f64;
                        let normal = DVector::from_column_slice(&[
                            r * phi.cos(),
                            r * phi.sin(),
                            z,
                        ]);
                        (&normal * *radius, normal)
                    })
                    .collect()
            }
            BlockGeometry::Polygon { vertices } => {
                let n = vertices.len();
                let [x0, y0] = vertices[facet];
                let [x1, y1] = vertices[(facet + 1) % n];
                let (ex, ey) = (x1 - x0, y1 - y0);
                let len = ex.hypot(ey);
                let normal = DVector::from_column_slice(&[ey / len, -ex / len]);
                (0..m)
                    .map(|j| {
                        let t = (j as f64 + 0.5) / m as f64;
                        let p =
                            DVector::from_column_slice(&[x0 + t * ex, y0 + t * ey]);
                        (p, normal.clone())
                    })
                    .collect()
            }
            BlockGeometry::Lens { radius } => {
                let sign = if facet == 0 { 1.0 } else { -1.0 };
                (0..m)
                    .map(|j| {
                        let x = -radius + 2.0 * radius * (j as f64 + 0.5) / m as f64;
                        let y = sign * (radius * radius - x * x);
                        let scale = (4.0 * x * x + 1.0).sqrt();
                        let normal = DVector::from_column_slice(&[
                            2.0 * x / scale,
                            sign / scale,
                        ]);
                        (DVector::from_column_slice(&[x, y]), normal)
                    })
                    .collect()
            }
        }
    }

    /// Axis-aligned bounding box as `(lower, upper)` per axis.
    fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            BlockGeometry::Interval { a, b } => vec![(*a, *b)],
            BlockGeometry::Ball { dim, radius } => vec![(-radius, *radius); *dim],
            BlockGeometry::Polygon { vertices } => {
                let fold = |pick: fn(&[f64; 2]) -> f64, init: f64, f: fn(f64, f64) -> f64| {
                    vertices.iter().map(pick).fold(init, f)
                };
                vec![
                    (
                        fold(|v| v[0], f64::INFINITY, f64::min),
                        fold(|v| v[0], f64::NEG_INFINITY, f64::max),
                    ),
                    (
                        fold(|v| v[1], f64::INFINITY, f64::min),
                        fold(|v| v[1], f64::NEG_INFINITY, f64::max),
                    ),
                ]
            }
            BlockGeometry::Lens { radius } => vec![
                (-radius, *radius),
                (-radius * radius, radius * radius),
            ],
        }
    }

    /// Whether `p` lies in the closed block.
    pub fn contains(&self, p: &DVector<f64>) -> bool {
        match self {
            BlockGeometry::Interval { a, b } => *a <= p[0] && p[0] <= *b,
            BlockGeometry::Ball { radius, .. } => p.norm() <= *radius,
            BlockGeometry::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let [x0, y0] = vertices[i];
                    let [x1, y1] = vertices[(i + 1) % n];
                    (x1 - x0) * (p[1] - y0) - (y1 - y0) * (p[0] - x0) >= 0.0
                })
            }
            BlockGeometry::Lens { radius } => {
                p[0].abs() <= *radius && p[1].abs() <= radius * radius - p[0] * p[0]
            }
        }
    }

    /// Interior sample: a uniform bounding-box grid filtered to the block.
    fn membership_grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        let bounds = self.bounding_box();
        let dim = bounds.len();
        let steps = per_axis.max(2);
        let mut points = Vec::new();
        let total = steps.pow(dim as u32);
        for flat in 0..total {
            let mut index = flat;
            let mut p = DVector::zeros(dim);
            for (axis, &(lo, hi)) in bounds.iter().enumerate() {
                let k = index % steps;
                index /= steps;
                p[axis] = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
            }
            if self.contains(&p) {
                points.push(p);
            }
        }
        points
    }
}

/// Transversality class of one facet under the kernel-free field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetLabel {
    /// Field points outward; profile trajectories enter the block.
    Ingress,
    /// Field points inward; profile trajectories leave the block.
    Egress,
}

/// A classified isolating block.
#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub geometry: BlockGeometry,
    /// One label per facet, in facet order.
    pub labels: Vec<FacetLabel>,
    /// Smallest absolute normal flux of the kernel-free field over all
    /// boundary samples.
    pub c_perp: f64,
    /// Sup bound on the kernel term, once computed.
    pub nonlocal_sup: Option<f64>,
}

/// Samples each facet of `geometry` and labels it by the sign of
/// `s = Phi_0 . nu` where `Phi_0` is the kernel-free part of the field and
/// `nu` the outward unit normal: positive means ingress (trajectories of
/// `u' = -Phi` enter), negative egress. `c_perp` is the minimum of `|s|`.
///
/// The coupling strength of `sys` is irrelevant here: only the kernel-free
/// field enters. Errors: a sign change within a facet means the set is not an
/// isolating block; `|s| <` [`TANGENCY_TOLERANCE`] at any sample is a
/// tangency.
pub fn classify_boundary(
    sys: &System,
    mut geometry: BlockGeometry,
    samples_per_facet: usize,
) -> Result<Block> {
    geometry.validate()?;
    if sys.dim() != geometry.dim() {
        return Err(Error::Precondition(format!(
            "system dimension {} does not match block dimension {}",
            sys.dim(),
            geometry.dim()
        )));
    }
    let mut labels = Vec::with_capacity(geometry.facet_count());
    let mut c_perp = f64::INFINITY;
    for facet in 0..geometry.facet_count() {
        let mut label = None;
        for (point, normal) in geometry.facet_samples(facet, samples_per_facet) {
            let s = sys.local_field(&point)?.dot(&normal);
            if s.abs() < TANGENCY_TOLERANCE {
                return Err(Error::Tangency {
                    facet,
                    location: format_state(point.as_slice()),
                    flux: s,
                });
            }
            let here = if s > 0.0 {
                FacetLabel::Ingress
            } else {
                FacetLabel::Egress
            };
            if *label.get_or_insert(here) != here {
                return Err(Error::NotIsolatingBlock {
                    facet,
                    location: format_state(point.as_slice()),
                });
            }
            c_perp = c_perp.min(s.abs());
        }
        labels.push(label.expect("facet sampling is never empty"));
    }
    Ok(Block {
        geometry,
        labels,
        c_perp,
        nonlocal_sup: None,
    })
}

/// Sup-norm bound on the kernel term over the block:
/// `|beta| * C * sup ||G^{-1} DS^T||_2 * sup |S|_2`, where `C` is the
/// operator-norm mass of the kernel and both sups run over a
/// [`SUP_GRID_PER_AXIS`]-per-axis grid filtered to the block.
pub fn nonlocal_sup_bound(sys: &System, geometry: &BlockGeometry) -> Result<f64> {
    let mut geometry = geometry.clone();
    geometry.validate()?;
    if sys.dim() != geometry.dim() {
        return Err(Error::Precondition(format!(
            "system dimension {} does not match block dimension {}",
            sys.dim(),
            geometry.dim()
        )));
    }
    let mut sup_pullback = 0.0f64;
    let mut sup_coupling = 0.0f64;
    for p in geometry.membership_grid(SUP_GRID_PER_AXIS) {
        sup_pullback = sup_pullback.max(spectral_norm(&sys.coupling_pullback(&p)?));
        sup_coupling = sup_coupling.max(sys.coupling_map().norm(&p));
    }
    Ok(sys.coupling().abs() * sys.kernel().mass_operator_norm() * sup_pullback * sup_coupling)
}

/// Compares the nonlocal bound against the transversality constant. Returns
/// `(pass, ratio)` with `ratio = nonlocal_bound / c_perp`; the block-pair
/// homology identification applies when the ratio is below one.
pub fn morse_iso_hypothesis(block: &Block, nonlocal_bound: f64) -> Result<(bool, f64)> {
    if block.c_perp <= 0.0 {
        return Err(Error::Precondition(format!(
            "block transversality constant must be positive, got {}",
            block.c_perp
        )));
    }
    let ratio = nonlocal_bound / block.c_perp;
    Ok((ratio < 1.0, ratio))
}

/// Outcome of sweeping a nested family of blocks.
#[derive(Debug, Clone, Serialize)]
pub struct StabilisingScan {
    /// `(R, ratio)` per family member, in input order.
    pub ratios: Vec<(f64, f64)>,
    /// Least `R` whose ratio is below one, if any.
    pub threshold_radius: Option<f64>,
    /// Whether the ratio decreased from the first to the last member.
    pub decreasing: bool,
}

/// Classifies every member of a nested family `(R, geometry)` and evaluates
/// the hypothesis ratio at each. The caller is responsible for the family
/// being monotone (each block containing the previous).
pub fn stabilising_scan(
    sys: &System,
    family: &[(f64, BlockGeometry)],
    samples_per_facet: usize,
) -> Result<StabilisingScan> {
    let mut ratios = Vec::with_capacity(family.len());
    let mut threshold_radius = None;
    for (radius, geometry) in family {
        let block = classify_boundary(sys, geometry.clone(), samples_per_facet)?;
        let bound = nonlocal_sup_bound(sys, geometry)?;
        let (pass, ratio) = morse_iso_hypothesis(&block, bound)?;
        if pass && threshold_radius.is_none() {
            threshold_radius = Some(*radius);
        }
        ratios.push((*radius, ratio));
    }
    let decreasing = match (ratios.first(), ratios.last()) {
        (Some(first), Some(last)) if ratios.len() > 1 => last.1 < first.1,
        _ => false,
    };
    Ok(StabilisingScan {
        ratios,
        threshold_radius,
        decreasing,
    })
}

/// GF(2) homology of the block relative to its egress boundary, from the
/// quotient CW complex: the top cell always survives, an edge survives iff
/// ingress, and a vertex survives iff every facet touching it is ingress.
/// Balls in dimension two and higher use the closed-form table (full egress:
/// rank one in the top degree; full ingress: rank one in degree zero).
/// Degrees with rank zero are omitted.
pub fn relative_homology(block: &Block) -> Result<BTreeMap<usize, usize>> {
    let ranks = match &block.geometry {
        BlockGeometry::Interval { .. } | BlockGeometry::Ball { dim: 1, .. } => {
            segment_ranks(&block.labels)?
        }
        BlockGeometry::Ball { dim, .. } => match block.labels[0] {
            FacetLabel::Egress => BTreeMap::from([(*dim, 1)]),
            FacetLabel::Ingress => BTreeMap::from([(0, 1)]),
        },
        BlockGeometry::Polygon { vertices } => {
            let n = vertices.len();
            // Edge i runs from vertex i to vertex i + 1; vertex i touches
            // edges i - 1 and i.
            let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            planar_ranks(&block.labels, &edges, n)?
        }
        BlockGeometry::Lens { .. } => {
            // Two arcs, both running between the corners (R, 0) and (-R, 0).
            planar_ranks(&block.labels, &[(0, 1), (0, 1)], 2)?
        }
    };
    Ok(ranks.into_iter().filter(|&(_, r)| r > 0).collect())
}

/// Interval or one-dimensional ball: one 1-cell, plus each endpoint that is
/// not egress.
fn segment_ranks(labels: &[FacetLabel]) -> Result<BTreeMap<usize, usize>> {
    let survivors: Vec<usize> = (0..2)
        .filter(|&i| labels[i] == FacetLabel::Ingress)
        .collect();
    let cells = BTreeMap::from([
        (0, survivors.iter().map(|i| format!("v{i}")).collect()),
        (1, vec!["segment".to_string()]),
    ]);
    let mut d1 = Gf2Matrix::zeros(survivors.len(), 1);
    for row in 0..survivors.len() {
        d1.set(row, 0, true);
    }
    ChainComplex::from_cells(cells, BTreeMap::from([(1, d1)]))?.homology_ranks()
}

/// Planar block with one 2-cell: `edges[i]` lists the endpoint vertices of
/// facet `i` among `num_vertices` corners.
fn planar_ranks(
    labels: &[FacetLabel],
    edges: &[(usize, usize)],
    num_vertices: usize,
) -> Result<BTreeMap<usize, usize>> {
    let ingress: Vec<usize> = (0..edges.len())
        .filter(|&i| labels[i] == FacetLabel::Ingress)
        .collect();
    let vertex_survives = |v: usize| {
        edges
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a == v || b == v)
            .all(|(i, _)| labels[i] == FacetLabel::Ingress)
    };
    let vertices: Vec<usize> = (0..num_vertices).filter(|&v| vertex_survives(v)).collect();

    let cells = BTreeMap::from([
        (0, vertices.iter().map(|v| format!("v{v}")).collect()),
        (1, ingress.iter().map(|e| format!("e{e}")).collect::<Vec<_>>()),
        (2, vec!["face".to_string()]),
    ]);
    let mut d2 = Gf2Matrix::zeros(ingress.len(), 1);
    for row in 0..ingress.len() {
        d2.set(row, 0, true);
    }
    let mut d1 = Gf2Matrix::zeros(vertices.len(), ingress.len());
    for (col, &e) in ingress.iter().enumerate() {
        let (a, b) = edges[e];
        for v in [a, b] {
            if let Some(row) = vertices.iter().position(|&w| w == v) {
                d1.toggle(row, col);
            }
        }
    }
    ChainComplex::from_cells(cells, BTreeMap::from([(1, d1), (2, d2)]))?.homology_ranks()
}

/// The block family for the planar harmonic potentials: the lens for the
/// first harmonic, the `2k`-gon with vertices at polar angles `i pi / k`
/// otherwise.
pub fn harmonic_block(harmonic: usize, radius: f64) -> BlockGeometry {
    if harmonic <= 1 {
        return BlockGeometry::Lens { radius };
    }
    let vertices = (0..2 * harmonic)
        .map(|i| {
            let angle = i as f64 * std::f64::consts::PI / harmonic as f64;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect();
    BlockGeometry::Polygon { vertices }
}

/// Lower bound forced by the Morse inequality: with `num_constants`
/// hyperbolic constant states and the given homology ranks, at least
/// `max(0, num_constants - total rank)` connecting orbits exist in the
/// weighted count (two per genuine heteroclinic, one per generalised one).
pub fn forcing_bound(num_constants: usize, ranks: &BTreeMap<usize, usize>) -> usize {
    num_constants.saturating_sub(ranks.values().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy;
    use crate::grid::{Grid, Profile};
    use crate::system::builtin::{double_well, polar, saturating};
    use proptest::prelude::*;

    #[test]
    fn double_well_interval_is_fully_ingress_with_exact_constant() {
        let sys = double_well(0.1, 0.0, 0.0);
        let geometry = BlockGeometry::Interval { a: -2.0, b: 2.0 };
        let block = classify_boundary(&sys, geometry.clone(), 10).unwrap();
        assert_eq!(block.labels, vec![FacetLabel::Ingress, FacetLabel::Ingress]);
        assert!((block.c_perp - 6.0).abs() <= 6.0 * 1e-12);
        assert_eq!(
            relative_homology(&block).unwrap(),
            BTreeMap::from([(0, 1)])
        );

        let small = nonlocal_sup_bound(&double_well(0.1, 0.0, 1.0), &geometry).unwrap();
        assert!((small - 0.2).abs() <= 1e-12);
        let (pass, ratio) = morse_iso_hypothesis(&block, small).unwrap();
        assert!(pass && (ratio - 0.2 / 6.0).abs() <= 1e-12);

        let large = nonlocal_sup_bound(&double_well(5.0, 0.0, 1.0), &geometry).unwrap();
        assert!((large - 10.0).abs() <= 1e-12);
        let (pass, ratio) = morse_iso_hypothesis(&block, large).unwrap();
        assert!(!pass && ratio > 1.0);
    }

    #[test]
    fn saturating_ball_gives_exact_egress_constant_and_sphere_homology() {
        for dim in 1..=3 {
            let sys = saturating(2.0, dim);
            let geometry = BlockGeometry::Ball { dim, radius: 5.0 };
            let block = classify_boundary(&sys, geometry, 200).unwrap();
            assert!(block.labels.iter().all(|&l| l == FacetLabel::Egress));
            assert!((block.c_perp - 2.5).abs() <= 2.5 * 1e-12);
            assert_eq!(
                relative_homology(&block).unwrap(),
                BTreeMap::from([(dim, 1)])
            );
        }
    }

    #[test]
    fn geometry_validation_rejects_bad_input() {
        let sys = saturating(2.0, 2);
        let four_d = BlockGeometry::Ball { dim: 4, radius: 1.0 };
        assert!(matches!(
            classify_boundary(&saturating(2.0, 2), four_d, 10),
            Err(Error::Precondition(m)) if m.contains("dimensions 1 to 3")
        ));
        assert!(matches!(
            classify_boundary(&sys, BlockGeometry::Ball { dim: 3, radius: 1.0 }, 10),
            Err(Error::Precondition(m)) if m.contains("does not match")
        ));
        assert!(matches!(
            classify_boundary(&sys, BlockGeometry::Interval { a: 2.0, b: -2.0 }, 10),
            Err(Error::Precondition(m)) if m.contains("a < b")
        ));
        let pinched = BlockGeometry::Polygon {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, 0.5]],
        };
        assert!(matches!(
            classify_boundary(&sys, pinched, 10),
            Err(Error::Precondition(m)) if m.contains("convex")
        ));
    }

    #[test]
    fn tangency_and_sign_change_are_reported() {
        // Right endpoint sits on a zero of the field.
        let sys = double_well(0.1, 0.0, 0.0);
        assert!(matches!(
            classify_boundary(&sys, BlockGeometry::Interval { a: -2.0, b: 1.0 }, 10),
            Err(Error::Tangency { facet: 1, .. })
        ));
        // A square straddling the sign change of one component of the
        // gradient has a non-transverse edge.
        let saddle = polar(2, 2, 0.0, 0.0);
        let square = BlockGeometry::Polygon {
            vertices: vec![[1.0, -0.8], [2.0, -0.8], [2.0, 0.8], [1.0, 0.8]],
        };
        assert!(matches!(
            classify_boundary(&saddle, square, 40),
            Err(Error::NotIsolatingBlock { .. })
        ));
    }

    #[test]
    fn harmonic_blocks_alternate_and_satisfy_rank_law() {
        for k in 1..=4usize {
            let sys = polar(k as u32, 4, 0.05, 1.0);
            let block = classify_boundary(&sys, harmonic_block(k, 1.0), 50).unwrap();
            for (i, &label) in block.labels.iter().enumerate() {
                let expected = if i % 2 == 0 {
                    FacetLabel::Ingress
                } else {
                    FacetLabel::Egress
                };
                assert_eq!(label, expected, "facet {i} of the k={k} block");
            }
            assert!(block.c_perp > 0.0);
            let ranks = relative_homology(&block).unwrap();
            assert_eq!(ranks.get(&1).copied().unwrap_or(0), k - 1, "k = {k}");
            assert!(ranks.keys().all(|&d| d <= 2 && (d == 1 || ranks[&d] == 0)));
        }
    }

    #[test]
    fn uniform_label_homology_matches_disc_and_point() {
        // Inward radial field on a square: every edge egress, so the pair
        // collapses to a relative 2-sphere.
        let sys = saturating(1.0, 2);
        let square = BlockGeometry::Polygon {
            vertices: vec![[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]],
        };
        let block = classify_boundary(&sys, square.clone(), 30).unwrap();
        assert!(block.labels.iter().all(|&l| l == FacetLabel::Egress));
        assert_eq!(relative_homology(&block).unwrap(), BTreeMap::from([(2, 1)]));

        // Clockwise vertex order is normalised, result unchanged.
        let mut reversed_vertices = match &square {
            BlockGeometry::Polygon { vertices } => vertices.clone(),
            _ => unreachable!(),
        };
        reversed_vertices.reverse();
        let clockwise = BlockGeometry::Polygon {
            vertices: reversed_vertices,
        };
        let reversed = classify_boundary(&sys, clockwise, 30).unwrap();
        assert_eq!(relative_homology(&reversed).unwrap(), BTreeMap::from([(2, 1)]));

        // All-ingress blocks have the homology of a point.
        let ingress_block = Block {
            geometry: square,
            labels: vec![FacetLabel::Ingress; 4],
            c_perp: 1.0,
            nonlocal_sup: None,
        };
        assert_eq!(
            relative_homology(&ingress_block).unwrap(),
            BTreeMap::from([(0, 1)])
        );
    }

    #[test]
    fn scan_finds_threshold_or_reports_none() {
        let sys = saturating(2.0, 2);
        let family: Vec<(f64, BlockGeometry)> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&r| (r, BlockGeometry::Ball { dim: 2, radius: r }))
            .collect();
        let scan = stabilising_scan(&sys, &family, 60).unwrap();
        assert!(scan.decreasing);
        assert!(scan.threshold_radius.is_some());
        let last = scan.ratios.last().unwrap().1;
        let first = scan.ratios.first().unwrap().1;
        assert!(last < 0.5 * first);

        // A coupling too strong for every block in range: reported honestly.
        let strong = double_well(5.0, 0.0, 1.0);
        let family: Vec<(f64, BlockGeometry)> = [1.5, 2.0]
            .iter()
            .map(|&r| (r, BlockGeometry::Interval { a: -r, b: r }))
            .collect();
        let scan = stabilising_scan(&strong, &family, 4).unwrap();
        assert!(scan.threshold_radius.is_none());
        assert!(scan.ratios.iter().all(|&(_, ratio)| ratio > 1.0));
    }

    #[test]
    fn tangent_profile_residual_dominated_by_c_perp() {
        let sys = double_well(0.1, 0.0, 0.0);
        let block =
            classify_boundary(&sys, BlockGeometry::Interval { a: -2.0, b: 2.0 }, 10).unwrap();
        let grid = Grid::new(5.0, 11).unwrap();
        for boundary in [-2.0, 2.0] {
            let flat = Profile::sample(grid, 1, |_| DVector::from_element(1, boundary));
            let residual = energy::residual(&sys, &flat).unwrap();
            assert!(residual >= block.c_perp * (1.0 - 1e-6));
        }
    }

    #[test]
    fn forcing_bound_arithmetic() {
        assert_eq!(forcing_bound(3, &BTreeMap::from([(0, 1)])), 2);
        assert_eq!(forcing_bound(2, &BTreeMap::from([(0, 1), (1, 2)])), 0);
        assert_eq!(forcing_bound(3, &BTreeMap::from([(1, 2)])), 1);
        assert_eq!(forcing_bound(5, &BTreeMap::new()), 5);
        assert_eq!(forcing_bound(0, &BTreeMap::from([(0, 4)])), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn rank_law_holds_across_radii(k in 2usize..5, radius in 0.5f64..3.0) {
            let sys = polar(k as u32, 4, 0.01, 1.0);
            let block = classify_boundary(&sys, harmonic_block(k, radius), 20).unwrap();
            let ranks = relative_homology(&block).unwrap();
            prop_assert_eq!(ranks.get(&1).copied().unwrap_or(0), k - 1);
            prop_assert!(ranks.keys().all(|&d| d <= 2));
        }
    }
}
