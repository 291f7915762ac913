//! Finite boxes of Z^d, mesoscopic energy windows and box partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a box was generated from a real cube `[-L + c, L - c]^d + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxProvenance {
    pub half_width: f64,
    pub offset: Vec<f64>,
    pub trim: f64,
}

/// An axis-aligned box of lattice sites with inclusive per-axis bounds.
///
/// Sites are enumerated in row-major order: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeBox {
    lower: Vec<i64>,
    upper: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<BoxProvenance>,
}

impl LatticeBox {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("dimension", "must be at least 1"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(k) = (0..lower.len()).find(|&k| lower[k] > upper[k]) {
            return Err(Error::EmptyDomain(format!(
                "axis {k} has lower bound {} above upper bound {}",
                lower[k], upper[k]
            )));
        }
        Ok(Self {
            lower,
            upper,
            provenance: None,
        })
    }

    /// The cube `[-L, L]^d ∩ Z^d`.
    pub fn centered(half_width: i64, dimension: usize) -> Result<Self> {
        if half_width < 0 {
            return Err(Error::invalid("L", "must be non-negative"));
        }
        let mut b = Self::new(vec![-half_width; dimension], vec![half_width; dimension])?;
        b.provenance = Some(BoxProvenance {
            half_width: half_width as f64,
            offset: vec![0.0; dimension],
            trim: 0.0,
        });
        Ok(b)
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn provenance(&self) -> Option<&BoxProvenance> {
        self.provenance.as_ref()
    }

    /// Number of sites along `axis`.
    pub fn extent(&self, axis: usize) -> usize {
        (self.upper[axis] - self.lower[axis] + 1) as usize
    }

    pub fn extents(&self) -> Vec<usize> {
        (0..self.dimension()).map(|k| self.extent(k)).collect()
    }

    pub fn site_count(&self) -> usize {
        self.extents().iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dimension();
        let mut s = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.extent(k + 1);
        }
        s
    }

    pub fn contains_site(&self, coords: &[i64]) -> bool {
        coords.len() == self.dimension()
            && coords
                .iter()
                .enumerate()
                .all(|(k, &c)| c >= self.lower[k] && c <= self.upper[k])
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.dimension() == self.dimension()
            && (0..self.dimension())
                .all(|k| other.lower[k] >= self.lower[k] && other.upper[k] <= self.upper[k])
    }

    pub fn index_of(&self, coords: &[i64]) -> Option<usize> {
        if !self.contains_site(coords) {
            return None;
        }
        let strides = self.strides();
        Some(
            coords
                .iter()
                .enumerate()
                .map(|(k, &c)| (c - self.lower[k]) as usize * strides[k])
                .sum(),
        )
    }

    pub fn site(&self, index: usize) -> Vec<i64> {
        let d = self.dimension();
        let mut coords = vec![0i64; d];
        let mut rem = index;
        for k in (0..d).rev() {
            let e = self.extent(k);
            coords[k] = self.lower[k] + (rem % e) as i64;
            rem /= e;
        }
        coords
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.site_count()).map(move |i| self.site(i))
    }

    /// Sup-norm distance from a site to the box's outer faces; face sites
    /// have distance 0.
    pub fn face_distance(&self, coords: &[i64]) -> i64 {
        (0..self.dimension())
            .map(|k| (coords[k] - self.lower[k]).min(self.upper[k] - coords[k]))
            .min()
            .unwrap_or(0)
    }

    /// Inner boundary: sites with a nearest neighbour outside the box.
    pub fn is_boundary_site(&self, coords: &[i64]) -> bool {
        self.contains_site(coords) && self.face_distance(coords) == 0
    }

    pub(crate) fn with_provenance(mut self, p: BoxProvenance) -> Self {
        self.provenance = Some(p);
        self
    }
}

impl std::fmt::Display for LatticeBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = (0..self.dimension())
            .map(|k| format!("[{},{}]", self.lower[k], self.upper[k]))
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Integer points of `([-L + c, L - c]^d + a) ∩ Z^d`.
pub fn make_box(half_width: f64, dimension: usize, offset: &[f64], trim: f64) -> Result<LatticeBox> {
    if dimension == 0 {
        return Err(Error::invalid("d", "must be positive"));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::invalid("L", "must be a positive finite number"));
    }
    if !(trim >= 0.0) {
        return Err(Error::invalid("c_L", "must be non-negative"));
    }
    if offset.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            got: offset.len(),
        });
    }
    if half_width - trim <= 0.5 {
        return Err(Error::EmptyDomain(format!(
            "trimmed half width L - c_L = {} leaves no guaranteed lattice point",
            half_width - trim
        )));
    }
    let lower: Vec<i64> = offset
        .iter()
        .map(|a| (-half_width + trim + a).ceil() as i64)
        .collect();
    let upper: Vec<i64> = offset
        .iter()
        .map(|a| (half_width - trim + a).floor() as i64)
        .collect();
    Ok(LatticeBox::new(lower, upper)?.with_provenance(BoxProvenance {
        half_width,
        offset: offset.to_vec(),
        trim,
    }))
}

/// The energy window `(E + a/V^η, E + b/V^η)` at volume `V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MesoWindow {
    pub energy: f64,
    pub eta: f64,
    pub a: f64,
    pub b: f64,
}

impl MesoWindow {
    pub fn new(energy: f64, eta: f64, a: f64, b: f64) -> Result<Self> {
        let w = Self { energy, eta, a, b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.energy.is_finite() {
            return Err(Error::invalid("window.energy", "must be finite"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid("window.eta", format!("{} is outside (0, 1]", self.eta)));
        }
        if !(self.a < 0.0 && self.b > 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::invalid(
                "window.a/b",
                format!("need a < 0 < b, got a = {}, b = {}", self.a, self.b),
            ));
        }
        Ok(())
    }

    pub fn interval(&self, volume: usize) -> (f64, f64) {
        let scale = (volume.max(1) as f64).powf(-self.eta);
        (self.energy + self.a * scale, self.energy + self.b * scale)
    }

    pub fn width(&self, volume: usize) -> f64 {
        let (lo, hi) = self.interval(volume);
        hi - lo
    }
}

/// Same as [`MesoWindow::interval`].
pub fn window_interval(w: &MesoWindow, volume: usize) -> (f64, f64) {
    w.interval(volume)
}

/// A tiling of a parent box into sub-boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPartition {
    pub parent: LatticeBox,
    pub beta: f64,
    pub cells: Vec<LatticeBox>,
    /// Cells lost to degenerate cuts.
    #[serde(default)]
    pub dropped: usize,
}

impl BoxPartition {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Number of intervals each axis of `parent` is cut into.
    pub fn intervals_per_axis(parent: &LatticeBox, beta: f64) -> Vec<usize> {
        (0..parent.dimension())
            .map(|k| intervals_for_edge(parent.extent(k) - 1, beta))
            .collect()
    }
}

fn intervals_for_edge(edge: usize, beta: f64) -> usize {
    if beta >= 1.0 {
        return 1;
    }
    ((edge as f64).powf(1.0 - beta).ceil() as usize).max(1)
}

/// Cut each axis of `parent` (real edge length `2L` = extent - 1) into
/// `⌈(2L)^(1-β)⌉` half-open real intervals starting at `lower - 1/2` and
/// assign every site to the interval that contains it.
///
/// `beta = 1` is accepted as the identity partition.
pub fn partition_box(parent: &LatticeBox, beta: f64) -> Result<BoxPartition> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("beta", format!("{beta} is outside (0, 1]")));
    }
    if let Some(k) = (0..parent.dimension()).find(|&k| parent.extent(k) < 3) {
        return Err(Error::invalid(
            "parent",
            format!("axis {k} has edge length {} < 2", parent.extent(k) as i64 - 1),
        ));
    }
    let mut axis_ranges: Vec<Vec<(i64, i64)>> = Vec::with_capacity(parent.dimension());
    let mut dropped_axis_cells = vec![0usize; parent.dimension()];
    for k in 0..parent.dimension() {
        let extent = parent.extent(k) as i64;
        let count = intervals_for_edge(parent.extent(k) - 1, beta) as i64;
        let mut ranges = Vec::with_capacity(count as usize);
        for m in 0..count {
            // site offset t belongs to interval m iff
            // m*extent/count - 1/2 <= t < (m+1)*extent/count - 1/2
            let first = ceil_div(2 * m * extent - count, 2 * count);
            let next = ceil_div(2 * (m + 1) * extent - count, 2 * count);
            let (lo, hi) = (first.max(0), (next - 1).min(extent - 1));
            if hi < lo {
                dropped_axis_cells[k] += 1;
                continue;
            }
            ranges.push((parent.lower[k] + lo, parent.lower[k] + hi));
        }
        axis_ranges.push(ranges);
    }
    let full: usize = (0..parent.dimension())
        .map(|k| axis_ranges[k].len() + dropped_axis_cells[k])
        .product();
    let mut cells = Vec::new();
    let mut idx = vec![0usize; parent.dimension()];
    'outer: loop {
        let lower: Vec<i64> = (0..idx.len()).map(|k| axis_ranges[k][idx[k]].0).collect();
        let upper: Vec<i64> = (0..idx.len()).map(|k| axis_ranges[k][idx[k]].1).collect();
        cells.push(LatticeBox::new(lower, upper)?);
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < axis_ranges[k].len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    let dropped = full - cells.len();
    if dropped > 0 {
        log::warn!("partition of {parent} with beta = {beta} dropped {dropped} empty cells");
    }
    Ok(BoxPartition {
        parent: parent.clone(),
        beta,
        cells,
        dropped,
    })
}

fn ceil_div(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0)
}

/// One level of the dyadic tree: every cell with the index of its parent
/// cell on the previous level (or 0 for the first level, whose parent is
/// the root).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub cells: Vec<LatticeBox>,
    pub parent_index: Vec<usize>,
}

/// Iterated β = 1/2 partitions used for small η.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub root: LatticeBox,
    pub eta: f64,
    /// The integer `j` with `1/2^j < η ≤ 1/2^(j-1)`.
    pub depth: usize,
    pub levels: Vec<TreeLevel>,
}

impl PartitionTree {
    pub fn leaves(&self) -> &[LatticeBox] {
        self.levels
            .last()
            .map(|l| l.cells.as_slice())
            .unwrap_or(std::slice::from_ref(&self.root))
    }
}

/// Smallest `j ≥ 1` with `1/2^j < η`.
pub fn dyadic_depth(eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("eta", format!("{eta} is outside (0, 1]")));
    }
    let mut j = 1usize;
    while eta <= 0.5f64.powi(j as i32) {
        j += 1;
    }
    Ok(j)
}

/// Build the tree of `j - 1` nested β = 1/2 partitions for `eta ≤ 1/2`.
pub fn dyadic_partition(root: &LatticeBox, eta: f64) -> Result<PartitionTree> {
    if !(eta > 0.0 && eta <= 0.5) {
        return Err(Error::invalid("eta", format!("{eta} is outside (0, 1/2]")));
    }
    let depth = dyadic_depth(eta)?;
    let mut levels: Vec<TreeLevel> = Vec::with_capacity(depth - 1);
    let mut current = vec![root.clone()];
    for level in 1..depth {
        let mut cells = Vec::new();
        let mut parent_index = Vec::new();
        for (pi, parent) in current.iter().enumerate() {
            if (0..parent.dimension()).any(|k| parent.extent(k) < 3) {
                return Err(Error::DepthExhausted {
                    level,
                    reason: format!("cell {parent} is too small to subdivide"),
                });
            }
            let part = partition_box(parent, 0.5)?;
            for c in part.cells {
                if c.site_count() < 2 {
                    return Err(Error::DepthExhausted {
                        level,
                        reason: format!("leaf {c} would have fewer than 2 sites"),
                    });
                }
                parent_index.push(pi);
                cells.push(c);
            }
        }
        current = cells.clone();
        levels.push(TreeLevel {
            cells,
            parent_index,
        });
    }
    Ok(PartitionTree {
        root: root.clone(),
        eta,
        depth,
        levels,
    })
}

/// Split site indices of `b` into interior (face distance > cutoff) and
/// boundary layer.
pub fn interior_boundary_split(b: &LatticeBox, cutoff: f64) -> (Vec<usize>, Vec<usize>) {
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for (i, s) in b.sites().enumerate() {
        if b.face_distance(&s) as f64 > cutoff {
            interior.push(i);
        } else {
            boundary.push(i);
        }
    }
    (interior, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn make_box_examples() {
        let b = make_box(2.0, 1, &[0.0], 0.0).unwrap();
        assert_eq!((b.lower(), b.upper(), b.site_count()), (&[-2][..], &[2][..], 5));

        let b = make_box(2.0, 2, &[0.5, 0.0], 0.0).unwrap();
        assert_eq!(b.lower(), &[-1, -2]);
        assert_eq!(b.upper(), &[2, 2]);
        assert_eq!(b.site_count(), 20);

        let b = make_box(2.0, 1, &[0.0], 0.6).unwrap();
        assert_eq!((b.lower(), b.upper(), b.site_count()), (&[-1][..], &[1][..], 3));
        assert_eq!(b.provenance().unwrap().trim, 0.6);
    }

    #[test]
    fn make_box_empty_domain() {
        assert!(matches!(make_box(1.0, 1, &[0.0], 0.6), Err(Error::EmptyDomain(_))));
        assert!(make_box(2.0, 2, &[0.0], 0.0).is_err());
    }

    #[test]
    fn window_examples() {
        let w = MesoWindow::new(0.0, 0.5, -1.0, 1.0).unwrap();
        let (lo, hi) = w.interval(25);
        assert!((lo + 0.2).abs() < 1e-15 && (hi - 0.2).abs() < 1e-15);

        let w = MesoWindow::new(0.0, 1.0, -1.0, 1.0).unwrap();
        let (lo, hi) = w.interval(5);
        assert!((lo + 0.2).abs() < 1e-15 && (hi - 0.2).abs() < 1e-15);

        let w = MesoWindow::new(1.5, 0.3, -2.0, 0.5).unwrap();
        let (lo, hi) = w.interval(1000);
        let s = 1000f64.powf(-0.3);
        assert_eq!(lo, 1.5 - 2.0 * s);
        assert_eq!(hi, 1.5 + 0.5 * s);
    }

    #[test]
    fn window_rejects_bad_parameters() {
        assert!(MesoWindow::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(MesoWindow::new(0.0, 1.5, -1.0, 1.0).is_err());
        assert!(MesoWindow::new(0.0, 0.5, 1.0, 2.0).is_err());
    }

    #[test]
    fn partition_examples() {
        let b = LatticeBox::new(vec![0], vec![7]).unwrap();
        assert_eq!(partition_box(&b, 0.5).unwrap().cell_count(), 3);

        let b = LatticeBox::new(vec![0], vec![8]).unwrap();
        let p = partition_box(&b, 1.0).unwrap();
        assert_eq!(p.cells, vec![b.clone()]);
    }

    #[test]
    fn partition_81_by_81() {
        // oracle: enumerate the real cut points and assign sites directly
        let b = LatticeBox::new(vec![0, 0], vec![80, 80]).unwrap();
        let p = partition_box(&b, 0.5).unwrap();
        assert_eq!(p.cell_count(), 81);
        let count = 9.0;
        let cuts: Vec<f64> = (0..=9).map(|m| -0.5 + m as f64 * 81.0 / count).collect();
        let mut sizes = vec![0usize; 9];
        for x in 0..81 {
            let m = (0..9).find(|&m| x as f64 >= cuts[m] && (x as f64) < cuts[m + 1]).unwrap();
            sizes[m] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 9));
        assert!(p.cells.iter().all(|c| c.site_count() == 81));
    }

    #[test]
    fn dyadic_examples() {
        assert_eq!(dyadic_depth(0.3).unwrap(), 2);
        assert_eq!(dyadic_depth(0.2).unwrap(), 3);
        assert_eq!(dyadic_depth(0.5).unwrap(), 2);
        assert_eq!(dyadic_depth(0.75).unwrap(), 1);

        let root = LatticeBox::new(vec![0], vec![65535]).unwrap();
        let t = dyadic_partition(&root, 0.2).unwrap();
        assert_eq!(t.depth, 3);
        assert_eq!(t.levels.len(), 2);
        assert_eq!(t.levels[0].cells.len(), 256);
        assert!(t.levels[0].cells.iter().all(|c| c.site_count() == 256));
        assert_eq!(t.levels[1].cells.len(), 256 * 16);
        assert!(t.levels[1].cells.iter().all(|c| c.site_count() == 16));

        let t = dyadic_partition(&LatticeBox::new(vec![0], vec![99]).unwrap(), 0.3).unwrap();
        assert_eq!(t.levels.len(), 1);
    }

    #[test]
    fn dyadic_depth_exhausted() {
        let root = LatticeBox::new(vec![0], vec![8]).unwrap();
        assert!(matches!(
            dyadic_partition(&root, 0.01),
            Err(Error::DepthExhausted { .. })
        ));
    }

    #[test]
    fn interior_split_examples() {
        let b = LatticeBox::new(vec![-2], vec![2]).unwrap();
        let (i, bd) = interior_boundary_split(&b, 1.0);
        assert_eq!(i, vec![2]);
        assert_eq!(bd.len(), 4);

        let b = LatticeBox::new(vec![0, 0], vec![8, 8]).unwrap();
        let (i, bd) = interior_boundary_split(&b, 2.0);
        assert_eq!(i.len(), 9);
        assert_eq!(bd.len(), 72);

        let (_, faces) = interior_boundary_split(&b, 0.0);
        assert_eq!(faces.len(), 81 - 49);
        assert!(faces.iter().all(|&s| b.is_boundary_site(&b.site(s))));
    }

    #[test]
    fn side_lengths_converge() {
        let mut prev = f64::INFINITY;
        for n in [100usize, 1000, 10000] {
            let b = LatticeBox::new(vec![0], vec![n as i64]).unwrap();
            let beta = 0.5;
            let p = partition_box(&b, beta).unwrap();
            let target = (n as f64).powf(beta);
            let dev = p
                .cells
                .iter()
                .map(|c| ((c.site_count() as f64) - target).abs() / target)
                .fold(0.0, f64::max);
            assert!(dev < prev, "n = {n}: {dev} !< {prev}");
            prev = dev;
        }
    }

    proptest! {
        #[test]
        fn partition_tiles_parent(
            lo in proptest::collection::vec(-20i64..20, 1..3),
            ext in proptest::collection::vec(3usize..40, 3),
            beta in 0.05f64..1.0,
        ) {
            let d = lo.len();
            let upper: Vec<i64> = (0..d).map(|k| lo[k] + ext[k] as i64 - 1).collect();
            let parent = LatticeBox::new(lo.clone(), upper).unwrap();
            let p = partition_box(&parent, beta).unwrap();
            let mut all: Vec<Vec<i64>> = p.cells.iter().flat_map(|c| c.sites().collect::<Vec<_>>()).collect();
            all.sort();
            let mut want: Vec<Vec<i64>> = parent.sites().collect();
            want.sort();
            prop_assert_eq!(all, want);
            prop_assert_eq!(p.dropped, 0);
            let expected: usize = BoxPartition::intervals_per_axis(&parent, beta).iter().product();
            prop_assert_eq!(p.cell_count(), expected);
        }

        #[test]
        fn windows_nest(e in -3.0f64..3.0, eta in 0.05f64..1.0, a in -5.0f64..-0.01, b in 0.01f64..5.0,
                        v1 in 1usize..10_000, dv in 1usize..10_000) {
            let w = MesoWindow::new(e, eta, a, b).unwrap();
            let (lo1, hi1) = w.interval(v1);
            let (lo2, hi2) = w.interval(v1 + dv);
            prop_assert!(lo1 <= lo2 && hi2 <= hi1);
            prop_assert!(lo2 < e && e < hi2);
        }

        #[test]
        fn site_enumeration_is_bijective(lo in proptest::collection::vec(-5i64..5, 1..4), ext in proptest::collection::vec(1usize..6, 4)) {
            let d = lo.len();
            let b = LatticeBox::new(lo.clone(), (0..d).map(|k| lo[k] + ext[k] as i64 - 1).collect()).unwrap();
            for i in 0..b.site_count() {
                prop_assert_eq!(b.index_of(&b.site(i)), Some(i));
            }
        }
    }
}
