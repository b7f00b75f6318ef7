//! Geometry of the D-dimensional periodic lattice Z_L^D.
//!
//! Sites are coordinate vectors in `[0, L)^D`, enumerated in row-major
//! order. All distances are l-infinity distances on the torus, so a
//! nearest-neighbor pair has distance 1 and a region grown by `s` is a
//! union of coordinate boxes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A lattice site, given by its coordinate vector.
pub type Site = Vec<usize>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("site {0:?} out of range for lattice of dimension {1}, size {2}")]
    OutOfRange(Site, usize, usize),
    #[error("region is empty")]
    EmptyRegion,
    #[error("growth radius must be non-negative, got {0}")]
    NegativeGrowth(i64),
    #[error("lattice size must be at least 2, got {0}")]
    DegenerateLattice(usize),
    #[error("malformed region text at line {0}: {1}")]
    ParseError(usize, String),
}

/// D-dimensional torus Z_L^D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dimension: usize,
    size: usize,
}

impl Lattice {
    pub fn new(dimension: usize, size: usize) -> Result<Self, LatticeError> {
        if size < 2 {
            return Err(LatticeError::DegenerateLattice(size));
        }
        assert!(dimension >= 1, "lattice dimension must be positive");
        Ok(Self { dimension, size })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Total number of sites, L^D.
    pub fn num_sites(&self) -> usize {
        self.size.pow(self.dimension as u32)
    }

    pub fn contains(&self, site: &[usize]) -> bool {
        site.len() == self.dimension && site.iter().all(|&c| c < self.size)
    }

    fn check(&self, site: &[usize]) -> Result<(), LatticeError> {
        if self.contains(site) {
            Ok(())
        } else {
            Err(LatticeError::OutOfRange(
                site.to_vec(),
                self.dimension,
                self.size,
            ))
        }
    }

    /// Row-major linear index of a site.
    pub fn site_index(&self, site: &[usize]) -> usize {
        site.iter().fold(0, |acc, &c| acc * self.size + c)
    }

    /// Inverse of [`site_index`](Self::site_index).
    pub fn site_at(&self, mut index: usize) -> Site {
        let mut coords = vec![0; self.dimension];
        for d in (0..self.dimension).rev() {
            coords[d] = index % self.size;
            index /= self.size;
        }
        coords
    }

    /// All sites in row-major order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.num_sites()).map(move |i| self.site_at(i))
    }

    /// Cyclic distance along one axis.
    pub fn axis_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        d.min(self.size - d)
    }

    /// l-infinity torus distance between two sites.
    pub fn torus_distance(&self, u: &[usize], v: &[usize]) -> Result<usize, LatticeError> {
        self.check(u)?;
        self.check(v)?;
        Ok(u.iter()
            .zip(v)
            .map(|(&a, &b)| self.axis_distance(a, b))
            .max()
            .unwrap_or(0))
    }

    /// Site shifted by `delta` (componentwise, modulo L).
    pub fn translate(&self, site: &[usize], delta: &[isize]) -> Site {
        site.iter()
            .zip(delta)
            .map(|(&c, &d)| {
                let l = self.size as isize;
                (((c as isize + d) % l + l) % l) as usize
            })
            .collect()
    }
}

/// A finite set of lattice sites, stored sorted in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    lattice: Lattice,
    sites: Vec<Site>,
}

impl Region {
    pub fn new(lattice: Lattice, mut sites: Vec<Site>) -> Result<Self, LatticeError> {
        for s in &sites {
            if !lattice.contains(s) {
                return Err(LatticeError::OutOfRange(
                    s.clone(),
                    lattice.dimension(),
                    lattice.size(),
                ));
            }
        }
        sites.sort_by_key(|s| lattice.site_index(s));
        sites.dedup();
        Ok(Self { lattice, sites })
    }

    /// Single-site region.
    pub fn site(lattice: Lattice, site: Site) -> Result<Self, LatticeError> {
        Self::new(lattice, vec![site])
    }

    /// The whole lattice as a region.
    pub fn full(lattice: Lattice) -> Self {
        let sites = lattice.sites().collect();
        Self { lattice, sites }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: &[usize]) -> bool {
        self.sites.iter().any(|s| s == site)
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.contains(s))
    }

    /// Torus distance from a site to the region (0 if the site is inside).
    pub fn distance_to(&self, site: &[usize]) -> Result<usize, LatticeError> {
        if self.sites.is_empty() {
            return Err(LatticeError::EmptyRegion);
        }
        let mut best = usize::MAX;
        for s in &self.sites {
            best = best.min(self.lattice.torus_distance(s, site)?);
        }
        Ok(best)
    }

    /// Maximum pairwise torus distance.
    pub fn diameter(&self) -> Result<usize, LatticeError> {
        if self.sites.is_empty() {
            return Err(LatticeError::EmptyRegion);
        }
        let mut d = 0;
        for (i, u) in self.sites.iter().enumerate() {
            for v in &self.sites[i + 1..] {
                d = d.max(self.lattice.torus_distance(u, v)?);
            }
        }
        Ok(d)
    }

    /// The region grown by `s`: all sites within torus distance `s`,
    /// with touching components merged by their torus convex hull.
    pub fn grow(&self, s: i64) -> Result<Region, LatticeError> {
        if s < 0 {
            return Err(LatticeError::NegativeGrowth(s));
        }
        if self.sites.is_empty() {
            return Err(LatticeError::EmptyRegion);
        }
        let s = s as usize;
        let mut grown: Vec<Site> = self
            .lattice
            .sites()
            .filter(|u| self.distance_to(u).unwrap() <= s)
            .collect();
        // Hull-merge until stable: hulls can make new components touch.
        loop {
            let components = connected_components(&self.lattice, &grown);
            let mut merged: Vec<Site> = Vec::new();
            for comp in &components {
                merged.extend(component_hull(&self.lattice, comp));
            }
            merged.sort_by_key(|site| self.lattice.site_index(site));
            merged.dedup();
            if merged == grown {
                break;
            }
            grown = merged;
        }
        Region::new(self.lattice, grown)
    }

    /// Plain-text serialization: one site per line, comma-separated coordinates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sites {
            let line: Vec<String> = s.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_text(lattice: Lattice, text: &str) -> Result<Self, LatticeError> {
        let mut sites = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let coords: Result<Vec<usize>, _> =
                line.split(',').map(|t| t.trim().parse::<usize>()).collect();
            match coords {
                Ok(c) => sites.push(c),
                Err(e) => return Err(LatticeError::ParseError(lineno + 1, e.to_string())),
            }
        }
        Region::new(lattice, sites)
    }
}

/// Connected components under l-infinity adjacency (distance 1).
fn connected_components(lattice: &Lattice, sites: &[Site]) -> Vec<Vec<Site>> {
    let n = sites.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            if lattice.torus_distance(&sites[i], &sites[j]).unwrap() <= 1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Site>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(sites[i].clone());
    }
    groups.into_values().collect()
}

/// Torus convex hull of a connected component: the smallest coordinate box
/// (modulo wraparound) per axis. An axis whose covering interval spans
/// `L - 1` or more sites saturates to the full axis.
fn component_hull(lattice: &Lattice, comp: &[Site]) -> Vec<Site> {
    let l = lattice.size();
    let mut axis_ranges: Vec<Vec<usize>> = Vec::new();
    for d in 0..lattice.dimension() {
        let mut coords: Vec<usize> = comp.iter().map(|s| s[d]).collect();
        coords.sort_unstable();
        coords.dedup();
        axis_ranges.push(minimal_cyclic_interval(&coords, l));
    }
    // Cartesian product of the per-axis intervals.
    let mut out: Vec<Site> = vec![vec![]];
    for range in &axis_ranges {
        let mut next = Vec::with_capacity(out.len() * range.len());
        for partial in &out {
            for &c in range {
                let mut site = partial.clone();
                site.push(c);
                next.push(site);
            }
        }
        out = next;
    }
    out
}

/// Smallest cyclic interval of Z_L covering the given sorted coordinates,
/// returned as an explicit coordinate list. Saturates to the full axis when
/// the covering interval has length >= L - 1.
fn minimal_cyclic_interval(coords: &[usize], l: usize) -> Vec<usize> {
    if coords.len() == 1 {
        return coords.to_vec();
    }
    // Largest cyclic gap between consecutive occupied coordinates; the
    // covering interval is the complement of that gap.
    let mut best_gap = 0usize;
    let mut gap_start = 0usize; // first coordinate after the gap
    for i in 0..coords.len() {
        let a = coords[i];
        let b = coords[(i + 1) % coords.len()];
        let gap = if i + 1 == coords.len() {
            l - a + b
        } else {
            b - a
        } - 1;
        if gap > best_gap {
            best_gap = gap;
            gap_start = (coords[(i + 1) % coords.len()]) % l;
        }
    }
    let span = l - best_gap;
    if span >= l - 1 {
        return (0..l).collect();
    }
    (0..span).map(|k| (gap_start + k) % l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(l: usize) -> Lattice {
        Lattice::new(1, l).unwrap()
    }

    #[test]
    fn torus_distance_wraparound() {
        let lat = chain(5);
        assert_eq!(lat.torus_distance(&[0], &[4]).unwrap(), 1);
        assert_eq!(lat.torus_distance(&[2], &[2]).unwrap(), 0);
        let lat2 = Lattice::new(2, 4).unwrap();
        assert_eq!(lat2.torus_distance(&[0, 0], &[2, 2]).unwrap(), 2);
    }

    #[test]
    fn torus_distance_out_of_range() {
        let lat = chain(5);
        assert!(lat.torus_distance(&[5], &[0]).is_err());
    }

    #[test]
    fn grow_single_site() {
        let lat = chain(5);
        let x = Region::site(lat, vec![2]).unwrap();
        let g = x.grow(1).unwrap();
        assert_eq!(g.sites(), &[vec![1], vec![2], vec![3]]);
        let sat = x.grow(3).unwrap();
        assert_eq!(sat.len(), 5);
    }

    #[test]
    fn grow_negative_rejected() {
        let lat = chain(5);
        let x = Region::site(lat, vec![2]).unwrap();
        assert_eq!(x.grow(-1), Err(LatticeError::NegativeGrowth(-1)));
    }

    #[test]
    fn grow_hull_merge_disconnected() {
        // Oracle: enumerate dist <= 1 sites of {0,4} on Z_9 and apply the
        // merge rule by hand; the two components stay separate.
        let lat = chain(9);
        let x = Region::new(lat, vec![vec![0], vec![4]]).unwrap();
        let g = x.grow(1).unwrap();
        let expected: Vec<Site> = vec![vec![0], vec![1], vec![3], vec![4], vec![5], vec![8]];
        assert_eq!(g.sites(), expected.as_slice());
    }

    #[test]
    fn grow_merges_touching_components_by_hull() {
        // {0,3} on Z_9 grown by 1 gives {8,0,1} and {2,3,4} which touch;
        // their hull is the contiguous interval {8,...,4}.
        let lat = chain(9);
        let x = Region::new(lat, vec![vec![0], vec![3]]).unwrap();
        let g = x.grow(1).unwrap();
        let expected: Vec<Site> = vec![vec![0], vec![1], vec![2], vec![3], vec![4], vec![8]];
        assert_eq!(g.sites(), expected.as_slice());
    }

    #[test]
    fn diameter_basic() {
        let lat = chain(5);
        assert_eq!(Region::site(lat, vec![2]).unwrap().diameter().unwrap(), 0);
        let r = Region::new(lat, vec![vec![1], vec![3]]).unwrap();
        assert_eq!(r.diameter().unwrap(), 2);
        // Brute-force pairwise max with wraparound: {0,2,4} on Z_5.
        let r = Region::new(lat, vec![vec![0], vec![2], vec![4]]).unwrap();
        assert_eq!(r.diameter().unwrap(), 2);
    }

    #[test]
    fn empty_region_diameter_errors() {
        let lat = chain(5);
        let r = Region::new(lat, vec![]).unwrap();
        assert_eq!(r.diameter(), Err(LatticeError::EmptyRegion));
    }

    #[test]
    fn region_text_roundtrip() {
        let lat = Lattice::new(2, 4).unwrap();
        let r = Region::new(lat, vec![vec![0, 1], vec![3, 2]]).unwrap();
        let txt = r.to_text();
        let back = Region::from_text(lat, &txt).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn grow_zero_keeps_hull_closed_region() {
        let lat = chain(7);
        let r = Region::new(lat, vec![vec![2], vec![3]]).unwrap();
        assert_eq!(r.grow(0).unwrap(), r);
    }

    #[test]
    fn grow_2d_box() {
        let lat = Lattice::new(2, 5).unwrap();
        let x = Region::site(lat, vec![2, 2]).unwrap();
        let g = x.grow(1).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.diameter().unwrap(), 2);
    }
}
